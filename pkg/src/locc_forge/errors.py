"""Exception hierarchy shared by all locc_forge modules.

Exit-code mapping used by the CLI:
    InstanceError         -> 2  (malformed input)
    ConversionImpossible  -> 3  (transformation ruled out)
    CapExceeded           -> 4  (resource cap)
    everything else below -> 5  (internal invariant violation)
"""


class LoccForgeError(Exception):
    """Base class for all errors raised by this package."""


class InstanceError(LoccForgeError):
    """Malformed instance file or otherwise invalid user input."""


class ConversionImpossible(LoccForgeError):
    """The requested transformation is ruled out by the majorization test."""

    def __init__(self, message: str, violation_index: int | None = None):
        super().__init__(message)
        self.violation_index = violation_index


class CapExceeded(LoccForgeError):
    """A dense-representation or tensor-power cap would be exceeded."""


class DecompositionFailed(LoccForgeError):
    """Permutation peeling found no perfect matching; input numerically broken."""


class InternalContradiction(LoccForgeError):
    """A mixture term places weight where the source coefficient vanishes."""


class ConstructionInvalid(LoccForgeError):
    """Post-construction validation of a conclusive plan failed."""


class ZeroBranch(LoccForgeError):
    """A local operator annihilated the state (branch probability ~ 0)."""

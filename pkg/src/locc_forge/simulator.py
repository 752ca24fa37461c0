"""Dense multipartite pure-state simulator.

Materializes structured states, executes measure-broadcast-rotate
protocols branch by branch, and operationally tests whether an arbitrary
dense state admits the structured (single-sum) form.

Classical communication is a recorded event here, not a socket: the
transcript notes the broadcast outcome and every single-party operator
that was applied, which is what makes the locality audit checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceeded, ZeroBranch
from .majorization import ProbVector
from .protocol import MeasurementPlan

MAX_PARTIES = 6
MAX_AMPLITUDES = 2**20
NORM_TOL = 1e-9
UNITARY_TOL = 1e-9
ZERO_BRANCH_TOL = 1e-12
FIDELITY_TOL = 1e-9          # branches must reach fidelity >= 1 - FIDELITY_TOL
PROB_MATCH_TOL = 1e-9
RANK_TOL = 1e-12             # squared Schmidt coefficients below this are zero
DEGENERACY_GAP = 1e-8


def _check_caps(dims: tuple[int, ...]) -> None:
    if len(dims) > MAX_PARTIES:
        raise CapExceeded(f"{len(dims)} parties exceed cap {MAX_PARTIES}")
    total = 1
    for d in dims:
        if d < 1:
            raise ValueError(f"bad local dimension {d}")
        total *= d
    if total > MAX_AMPLITUDES:
        raise CapExceeded(f"{total} amplitudes exceed cap {MAX_AMPLITUDES}")


class DenseState:
    """Normalized complex amplitude tensor, stored flat in row-major order."""

    __slots__ = ("amplitudes", "dims")

    def __init__(self, amplitudes, dims):
        dims = tuple(int(d) for d in dims)
        _check_caps(dims)
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        expected = int(np.prod(dims))
        if amps.size != expected:
            raise ValueError(f"{amps.size} amplitudes for dims {dims}")
        norm_sq = float(np.vdot(amps, amps).real)
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise ValueError(f"squared norm {norm_sq} deviates from 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", dims)

    def __setattr__(self, *_):
        raise AttributeError("DenseState is immutable")

    @property
    def m(self) -> int:
        return len(self.dims)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "re": [float(x) for x in self.amplitudes.real],
            "im": [float(x) for x in self.amplitudes.imag],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "DenseState":
        re = np.asarray(payload["re"], dtype=float)
        im = np.asarray(payload["im"], dtype=float)
        if re.shape != im.shape:
            raise ValueError("re/im length mismatch")
        return cls(re + 1j * im, tuple(payload["dims"]))


class GeneralizedSchmidtState:
    """Structured state: coefficients plus one orthonormal basis per party.

    Each basis is a full dims_i x dims_i unitary whose first n columns are
    that party's Schmidt vectors, aligned with the sorted coefficients.
    """

    __slots__ = ("m", "dims", "coeffs", "bases")

    def __init__(self, dims, coeffs: ProbVector, bases):
        dims = tuple(int(d) for d in dims)
        if len(dims) < 2:
            raise ValueError("need at least two parties")
        _check_caps(dims)
        n = len(coeffs)
        mats = []
        for i, b in enumerate(bases):
            mat = np.asarray(b, dtype=complex)
            if mat.shape != (dims[i], dims[i]):
                raise ValueError(f"basis {i} must be {dims[i]}x{dims[i]}")
            if dims[i] < n:
                raise ValueError(f"party {i} dimension {dims[i]} below rank {n}")
            residual = np.max(np.abs(mat.conj().T @ mat - np.eye(dims[i])))
            if residual > UNITARY_TOL:
                raise ValueError(f"basis {i} not unitary (residual {residual})")
            mat = mat.copy()
            mat.setflags(write=False)
            mats.append(mat)
        if len(mats) != len(dims):
            raise ValueError("one basis per party required")
        object.__setattr__(self, "m", len(dims))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "bases", tuple(mats))

    def __setattr__(self, *_):
        raise AttributeError("GeneralizedSchmidtState is immutable")

    @property
    def n(self) -> int:
        return len(self.coeffs)

    @classmethod
    def computational(cls, dims, coeffs: ProbVector) -> "GeneralizedSchmidtState":
        return cls(dims, coeffs, [np.eye(d, dtype=complex) for d in dims])


def assemble(s: GeneralizedSchmidtState) -> DenseState:
    """Sum over k of sqrt(coeff_k) times the k-th basis column of every party."""
    amps = np.zeros(s.dims, dtype=complex)
    for k in range(s.n):
        if s.coeffs[k] == 0.0:
            continue
        term = s.bases[0][:, k]
        for i in range(1, s.m):
            term = np.multiply.outer(term, s.bases[i][:, k])
        amps = amps + np.sqrt(s.coeffs[k]) * term
    return DenseState(amps.reshape(-1), s.dims)


def apply_local(state: DenseState, party: int, op: np.ndarray) -> tuple[float, DenseState]:
    """Apply a one-party operator; returns (branch probability, normalized post)."""
    if not 0 <= party < state.m:
        raise ValueError(f"party {party} out of range")
    op = np.asarray(op, dtype=complex)
    d = state.dims[party]
    if op.shape != (d, d):
        raise ValueError(f"operator must be {d}x{d}")
    moved = np.tensordot(op, state.tensor(), axes=([1], [party]))
    out = np.moveaxis(moved, 0, party).reshape(-1)
    prob = float(np.vdot(out, out).real)
    if prob <= ZERO_BRANCH_TOL:
        raise ZeroBranch(f"operator on party {party} annihilated the state")
    return prob, DenseState(out / np.sqrt(prob), state.dims)


def fidelity(a: DenseState, b: DenseState) -> float:
    """|<a|b>|^2; 1 means identical up to global phase."""
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch {a.dims} vs {b.dims}")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


@dataclass(frozen=True)
class AppliedOp:
    """One recorded single-party operation (the locality audit unit)."""

    party: int
    kind: str  # "measurement" or "unitary"
    dim: int

    def to_json(self) -> dict:
        return {"party": self.party, "kind": self.kind, "dim": self.dim}


@dataclass(frozen=True)
class BranchRecord:
    outcome: int
    analytic_prob: float
    simulated_prob: float
    realizable: bool
    operations: tuple[AppliedOp, ...]
    post_measurement: DenseState | None = None
    final: DenseState | None = None
    fidelity: float | None = None
    success: bool | None = None  # set only by conclusive runs

    def to_json(self) -> dict:
        payload = {
            "outcome": self.outcome,
            "analytic_prob": self.analytic_prob,
            "simulated_prob": self.simulated_prob,
            "realizable": self.realizable,
            "fidelity": self.fidelity,
            "operations": [op.to_json() for op in self.operations],
        }
        if self.success is not None:
            payload["success"] = self.success
        return payload


@dataclass(frozen=True)
class Transcript:
    """Audit trail of one protocol run."""

    branches: tuple[BranchRecord, ...]
    mode: str
    passed: bool
    prob_sum: float
    checks: dict = field(default_factory=dict)

    @property
    def locality_ok(self) -> bool:
        """Every recorded operation names exactly one party."""
        return all(
            isinstance(op.party, int) and op.dim > 0
            for br in self.branches
            for op in br.operations
        )

    @property
    def success_probability(self) -> float:
        return sum(
            br.simulated_prob for br in self.branches if br.success and br.realizable
        )

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "passed": self.passed,
            "prob_sum": self.prob_sum,
            "checks": self.checks,
            "branches": [br.to_json() for br in self.branches],
        }


def _measurement_operator(
    psi: GeneralizedSchmidtState, diag: np.ndarray
) -> np.ndarray:
    """Materialize a diagonal plan operator in party A's Schmidt basis."""
    d0 = psi.dims[0]
    full = np.zeros(d0)
    full[: diag.size] = diag
    basis = psi.bases[0]
    return basis @ np.diag(full) @ basis.conj().T


def _step_unitary(
    psi: GeneralizedSchmidtState,
    phi: GeneralizedSchmidtState,
    party: int,
    perm,
) -> np.ndarray:
    """Target-basis change after relabeling: B_phi P(sigma^{-1}) B_psi^dag.

    The permutation block is completed with the identity on the orthogonal
    complement; the complement never carries amplitude.
    """
    p_full = perm.matrix(psi.dims[party])
    return phi.bases[party] @ p_full @ psi.bases[party].conj().T


def run_protocol(
    psi: GeneralizedSchmidtState,
    phi: GeneralizedSchmidtState,
    plan: MeasurementPlan,
    mode: str = "exhaustive",
    seed: int = 0,
) -> Transcript:
    """Execute measure-broadcast-rotate and verify every branch.

    Default mode enumerates all outcomes (they are few); "sampled" draws a
    single outcome from the analytic weights, for demonstration only.
    """
    if psi.dims != phi.dims:
        raise ValueError(f"incompatible dims {psi.dims} vs {phi.dims}")
    if plan.n != psi.n or plan.n != phi.n:
        raise ValueError("plan dimension does not match the states")
    if mode not in ("exhaustive", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")

    psi_dense = assemble(psi)
    phi_dense = assemble(phi)

    indices = range(len(plan.outcomes))
    if mode == "sampled":
        rng = np.random.default_rng(seed)
        weights = np.array([out.weight for out in plan.outcomes])
        indices = [int(rng.choice(len(weights), p=weights / weights.sum()))]

    branches = []
    for j in indices:
        out = plan.outcomes[j]
        m_op = _measurement_operator(psi, out.operator.diag)
        ops = [AppliedOp(0, "measurement", psi.dims[0])]
        try:
            prob, post = apply_local(psi_dense, 0, m_op)
        except ZeroBranch:
            if out.weight > ZERO_BRANCH_TOL:
                raise ZeroBranch(
                    f"outcome {j} carries weight {out.weight} but annihilated the state"
                )
            branches.append(
                BranchRecord(j, out.weight, 0.0, False, tuple(ops))
            )
            continue
        current = post
        for party in range(psi.m):
            u = _step_unitary(psi, phi, party, out.unitary_perm)
            _, current = apply_local(current, party, u)
            ops.append(AppliedOp(party, "unitary", psi.dims[party]))
        branches.append(
            BranchRecord(
                outcome=j,
                analytic_prob=out.weight,
                simulated_prob=prob,
                realizable=True,
                operations=tuple(ops),
                post_measurement=post,
                final=current,
                fidelity=fidelity(current, phi_dense),
            )
        )

    realizable = [br for br in branches if br.realizable]
    prob_sum = sum(br.simulated_prob for br in realizable)
    max_mismatch = max(
        (abs(br.simulated_prob - br.analytic_prob) for br in realizable), default=0.0
    )
    min_fid = min((br.fidelity for br in realizable), default=1.0)
    checks = {
        "prob_sum_error": float(abs(prob_sum - 1.0)),
        "max_weight_mismatch": float(max_mismatch),
        "min_fidelity": float(min_fid),
        "fidelity_tol": FIDELITY_TOL,
        "prob_tol": PROB_MATCH_TOL,
    }
    passed = bool(
        max_mismatch <= PROB_MATCH_TOL
        and min_fid >= 1.0 - FIDELITY_TOL
        and (mode == "sampled" or abs(prob_sum - 1.0) <= PROB_MATCH_TOL)
    )
    return Transcript(
        branches=tuple(branches),
        mode=mode,
        passed=passed,
        prob_sum=float(prob_sum),
        checks=checks,
    )


@dataclass(frozen=True)
class GsdWitness:
    """Why extraction rejected: which cofactor broke, where, by how much."""

    kind: str  # "entangled_cofactor" | "party_overlap" | "reassembly"
    index: int
    party: int | None
    residual: float

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "index": self.index,
            "party": self.party,
            "residual": self.residual,
        }


@dataclass(frozen=True)
class GsdExtraction:
    verdict: str  # "admits" | "rejects"
    state: GeneralizedSchmidtState | None = None
    reassembly_fidelity: float | None = None
    witness: GsdWitness | None = None
    inconclusive_degenerate: bool = False

    @property
    def admits(self) -> bool:
        return self.verdict == "admits"

    @property
    def coeffs(self) -> ProbVector | None:
        return self.state.coeffs if self.state is not None else None

    def to_json(self) -> dict:
        payload: dict = {
            "verdict": self.verdict,
            "inconclusive_degenerate": self.inconclusive_degenerate,
        }
        if self.state is not None:
            payload["coeffs"] = self.state.coeffs.to_json()
            payload["reassembly_fidelity"] = self.reassembly_fidelity
        if self.witness is not None:
            payload["witness"] = self.witness.to_json()
        return payload


def _complete_to_unitary(cols: np.ndarray, dim: int) -> np.ndarray:
    """Extend orthonormal columns to a full unitary, deterministically.

    Candidate completion vectors are the computational basis vectors,
    orthogonalized twice against everything accepted so far.
    """
    basis = [cols[:, k] for k in range(cols.shape[1])]
    for j in range(dim):
        if len(basis) == dim:
            break
        v = np.zeros(dim, dtype=complex)
        v[j] = 1.0
        for _ in range(2):
            for b in basis:
                v = v - np.vdot(b, v) * b
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            basis.append(v / norm)
    if len(basis) != dim:
        raise ValueError("basis completion failed")
    return np.column_stack(basis)


def extract_gsd(state: DenseState, tol: float = 1e-9) -> GsdExtraction:
    """Operational structured-form test.

    Splits party 0 against the rest, then recursively demands that every
    retained cofactor be a product across the remaining parties (largest
    squared Schmidt coefficient >= 1 - tol at every cut).  On success the
    per-party vectors are checked for orthonormality, completed to full
    bases, and the reassembled state must reproduce the input.

    Degenerate coefficients make the Schmidt basis non-unique; no rotation
    search is attempted, so a rejection under degeneracy is flagged
    inconclusive rather than treated as a hard verdict.
    """
    dims = state.dims
    m = len(dims)
    if m < 2:
        raise ValueError("need at least two parties")

    mat = state.amplitudes.reshape(dims[0], -1)
    u0, sing, vh = np.linalg.svd(mat, full_matrices=False)
    lam = sing**2
    n = int(np.sum(lam > RANK_TOL))
    coeff_arr = lam[:n]
    degenerate = (
        bool(np.any(np.abs(np.diff(coeff_arr)) < DEGENERACY_GAP)) if n > 1 else False
    )

    factors: list[list[np.ndarray]] = [[u0[:, k] for k in range(n)]]
    for _ in range(1, m):
        factors.append([])

    for k in range(n):
        w = vh[k, :]
        rem = dims[1:]
        for rel, d_i in enumerate(rem[:-1]):
            party = rel + 1
            w_mat = w.reshape(d_i, -1)
            u2, s2, v2h = np.linalg.svd(w_mat, full_matrices=False)
            residual = float(1.0 - s2[0] ** 2)
            if residual > tol:
                return GsdExtraction(
                    verdict="rejects",
                    witness=GsdWitness("entangled_cofactor", k, party, residual),
                    inconclusive_degenerate=degenerate,
                )
            factors[party].append(u2[:, 0])
            w = v2h[0, :]
        factors[m - 1].append(w)

    # orthonormality of each party's extracted vectors
    for party in range(m):
        cols = np.column_stack(factors[party])
        gram = cols.conj().T @ cols
        residual = float(np.max(np.abs(gram - np.eye(n))))
        if residual > UNITARY_TOL:
            return GsdExtraction(
                verdict="rejects",
                witness=GsdWitness("party_overlap", -1, party, residual),
                inconclusive_degenerate=degenerate,
            )

    bases = [
        _complete_to_unitary(np.column_stack(factors[party]), dims[party])
        for party in range(m)
    ]
    gss = GeneralizedSchmidtState(dims, ProbVector(coeff_arr), bases)
    fid = fidelity(assemble(gss), state)
    if fid < 1.0 - NORM_TOL:
        return GsdExtraction(
            verdict="rejects",
            witness=GsdWitness("reassembly", -1, None, float(1.0 - fid)),
            inconclusive_degenerate=degenerate,
        )
    return GsdExtraction(verdict="admits", state=gss, reassembly_fidelity=fid)

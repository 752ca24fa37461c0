"""Probability-vector combinatorics: majorization, T-transform chains, and
permutation-mixture decompositions of doubly stochastic matrices.

Everything here is pure vector arithmetic; no quantum state ever appears.
All values are immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConversionImpossible, DecompositionFailed

# Module-wide tolerances (double precision headroom at n <= 64).
ENTRY_CLAMP = 1e-12       # negative entries above -ENTRY_CLAMP are clamped to 0
SUM_TOL = 1e-9            # probability / stochasticity sums
RECONSTRUCT_TOL = 1e-9    # mixture-against-target reconstruction
BIRKHOFF_TOL = 1e-8       # sum of weighted permutation matrices against D
ZERO_TOL = 1e-12          # entries below this are treated as exact zeros


def term_count_bound(n: int) -> int:
    """Maximum number of permutation terms needed for an n x n matrix."""
    return (n - 1) ** 2 + 1


@dataclass(frozen=True)
class Permutation:
    """Bijection of {0..n-1}, stored as the forward image i -> image[i]."""

    image: tuple[int, ...]

    def __post_init__(self):
        n = len(self.image)
        if sorted(self.image) != list(range(n)):
            raise ValueError(f"not a permutation of 0..{n - 1}: {self.image}")

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @property
    def n(self) -> int:
        return len(self.image)

    @property
    def is_identity(self) -> bool:
        return all(i == j for i, j in enumerate(self.image))

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for i, j in enumerate(self.image):
            inv[j] = i
        return Permutation(tuple(inv))

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Push-forward action: returns w with w[image[i]] = v[i].

        Equivalently w[k] = v[inverse(k)], the usual action of a
        permutation on a coefficient vector.
        """
        v = np.asarray(v)
        out = np.empty_like(v)
        out[list(self.image)] = v
        return out

    def matrix(self, n: int | None = None) -> np.ndarray:
        """Permutation matrix P with P[image[k], k] = 1, padded with the
        identity on indices >= n_self when a larger n is requested."""
        size = self.n if n is None else n
        if size < self.n:
            raise ValueError("requested matrix smaller than permutation")
        mat = np.eye(size)
        block = np.zeros((self.n, self.n))
        for k, jk in enumerate(self.image):
            block[jk, k] = 1.0
        mat[: self.n, : self.n] = block
        return mat


class ProbVector:
    """Nonnegative coefficient vector summing to 1, kept in nonincreasing
    order.  The constructor sorts its input and records the applied sort
    permutation (raw index -> sorted position)."""

    __slots__ = ("_entries", "_order")

    def __init__(self, entries):
        raw = np.asarray(entries, dtype=float)
        if raw.ndim != 1 or raw.size < 1:
            raise ValueError("ProbVector needs a 1-D vector of length >= 1")
        if np.min(raw) < -ENTRY_CLAMP:
            raise ValueError(f"negative entry {np.min(raw)} below clamp {-ENTRY_CLAMP}")
        clipped = np.clip(raw, 0.0, None)
        total = float(np.sum(clipped))
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"entries sum to {total}, not 1 within {SUM_TOL}")
        # stable descending sort; ties keep their original order
        order = np.lexsort((np.arange(raw.size), -clipped))
        srt = clipped[order]
        srt.setflags(write=False)
        order.setflags(write=False)
        object.__setattr__(self, "_entries", srt)
        object.__setattr__(self, "_order", order)

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def sort_permutation(self) -> Permutation:
        """Permutation mapping each raw index to its sorted position."""
        image = np.empty(self._order.size, dtype=int)
        image[self._order] = np.arange(self._order.size)
        return Permutation(tuple(int(i) for i in image))

    def __len__(self) -> int:
        return self._entries.size

    def __getitem__(self, k):
        return self._entries[k]

    def __iter__(self):
        return iter(self._entries)

    def __repr__(self) -> str:
        return f"ProbVector({list(self._entries)})"

    def __eq__(self, other) -> bool:
        return isinstance(other, ProbVector) and np.array_equal(
            self._entries, other._entries
        )

    def to_json(self) -> list[float]:
        """Canonical rendering: a plain JSON array of numbers."""
        return [float(x) for x in self._entries]

    def __setattr__(self, *_):
        raise AttributeError("ProbVector is immutable")


@dataclass(frozen=True)
class DoublyStochasticMatrix:
    """Square nonnegative matrix with unit row and column sums."""

    entries: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.entries, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("matrix must be square")
        if np.min(mat) < -ENTRY_CLAMP:
            raise ValueError(f"negative entry {np.min(mat)}")
        mat = np.clip(mat, 0.0, None)
        rows = mat.sum(axis=1)
        cols = mat.sum(axis=0)
        if np.max(np.abs(rows - 1.0)) > SUM_TOL or np.max(np.abs(cols - 1.0)) > SUM_TOL:
            raise ValueError("row/column sums deviate from 1 beyond tolerance")
        mat.setflags(write=False)
        object.__setattr__(self, "entries", mat)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class PermutationMixture:
    """Convex mixture of permutations realizing lam = sum_j p_j * (sigma_j mu)."""

    terms: tuple[tuple[float, Permutation], ...]
    n: int

    def __post_init__(self):
        if not self.terms:
            raise ValueError("mixture needs at least one term")
        total = 0.0
        for p, perm in self.terms:
            if p <= 0.0:
                raise ValueError(f"nonpositive weight {p}")
            if perm.n != self.n:
                raise ValueError("permutation dimension mismatch")
            total += p
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"weights sum to {total}")
        if len(self.terms) > term_count_bound(self.n):
            raise ValueError(
                f"{len(self.terms)} terms exceed bound {term_count_bound(self.n)}"
            )

    def reconstruct(self, mu: ProbVector) -> np.ndarray:
        """sum_j p_j * mu[sigma_j^{-1}(k)] as a plain array."""
        out = np.zeros(self.n)
        for p, perm in self.terms:
            out += p * perm.apply(mu.entries)
        return out

    def matrix(self) -> np.ndarray:
        """sum_j p_j P(sigma_j)."""
        out = np.zeros((self.n, self.n))
        for p, perm in self.terms:
            out += p * perm.matrix()
        return out

    def to_json(self) -> list[dict]:
        return [
            {"p": float(p), "perm": list(perm.image)} for p, perm in self.terms
        ]


def is_majorized(lam: ProbVector, mu: ProbVector, tol: float = SUM_TOL) -> bool:
    """True iff every prefix sum of lam is dominated by the one of mu.

    Both vectors are already nonincreasing by the ProbVector invariant, and
    their totals are both 1, so only prefixes 0..n-2 are checked.
    """
    return first_violation(lam, mu, tol) is None


def first_violation(lam: ProbVector, mu: ProbVector, tol: float = SUM_TOL) -> int | None:
    """Smallest prefix index witnessing non-majorization, or None."""
    if len(lam) != len(mu):
        raise ValueError(
            f"dimension mismatch {len(lam)} vs {len(mu)}; pad_to first"
        )
    if len(lam) == 1:
        return None
    lam_prefix = np.cumsum(lam.entries[:-1])
    mu_prefix = np.cumsum(mu.entries[:-1])
    bad = np.nonzero(lam_prefix > mu_prefix + tol)[0]
    return int(bad[0]) if bad.size else None


def tail_sum(v: ProbVector, l: int) -> float:
    """Sum of the entries from index l through the end."""
    if not 0 <= l <= len(v) - 1:
        raise ValueError(f"index {l} out of range for length {len(v)}")
    return float(np.sum(v.entries[l:]))


def pad_to(v: ProbVector, n: int) -> ProbVector:
    """Extend with trailing zeros so source and target ranks can differ."""
    if n < len(v):
        raise ValueError(f"cannot pad length {len(v)} down to {n}")
    if n == len(v):
        return v
    return ProbVector(np.concatenate([v.entries, np.zeros(n - len(v))]))


def hlp_matrix(lam: ProbVector, mu: ProbVector) -> DoublyStochasticMatrix:
    """Doubly stochastic D with D @ mu = lam, as a chain of T-transforms.

    Each step pairs the largest index where the working vector still
    exceeds lam against the smallest index after it with the opposite
    inequality, and transfers the least amount that pins one of the two
    exactly.  At most n-1 transforms are needed.
    """
    if not is_majorized(lam, mu):
        idx = first_violation(lam, mu)
        raise ConversionImpossible(
            f"target does not majorize source (prefix {idx})", violation_index=idx
        )
    n = len(lam)
    work = mu.entries.copy()
    target = lam.entries
    d = np.eye(n)
    for _ in range(n):
        surplus = [i for i in range(n) if work[i] > target[i] + ZERO_TOL]
        if not surplus:
            break
        j = surplus[-1]
        deficits = [i for i in range(j + 1, n) if work[i] < target[i] - ZERO_TOL]
        if not deficits:
            raise DecompositionFailed("no deficit after last surplus; input broken")
        k = deficits[0]
        delta = min(work[j] - target[j], target[k] - work[k])
        t = 1.0 - delta / (work[j] - work[k])
        trans = np.eye(n)
        trans[j, j] = trans[k, k] = t
        trans[j, k] = trans[k, j] = 1.0 - t
        d = trans @ d
        moved_j = work[j] - delta
        moved_k = work[k] + delta
        # pin the exhausted side exactly to kill float drift
        work[j] = target[j] if delta == work[j] - target[j] else moved_j
        work[k] = target[k] if delta == target[k] - work[k] else moved_k
    residual = np.max(np.abs(d @ mu.entries - target))
    if residual > RECONSTRUCT_TOL:
        raise DecompositionFailed(f"T-transform chain residual {residual}")
    return DoublyStochasticMatrix(d)


def _perfect_matching(support: np.ndarray) -> list[int] | None:
    """Kuhn's augmenting-path matching on a boolean row-by-column support.

    Returns match[row] = column, or None when no perfect matching exists.
    Deterministic: rows and columns are scanned in ascending order.
    """
    n = support.shape[0]
    col_owner = [-1] * n

    def try_row(r: int, seen: list[bool]) -> bool:
        # prefer free columns before displacing earlier rows
        for c in range(n):
            if support[r, c] and not seen[c] and col_owner[c] == -1:
                seen[c] = True
                col_owner[c] = r
                return True
        for c in range(n):
            if support[r, c] and not seen[c]:
                seen[c] = True
                if try_row(col_owner[c], seen):
                    col_owner[c] = r
                    return True
        return False

    for r in range(n):
        if not try_row(r, [False] * n):
            return None
    match = [-1] * n
    for c, r in enumerate(col_owner):
        match[r] = c
    return match


def birkhoff_decompose(d: DoublyStochasticMatrix) -> PermutationMixture:
    """Peel permutation matrices off D until nothing is left.

    Each round finds a perfect matching in the positive-support bipartite
    graph, records it with the minimal matched entry as weight, and
    subtracts.  Entries below ZERO_TOL are flushed to exact zeros.
    """
    n = d.n
    work = d.entries.copy()
    work[work < ZERO_TOL] = 0.0
    terms: list[tuple[float, Permutation]] = []
    for _ in range(term_count_bound(n)):
        if np.max(work) < ZERO_TOL:
            break
        match = _perfect_matching(work > 0.0)
        if match is None:
            raise DecompositionFailed("no perfect matching in positive support")
        weight = float(min(work[r, match[r]] for r in range(n)))
        inv_image = [0] * n
        for r in range(n):
            inv_image[match[r]] = r
        terms.append((weight, Permutation(tuple(inv_image))))
        for r in range(n):
            work[r, match[r]] -= weight
        work[work < ZERO_TOL] = 0.0
    else:
        if np.max(work) >= ZERO_TOL:
            raise DecompositionFailed(
                f"peeling exceeded {term_count_bound(n)} rounds"
            )
    if not terms:
        # unreachable for a matrix that passed the stochasticity invariants
        raise DecompositionFailed("empty decomposition")
    mixture = PermutationMixture(tuple(terms), n)
    residual = np.max(np.abs(mixture.matrix() - d.entries))
    if residual > BIRKHOFF_TOL:
        raise DecompositionFailed(f"reconstruction residual {residual}")
    return mixture


def mixture_for(lam: ProbVector, mu: ProbVector) -> PermutationMixture:
    """Permutation mixture carrying mu onto lam (T-transform chain + peeling)."""
    mixture = birkhoff_decompose(hlp_matrix(lam, mu))
    residual = np.max(np.abs(mixture.reconstruct(mu) - lam.entries))
    if residual > RECONSTRUCT_TOL:
        raise DecompositionFailed(f"mixture reconstruction residual {residual}")
    return mixture

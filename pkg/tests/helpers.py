"""Shared generators and independent oracles for the test suite.

The oracles are deliberately plain Python (no calls into the package) so
they stay independent of the code paths they check.
"""

from __future__ import annotations

import numpy as np

from locc_forge import GeneralizedSchmidtState, ProbVector


def prefix_sum_majorized(lam, mu, tol: float = 1e-9) -> bool:
    """Independent majorization oracle: sorted copies, running prefix sums."""
    a = sorted((float(x) for x in lam), reverse=True)
    b = sorted((float(x) for x in mu), reverse=True)
    assert len(a) == len(b)
    run_a = 0.0
    run_b = 0.0
    for k in range(len(a) - 1):
        run_a += a[k]
        run_b += b[k]
        if run_a > run_b + tol:
            return False
    return True


def brute_force_pmax(lam, mu) -> float:
    """Direct evaluation of the tail-ratio minimum, plain Python."""
    a = [float(x) for x in lam]
    b = [float(x) for x in mu]
    best = 1.0
    for l in range(len(a)):
        tail_a = sum(a[l:])
        tail_b = sum(b[l:])
        if tail_b <= 1e-12:
            continue
        ratio = 0.0 if tail_a <= 1e-12 else tail_a / tail_b
        best = min(best, ratio)
    return min(max(best, 0.0), 1.0)


def sorted_tensor(lam, c) -> list[float]:
    """Plain-Python sorted elementwise product of two vectors."""
    prods = [float(x) * float(y) for x in lam for y in c]
    return sorted(prods, reverse=True)


def random_probs(rng: np.random.Generator, n: int, floor: float = 1e-3) -> ProbVector:
    v = rng.dirichlet(np.ones(n))
    v = (v + floor) / (1.0 + n * floor)
    return ProbVector(v)


def t_chain(rng: np.random.Generator, mu: ProbVector, transforms: int) -> ProbVector:
    """Source vector obtained from mu by a random T-transform chain."""
    v = mu.entries.copy()
    n = v.size
    for _ in range(transforms):
        if n < 2:
            break
        i, j = rng.choice(n, size=2, replace=False)
        t = rng.uniform(0.0, 1.0)
        vi, vj = v[i], v[j]
        v[i] = t * vi + (1.0 - t) * vj
        v[j] = (1.0 - t) * vi + t * vj
    return ProbVector(v)


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_gss(
    rng: np.random.Generator,
    coeffs: ProbVector,
    dims,
) -> GeneralizedSchmidtState:
    bases = [random_unitary(rng, d) for d in dims]
    return GeneralizedSchmidtState(dims, coeffs, bases)


def random_doubly_stochastic(rng: np.random.Generator, n: int, transforms: int) -> np.ndarray:
    """Product of random T-transforms; doubly stochastic by construction."""
    d = np.eye(n)
    for _ in range(transforms):
        i, j = rng.choice(n, size=2, replace=False)
        t = rng.uniform(0.0, 1.0)
        trans = np.eye(n)
        trans[i, i] = trans[j, j] = t
        trans[i, j] = trans[j, i] = 1.0 - t
        d = trans @ d
    return d

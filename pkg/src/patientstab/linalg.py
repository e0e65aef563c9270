"""Dense nonnegative-matrix kernel.

Matrices are plain 2-D ``numpy`` float arrays. The spectral radius of a
nonnegative matrix is found per strongly connected component of its
sparsity graph: the radius of a reducible matrix is the largest radius of
its irreducible diagonal blocks, and each irreducible block is handled by
a bracketed power iteration that cannot be fooled by Jordan blocks or by
periodic (imprimitive) structure. Blocks whose leading eigenvalues nearly
coincide fall back to shifted inverse iteration, then to the Gelfand
sequence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.sparse.csgraph import connected_components

from ._backend import kernels

__all__ = [
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITER",
    "KRON_MAX_ROWS",
    "SpectralResult",
    "NonConvergenceError",
    "ReductionError",
    "DimensionCapError",
    "as_matrix",
    "spectral_radius",
    "kron",
    "kron_power",
    "isoradial_reduce",
    "assemble_companion",
    "solve",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000
KRON_MAX_ROWS = 10_000
SINGULAR_RTOL = 1e-12
GELFAND_MAX_DOUBLINGS = 20
# iterations of plain power iteration before the Perron shift kicks in
_SHIFT_AFTER = 16
# dense eigenvalue solves are only used on blocks up to this size
_INVERSE_MAX_N = 1000


class NonConvergenceError(ArithmeticError):
    """Raised when every spectral-radius strategy fails to converge."""


class ReductionError(ArithmeticError):
    """Raised when an isoradial reduction does not exist."""


class DimensionCapError(ValueError):
    """Raised when a Kronecker product would exceed the configured size."""


@dataclass(frozen=True)
class SpectralResult:
    radius: float
    iterations: int
    converged: bool
    method: str  # "power_iteration" | "nilpotent_detected" | "inverse_iteration" | "gelfand_fallback"
    residual: float = 0.0

    def __float__(self) -> float:
        return self.radius


def as_matrix(a, *, nonnegative: bool = False, square: bool = False, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a 2-D float array and check the requested flags."""
    m = np.array(a, dtype=float)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    if nonnegative and np.any(m < 0):
        i, j = np.argwhere(m < 0)[0]
        raise ValueError(f"{name} must be nonnegative; entry ({i}, {j}) is {m[i, j]}")
    return m


def spectral_radius(m, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SpectralResult:
    """Spectral radius of a square nonnegative matrix.

    Parameters
    ----------
    m : array_like
        Square matrix with nonnegative entries.
    tol : float
        Relative accuracy. A converged result lies in a certified
        Collatz-Wielandt bracket ``[lo, hi]`` with ``hi - lo <= tol * hi``.
    max_iter : int
        Power-iteration budget per irreducible block.

    Returns
    -------
    SpectralResult

    Raises
    ------
    NonConvergenceError
        If power iteration and the Gelfand fallback both fail on some block.
    """
    m = as_matrix(m, nonnegative=True, square=True)
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = m.shape[0]
    ncomp, labels = connected_components(m > 0, directed=True, connection="strong")

    # a nonnegative matrix is nilpotent exactly when its graph has no cycle:
    # every component a single vertex without a self-loop
    if ncomp == n and not np.any(np.diag(m) > 0):
        return SpectralResult(0.0, 0, True, "nilpotent_detected")

    radius = 0.0
    iterations = 0
    method = "power_iteration"
    residual = 0.0
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        if idx.size == 1:
            radius = max(radius, m[idx[0], idx[0]])
            iterations += 1
            continue
        block = m[np.ix_(idx, idx)]
        # power-of-two rescaling keeps tiny or huge blocks in range; skipped
        # when it would round away subnormal entries
        exp = int(np.frexp(block.max())[1])
        scaled = np.ldexp(block, -exp)
        if not np.array_equal(np.ldexp(scaled, exp), block):
            exp, scaled = 0, block
        block = np.ascontiguousarray(scaled)
        est, lo, hi, it, ok = kernels.power_iterate(block, tol, max_iter, _SHIFT_AFTER)
        iterations += it
        if not ok and block.shape[0] <= _INVERSE_MAX_N:
            est, lo, hi, it, ok = _inverse_iterate(block, tol)
            iterations += it
            if ok:
                method = "inverse_iteration"
        if not ok:
            est, it, ok = _gelfand(block, tol)
            iterations += it
            method = "gelfand_fallback"
            if not ok:
                raise NonConvergenceError(
                    f"spectral radius did not converge on a {idx.size}x{idx.size} block "
                    f"(power iteration bracket [{np.ldexp(lo, exp):.6g}, {np.ldexp(hi, exp):.6g}], "
                    f"Gelfand estimate {np.ldexp(est, exp):.6g})"
                )
            width = 0.0
        else:
            width = (hi - lo) / hi if hi > 0 else 0.0
        est = float(np.ldexp(est, exp))
        if est > radius:
            radius, residual = est, width
    return SpectralResult(float(radius), iterations, True, method, float(residual))


def _inverse_iterate(block: np.ndarray, tol: float, steps: int = 30):
    """Shifted inverse iteration at the dense-eigensolver Perron estimate.

    For ``s > rho`` the resolvent ``(sI - B)^-1`` of an irreducible
    nonnegative ``B`` is positive, so iterates stay in the positive cone and
    the Collatz-Wielandt bracket certifies the result as before.
    """
    n = block.shape[0]
    lam = float(np.max(np.abs(np.linalg.eigvals(block))))
    scale = max(lam, float(block.max()))
    lo = hi = 0.0
    it = 0
    for gap in (1e-13, 1e-10, 1e-7, 1e-4):
        shift = lam + gap * scale
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            try:
                lu = lu_factor(shift * np.eye(n) - block, check_finite=False)
            except (LinAlgWarning, ValueError):
                continue
        x = np.ones(n)
        for _ in range(steps):
            it += 1
            y = lu_solve(lu, x, check_finite=False)
            if not np.all(np.isfinite(y)) or y.min() <= 0:
                break  # the shift fell below the Perron root
            x = y / y.max()
            if x.min() == 0.0:
                break
            r = (block @ x) / x
            lo, hi = float(r.min()), float(r.max())
            if np.isfinite(hi) and hi - lo <= tol * hi:
                return 0.5 * (lo + hi), lo, hi, it, True
    return 0.5 * (lo + hi), lo, hi, it, False


def _gelfand(block: np.ndarray, tol: float):
    """``||B^k||_inf^(1/k)`` along ``k = 2, 4, 8, ...`` by repeated squaring."""
    p = block / np.abs(block).sum(axis=1).max()
    log_scale = np.log(np.abs(block).sum(axis=1).max())
    prev = np.exp(log_scale)
    k = 1
    for j in range(1, GELFAND_MAX_DOUBLINGS + 1):
        p = p @ p
        log_scale *= 2.0
        norm = np.abs(p).sum(axis=1).max()
        if norm == 0.0:
            # blocks reaching here contain a cycle, so this is underflow
            return prev, j, False
        p /= norm
        log_scale += np.log(norm)
        k *= 2
        est = float(np.exp(log_scale / k))
        if abs(est - prev) <= tol * est:
            return est, j, True
        prev = est
    return prev, GELFAND_MAX_DOUBLINGS, False


def kron(a, b, max_rows: int = KRON_MAX_ROWS) -> np.ndarray:
    """Kronecker product; block ``(i, j)`` of the result is ``a[i, j] * b``."""
    a = as_matrix(a, name="a")
    b = as_matrix(b, name="b")
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if max(rows, cols) > max_rows:
        raise DimensionCapError(f"Kronecker product would be {rows}x{cols}, cap is {max_rows}")
    return np.kron(a, b)


def kron_power(a, p: int, max_rows: int = KRON_MAX_ROWS) -> np.ndarray:
    """``a`` Kronecker-multiplied with itself ``p`` times (``p >= 1``)."""
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    a = as_matrix(a)
    if max(a.shape) ** p > max_rows:
        raise DimensionCapError(f"Kronecker power of order {p} of a {a.shape} matrix exceeds cap {max_rows}")
    out = a
    for _ in range(int(p) - 1):
        out = kron(out, a, max_rows=max_rows)
    return out


def solve(a, b, rtol: float = SINGULAR_RTOL) -> np.ndarray:
    """Solve ``a x = b`` by partial-pivot LU.

    Raises ``np.linalg.LinAlgError`` when a pivot falls below
    ``rtol`` times the largest absolute entry in its original row.
    """
    a = as_matrix(a, square=True)
    b = np.asarray(b, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(a, check_finite=False)
    # replay the row swaps to line up each pivot with its source row
    order = np.arange(a.shape[0])
    for i, pi in enumerate(piv):
        order[i], order[pi] = order[pi], order[i]
    row_scale = np.abs(a).max(axis=1)[order]
    pivots = np.abs(np.diag(lu))
    bad = pivots < rtol * np.maximum(row_scale, np.finfo(float).tiny)
    if np.any(bad):
        raise np.linalg.LinAlgError(f"matrix is singular to working precision (pivot {int(np.argmax(bad))})")
    return lu_solve((lu, piv), b, check_finite=False)


def isoradial_reduce(m, s: Sequence[int], rho: float | None = None, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Reduce ``m`` onto the index set ``s`` while keeping its spectral radius.

    Computes ``M_SS - M_ST (M_TT - rho I)^{-1} M_TS`` with ``T`` the complement
    of ``s``, via a linear solve. Indices are 0-based. ``rho`` defaults to
    ``spectral_radius(m)``, which requires ``m`` nonnegative; pass it
    explicitly for signed input.

    Raises
    ------
    ReductionError
        If ``M_TT - rho I`` is singular, i.e. the reduction does not exist.
    """
    m = as_matrix(m, square=True)
    n = m.shape[0]
    keep = np.unique(np.asarray(list(s), dtype=int))
    if keep.size != len(list(s)):
        raise ValueError("index set has duplicates")
    if keep.size == 0 or keep.size == n:
        raise ValueError("index set must be a nonempty proper subset")
    if keep.min() < 0 or keep.max() >= n:
        raise ValueError(f"indices must lie in [0, {n})")
    rest = np.setdiff1d(np.arange(n), keep)
    if rho is None:
        rho = spectral_radius(m, tol=tol).radius
    inner = m[np.ix_(rest, rest)] - rho * np.eye(rest.size)
    try:
        x = solve(inner, m[np.ix_(rest, keep)])
    except np.linalg.LinAlgError as exc:
        raise ReductionError(f"reduction does not exist: M_TT - rho*I is singular (rho={rho:.12g})") from exc
    out = m[np.ix_(keep, keep)] - m[np.ix_(keep, rest)] @ x
    if np.all(m >= 0):
        # exact result is nonnegative here; clear rounding-level negatives
        scale = max(np.abs(out).max(), 1.0)
        out[(out < 0) & (out > -1e-12 * scale)] = 0.0
    return out


def assemble_companion(blocks: Sequence, n: int | None = None) -> np.ndarray:
    """Block companion matrix: ``[A_0 ... A_L]`` on top, identities below."""
    mats = [as_matrix(b, square=True, name=f"block {k}") for k, b in enumerate(blocks)]
    if not mats:
        raise ValueError("need at least one block")
    if n is None:
        n = mats[0].shape[0]
    for k, b in enumerate(mats):
        if b.shape != (n, n):
            raise ValueError(f"block {k} has shape {b.shape}, expected {(n, n)}")
    L = len(mats) - 1
    out = np.zeros((n * (L + 1), n * (L + 1)))
    out[:n, :] = np.hstack(mats)
    for ell in range(1, L + 1):
        out[ell * n : (ell + 1) * n, (ell - 1) * n : ell * n] = np.eye(n)
    return out

"""Switched systems built from affine-plus-tanh maps.

Every map here has the form ``x -> L x + W tanh(x) + b``. The family is
closed under delay embedding and has a closed-form entrywise-smallest
Lipschitz matrix, ``max(|L|, |L + W|)``, since the partial derivative
``l_ij + w_ij sech^2(x_j)`` sweeps the segment between ``l_ij + w_ij`` and
``l_ij`` as ``sech^2`` ranges over ``(0, 1]``.

Maps outside the family can be wrapped in :class:`CustomMap` together
with a user-supplied Lipschitz matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Union

import numpy as np

from .linalg import as_matrix

__all__ = [
    "MapSpec",
    "CustomMap",
    "SwitchedSystem",
    "IntervalEnsemble",
    "LipschitzSet",
    "FixedPointError",
    "NoSharedFixedPoint",
    "FixedPointNotConverged",
    "evaluate",
    "lipschitz_matrix",
    "lipschitz_set",
    "ensemble_mean",
    "find_shared_fixed_point",
    "draw_instance",
    "make_rng",
    "choose",
    "WEIGHT_TOL",
]

WEIGHT_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class MapSpec:
    """``x -> linear @ x + gain @ tanh(x) + bias``."""

    linear: np.ndarray
    gain: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        lin = as_matrix(self.linear, square=True, name="linear")
        n = lin.shape[0]
        gain = as_matrix(self.gain, square=True, name="gain")
        bias = np.array(self.bias, dtype=float)
        if gain.shape != (n, n):
            raise ValueError(f"gain has shape {gain.shape}, expected {(n, n)}")
        if bias.shape != (n,):
            raise ValueError(f"bias has shape {bias.shape}, expected {(n,)}")
        if not np.all(np.isfinite(bias)):
            raise ValueError("bias has non-finite entries")
        object.__setattr__(self, "linear", _frozen(lin))
        object.__setattr__(self, "gain", _frozen(gain))
        object.__setattr__(self, "bias", _frozen(bias))

    @classmethod
    def build(cls, n: int, linear=None, gain=None, bias=None) -> "MapSpec":
        """Construct with zero defaults for any omitted part."""
        z = np.zeros((n, n))
        return cls(
            z if linear is None else linear,
            z if gain is None else gain,
            np.zeros(n) if bias is None else bias,
        )

    @property
    def n(self) -> int:
        return self.linear.shape[0]

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    def __eq__(self, other):
        if not isinstance(other, MapSpec):
            return NotImplemented
        return (
            np.array_equal(self.linear, other.linear)
            and np.array_equal(self.gain, other.gain)
            and np.array_equal(self.bias, other.bias)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CustomMap:
    """An arbitrary Lipschitz map paired with a Lipschitz matrix for it.

    The matrix is trusted as given; nothing about the pair is checked
    beyond shapes and nonnegativity.
    """

    func: Callable[[np.ndarray], np.ndarray]
    lipschitz: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lipschitz", _frozen(as_matrix(self.lipschitz, nonnegative=True, square=True)))

    @property
    def n(self) -> int:
        return self.lipschitz.shape[0]

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)


AnyMap = Union[MapSpec, CustomMap]


@dataclass(frozen=True, eq=False)
class SwitchedSystem:
    """Finitely many maps on ``R^n`` drawn i.i.d. with probabilities ``weights``.

    Duplicate maps are kept as separate entries.
    """

    maps: tuple
    weights: np.ndarray

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise ValueError("a switched system needs at least one map")
        n = maps[0].n
        for k, f in enumerate(maps):
            if f.n != n:
                raise ValueError(f"map {k} has dimension {f.n}, expected {n}")
        w = np.array(self.weights, dtype=float)
        if w.shape != (len(maps),):
            raise ValueError(f"need {len(maps)} weights, got shape {w.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.maps[0].n

    def __len__(self) -> int:
        return len(self.maps)

    def __eq__(self, other):
        if not isinstance(other, SwitchedSystem):
            return NotImplemented
        return (
            len(self.maps) == len(other.maps)
            and all(a == b for a, b in zip(self.maps, other.maps))
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class IntervalEnsemble:
    """Linear maps ``x -> A x`` with each ``a_ij ~ U[lower_ij, upper_ij]`` independently."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_matrix(self.lower, square=True, name="lower")
        hi = as_matrix(self.upper, square=True, name="upper")
        if lo.shape != hi.shape:
            raise ValueError(f"lower {lo.shape} and upper {hi.shape} differ in shape")
        if np.any(lo > hi):
            i, j = np.argwhere(lo > hi)[0]
            raise ValueError(f"interval ({i}, {j}) is empty: lower {lo[i, j]} > upper {hi[i, j]}")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def __eq__(self, other):
        if not isinstance(other, IntervalEnsemble):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LipschitzSet:
    """Nonnegative matrices with the switching weights of their source maps."""

    matrices: tuple
    weights: np.ndarray

    def __post_init__(self):
        mats = tuple(_frozen(as_matrix(a, nonnegative=True, square=True)) for a in self.matrices)
        if not mats:
            raise ValueError("empty Lipschitz set")
        n = mats[0].shape[0]
        if any(a.shape != (n, n) for a in mats):
            raise ValueError("Lipschitz matrices differ in shape")
        w = np.array(self.weights, dtype=float)
        if w.shape != (len(mats),) or np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must be a probability vector with one entry per matrix")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.matrices[0].shape[0]

    def expectation(self) -> np.ndarray:
        """Entrywise mean of the matrices under the weights."""
        return np.einsum("k,kij->ij", self.weights, np.stack(self.matrices))


def evaluate(f: AnyMap, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (f.n,):
        raise ValueError(f"state has shape {x.shape}, map expects ({f.n},)")
    if isinstance(f, CustomMap):
        return np.asarray(f.func(x), dtype=float)
    return f.linear @ x + f.gain @ np.tanh(x) + f.bias


def lipschitz_matrix(f: AnyMap) -> np.ndarray:
    """Entrywise-smallest Lipschitz matrix (trusted as given for custom maps)."""
    if isinstance(f, CustomMap):
        return np.array(f.lipschitz)
    return np.maximum(np.abs(f.linear), np.abs(f.linear + f.gain))


def lipschitz_set(sys: SwitchedSystem) -> LipschitzSet:
    return LipschitzSet(tuple(lipschitz_matrix(f) for f in sys.maps), sys.weights)


def ensemble_mean(e: IntervalEnsemble, absolute: bool = False) -> np.ndarray:
    """Entrywise mean of the ensemble, or of its entrywise absolute value.

    For ``U ~ U[l, u]`` straddling zero, ``E|U| = (l^2 + u^2) / (2 (u - l))``;
    otherwise ``E|U| = |l + u| / 2``.

    Bounds are read as the shortest decimals that round to them and the
    formula is evaluated in exact rational arithmetic, then rounded once,
    so decimal specs give the decimal answer (``[0.05, 0.35]`` has mean
    exactly ``0.2``, which plain float arithmetic misses by one ulp).
    """
    lo = np.asarray(e.lower)
    hi = np.asarray(e.upper)
    out = np.empty(lo.shape)
    for idx in np.ndindex(lo.shape):
        out[idx] = float(_interval_mean(_dec(lo[idx]), _dec(hi[idx]), absolute))
    return out


def _dec(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def _interval_mean(l: Fraction, u: Fraction, absolute: bool) -> Fraction:
    if not absolute:
        return (l + u) / 2
    if l < 0 < u:
        return (l * l + u * u) / (2 * (u - l))
    return abs(l + u) / 2


class FixedPointError(ArithmeticError):
    """Base class for fixed-point search failures."""


class FixedPointNotConverged(FixedPointError):
    """Damped iteration on the first map did not settle."""


class NoSharedFixedPoint(FixedPointError):
    """The first map's fixed point is not fixed by every other map."""

    def __init__(self, msg, point=None, residuals=None):
        super().__init__(msg)
        self.point = point
        self.residuals = residuals


def find_shared_fixed_point(sys, tol: float = 1e-10, damping: float = 0.5,
                            max_iter: int = 100_000, x0=None) -> np.ndarray:
    """Find a point fixed by every map of ``sys``.

    Runs ``x <- (1 - damping) x + damping F(x)`` on the first map until
    ``||F(x) - x||_inf <= tol``, then checks the other maps at that point.
    Interval ensembles are linear and always share the origin.

    Raises
    ------
    FixedPointNotConverged
        The iteration did not reach ``tol`` within ``max_iter`` steps.
    NoSharedFixedPoint
        Some other map moves the point by more than ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(sys, IntervalEnsemble):
        return np.zeros(sys.n)
    maps = sys.maps if isinstance(sys, SwitchedSystem) else tuple(sys)
    first = maps[0]
    x = np.zeros(first.n) if x0 is None else np.array(x0, dtype=float)
    for _ in range(max_iter):
        fx = evaluate(first, x)
        if not np.all(np.isfinite(fx)):
            raise FixedPointNotConverged("fixed-point iteration diverged")
        if np.max(np.abs(fx - x)) <= tol:
            break
        x = (1.0 - damping) * x + damping * fx
    else:
        raise FixedPointNotConverged(
            f"no fixed point within {max_iter} damped iterations "
            f"(last residual {np.max(np.abs(evaluate(first, x) - x)):.3g})"
        )
    residuals = np.array([np.max(np.abs(evaluate(f, x) - x)) for f in maps])
    if np.any(residuals > tol):
        k = int(np.argmax(residuals > tol))
        raise NoSharedFixedPoint(
            f"map {k} moves the first map's fixed point by {residuals[k]:.3g} > {tol:g}",
            point=x,
            residuals=residuals,
        )
    return x


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def choose(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF selection of indices for uniforms ``u`` in ``[0, 1)``."""
    cdf = np.cumsum(weights)
    # trailing zero-weight entries land exactly on 1.0 and are never chosen
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(weights) - 1)


def draw_instance(sys, seed: int, k: int):
    """Reproducible i.i.d. switching draws.

    Returns ``k`` map indices for a :class:`SwitchedSystem`, or a ``(k, n, n)``
    stack of sampled matrices for an :class:`IntervalEnsemble`.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    rng = make_rng(seed)
    if isinstance(sys, IntervalEnsemble):
        return rng.uniform(sys.lower, sys.upper, size=(k, sys.n, sys.n))
    return choose(sys.weights, rng.random(k))

"""Delay-space embedding of maps, Lipschitz matrices and switching laws.

A delayed state is laid out lag-major: all ``n`` sites at lag 0, then all
sites at lag 1, up to lag ``L``. Site ``i`` at lag ``l`` sits at flat index
``l * n + i``. Entry ``d_ij`` of a delay matrix is the lag at which site
``j`` enters the update of site ``i``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import as_matrix, assemble_companion
from .systems import (
    WEIGHT_TOL,
    CustomMap,
    IntervalEnsemble,
    MapSpec,
    SwitchedSystem,
    choose,
    ensemble_mean,
    make_rng,
)

__all__ = [
    "POLICY_KINDS",
    "DelayPolicy",
    "DelayedSwitchedSystem",
    "as_delay_matrix",
    "delay_blocks",
    "embed_map",
    "embed_matrix",
    "delayed_system",
    "expected_delayed_lipschitz",
]

POLICY_KINDS = ("none", "fixed", "iid_uniform_entries", "explicit")
SUPPORT_LIMIT = 10_000


def as_delay_matrix(d, L: int, n: int | None = None) -> np.ndarray:
    """Validate a delay matrix: square integer entries in ``[0, L]``."""
    if int(L) != L or L < 0:
        raise ValueError(f"delay bound L must be a nonnegative integer, got {L!r}")
    raw = np.asarray(d)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1] or raw.size == 0:
        raise ValueError(f"delay matrix must be square, got shape {raw.shape}")
    if n is not None and raw.shape[0] != n:
        raise ValueError(f"delay matrix is {raw.shape[0]}x{raw.shape[0]}, system dimension is {n}")
    if not np.all(np.equal(np.mod(raw, 1), 0)):
        raise ValueError("delay matrix entries must be integers")
    out = raw.astype(np.int32)
    for (i, j), v in np.ndenumerate(out):
        if v < 0 or v > L:
            raise ValueError(f"delay entry ({i}, {j}) = {v} outside [0, {L}]")
    return out


def delay_blocks(a, d, L: int) -> list[np.ndarray]:
    """Split ``a`` by lag: block ``l`` keeps ``a_ij`` where ``d_ij == l``."""
    a = as_matrix(a, square=True)
    d = as_delay_matrix(d, L, a.shape[0])
    return [np.where(d == ell, a, 0.0) for ell in range(L + 1)]


def embed_matrix(a, d, L: int) -> np.ndarray:
    """Lipschitz matrix of the delayed map, built from that of the undelayed one."""
    a = as_matrix(a, nonnegative=True, square=True)
    return assemble_companion(delay_blocks(a, d, L), a.shape[0])


def embed_map(f: MapSpec, d, L: int) -> MapSpec:
    """The delayed version of ``f`` acting on ``R^(n (L+1))``.

    Site ``i`` at lag 0 is updated from site ``j`` at lag ``d_ij``; every
    other coordinate copies its predecessor one lag earlier.
    """
    if isinstance(f, CustomMap):
        raise TypeError("custom maps carry no structure to embed; delay their Lipschitz matrix instead")
    n = f.n
    d = as_delay_matrix(d, L, n)
    N = n * (L + 1)
    lin = np.zeros((N, N))
    gain = np.zeros((N, N))
    rows = np.repeat(np.arange(n), n)
    cols = d.ravel() * n + np.tile(np.arange(n), n)
    lin[rows, cols] = f.linear.ravel()
    gain[rows, cols] = f.gain.ravel()
    for ell in range(1, L + 1):
        lin[ell * n : (ell + 1) * n, (ell - 1) * n : ell * n] = np.eye(n)
    bias = np.concatenate([f.bias, np.zeros(N - n)])
    return MapSpec(lin, gain, bias)


@dataclass(frozen=True, eq=False)
class DelayPolicy:
    """How delay matrices are drawn alongside each switching map.

    ``kind`` is one of:

    * ``"none"``: every delay is zero.
    * ``"fixed"``: one delay matrix ``matrix`` at every step.
    * ``"iid_uniform_entries"``: each ``d_ij`` uniform on ``{0..L}``,
      redrawn independently every step.
    * ``"explicit"``: ``choices[k]`` lists ``(delay matrix, probability)``
      pairs for map ``k``; the probabilities are conditional on the map.

    The joint law of (map, delay) is ``weight(map) * P(delay | map)``, so
    the delayed versions of a map are exactly as likely as the map itself.
    """

    kind: str = "none"
    matrix: np.ndarray | None = None
    choices: tuple | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown delay policy {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.kind == "fixed":
            if self.matrix is None:
                raise ValueError("fixed policy needs a delay matrix")
            m = np.array(self.matrix)
            m.flags.writeable = False
            object.__setattr__(self, "matrix", m)
        if self.kind == "explicit":
            if not self.choices:
                raise ValueError("explicit policy needs per-map delay choices")
            frozen = []
            for k, opts in enumerate(self.choices):
                opts = tuple((np.array(D), float(p)) for D, p in opts)
                probs = np.array([p for _, p in opts])
                if opts and (np.any(probs < 0) or abs(probs.sum() - 1.0) > WEIGHT_TOL):
                    raise ValueError(f"delay probabilities for map {k} must be nonnegative and sum to 1")
                frozen.append(opts)
            object.__setattr__(self, "choices", tuple(frozen))

    @classmethod
    def none(cls) -> "DelayPolicy":
        return cls("none")

    @classmethod
    def fixed(cls, d) -> "DelayPolicy":
        return cls("fixed", matrix=d)

    @classmethod
    def iid_uniform(cls) -> "DelayPolicy":
        return cls("iid_uniform_entries")

    @classmethod
    def explicit(cls, choices: Sequence) -> "DelayPolicy":
        return cls("explicit", choices=tuple(choices))

    def validate(self, n: int, L: int, weights) -> None:
        """Check the policy against a system of dimension ``n`` and delay bound ``L``."""
        if int(L) != L or L < 0:
            raise ValueError(f"delay bound L must be a nonnegative integer, got {L!r}")
        if self.kind == "fixed":
            as_delay_matrix(self.matrix, L, n)
        if self.kind == "explicit":
            weights = np.asarray(weights)
            if len(self.choices) != len(weights):
                raise ValueError(f"explicit policy lists {len(self.choices)} maps, system has {len(weights)}")
            for k, opts in enumerate(self.choices):
                if not opts and weights[k] > 0:
                    raise ValueError(f"explicit policy omits map {k}, which has weight {weights[k]}")
                for D, _ in opts:
                    as_delay_matrix(D, L, n)

    def marginals(self, k: int, n: int, L: int) -> np.ndarray:
        """``P(d_ij = l | map k)`` as an ``(L+1, n, n)`` array."""
        out = np.zeros((L + 1, n, n))
        if self.kind == "none":
            out[0] = 1.0
        elif self.kind == "fixed":
            d = as_delay_matrix(self.matrix, L, n)
            for ell in range(L + 1):
                out[ell] = d == ell
        elif self.kind == "iid_uniform_entries":
            out[:] = 1.0 / (L + 1)
        else:
            for D, p in self.choices[k]:
                d = as_delay_matrix(D, L, n)
                for ell in range(L + 1):
                    out[ell] += p * (d == ell)
        return out

    def draw(self, rng: np.random.Generator, maps: np.ndarray, n: int, L: int) -> np.ndarray:
        """Delay matrices for a sequence of map indices, shape ``(len(maps), n, n)``."""
        K = len(maps)
        if self.kind == "none" or L == 0:
            return np.zeros((K, n, n), dtype=np.int32)
        if self.kind == "fixed":
            d = as_delay_matrix(self.matrix, L, n)
            return np.broadcast_to(d, (K, n, n)).copy()
        if self.kind == "iid_uniform_entries":
            return rng.integers(0, L + 1, size=(K, n, n)).astype(np.int32)
        u = rng.random(K)
        out = np.zeros((K, n, n), dtype=np.int32)
        for k, opts in enumerate(self.choices):
            sel = np.flatnonzero(maps == k)
            if sel.size == 0:
                continue
            mats = np.stack([as_delay_matrix(D, L, n) for D, _ in opts])
            probs = np.array([p for _, p in opts])
            out[sel] = mats[choose(probs, u[sel])]
        return out


@dataclass(frozen=True, eq=False)
class DelayedSwitchedSystem:
    """A switched system (or interval ensemble) together with a delay law."""

    system: SwitchedSystem | IntervalEnsemble
    policy: DelayPolicy
    L: int

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def dim(self) -> int:
        return self.system.n * (self.L + 1)

    @property
    def weights(self) -> np.ndarray:
        if isinstance(self.system, IntervalEnsemble):
            return np.ones(1)
        return np.asarray(self.system.weights)

    def sample(self, seed: int, k: int):
        """``k`` i.i.d. (map index, delay matrix) draws keyed by ``seed``."""
        rng = make_rng(seed)
        maps = choose(self.weights, rng.random(k))
        return maps, self.policy.draw(rng, maps, self.n, self.L)

    def support(self):
        """All (map index, delay matrix, probability) triples with positive mass.

        Raises ``ValueError`` when the support has more than 10 000 elements.
        """
        n, L = self.n, self.L
        w = self.weights
        kind = self.policy.kind
        if kind == "iid_uniform_entries" and L > 0:
            per_map = (L + 1) ** (n * n)
            if per_map * int(np.count_nonzero(w)) > SUPPORT_LIMIT:
                raise ValueError(f"support has {per_map} delay matrices per map; too large to enumerate")
        out = []
        for k, wk in enumerate(w):
            if wk == 0:
                continue
            if kind == "none" or (kind == "iid_uniform_entries" and L == 0):
                out.append((k, np.zeros((n, n), dtype=np.int32), float(wk)))
            elif kind == "fixed":
                out.append((k, as_delay_matrix(self.policy.matrix, L, n), float(wk)))
            elif kind == "iid_uniform_entries":
                p = float(wk) / (L + 1) ** (n * n)
                for flat in itertools.product(range(L + 1), repeat=n * n):
                    out.append((k, np.array(flat, dtype=np.int32).reshape(n, n), p))
            else:
                for D, p in self.policy.choices[k]:
                    if p > 0:
                        out.append((k, as_delay_matrix(D, L, n), float(wk) * p))
        return out

    def map_marginals(self) -> np.ndarray:
        """Total probability of each map's delayed versions (equals the map weights)."""
        out = np.zeros(len(self.weights))
        for k, _, p in self.support():
            out[k] += p
        return out


def delayed_system(sys, policy: DelayPolicy, L: int) -> DelayedSwitchedSystem:
    weights = np.ones(1) if isinstance(sys, IntervalEnsemble) else sys.weights
    if isinstance(sys, IntervalEnsemble) and policy.kind == "explicit" and len(policy.choices) != 1:
        raise ValueError("an explicit policy for an interval ensemble takes a single choice list")
    policy.validate(sys.n, L, weights)
    return DelayedSwitchedSystem(sys, policy, int(L))


def expected_delayed_lipschitz(ls, policy: DelayPolicy, L: int) -> np.ndarray:
    """Mean Lipschitz matrix of the delayed system, in closed form.

    Block ``B_l`` has entries ``sum_k w_k a^k_ij P(d_ij = l | k)``; each
    entry of a delayed Lipschitz matrix depends on one delay entry only, so
    no enumeration of delay matrices is needed. ``ls`` may also be an
    :class:`IntervalEnsemble`, whose Lipschitz mean is its absolute mean.
    """
    if isinstance(ls, IntervalEnsemble):
        mats, weights = [ensemble_mean(ls, absolute=True)], np.ones(1)
    else:
        mats, weights = ls.matrices, ls.weights
    n = mats[0].shape[0]
    policy.validate(n, L, weights)
    blocks = np.zeros((L + 1, n, n))
    for k, (a, w) in enumerate(zip(mats, weights)):
        if w == 0:
            continue
        blocks += w * a[None, :, :] * policy.marginals(k, n, L)
    return assemble_companion(list(blocks), n)


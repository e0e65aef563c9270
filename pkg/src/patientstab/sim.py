"""Monte Carlo trajectories of switched and delayed switched systems.

All randomness is drawn up front from counter-based generators keyed by
``(seed, trajectory index)``, then handed to a kernel that only does
arithmetic. Trajectories are therefore reproducible regardless of batch
size, chunking or thread count.

Norms are max-norms throughout.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import _backend
from .delay import DelayedSwitchedSystem, DelayPolicy, embed_matrix
from .systems import (
    CustomMap,
    IntervalEnsemble,
    LipschitzSet,
    SwitchedSystem,
    choose,
    lipschitz_set,
    make_rng,
)

__all__ = [
    "DIVERGENCE_CUTOFF",
    "TrajectoryBatch",
    "DecayEstimate",
    "simulate",
    "estimate_decay",
    "mc_p_radius_estimate",
    "linear_comparison",
    "export_csv",
    "write_csv",
    "circle_starts",
    "system_digest",
]

DIVERGENCE_CUTOFF = 1e12


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """States ``(num_trajectories, horizon + 1, dim)`` plus the draws that made them.

    Rows of a trajectory that crossed the divergence cutoff are NaN from
    that step on, and ``diverged`` flags it.
    """

    states: np.ndarray
    map_indices: np.ndarray
    delays: np.ndarray
    diverged: np.ndarray
    seed: int
    n: int
    L: int
    digest: str
    matrices: np.ndarray | None = None  # per-step sampled matrices, interval ensembles only

    @property
    def num_trajectories(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[2]


@dataclass(frozen=True)
class DecayEstimate:
    p: int
    means: np.ndarray
    beta: float
    log_c: float
    window: tuple
    decay_detected: bool
    diverged_fraction: float

    @property
    def c(self) -> float:
        return float(np.exp(self.log_c))


def system_digest(sys) -> str:
    """Short SHA-256 of a system's canonical JSON form."""
    from .schema import system_to_dict

    try:
        payload = json.dumps(system_to_dict(sys), sort_keys=True, separators=(",", ":"))
    except TypeError:
        payload = repr(sys)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def circle_starts(num: int, center=None, radius: float = 1.0) -> np.ndarray:
    """``num`` evenly spaced points on a circle in the first two coordinates.

    For ``n > 2`` the remaining coordinates of every start are zero
    (relative to ``center``).
    """
    center = np.zeros(2) if center is None else np.asarray(center, dtype=float)
    theta = 2.0 * np.pi * (np.arange(num) + 0.5) / max(num, 1)
    out = np.tile(center, (num, 1))
    out[:, 0] += radius * np.cos(theta)
    out[:, 1 % center.size] += radius * np.sin(theta)
    return out


def _unpack(system):
    if isinstance(system, DelayedSwitchedSystem):
        return system.system, system.policy, system.L
    return system, DelayPolicy.none(), 0


def _initial_states(x0, num_traj: int, n: int, L: int) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    dim = n * (L + 1)
    if x0.ndim == 1:
        x0 = np.broadcast_to(x0, (num_traj, x0.size))
    if x0.ndim != 2 or x0.shape[0] != num_traj:
        raise ValueError(f"x0 must be a vector or have {num_traj} rows, got shape {x0.shape}")
    if x0.shape[1] == n:
        return np.tile(x0, (1, L + 1))
    if x0.shape[1] == dim:
        return np.array(x0)
    raise ValueError(f"x0 has {x0.shape[1]} coordinates; expected {n} or {dim}")


def _draws(base, policy: DelayPolicy, L: int, seed: int, index: int, horizon: int):
    rng = make_rng(seed, index)
    n = base.n
    if isinstance(base, IntervalEnsemble):
        maps = np.zeros(horizon, dtype=np.intp)
        rng.random(horizon)  # keeps stream layout identical to the finite case
    else:
        maps = choose(base.weights, rng.random(horizon))
    delays = policy.draw(rng, maps, n, L)
    mats = None
    if isinstance(base, IntervalEnsemble):
        mats = rng.uniform(base.lower, base.upper, size=(horizon, n, n))
    return maps, delays, mats


def simulate(system, x0, horizon: int, num_traj: int, seed: int = 0,
             threads: int | None = None, backend: str | None = None) -> TrajectoryBatch:
    """Run ``num_traj`` independent instances for ``horizon`` steps.

    ``system`` is a :class:`SwitchedSystem`, :class:`IntervalEnsemble` or
    :class:`DelayedSwitchedSystem`. ``x0`` is one start or one per
    trajectory, of length ``n`` (copied to every lag) or ``n (L+1)``.
    """
    if horizon < 0 or num_traj < 0:
        raise ValueError("horizon and num_traj must be nonnegative")
    base, policy, L = _unpack(system)
    n = base.n
    dim = n * (L + 1)
    states = np.empty((num_traj, horizon + 1, dim))
    states[:, 0, :] = _initial_states(x0, num_traj, n, L) if num_traj else np.empty((0, dim))
    diverged = np.zeros(num_traj, dtype=np.uint8)

    drawn = [_draws(base, policy, L, seed, t, horizon) for t in range(num_traj)]
    map_idx = np.array([d[0] for d in drawn], dtype=np.int32).reshape(num_traj, horizon)
    delays = np.array([d[1] for d in drawn], dtype=np.int32).reshape(num_traj, horizon, n, n)
    matrices = None

    if isinstance(base, IntervalEnsemble):
        matrices = np.array([d[2] for d in drawn]).reshape(num_traj, horizon, n, n)
        lin = np.ascontiguousarray(matrices.reshape(-1, n, n))
        lin_idx = np.arange(num_traj * horizon, dtype=np.int32).reshape(num_traj, horizon)
        gain = np.zeros((1, n, n))
        bias = np.zeros((1, n))
        kernel_maps = np.zeros_like(map_idx)
    elif any(isinstance(f, CustomMap) for f in base.maps):
        _simulate_custom(base, map_idx, delays, states, diverged)
        return TrajectoryBatch(states, map_idx, delays, diverged.astype(bool), seed, n, L, system_digest(system))
    else:
        lin = np.ascontiguousarray(np.stack([f.linear for f in base.maps]))
        gain = np.ascontiguousarray(np.stack([f.gain for f in base.maps]))
        bias = np.ascontiguousarray(np.stack([f.bias for f in base.maps]))
        lin_idx = map_idx
        kernel_maps = map_idx

    kern = _backend.kernels if backend is None else _backend.load(backend)
    threads = _backend.default_threads() if threads is None else max(1, int(threads))
    chunks = np.array_split(np.arange(num_traj), min(threads, max(num_traj, 1)))

    def run(idx):
        if idx.size == 0:
            return
        lo, hi = idx[0], idx[-1] + 1
        if matrices is not None:
            sub_lin = lin[lo * horizon : hi * horizon]
            sub_idx = np.ascontiguousarray(lin_idx[lo:hi] - lo * horizon, dtype=np.int32)
        else:
            sub_lin, sub_idx = lin, np.ascontiguousarray(lin_idx[lo:hi])
        st = np.ascontiguousarray(states[lo:hi])
        dv = np.zeros(hi - lo, dtype=np.uint8)
        kern.simulate_steps(sub_lin, sub_idx, gain, bias, np.ascontiguousarray(kernel_maps[lo:hi]),
                            np.ascontiguousarray(delays[lo:hi]), st, dv, DIVERGENCE_CUTOFF)
        states[lo:hi] = st
        diverged[lo:hi] = dv

    if len(chunks) == 1:
        run(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(run, chunks))

    return TrajectoryBatch(states, map_idx, delays, diverged.astype(bool), seed, n, L,
                           system_digest(system), matrices)


def _simulate_custom(base: SwitchedSystem, map_idx, delays, states, diverged):
    """Slow path for user-supplied maps: gather delayed arguments row by row."""
    T, K1, dim = states.shape
    n = base.n
    for t in range(T):
        for k in range(K1 - 1):
            prev = states[t, k].reshape(-1, n)
            f = base.maps[map_idx[t, k]]
            d = delays[t, k]
            new = np.empty(n)
            for i in range(n):
                arg = prev[d[i], np.arange(n)]
                new[i] = f(arg)[i]
            states[t, k + 1, :n] = new
            states[t, k + 1, n:] = states[t, k, : dim - n]
            if not np.all(np.abs(new) <= DIVERGENCE_CUTOFF):
                diverged[t] = 1
                states[t, k + 1 :] = np.nan
                break


def estimate_decay(batch: TrajectoryBatch, x_tilde, p: int = 1, window: tuple | None = None,
                   drop_factor: float = 10.0, edge_fraction: float = 0.1) -> DecayEstimate:
    """Empirical ``E ||x^k - x_tilde||^p`` and a log-linear fit ``log C - beta k``.

    Only the lag-0 block of delayed states is compared with ``x_tilde``.
    The fit runs over ``window = (first, last)`` steps (default: the whole
    horizon) using the steps with a positive mean. Decay is detected when
    ``beta > 0`` and the mean over the last ``edge_fraction`` of the window
    is below the mean over the first ``edge_fraction`` divided by
    ``drop_factor``. Diverged trajectories are left out of the means, and
    any divergence rules decay out.
    """
    x_tilde = np.asarray(x_tilde, dtype=float)
    n = batch.n
    if x_tilde.shape != (n,):
        raise ValueError(f"x_tilde must have length {n}")
    ok = ~batch.diverged
    if batch.num_trajectories == 0 or not ok.any():
        raise ValueError("no non-diverged trajectories to analyse")
    dev = np.abs(batch.states[ok, :, :n] - x_tilde).max(axis=2) ** p
    means = dev.mean(axis=0)
    first, last = (0, batch.horizon) if window is None else window
    if not 0 <= first < last <= batch.horizon:
        raise ValueError(f"window {window} outside [0, {batch.horizon}]")
    steps = np.arange(first, last + 1)
    m = means[first : last + 1]
    pos = m > 0
    if pos.sum() >= 2:
        slope, intercept = np.polyfit(steps[pos], np.log(m[pos]), 1)
        beta, log_c = -float(slope), float(intercept)
    else:
        # everything collapsed onto the fixed point
        beta, log_c = float("inf"), float(np.log(m[0])) if m[0] > 0 else float("-inf")
    edge = max(1, int(round(edge_fraction * steps.size)))
    head, tail = m[:edge].mean(), m[-edge:].mean()
    frac = float(batch.diverged.mean())
    detected = bool(beta > 0 and tail < head / drop_factor and frac == 0.0)
    return DecayEstimate(p, means, beta, log_c, (first, last), detected, frac)


def mc_p_radius_estimate(ls, p: int = 1, k: int = 200, samples: int = 2000, seed: int = 0,
                         backend: str | None = None, chunk: int = 512) -> float:
    """Finite-``k`` Monte Carlo surrogate of the p-radius.

    Returns ``(mean ||A_k ... A_1||^p)^(1/(p k))`` over ``samples`` random
    products with max-norm. The estimate converges to the p-radius as
    ``k`` grows; for finite ``k`` it carries a bias of order ``log(C)/k``.
    ``ls`` is a :class:`LipschitzSet`, a :class:`SwitchedSystem` (its
    Lipschitz set is used) or an :class:`IntervalEnsemble` (products of
    sampled ``|A|``).
    """
    if k < 1 or samples < 1:
        raise ValueError("k and samples must be at least 1")
    if isinstance(ls, SwitchedSystem):
        ls = lipschitz_set(ls)
    kern = _backend.kernels if backend is None else _backend.load(backend)
    logs = np.empty(samples)
    for start in range(0, samples, chunk):
        stop = min(samples, start + chunk)
        if isinstance(ls, IntervalEnsemble):
            mats = np.concatenate([
                np.abs(make_rng(seed, s).uniform(ls.lower, ls.upper, size=(k, ls.n, ls.n)))
                for s in range(start, stop)
            ])
            idx = np.arange(mats.shape[0], dtype=np.int32).reshape(stop - start, k)
        else:
            mats = np.stack(ls.matrices)
            idx = np.stack([choose(ls.weights, make_rng(seed, s).random(k)) for s in range(start, stop)])
            idx = idx.astype(np.int32)
        out = np.empty(stop - start)
        kern.product_log_norms(np.ascontiguousarray(mats, dtype=float), np.ascontiguousarray(idx), out)
        logs[start:stop] = out
    log_mean = logsumexp(p * logs) - np.log(samples)
    return float(np.exp(log_mean / (p * k)))


def linear_comparison(batch: TrajectoryBatch, ls: LipschitzSet, x_tilde) -> np.ndarray:
    """Trajectories of the Lipschitz system driven by the batch's own draws.

    Starts from ``|x^0 - x_tilde|`` (per delay-space coordinate) and applies
    the delayed Lipschitz matrix of each step's (map, delay) draw. Returns
    an array shaped like ``batch.states``.
    """
    x_tilde = np.asarray(x_tilde, dtype=float)
    L = batch.L
    full = np.tile(x_tilde, L + 1)
    out = np.empty_like(batch.states)
    out[:, 0] = np.abs(batch.states[:, 0] - full)
    mats = [np.asarray(a) for a in ls.matrices]
    cache: dict = {}
    for t in range(batch.num_trajectories):
        y = out[t, 0]
        for k in range(batch.horizon):
            m = int(batch.map_indices[t, k])
            d = batch.delays[t, k]
            key = (m, d.tobytes())
            a = cache.get(key)
            if a is None:
                a = embed_matrix(mats[m], d, L) if L else mats[m]
                cache[key] = a
            y = a @ y
            out[t, k + 1] = y
    return out


def write_csv(obj, fh, meta: dict | None = None) -> None:
    """Write a batch or decay estimate as CSV to an open text stream.

    ``meta`` entries are appended to the ``#`` header line.
    """
    if isinstance(obj, TrajectoryBatch):
        head = {"kind": "trajectories", "seed": obj.seed, "system_sha256": obj.digest,
                "n": obj.n, "L": obj.L, "diverged": int(obj.diverged.sum())}
    elif isinstance(obj, DecayEstimate):
        head = {"kind": "decay", "p": obj.p, "beta": repr(obj.beta), "log_c": repr(obj.log_c),
                "window": f"{obj.window[0]}-{obj.window[1]}",
                "decay_detected": str(obj.decay_detected).lower(),
                "diverged_fraction": repr(obj.diverged_fraction)}
    else:
        raise TypeError(f"cannot export {type(obj).__name__}")
    head.update(meta or {})
    fh.write("# " + " ".join(f"{k}={v}" for k, v in head.items()) + "\n")
    w = csv.writer(fh, lineterminator="\n")
    if isinstance(obj, TrajectoryBatch):
        w.writerow(["trajectory", "step"] + [f"x{q}" for q in range(obj.dim)])
        for t in range(obj.num_trajectories):
            for k in range(obj.horizon + 1):
                w.writerow([t, k] + [repr(float(v)) for v in obj.states[t, k]])
    else:
        w.writerow(["step", "mean"])
        for k, v in enumerate(obj.means):
            w.writerow([k, repr(float(v))])


def export_csv(obj, path, meta: dict | None = None) -> Path:
    """Write a batch (one row per trajectory and step) or a decay estimate.

    Metadata goes in a ``#``-prefixed header line. Output is a pure
    function of the input, so re-exports are byte-identical.
    """
    if not isinstance(obj, (TrajectoryBatch, DecayEstimate)):
        raise TypeError(f"cannot export {type(obj).__name__}")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            write_csv(obj, fh, meta)
    except OSError as exc:
        raise OSError(f"could not write CSV to {path}: {exc.strerror or exc}") from exc
    return path

"""Pure numpy versions of the compiled kernels.

Signatures and per-row summation order mirror ``_kernels.pyx`` so either
backend can be swapped in. Trajectory and sample loops are vectorised
instead of written out.
"""

import numpy as np


def power_iterate(b, tol, max_iter, shift_after):
    b = np.asarray(b, dtype=float)
    x = np.ones(b.shape[0])
    lo = hi = 0.0
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        y = b @ x
        r = y / x
        lo, hi = float(r.min()), float(r.max())
        if np.isfinite(hi) and hi - lo <= tol * hi:
            converged = True
            break
        shift = 0.5 * (lo + hi) if it > shift_after else 0.0
        y = y + shift * x
        top = y.max()
        if top == 0.0:
            break
        x = y / top
        # an underflowed component would poison the next ratio
        if not x.all():
            break
    return 0.5 * (lo + hi), lo, hi, it, converged


def simulate_steps(lin, lin_idx, gain, bias, map_idx, delays, states, diverged, cutoff):
    with np.errstate(over="ignore", invalid="ignore"):
        _simulate(lin, lin_idx, gain, bias, map_idx, delays, states, diverged, cutoff)


def _simulate(lin, lin_idx, gain, bias, map_idx, delays, states, diverged, cutoff):
    T, K1, dim = states.shape
    K = K1 - 1
    n = bias.shape[1]
    rows = np.arange(T)
    alive = np.ones(T, dtype=bool)
    for k in range(K):
        prev = states[:, k, :]
        p = lin_idx[:, k]
        m = map_idx[:, k]
        new = np.empty((T, n))
        for i in range(n):
            acc = bias[m, i].copy()
            for j in range(n):
                v = prev[rows, delays[:, k, i, j] * n + j]
                acc = acc + lin[p, i, j] * v
                acc = acc + gain[m, i, j] * np.tanh(v)
            new[:, i] = acc
        states[:, k + 1, :n] = new
        states[:, k + 1, n:] = prev[:, : dim - n]
        bad = alive & ~(np.abs(new) <= cutoff).all(axis=1)
        if bad.any():
            diverged[bad] = 1
            alive &= ~bad
            # dead rows stay NaN from here on; later steps only propagate NaN
            states[bad, k + 1 :, :] = np.nan


def product_log_norms(mats, idx, out):
    S, K = idx.shape
    n = mats.shape[1]
    P = np.broadcast_to(np.eye(n), (S, n, n)).copy()
    logacc = np.zeros(S)
    dead = np.zeros(S, dtype=bool)
    for k in range(K):
        tmp = mats[idx[:, k]] @ P
        norm = np.abs(tmp).sum(axis=2).max(axis=1)
        newly = (norm == 0.0) & ~dead
        dead |= newly
        safe = np.where(dead, 1.0, norm)
        P = tmp / safe[:, None, None]
        logacc = logacc + np.log(safe)
    logacc[dead] = -np.inf
    out[:] = logacc
    return None

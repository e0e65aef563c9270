"""Command-line interface.

Usage::

    patientstab analyze fixtures/example1_mu2.json
    patientstab simulate fixtures/example1_mu3.json --steps 500
    patientstab embed fixtures/example2_H.json --delay '[[0,1,1],[0,0,1],[0,0,0]]' --L 1 --lipschitz
    patientstab reduce fixtures/dh_blocks.json
    patientstab estimate fixtures/example5.json --p 1 --k 200

Exit status: 0 certified stable (or decay detected), 2 inconclusive,
3 input error, 4 numerical failure. ``PATIENTSTAB_THREADS`` sets the
default simulation thread count.
"""

from __future__ import annotations

import functools
import io
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import schema, sim, stability
from .delay import (
    DelayedSwitchedSystem,
    DelayPolicy,
    delayed_system,
    embed_map,
    embed_matrix,
    expected_delayed_lipschitz,
)
from .linalg import DimensionCapError, NonConvergenceError, ReductionError
from .systems import (
    FixedPointError,
    IntervalEnsemble,
    SwitchedSystem,
    find_shared_fixed_point,
    lipschitz_matrix,
    lipschitz_set,
)

__all__ = ["main", "EXIT_STABLE", "EXIT_INCONCLUSIVE", "EXIT_INPUT", "EXIT_NUMERICAL"]

EXIT_STABLE = 0
EXIT_INCONCLUSIVE = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4


class InputError(click.ClickException):
    exit_code = EXIT_INPUT


class NumericalError(click.ClickException):
    exit_code = EXIT_NUMERICAL


def _guarded(fn):
    """Map library exceptions onto the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (NonConvergenceError, ReductionError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise NumericalError(f"numerical failure: {exc}") from None
        except (schema.SchemaError, DimensionCapError) as exc:
            raise InputError(str(exc)) from None
        except ValueError as exc:
            raise InputError(str(exc)) from None

    return wrapper


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        click.echo(text, nl=not text.endswith("\n"))
        return
    try:
        out.write_text(text)
    except OSError as exc:
        raise InputError(f"cannot write {out}: {exc.strerror}") from None


def _json_arg(value: str, what: str):
    """Inline JSON, or a path to a JSON file."""
    p = Path(value)
    text = p.read_text() if p.exists() else value
    try:
        return schema.loads(text)
    except schema.SchemaError as exc:
        raise InputError(f"{what}: {exc}") from None


def _policy_arg(value: str | None, n: int, num_maps: int) -> DelayPolicy | None:
    if value is None:
        return None
    if value in ("none", "iid_uniform_entries"):
        return DelayPolicy(value)
    obj = _json_arg(value, "--policy")
    if isinstance(obj, dict) and "policy" in obj:
        obj = obj["policy"]
    return schema.parse_policy(obj, n, num_maps)


def _load_system(path: str, L: int | None, policy: str | None):
    """Parse a spec and apply ``--L`` / ``--policy`` overrides."""
    obj = schema.load(path)
    system = schema.parse_system(obj)
    base = system.system if isinstance(system, DelayedSwitchedSystem) else system
    num_maps = 1 if isinstance(base, IntervalEnsemble) else len(base.maps)
    pol = _policy_arg(policy, base.n, num_maps)
    if L is None and pol is None:
        return system
    if isinstance(system, DelayedSwitchedSystem):
        L = system.L if L is None else L
        pol = system.policy if pol is None else pol
    else:
        L = 0 if L is None else L
        pol = DelayPolicy.iid_uniform() if pol is None else pol
    return delayed_system(base, pol, L)


def _base(system):
    return system.system if isinstance(system, DelayedSwitchedSystem) else system


COMMON = [
    click.option("--L", "L", type=click.IntRange(min=0), default=None, help="Delay bound (overrides the spec)."),
    click.option("--policy", default=None,
                 help="Delay policy: 'none', 'iid_uniform_entries', or a JSON policy object / file."),
    click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
                 help="Write output here instead of stdout."),
]


def common(fn):
    for opt in reversed(COMMON):
        fn = opt(fn)
    return fn


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(package_name="artifact", prog_name="patientstab")
def main():
    """Certify patient first-mean stability of stochastic switched systems."""


@main.command()
@click.argument("spec", type=click.Path(dir_okay=False))
@click.option("--p", "p", type=click.IntRange(min=1), default=1, show_default=True, help="Moment order.")
@click.option("--tol", type=float, default=1e-10, show_default=True, help="Fixed-point residual tolerance.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
@common
@_guarded
def analyze(spec, p, tol, fmt, L, policy, out):
    """Build the stability certificate for SPEC."""
    system = _load_system(spec, L, policy)
    if isinstance(system, DelayedSwitchedSystem):
        if p != 1:
            raise InputError("delayed systems are analyzed in first mean only (--p 1)")
        report = stability.check_delayed_first_mean_stable(system.system, system.policy, system.L, fp_tol=tol)
    elif p == 1:
        report = stability.check_patient_stability(system, fp_tol=tol)
    else:
        report = stability.check_first_mean_stable(system, p=p, fp_tol=tol)
    _emit(report.to_json() if fmt == "json" else report.to_text(), out)
    sys.exit(EXIT_STABLE if report.stable else EXIT_INCONCLUSIVE)


@main.command()
@click.argument("spec", type=click.Path(dir_okay=False))
@click.option("--steps", type=click.IntRange(min=1), default=300, show_default=True)
@click.option("--trajectories", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--p", "p", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True, help="Fixed-point residual tolerance.")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads (default: $PATIENTSTAB_THREADS or 1).")
@click.option("--states", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Also export every trajectory to this CSV file.")
@click.option("--format", "fmt", type=click.Choice(["text", "json", "csv"]), default="csv", show_default=True)
@common
@_guarded
def simulate(spec, steps, trajectories, seed, p, tol, threads, states, fmt, L, policy, out):
    """Simulate SPEC from starts on the unit circle around its fixed point and fit the decay."""
    system = _load_system(spec, L, policy)
    base = _base(system)
    try:
        x_tilde = find_shared_fixed_point(base, tol=tol)
    except FixedPointError as exc:
        click.echo(f"no shared fixed point to measure decay against: {exc}", err=True)
        sys.exit(EXIT_INCONCLUSIVE)
    x0 = sim.circle_starts(trajectories, x_tilde)
    batch = sim.simulate(system, x0, steps, trajectories, seed=seed, threads=threads)
    if states is not None:
        sim.export_csv(batch, states)
    try:
        est = sim.estimate_decay(batch, x_tilde, p=p)
    except ValueError as exc:
        raise NumericalError(str(exc)) from None
    if fmt == "csv":
        buf = io.StringIO()
        sim.write_csv(est, buf, {"seed": seed, "system_sha256": batch.digest})
        _emit(buf.getvalue(), out)
    elif fmt == "json":
        _emit(json.dumps({
            "p": est.p, "beta": est.beta, "log_c": est.log_c, "window": list(est.window),
            "decay_detected": est.decay_detected, "diverged_fraction": est.diverged_fraction,
            "seed": seed, "system_sha256": batch.digest, "means": est.means.tolist(),
        }, indent=2) + "\n", out)
    else:
        _emit(
            f"trajectories: {trajectories}  steps: {steps}  seed: {seed}\n"
            f"fixed point: {np.array2string(x_tilde, precision=6)}\n"
            f"mean deviation^{p}: {est.means[0]:.4g} -> {est.means[-1]:.4g}\n"
            f"fitted rate beta: {est.beta:.6g}  log C: {est.log_c:.6g}\n"
            f"diverged fraction: {est.diverged_fraction:.3g}\n"
            f"decay detected: {str(est.decay_detected).lower()}\n",
            out,
        )
    sys.exit(EXIT_STABLE if est.decay_detected else EXIT_INCONCLUSIVE)


@main.command()
@click.argument("spec", type=click.Path(dir_okay=False))
@click.option("--delay", "delay", default=None, help="Delay matrix as inline JSON or a JSON file.")
@click.option("--lipschitz", is_flag=True, help="Also write the delayed Lipschitz matrix of every map.")
@common
@_guarded
def embed(spec, delay, lipschitz, L, policy, out):
    """Write the delay-space embedding of SPEC under a fixed delay matrix."""
    obj = schema.load(spec)
    system = schema.parse_system(obj)
    if isinstance(system, DelayedSwitchedSystem):
        if delay is None and system.policy.kind == "fixed":
            delay = json.dumps(np.asarray(system.policy.matrix).tolist())
        if L is None:
            L = system.L
        system = system.system
    if not isinstance(system, SwitchedSystem):
        raise InputError("embed needs a finite set of maps, not an interval ensemble")
    if policy not in (None, "none") and delay is None:
        raise InputError("embed takes a fixed delay matrix (--delay); other policies have no single embedding")
    L = 0 if L is None else L
    if delay is None:
        d = np.zeros((system.n, system.n), dtype=int)
    else:
        d = np.asarray(_json_arg(delay, "--delay"))
        if d.ndim != 2:
            raise InputError("--delay must be a 2-D array of integers")
    maps = [embed_map(f, d, L) for f in system.maps]
    result = schema.system_to_dict(SwitchedSystem(tuple(maps), system.weights))
    if lipschitz:
        result["lipschitz"] = [embed_matrix(lipschitz_matrix(f), d, L).tolist() for f in system.maps]
    _emit(schema.dumps(result), out)


@main.command()
@click.argument("spec", type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
@common
@_guarded
def reduce(spec, fmt, L, policy, out):
    """Compare the companion radius with the block-sum radius.

    SPEC is a block file or a (delayed) system spec; for a system the
    blocks are those of its mean delayed Lipschitz matrix.
    """
    obj = schema.load(spec)
    if isinstance(obj, dict) and "blocks" in obj:
        blocks = schema.parse_blocks(obj)
    else:
        system = _load_system(spec, L, policy)
        if not isinstance(system, DelayedSwitchedSystem):
            raise InputError("system spec has no delay fragment; pass --L and --policy")
        base = system.system
        ls = base if isinstance(base, IntervalEnsemble) else lipschitz_set(base)
        comp = expected_delayed_lipschitz(ls, system.policy, system.L)
        n = base.n
        blocks = [comp[:n, ell * n : (ell + 1) * n] for ell in range(system.L + 1)]
    check = stability.verify_reduction_equivalence(blocks)
    side = "below" if check.rho_companion < 1 else "above"
    if fmt == "json":
        text = json.dumps(check._asdict(), indent=2) + "\n"
    else:
        verdict = f"both {side} 1" if check.equivalent_side_of_one else "on different sides of 1"
        text = (f"rho(companion) = {check.rho_companion:.10g}\n"
                f"rho(block sum) = {check.rho_sum:.10g}\n"
                f"{verdict}\n")
    _emit(text, out)
    if not check.equivalent_side_of_one:
        sys.exit(EXIT_NUMERICAL)
    sys.exit(EXIT_STABLE if side == "below" else EXIT_INCONCLUSIVE)


@main.command()
@click.argument("spec", type=click.Path(dir_okay=False))
@click.option("--p", "p", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--k", "k", type=click.IntRange(min=1), default=200, show_default=True, help="Product length.")
@click.option("--samples", type=click.IntRange(min=1), default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "json", "csv"]), default="text", show_default=True)
@common
@_guarded
def estimate(spec, p, k, samples, seed, fmt, L, policy, out):
    """Monte Carlo p-radius of the Lipschitz set of SPEC, next to the exact value."""
    system = _load_system(spec, L, policy)
    if isinstance(system, DelayedSwitchedSystem):
        raise InputError("estimate works on undelayed systems; drop the delay fragment")
    ls = system if isinstance(system, IntervalEnsemble) else lipschitz_set(system)
    value = sim.mc_p_radius_estimate(ls, p=p, k=k, samples=samples, seed=seed)
    try:
        exact = stability.p_radius(ls, p)
    except (ValueError, DimensionCapError):
        exact = None
    rows = {"p": p, "k": k, "samples": samples, "seed": seed, "estimate": value, "exact": exact}
    if fmt == "json":
        text = json.dumps(rows, indent=2) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        buf.write(",".join(rows) + "\n")
        buf.write(",".join("" if v is None else repr(v) for v in rows.values()) + "\n")
        text = buf.getvalue()
    else:
        text = f"p-radius estimate (p={p}, k={k}, {samples} samples): {value:.6f}\n"
        if exact is not None:
            text += f"exact p-radius: {exact:.6f}  difference: {value - exact:+.4f}\n"
    _emit(text, out)
    ok = exact is None or exact < 1
    sys.exit(EXIT_STABLE if ok and value < 1 else EXIT_INCONCLUSIVE)


if __name__ == "__main__":
    main()

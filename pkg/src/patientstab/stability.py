"""Stability certificates from Lipschitz linearization.

The p-radius of a set of nonnegative matrices is ``rho(E[A^(x)p])^(1/p)``
for integer ``p``. A radius below one, together with a fixed point shared
by every map, certifies exponential p-th mean stability of the nonlinear
switched system. For ``p = 1`` the certificate extends to every delayed
version with bounded delays: the mean delayed Lipschitz matrix is a block
companion matrix whose block-row sum is the undelayed mean, and a
nonnegative companion matrix has radius below one exactly when its block
sum does.

Verdicts are three-valued and the criterion is sufficient only, so a
radius at or above one is reported as inconclusive, never as unstable.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Sequence

import numpy as np

from .delay import DelayPolicy, expected_delayed_lipschitz
from .linalg import (
    DEFAULT_TOL,
    as_matrix,
    assemble_companion,
    kron_power,
    spectral_radius,
)
from .systems import (
    FixedPointError,
    IntervalEnsemble,
    LipschitzSet,
    ensemble_mean,
    find_shared_fixed_point,
    lipschitz_set,
)

__all__ = [
    "BOUNDARY_TOL",
    "Verdict",
    "Evidence",
    "StabilityReport",
    "ReductionCheck",
    "expected_kron_power",
    "p_radius",
    "check_first_mean_stable",
    "check_patient_stability",
    "verify_reduction_equivalence",
    "check_delayed_first_mean_stable",
]

# radii within this distance of 1 are treated as undecided
BOUNDARY_TOL = 1e-9


class Verdict(str, enum.Enum):
    FIRST_MEAN_STABLE = "first_mean_stable"
    PATIENTLY_FIRST_MEAN_STABLE = "patiently_first_mean_stable"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Evidence:
    claim: str
    tag: str
    values: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StabilityReport:
    p: int
    expectation_matrix: np.ndarray
    p_radius: float
    verdict: Verdict
    certificate_chain: tuple
    shared_fixed_point: np.ndarray | None = None
    note: str = ""

    @property
    def stable(self) -> bool:
        return self.verdict is not Verdict.INCONCLUSIVE

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": self.p,
            "verdict": self.verdict.value,
            "p_radius": self.p_radius,
            "expectation_matrix": np.asarray(self.expectation_matrix).tolist(),
            "shared_fixed_point": None if self.shared_fixed_point is None else np.asarray(self.shared_fixed_point).tolist(),
            "note": self.note,
            "certificate_chain": [
                {"claim": e.claim, "tag": e.tag, "evidence": _jsonable(e.values)} for e in self.certificate_chain
            ],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def to_text(self) -> str:
        lines = [
            f"verdict: {self.verdict.value}",
            f"p = {self.p}, p-radius = {self.p_radius:.12g}",
        ]
        if self.shared_fixed_point is not None:
            lines.append("shared fixed point: " + np.array2string(np.asarray(self.shared_fixed_point), precision=10))
        lines.append("certificate:")
        for k, e in enumerate(self.certificate_chain, 1):
            lines.append(f"  {k}. [{e.tag}] {e.claim}")
            for key, val in e.values.items():
                lines.append(f"       {key}: {_short(val)}")
        if self.note:
            lines.append(f"note: {self.note}")
        return "\n".join(lines)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _short(v) -> str:
    if isinstance(v, np.ndarray):
        return " ".join(np.array2string(v, precision=6, separator=", ").split())
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _side(radius: float) -> str:
    if abs(radius - 1.0) <= BOUNDARY_TOL:
        return "boundary"
    return "below" if radius < 1.0 else "above"


def expected_kron_power(ls: LipschitzSet, p: int) -> np.ndarray:
    """``sum_k w_k A_k^(x)p``."""
    out = None
    for a, w in zip(ls.matrices, ls.weights):
        if w == 0:
            continue
        term = w * kron_power(a, p)
        out = term if out is None else out + term
    return out


def p_radius(ls, p: int = 1, tol: float = DEFAULT_TOL) -> float:
    """p-radius of a nonnegative Lipschitz set.

    ``ls`` may be a :class:`LipschitzSet`, an :class:`IntervalEnsemble`
    (``p = 1`` only; its Lipschitz set is the entrywise absolute value), or
    a precomputed expectation matrix ``E[A^(x)p]``, in which case the result
    is ``rho(ls) ** (1/p)``.
    """
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    if isinstance(ls, IntervalEnsemble):
        if p != 1:
            raise ValueError(
                "p >= 2 has no closed form for interval ensembles here; "
                "use sim.mc_p_radius_estimate instead"
            )
        mean = ensemble_mean(ls, absolute=True)
    elif isinstance(ls, LipschitzSet):
        mean = ls.expectation() if p == 1 else expected_kron_power(ls, p)
    else:
        mean = as_matrix(ls, nonnegative=True, square=True)
    rho = spectral_radius(mean, tol=tol).radius
    return float(rho ** (1.0 / p))


def _lipschitz_mean(sys, chain: list):
    if isinstance(sys, IntervalEnsemble):
        mean = ensemble_mean(sys, absolute=True)
        chain.append(Evidence(
            "Lipschitz set of the interval ensemble is the entrywise |A|; its mean is the absolute interval mean",
            "lipschitz-set",
            {"lower": np.asarray(sys.lower), "upper": np.asarray(sys.upper)},
        ))
        return sys, mean
    ls = lipschitz_set(sys)
    chain.append(Evidence(
        "one entrywise-smallest Lipschitz matrix per map, weights copied from the switching law",
        "lipschitz-set",
        {"matrices": [np.asarray(a) for a in ls.matrices], "weights": np.asarray(ls.weights)},
    ))
    return ls, ls.expectation()


def _fixed_point(sys, chain: list, tol: float):
    try:
        x = find_shared_fixed_point(sys, tol=tol)
    except FixedPointError as exc:
        chain.append(Evidence("no shared fixed point found", "shared-fixed-point", {"error": str(exc)}))
        return None
    chain.append(Evidence(
        "every map fixes the same point",
        "shared-fixed-point",
        {"point": x, "tolerance": tol},
    ))
    return x


def check_first_mean_stable(sys, p: int = 1, fp_tol: float = 1e-10) -> StabilityReport:
    """p-th mean stability via the p-radius of the Lipschitz set."""
    chain: list[Evidence] = []
    ls, mean = _lipschitz_mean(sys, chain)
    if p == 1:
        expectation = mean
    elif isinstance(ls, IntervalEnsemble):
        raise ValueError("p >= 2 is not available in closed form for interval ensembles")
    else:
        expectation = expected_kron_power(ls, p)
    chain.append(Evidence(
        f"mean of the {p}-fold Kronecker powers of the Lipschitz matrices",
        "expectation-matrix",
        {"shape": list(expectation.shape)},
    ))
    res = spectral_radius(expectation)
    radius = float(res.radius ** (1.0 / p))
    chain.append(Evidence(
        "p-radius of a nonnegative set equals rho(E[A^(x)p])^(1/p)",
        "p-radius",
        {"spectral_radius": res.radius, "p_radius": radius, "method": res.method, "iterations": res.iterations},
    ))
    x = _fixed_point(sys, chain, fp_tol)
    side = _side(radius)
    if x is not None and side == "below":
        verdict = Verdict.FIRST_MEAN_STABLE
        chain.append(Evidence(
            f"p-radius < 1 and a shared fixed point: exponentially stable in {_ordinal(p)} mean",
            "lipschitz-linearization",
            {"p_radius": radius},
        ))
        note = ""
    else:
        verdict = Verdict.INCONCLUSIVE
        note = _inconclusive_note(side, x is None)
    return StabilityReport(p, expectation, radius, verdict, tuple(chain), x, note)


def check_patient_stability(sys, fp_tol: float = 1e-10) -> StabilityReport:
    """Certify first-mean stability of the system and all its bounded-delay versions."""
    chain: list[Evidence] = []
    _, mean = _lipschitz_mean(sys, chain)
    chain.append(Evidence("entrywise mean of the Lipschitz set", "expectation-matrix", {"matrix": mean}))
    res = spectral_radius(mean)
    radius = float(res.radius)
    chain.append(Evidence(
        "1-radius equals the spectral radius of the mean Lipschitz matrix",
        "p-radius",
        {"spectral_radius": radius, "method": res.method, "iterations": res.iterations},
    ))
    x = _fixed_point(sys, chain, fp_tol)
    side = _side(radius)
    if x is not None and side == "below":
        chain.append(Evidence(
            "for any delay bound L and any delay law, the mean delayed Lipschitz matrix is a block companion "
            "matrix whose block-row sum is the undelayed mean; a nonnegative companion matrix has radius < 1 "
            "iff its block sum does, so every delayed version is first-mean stable",
            "companion-reduction",
            {"block_sum_radius": radius},
        ))
        return StabilityReport(1, mean, radius, Verdict.PATIENTLY_FIRST_MEAN_STABLE, tuple(chain), x)
    return StabilityReport(1, mean, radius, Verdict.INCONCLUSIVE, tuple(chain), x, _inconclusive_note(side, x is None))


class ReductionCheck(NamedTuple):
    rho_companion: float
    rho_sum: float
    equivalent_side_of_one: bool


def verify_reduction_equivalence(blocks: Sequence) -> ReductionCheck:
    """Compare the companion matrix of ``blocks`` with their sum, relative to 1."""
    mats = [as_matrix(b, nonnegative=True, square=True) for b in blocks]
    rc = spectral_radius(assemble_companion(mats)).radius
    rs = spectral_radius(np.sum(mats, axis=0)).radius
    return ReductionCheck(float(rc), float(rs), bool((rc < 1.0) == (rs < 1.0)))


def check_delayed_first_mean_stable(sys, policy: DelayPolicy, L: int, fp_tol: float = 1e-10) -> StabilityReport:
    """First-mean stability of one delayed version, from its full companion matrix."""
    chain: list[Evidence] = []
    ls, mean = _lipschitz_mean(sys, chain)
    companion = expected_delayed_lipschitz(ls, policy, L)
    n = mean.shape[0]
    block_sum = companion[:n].reshape(n, L + 1, n).sum(axis=1)
    chain.append(Evidence(
        f"mean delayed Lipschitz matrix for delay bound L={L} under the '{policy.kind}' policy",
        "delayed-expectation",
        {"shape": list(companion.shape), "max_block_sum_error": float(np.max(np.abs(block_sum - mean)))},
    ))
    res = spectral_radius(companion)
    radius = float(res.radius)
    chain.append(Evidence(
        "1-radius of the delayed Lipschitz system",
        "p-radius",
        {"spectral_radius": radius, "method": res.method, "iterations": res.iterations},
    ))
    undelayed = spectral_radius(mean).radius
    chain.append(Evidence(
        "the undelayed mean lies on the same side of 1" if (radius < 1) == (undelayed < 1)
        else "the undelayed mean lies on the other side of 1",
        "companion-reduction",
        {"undelayed_radius": undelayed},
    ))
    x = _fixed_point(sys, chain, fp_tol)
    side = _side(radius)
    if x is not None and side == "below":
        return StabilityReport(1, companion, radius, Verdict.FIRST_MEAN_STABLE, tuple(chain), x)
    return StabilityReport(1, companion, radius, Verdict.INCONCLUSIVE, tuple(chain), x, _inconclusive_note(side, x is None))


def _ordinal(p: int) -> str:
    return {1: "first", 2: "second", 3: "third"}.get(p, f"{p}th")


def _inconclusive_note(side: str, no_fixed_point: bool) -> str:
    if no_fixed_point:
        return "the maps share no fixed point, so the linearization certifies nothing"
    if side == "boundary":
        return "radius at tolerance boundary of 1; inconclusive"
    return (
        "radius >= 1: the criterion is sufficient only, so this does not show instability; "
        "the system may still be stable"
    )

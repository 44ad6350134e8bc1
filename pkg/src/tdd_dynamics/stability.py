"""Churn between consecutive class sets and divergence of twin trajectories."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import DegenerateInput, ZeroSeparation

UNCOUPLED = "uncoupled"
COUPLED = "coupled"

STRETCH = "stretch"
FOLD = "fold"
NEUTRAL = "neutral"

DIRECT_TWIN = "direct_twin"
KANTZ = "kantz"


def _keys(x) -> frozenset:
    keys = getattr(x, "keys", None)
    if isinstance(keys, frozenset):
        return keys
    return frozenset(x)


def stability_metric(prev, next) -> Fraction:
    """One minus the Jaccard similarity of two class sets, as an exact fraction.

    0 means nothing changed, 1 means every class was replaced.
    Accepts EqcpSets or plain collections of fingerprints.
    """
    a, b = _keys(prev), _keys(next)
    union = len(a | b)
    if union == 0:
        raise DegenerateInput("both class sets are empty")
    return 1 - Fraction(len(a & b), union)


def sigma_distance(a, b):
    """Distance between two stability values."""
    return abs(a - b)


def predicted_sigma(regime: str, branches: int, budget: int) -> float:
    """Order-of-magnitude churn estimate for one step.

    uncoupled: the new ``2**budget`` classes sit beside ``2**branches`` old ones,
    giving ``1 - 1/(1 + 2**(budget - branches))``.
    coupled: every class is multiplied by ``2**budget``, giving ``1 - 2**-budget``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if regime == UNCOUPLED:
        if branches < 1:
            raise ValueError("branches must be >= 1")
        return 1.0 - 1.0 / (1.0 + 2.0 ** (budget - branches))
    if regime == COUPLED:
        return 1.0 - 2.0**-budget
    raise ValueError(f"unknown regime {regime!r}")


@dataclass(frozen=True)
class TwinStep:
    step: int
    delta: float
    lambda_: float
    kind: str


@dataclass(frozen=True)
class LyapunovEstimate:
    lambda_: float
    method: str
    fit_points: tuple = ()
    fit_r2: float | None = None
    notes: tuple = field(default_factory=tuple)


def _sigma_values(traj) -> Sequence:
    trace = getattr(traj, "sigma_trace", traj)
    return list(trace)


def twin_divergence(traj_a, traj_b, step: int) -> TwinStep:
    """One-step separation ratio of two trajectories driven by the same deltas.

    ``delta = |a[step+1] - b[step+1]| / |a[step] - b[step]|`` over the sigma
    traces; ``lambda_ = ln(delta)``.  A ratio above 1 is a stretch, below 1 a
    fold.  Raises ZeroSeparation when the traces coincide at ``step``.
    """
    sa, sb = _sigma_values(traj_a), _sigma_values(traj_b)
    if step < 0 or step + 1 >= min(len(sa), len(sb)):
        raise IndexError(f"step {step} out of range")
    before = abs(Fraction(sa[step]) - Fraction(sb[step]))
    if before == 0:
        raise ZeroSeparation(f"traces coincide at step {step}")
    after = abs(Fraction(sa[step + 1]) - Fraction(sb[step + 1]))
    ratio = after / before
    if ratio > 1:
        kind = STRETCH
    elif ratio < 1:
        kind = FOLD
    else:
        kind = NEUTRAL
    lam = math.log(ratio) if ratio > 0 else -math.inf
    return TwinStep(step, float(ratio), lam, kind)


def twin_lyapunov(traj_a, traj_b) -> LyapunovEstimate:
    """Median per-step twin exponent; steps with zero separation are skipped."""
    sa, sb = _sigma_values(traj_a), _sigma_values(traj_b)
    steps = []
    skipped = 0
    for i in range(min(len(sa), len(sb)) - 1):
        try:
            steps.append(twin_divergence(sa, sb, i))
        except ZeroSeparation:
            skipped += 1
    notes = (f"{skipped} zero-separation steps skipped",) if skipped else ()
    if not steps:
        return LyapunovEstimate(math.nan, DIRECT_TWIN, (), None, notes + ("no defined steps",))
    lam = statistics.median(s.lambda_ for s in steps)
    return LyapunovEstimate(
        lam, DIRECT_TWIN, tuple((s.step, s.lambda_) for s in steps), None, notes
    )

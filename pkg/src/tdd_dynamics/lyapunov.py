"""Maximal Lyapunov exponent from a scalar series, and regime classification.

The estimator follows Kantz's neighbourhood-averaging scheme: delay-embed
the series, collect every point within ``epsilon`` (max-norm) of each
reference point, follow reference and neighbours forward for ``horizon``
steps, and average ``log(mean distance)`` over the references.  The slope
of that curve over the fit window is the exponent.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import InsufficientNeighbors, ShortTraceError
from .stability import KANTZ, LyapunovEstimate

MIN_KANTZ_LENGTH = 200
MIN_CLASSIFY_LENGTH = 50

STABLE = "stable"
DRIFTING = "drifting"
CHAOTIC = "chaotic_indicative"


@dataclass(frozen=True)
class KantzParams:
    """Estimator settings.  ``epsilon=None`` means 10% of the series' standard deviation."""

    embedding_dim: int = 3
    delay: int = 1
    epsilon: float | None = None
    horizon: int = 8
    min_neighbors: int = 5
    fit_start: int = 1
    fit_stop: int = 5

    def __post_init__(self):
        for name in ("embedding_dim", "delay", "horizon", "min_neighbors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 <= self.fit_start < self.fit_stop <= self.horizon:
            raise ValueError("fit window must satisfy 0 <= start < stop <= horizon")

    def as_dict(self):
        return asdict(self)


class KantzLyapunov(BaseEstimator):
    """Kantz maximal-exponent estimator.

    Parameters
    ----------
    embedding_dim, delay : int
        Delay-embedding dimension and lag.
    epsilon : float or None
        Neighbourhood radius; ``None`` uses ``epsilon_fraction * std(series)``.
    epsilon_fraction : float
        Relative radius used when ``epsilon`` is None.
    horizon : int
        Number of steps the neighbourhoods are followed.
    min_neighbors : int
        References with fewer neighbours are skipped.
    fit_start, fit_stop : int
        Inclusive range of steps used for the straight-line fit.
    min_valid_fraction : float
        Fraction of references that must have a usable neighbourhood.

    Attributes
    ----------
    lambda_ : float
        Slope of the divergence curve over the fit window.
    divergence_ : ndarray of shape (horizon + 1,)
        Mean log distance per step.
    fit_r2_ : float
        Coefficient of determination of the fit.
    n_references_, n_valid_references_ : int
    epsilon_ : float
        Radius actually used.
    """

    def __init__(
        self,
        embedding_dim=3,
        delay=1,
        epsilon=None,
        epsilon_fraction=0.1,
        horizon=8,
        min_neighbors=5,
        fit_start=1,
        fit_stop=5,
        min_valid_fraction=0.1,
    ):
        self.embedding_dim = embedding_dim
        self.delay = delay
        self.epsilon = epsilon
        self.epsilon_fraction = epsilon_fraction
        self.horizon = horizon
        self.min_neighbors = min_neighbors
        self.fit_start = fit_start
        self.fit_stop = fit_stop
        self.min_valid_fraction = min_valid_fraction

    def fit(self, X, y=None):
        x = check_array(X, ensure_2d=False, dtype=np.float64, ensure_all_finite=True)
        if x.ndim == 2:
            if x.shape[1] != 1:
                raise ValueError("expected a single series")
            x = x[:, 0]
        if len(x) < MIN_KANTZ_LENGTH:
            raise ShortTraceError(f"need at least {MIN_KANTZ_LENGTH} points, got {len(x)}")
        if self.horizon >= len(x) / 2:
            raise ValueError("horizon must be shorter than half the series")

        m, lag, horizon = self.embedding_dim, self.delay, self.horizon
        n_vec = len(x) - (m - 1) * lag
        emb = np.stack([x[i * lag : i * lag + n_vec] for i in range(m)], axis=1)
        eps = self.epsilon if self.epsilon is not None else self.epsilon_fraction * float(np.std(x))
        # a zero-variance series makes every point a neighbour at distance 0
        floor = max(eps, np.finfo(float).tiny) * 1e-12

        n_ref = n_vec - horizon
        tree = cKDTree(emb[:n_ref])
        curves = []
        for i, nbrs in enumerate(tree.query_ball_point(emb[:n_ref], eps, p=np.inf)):
            nbrs = np.asarray([j for j in nbrs if j != i], dtype=np.intp)
            if len(nbrs) < self.min_neighbors:
                continue
            steps = np.arange(horizon + 1)
            ref = emb[i + steps]  # (horizon+1, m)
            other = emb[nbrs[:, None] + steps[None, :]]  # (k, horizon+1, m)
            dist = np.abs(other - ref[None]).max(axis=2).mean(axis=0)
            curves.append(np.log(np.maximum(dist, floor)))

        self.n_references_ = n_ref
        self.n_valid_references_ = len(curves)
        self.epsilon_ = eps
        if len(curves) < self.min_valid_fraction * n_ref or not curves:
            raise InsufficientNeighbors(len(curves), n_ref)

        self.divergence_ = np.mean(curves, axis=0)
        ks = np.arange(self.fit_start, self.fit_stop + 1)
        self.lambda_, self.fit_r2_ = _line_fit(ks.astype(float), self.divergence_[ks])
        self.fit_points_ = tuple((int(k), float(self.divergence_[k])) for k in ks)
        return self

    def to_estimate(self) -> LyapunovEstimate:
        check_is_fitted(self, "lambda_")
        return LyapunovEstimate(float(self.lambda_), KANTZ, self.fit_points_, float(self.fit_r2_))


def _line_fit(xs, ys):
    """Least-squares slope and R^2; a flat curve has slope 0 and R^2 0."""
    xc = xs - xs.mean()
    yc = ys - ys.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if syy == 0.0:
        return 0.0, 0.0
    slope = float(xc @ yc) / sxx
    resid = yc - slope * xc
    r2 = 1.0 - float(resid @ resid) / syy
    return slope, min(max(r2, 0.0), 1.0)


def kantz_lyapunov(trace, params: KantzParams | None = None) -> LyapunovEstimate:
    params = params or KantzParams()
    est = KantzLyapunov(
        embedding_dim=params.embedding_dim,
        delay=params.delay,
        epsilon=params.epsilon,
        horizon=params.horizon,
        min_neighbors=params.min_neighbors,
        fit_start=params.fit_start,
        fit_stop=params.fit_stop,
    )
    return est.fit(np.asarray(trace, dtype=float)).to_estimate()


@dataclass(frozen=True)
class Classification:
    label: str
    mean_sigma: float
    estimate: LyapunovEstimate | None
    notes: tuple = ()


def classify_trace(
    trace,
    params: KantzParams | None = None,
    stable_mean=0.1,
    chaos_r2=0.8,
) -> Classification:
    """stable / drifting / chaotic_indicative for a stability trace.

    Traces shorter than the Kantz minimum are judged on their mean alone and
    carry a note saying the estimator was skipped.  Estimator failures make
    the trace ``drifting`` with the error recorded in ``notes``.
    """
    x = np.asarray([float(v) for v in trace], dtype=float)
    if len(x) < MIN_CLASSIFY_LENGTH:
        raise ShortTraceError(f"need at least {MIN_CLASSIFY_LENGTH} points, got {len(x)}")
    mean = float(x.mean())
    if len(x) < MIN_KANTZ_LENGTH:
        label = STABLE if mean < stable_mean else DRIFTING
        return Classification(label, mean, None, ("kantz skipped: short trace",))
    try:
        est = kantz_lyapunov(x, params)
    except (InsufficientNeighbors, ValueError) as exc:
        return Classification(DRIFTING, mean, None, (f"kantz failed: {exc}",))
    if mean < stable_mean and est.lambda_ <= 0:
        label = STABLE
    elif est.lambda_ > 0 and est.fit_r2 >= chaos_r2:
        label = CHAOTIC
    else:
        label = DRIFTING
    return Classification(label, mean, est)


class TraceClassifier(BaseEstimator):
    """Stateless classifier mapping each row of ``X`` (one trace per row) to a regime."""

    def __init__(self, stable_mean=0.1, chaos_r2=0.8, params=None):
        self.stable_mean = stable_mean
        self.chaos_r2 = chaos_r2
        self.params = params

    def fit(self, X=None, y=None):
        self.classes_ = np.array([CHAOTIC, DRIFTING, STABLE])
        return self

    def predict(self, X):
        check_is_fitted(self, "classes_")
        X = check_array(X, dtype=np.float64)
        return np.array(
            [classify_trace(row, self.params, self.stable_mean, self.chaos_r2).label for row in X]
        )


# -- synthetic series -----------------------------------------------------------------


def logistic_series(n=2000, r=4.0, x0=0.3, burn_in=100):
    x = x0
    out = np.empty(n)
    for i in range(n + burn_in):
        x = r * x * (1.0 - x)
        if i >= burn_in:
            out[i - burn_in] = x
    return out


def periodic_series(n=2000, low=0.2, high=0.8):
    return np.where(np.arange(n) % 2 == 0, low, high).astype(float)


def noise_series(n=2000, seed=0):
    return np.random.default_rng(seed).uniform(0.0, 1.0, n)


DEMOS = {"logistic": logistic_series, "periodic": periodic_series, "noise": noise_series}

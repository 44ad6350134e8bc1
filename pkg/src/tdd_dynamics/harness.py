"""Scenario configs, trace files, validation against closed forms, and reports."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .cfg import format_cfg
from .engine import (
    DECOUPLED,
    GUIDED,
    POLICY_KINDS,
    Caps,
    DevelopmentPolicy,
    make_schedule,
    run_trajectory,
    twin_schedules,
)
from .errors import ConfigError, SchemaError, ShortTraceError, ZeroSeparation
from .lyapunov import DEMOS, DRIFTING, KantzParams, classify_trace
from .specs import ISOLATED, SHARED
from .stability import (
    COUPLED,
    DIRECT_TWIN,
    KANTZ,
    UNCOUPLED,
    predicted_sigma,
    twin_divergence,
    twin_lyapunov,
)

CSV_HEADER = ("n", "class_count", "sigma", "total_coupling", "size_proxy", "branch_count")
TRUNCATED_MARK = "# truncated=true"
SEED_ENV = "TDD_DYNAMICS_SEED"
DEFAULT_WARMUP = 3
DEFAULT_TOL = 0.02
PASS_FRACTION = 0.9


# -- atomic output ----------------------------------------------------------------------


def atomic_write(path, text: str) -> None:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- config -----------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario.

    Parsed from a flat ``key = value`` file with dotted keys::

        name = coupled-k4
        steps = 20
        policy.kind = dry_coupled
        policy.share_intensity = 1
        delta.k = 4          # or a range such as 1..2
        delta.seed = 7
        output.csv = out/coupled.csv
    """

    name: str
    policy: DevelopmentPolicy
    steps: int
    k_range: tuple
    attach_hint: str = SHARED
    seed: int = 0
    caps: Caps = field(default_factory=Caps)
    csv_path: Path | None = None
    report_path: Path | None = None
    svg_path: Path | None = None
    snapshot_dir: Path | None = None
    twin: bool = False

    def __post_init__(self):
        if self.steps < 2:
            raise ConfigError("steps must be at least 2")
        lo, hi = self.k_range
        if not 1 <= lo <= hi:
            raise ConfigError("delta.k must be >= 1 and ranges must be ordered")
        if self.attach_hint not in (SHARED, ISOLATED):
            raise ConfigError(f"delta.attach must be {SHARED!r} or {ISOLATED!r}")

    def schedule(self):
        return make_schedule(self.steps, self.k_range, self.seed, self.attach_hint)

    def twin_schedules(self):
        return twin_schedules(self.steps, self.k_range, self.seed, self.attach_hint)


_KNOWN_KEYS = {
    "name",
    "steps",
    "policy.kind",
    "policy.share_intensity",
    "policy.alternatives",
    "delta.k",
    "delta.attach",
    "delta.seed",
    "caps.max_classes",
    "caps.max_paths",
    "output.csv",
    "output.report",
    "output.svg",
    "output.snapshots",
    "twin.enabled",
}


def _parse_pairs(text: str) -> dict:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _int(pairs, key, default=None):
    if key not in pairs:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return int(pairs[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {pairs[key]!r}") from None


def _k_range(value: str) -> tuple:
    try:
        if ".." in value:
            lo, hi = value.split("..", 1)
            return int(lo), int(hi)
        k = int(value)
    except ValueError:
        raise ConfigError(f"delta.k must be an integer or 'lo..hi', got {value!r}") from None
    return k, k


def _bool(value: str) -> bool:
    low = value.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def seed_override(env=None):
    """Seed from the environment, or None when unset."""
    env = os.environ if env is None else env
    raw = env.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def parse_config(text: str, base_dir=".", env=None) -> ScenarioConfig:
    """Build a ScenarioConfig; relative output paths resolve against ``base_dir``."""
    pairs = _parse_pairs(text)
    base = Path(base_dir)

    def path(key):
        return base / pairs[key] if pairs.get(key) else None

    kind = pairs.get("policy.kind", DECOUPLED)
    if kind not in POLICY_KINDS:
        raise ConfigError(f"policy.kind must be one of {POLICY_KINDS}, got {kind!r}")
    try:
        share = Fraction(pairs.get("policy.share_intensity", "1"))
    except (ValueError, ZeroDivisionError):
        raise ConfigError("policy.share_intensity must be a number") from None
    default_m = 8 if kind == GUIDED else 1
    try:
        policy = DevelopmentPolicy(kind, share, _int(pairs, "policy.alternatives", default_m))
        caps = Caps(
            _int(pairs, "caps.max_classes", Caps.max_classes),
            _int(pairs, "caps.max_paths", Caps.max_paths),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    seed = _int(pairs, "delta.seed", 0)
    env_seed = seed_override(env)
    if env_seed is not None:
        seed = env_seed

    return ScenarioConfig(
        name=pairs.get("name", "scenario"),
        policy=policy,
        steps=_int(pairs, "steps"),
        k_range=_k_range(pairs.get("delta.k", "1")),
        attach_hint=pairs.get("delta.attach", SHARED),
        seed=seed,
        caps=caps,
        csv_path=path("output.csv"),
        report_path=path("output.report"),
        svg_path=path("output.svg"),
        snapshot_dir=path("output.snapshots"),
        twin=_bool(pairs.get("twin.enabled", "false")),
    )


def load_config(path, env=None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, path.parent, env)


# -- trace CSV --------------------------------------------------------------------------


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def format_trace(rows, truncated=False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow([_num(v) for v in row])
    if truncated:
        buf.write(TRUNCATED_MARK + "\n")
    return buf.getvalue()


@dataclass(frozen=True)
class TraceTable:
    """Columns of a trajectory CSV.  ``sigma[0]`` is None."""

    n: tuple
    class_count: tuple
    sigma: tuple
    total_coupling: tuple
    size_proxy: tuple
    branch_count: tuple
    truncated: bool = False

    def __len__(self):
        return len(self.n)

    def sigma_trace(self):
        return [s for s in self.sigma if s is not None]


def parse_trace(text: str) -> TraceTable:
    lines = text.splitlines()
    truncated = any(line.strip() == TRUNCATED_MARK for line in lines)
    body = [line for line in lines if line.strip() and not line.lstrip().startswith("#")]
    if not body:
        raise SchemaError("empty trace file")
    rows = list(csv.reader(body))
    if tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise SchemaError(f"header must be {','.join(CSV_HEADER)}")
    if len(rows) < 2:
        raise SchemaError("trace has no rows")
    cols = [[] for _ in CSV_HEADER]
    for i, row in enumerate(rows[1:], 2):
        if len(row) != len(CSV_HEADER):
            raise SchemaError(f"line {i}: expected {len(CSV_HEADER)} fields")
        try:
            cols[0].append(int(row[0]))
            cols[1].append(int(row[1]))
            cols[2].append(float(row[2]) if row[2].strip() else None)
            cols[3].append(float(row[3]))
            cols[4].append(int(row[4]))
            cols[5].append(int(row[5]))
        except ValueError:
            raise SchemaError(f"line {i}: malformed value") from None
    if any(s is None for s in cols[2][1:]):
        raise SchemaError("sigma may only be empty on the first row")
    return TraceTable(*(tuple(c) for c in cols), truncated=truncated)


def read_trace(path) -> TraceTable:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from None
    return parse_trace(text)


# -- analysis ---------------------------------------------------------------------------

INSUFFICIENT = "insufficient length"


def analysis_report(trace, params: KantzParams | None = None) -> dict:
    """JSON-ready report for a stability trace.

    Traces too short to classify are reported as drifting with a note rather
    than raising.
    """
    params = params or KantzParams()
    values = [float(v) for v in trace]
    notes = []
    try:
        result = classify_trace(values, params)
    except ShortTraceError:
        label, est = DRIFTING, None
        notes.append(INSUFFICIENT)
    else:
        label, est = result.label, result.estimate
        notes.extend(result.notes)
    return {
        "method": KANTZ if est is not None else None,
        "lambda": est.lambda_ if est is not None else None,
        "fit_r2": est.fit_r2 if est is not None else None,
        "classification": label,
        "params": params.as_dict(),
        "trace_length": len(values),
        "notes": notes,
    }


def demo_trace(kind: str, n=2000):
    try:
        return DEMOS[kind](n)
    except KeyError:
        raise ConfigError(f"unknown demo {kind!r}; choose from {sorted(DEMOS)}") from None


def render_svg(trace, title: str) -> str:
    """Line plot of the trace as SVG text."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.5))
    try:
        ax.plot(range(1, len(trace) + 1), [float(v) for v in trace], lw=1)
        ax.set_xlabel("step")
        ax.set_ylabel("sigma")
        ax.set_title(title)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return buf.getvalue()


def analyze(trace, params=None, svg_path=None) -> dict:
    report = analysis_report(trace, params)
    if svg_path is not None:
        atomic_write(svg_path, render_svg(trace, f"classification: {report['classification']}"))
    return report


# -- validation -------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationRow:
    n: int
    observed: float
    predicted: float | None
    branches: int
    budget: int
    ok: bool


@dataclass(frozen=True)
class ValidationResult:
    regime: str
    tol: float
    rows: tuple
    passed: bool

    @property
    def fraction_ok(self):
        return sum(r.ok for r in self.rows) / len(self.rows) if self.rows else 0.0

    def format(self) -> str:
        out = [f"{'n':>4} {'B':>5} {'K':>3} {'observed':>10} {'predicted':>10}  ok"]
        for r in self.rows:
            pred = "-" if r.predicted is None else f"{r.predicted:10.4f}"
            out.append(
                f"{r.n:>4} {r.branches:>5} {r.budget:>3} {r.observed:10.4f} {pred:>10}  "
                f"{'yes' if r.ok else 'no'}"
            )
        verdict = "PASS" if self.passed else "FAIL"
        out.append(
            f"{verdict}: {sum(r.ok for r in self.rows)}/{len(self.rows)} steps within "
            f"{self.tol} of the {self.regime} prediction"
        )
        return "\n".join(out)


def validate_predictions(table: TraceTable, regime: str, tol=DEFAULT_TOL, warmup=DEFAULT_WARMUP):
    """Compare each post-warmup Σ with the closed-form estimate.

    ``B`` is the branch count before the step and ``K`` the number of branches
    the step added.  Passes when at least 90% of compared steps are within ``tol``.
    """
    if regime not in (UNCOUPLED, COUPLED):
        raise ConfigError(f"regime must be {UNCOUPLED!r} or {COUPLED!r}")
    if tol < 0:
        raise ConfigError("tolerance must be non-negative")
    rows = []
    for i in range(1, len(table)):
        n = table.n[i]
        if n <= warmup:
            continue
        b_prev, k = table.branch_count[i - 1], table.branch_count[i] - table.branch_count[i - 1]
        obs = table.sigma[i]
        try:
            pred = predicted_sigma(regime, b_prev, k)
        except ValueError:
            pred = None
        ok = pred is not None and abs(obs - pred) <= tol
        rows.append(ValidationRow(n, obs, pred, b_prev, k, ok))
    passed = bool(rows) and sum(r.ok for r in rows) >= PASS_FRACTION * len(rows)
    return ValidationResult(regime, tol, tuple(rows), passed)


# -- twin comparison --------------------------------------------------------------------


def compare_traces(table_a: TraceTable, table_b: TraceTable) -> dict:
    """Per-step Δ/λ between two traces plus their median exponent."""
    sa, sb = table_a.sigma_trace(), table_b.sigma_trace()
    steps = []
    for i in range(min(len(sa), len(sb)) - 1):
        try:
            s = twin_divergence(sa, sb, i)
            steps.append({"step": i + 2, "delta": s.delta, "lambda": s.lambda_, "kind": s.kind})
        except ZeroSeparation:
            steps.append({"step": i + 2, "delta": None, "lambda": None, "kind": "zero separation"})
    est = twin_lyapunov(sa, sb)
    return {"steps": steps, "median_lambda": est.lambda_, "notes": list(est.notes)}


def format_comparison(result: dict) -> str:
    out = [f"{'n':>4} {'delta':>12} {'lambda':>10}  kind"]
    for s in result["steps"]:
        if s["delta"] is None:
            out.append(f"{s['step']:>4} {'-':>12} {'-':>10}  {s['kind']}")
        else:
            out.append(f"{s['step']:>4} {s['delta']:12.5g} {s['lambda']:10.4f}  {s['kind']}")
    out.append(f"median lambda: {result['median_lambda']:.4f}")
    out.extend(result["notes"])
    return "\n".join(out)


# -- scenario runs ----------------------------------------------------------------------


@dataclass(frozen=True)
class RunSummary:
    name: str
    steps_completed: int
    final_class_count: int
    mean_sigma: float | None
    max_sigma: float | None
    coupling_first: float
    coupling_last: float
    coupling_max: float
    twin_lambda: float | None
    kantz_lambda: float | None
    classification: str
    truncated: bool
    error: str | None
    duration: float
    report: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "steps_completed": self.steps_completed,
            "final_class_count": self.final_class_count,
            "mean_sigma": self.mean_sigma,
            "max_sigma": self.max_sigma,
            "total_coupling": {
                "first": self.coupling_first,
                "last": self.coupling_last,
                "max": self.coupling_max,
            },
            "twin_lambda": self.twin_lambda,
            "kantz_lambda": self.kantz_lambda,
            "classification": self.classification,
            "truncated": self.truncated,
            "error": self.error,
        }


def _finite(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def run_scenario(config: ScenarioConfig) -> RunSummary:
    """Run one scenario and write its outputs.

    The CSV, report and snapshots depend only on the config; wall-clock time
    is returned on the summary but kept out of the files.
    """
    start = time.perf_counter()
    traj = run_trajectory(config.schedule(), config.policy, config.caps)

    twin_lambda = None
    if config.twin:
        a, b = config.twin_schedules()
        tb = run_trajectory(b, config.policy, config.caps)
        twin_lambda = _finite(twin_lyapunov(traj, tb).lambda_)

    sigmas = [float(s) for s in traj.sigma_trace]
    report = analysis_report(sigmas)
    if twin_lambda is not None and report["lambda"] is None:
        report["method"], report["lambda"] = DIRECT_TWIN, twin_lambda
    couplings = [float(c) for c in traj.coupling_trace] or [0.0]
    summary = RunSummary(
        name=config.name,
        steps_completed=len(traj.states),
        final_class_count=traj.class_counts[-1] if traj.class_counts else 0,
        mean_sigma=statistics.fmean(sigmas) if sigmas else None,
        max_sigma=max(sigmas) if sigmas else None,
        coupling_first=couplings[0],
        coupling_last=couplings[-1],
        coupling_max=max(couplings),
        twin_lambda=twin_lambda,
        kantz_lambda=report["lambda"] if report["method"] == KANTZ else None,
        classification=report["classification"],
        truncated=traj.truncated,
        error=str(traj.error) if traj.error else None,
        duration=time.perf_counter() - start,
        report=report,
    )

    if config.csv_path is not None:
        atomic_write(config.csv_path, format_trace(traj.rows(), traj.truncated))
    if config.report_path is not None:
        doc = dict(report, summary=summary.as_dict())
        atomic_write(config.report_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if config.svg_path is not None and sigmas:
        atomic_write(
            config.svg_path,
            render_svg(sigmas, f"{config.name}: {report['classification']}"),
        )
    if config.snapshot_dir is not None:
        for i, state in enumerate(traj.states, 1):
            atomic_write(config.snapshot_dir / f"step_{i:04d}.cfg", format_cfg(state.graph))
    return summary

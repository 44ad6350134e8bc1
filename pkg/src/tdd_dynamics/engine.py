"""The iteration E_{n+1} = tau(E_n, delta_n), realised as graph surgery.

Each delta adds ``K`` new branches as a chain of ``K`` diamonds (a gadget
with ``2**K`` paths).  Where the gadget goes is the development policy:

decoupled
    The gadget becomes a new successor of the entry node and joins the
    exit directly.  No existing path changes, so old classes all survive
    and share no interior node with the new ones.
dry_coupled
    The gadget is spliced in front of an existing node, sampled with
    weights that favour nodes whose share of all paths is close to
    ``share_intensity``.  Every path through that node is replaced by
    ``2**K`` longer paths; the old fingerprints stop being paths.
guided
    Generates alternative implementations of the same delta and keeps the
    one with the least churn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Sequence

import numpy as np

from .cfg import (
    ControlFlowGraph,
    EqcpSet,
    GraphBuilder,
    NodeKind,
    code_size_proxy,
    count_paths,
    derive_eqcp,
    path_flow,
    total_coupling,
)
from .errors import ConsistencyError, ExplosionError
from .specs import ISOLATED, SHARED, PointSpec, SpecDelta, bitstring, validate_consistency
from .stability import stability_metric

DECOUPLED = "decoupled"
DRY_COUPLED = "dry_coupled"
GUIDED = "guided"
POLICY_KINDS = (DECOUPLED, DRY_COUPLED, GUIDED)

# width of the site-sampling kernel over path share
SITE_TEMPERATURE = 0.05
# sharing intensities tried by guided alternatives; 0 means an isolated gadget
INTENSITY_GRID = (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))


@dataclass(frozen=True)
class DevelopmentPolicy:
    kind: str = DECOUPLED
    share_intensity: Fraction = Fraction(1)
    alternatives: int = 1

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"policy kind must be one of {POLICY_KINDS}")
        s = Fraction(self.share_intensity)
        if not 0 <= s <= 1:
            raise ValueError("share_intensity must lie in [0, 1]")
        object.__setattr__(self, "share_intensity", s)
        if self.alternatives < 1:
            raise ValueError("alternatives must be positive")


@dataclass(frozen=True)
class Caps:
    max_classes: int = 16384
    max_paths: int = 16384

    def __post_init__(self):
        if self.max_classes < 1 or self.max_paths < 1:
            raise ValueError("caps must be positive")

    @property
    def limit(self):
        return min(self.max_classes, self.max_paths)


DEFAULT_CAPS = Caps()


@dataclass(frozen=True)
class TddState:
    step: int
    graph: ControlFlowGraph | None
    eqcp: EqcpSet
    history: tuple = ()
    attachment: str = ""
    gadget: tuple = ()
    candidate_sigmas: tuple = ()

    @property
    def labeler(self) -> dict:
        return self.eqcp.labeler()


EMPTY_STATE = TddState(0, None, EqcpSet())


def check_state(state: TddState, caps: Caps = DEFAULT_CAPS) -> None:
    """Re-derive the class set from the graph and compare; raises AssertionError on drift."""
    if state.graph is None:
        assert len(state.eqcp) == 0
        return
    fresh = derive_eqcp(state.graph, state.labeler, caps.limit)
    assert fresh == state.eqcp, "cached class set does not match the graph"


# -- surgery ---------------------------------------------------------------------------


def _bootstrap_graph(budget):
    b = GraphBuilder()
    entry = b.add_node(NodeKind.ENTRY)
    ex = b.add_node(NodeKind.EXIT)
    head, branches = b.add_diamonds(budget, ex)
    b.add_edge(entry, head)
    return b.build(), branches


def _attach_isolated(graph, budget):
    b = GraphBuilder(graph)
    head, branches = b.add_diamonds(budget, graph.exit)
    b.add_edge(graph.entry, head)
    return b.build(), branches


def _splice(graph, budget, site):
    b = GraphBuilder(graph)
    preds = graph.predecessors(site)
    head, branches = b.add_diamonds(budget, site)
    for p in preds:
        b.redirect_edge(p, site, head)
    return b.build(), branches


def site_shares(graph: ControlFlowGraph) -> dict:
    """Fraction of all paths passing through each interior node."""
    forward, backward = path_flow(graph)
    total = forward[graph.exit]
    return {
        v: Fraction(forward[v] * backward[v], total)
        for v in graph.node_ids
        if v not in (graph.entry, graph.exit)
    }


def choose_site(graph: ControlFlowGraph, intensity, rng) -> int:
    shares = site_shares(graph)
    nodes = sorted(shares)
    f = np.array([float(shares[v]) for v in nodes])
    w = np.exp(-np.abs(f - float(intensity)) / SITE_TEMPERATURE)
    return nodes[int(rng.choice(len(nodes), p=w / w.sum()))]


def _rng(seed, *stream):
    return np.random.default_rng([seed, *stream])


def _finish(state, delta, graph, gadget, caps, attachment) -> TddState:
    limit = caps.limit
    n = count_paths(graph, limit)
    if n > limit:
        raise ExplosionError(n, limit, "classes")
    step = state.step + 1
    old = state.labeler
    by_input = {p.input: p.expected for p in delta.new_points}

    def label(key):
        got = old.get(key)
        if got is not None:
            return got
        pos = {nid: i for i, nid in enumerate(key)}
        bits = tuple(
            graph.successors(b).index(key[pos[b] + 1]) for b in gadget if b in pos
        )
        return by_input.get(bits) or f"s{step}.{bitstring(bits)}"

    eqcp = derive_eqcp(graph, label, limit)
    return TddState(step, graph, eqcp, state.history + (delta,), attachment, gadget)


def _implement(state, delta, intensity, variant, caps) -> TddState:
    """One concrete way of programming ``delta`` on top of ``state``."""
    budget = delta.branch_budget
    if intensity == 0:
        graph, gadget = _attach_isolated(state.graph, budget)
        return _finish(state, delta, graph, gadget, caps, ISOLATED)
    site = choose_site(state.graph, intensity, _rng(delta.seed, variant))
    graph, gadget = _splice(state.graph, budget, site)
    return _finish(state, delta, graph, gadget, caps, f"splice@{site}")


def apply_delta(
    state: TddState | None,
    delta: SpecDelta,
    policy: DevelopmentPolicy,
    caps: Caps = DEFAULT_CAPS,
) -> TddState:
    """Advance one step.  The first delta on an empty state builds the initial gadget."""
    validate_consistency(delta.new_points)
    if state is None or state.graph is None:
        state = state or EMPTY_STATE
        graph, gadget = _bootstrap_graph(delta.branch_budget)
        return _finish(state, delta, graph, gadget, caps, "bootstrap")
    if policy.kind == DECOUPLED:
        return _implement(state, delta, Fraction(0), 0, caps)
    if policy.kind == DRY_COUPLED:
        return _implement(state, delta, policy.share_intensity, 0, caps)
    return guided_step(state, delta, policy.alternatives, policy, caps)


def _default_intensity(delta, policy):
    if delta.attach_hint == ISOLATED:
        return Fraction(0)
    return policy.share_intensity if policy is not None else Fraction(1)


def generate_alternatives(
    state: TddState,
    delta: SpecDelta,
    m: int,
    policy: DevelopmentPolicy | None = None,
    caps: Caps = DEFAULT_CAPS,
) -> list:
    """``m`` candidate next states for the same delta.

    Candidate 0 is the policy's default implementation (a splice at the
    policy's sharing intensity, or an isolated gadget when the delta asks
    for one).  The others draw an intensity from ``INTENSITY_GRID`` and a
    site from their own seeded stream.  Candidates that would exceed the
    cap are dropped; ExplosionError is raised only if none remain.
    """
    if m < 1:
        raise ValueError("m must be positive")
    if state.graph is None:
        return [apply_delta(state, delta, policy or DevelopmentPolicy(DRY_COUPLED), caps)]
    out = []
    last_error = None
    for i in range(m):
        if i == 0:
            intensity = _default_intensity(delta, policy)
        else:
            intensity = INTENSITY_GRID[int(_rng(delta.seed, i, 1).integers(len(INTENSITY_GRID)))]
        try:
            out.append(_implement(state, delta, intensity, i, caps))
        except ExplosionError as exc:
            last_error = exc
    if not out:
        raise last_error
    return out


def choose_candidate(prev: EqcpSet, candidates: Sequence[TddState]) -> tuple:
    """Index of the least-churn candidate and the churn of every candidate.

    Ties go to the smaller code size, then to the earlier candidate.
    """
    sigmas = [stability_metric(prev, c.eqcp) for c in candidates]
    best = min(
        range(len(candidates)),
        key=lambda i: (sigmas[i], code_size_proxy(candidates[i].graph), i),
    )
    return best, tuple(sigmas)


def guided_step(
    state: TddState,
    delta: SpecDelta,
    m: int,
    policy: DevelopmentPolicy | None = None,
    caps: Caps = DEFAULT_CAPS,
) -> TddState:
    candidates = generate_alternatives(state, delta, m, policy, caps)
    if state.graph is None:
        return candidates[0]
    best, sigmas = choose_candidate(state.eqcp, candidates)
    chosen = candidates[best]
    return TddState(
        chosen.step,
        chosen.graph,
        chosen.eqcp,
        chosen.history,
        chosen.attachment,
        chosen.gadget,
        sigmas,
    )


# -- trajectories ------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    states: tuple
    sigma_trace: tuple
    coupling_trace: tuple
    size_trace: tuple
    class_counts: tuple
    branch_trace: tuple
    planned_steps: int
    error: Exception | None = None

    @property
    def truncated(self) -> bool:
        return self.error is not None

    @classmethod
    def from_states(cls, states, planned_steps, error=None):
        sigmas = tuple(stability_metric(a.eqcp, b.eqcp) for a, b in zip(states, states[1:]))
        return cls(
            states=tuple(states),
            sigma_trace=sigmas,
            coupling_trace=tuple(total_coupling(s.eqcp) for s in states),
            size_trace=tuple(code_size_proxy(s.graph) for s in states),
            class_counts=tuple(len(s.eqcp) for s in states),
            branch_trace=tuple(s.graph.branch_count for s in states),
            planned_steps=planned_steps,
            error=error,
        )

    def rows(self):
        """CSV rows ``n, class_count, sigma, total_coupling, size_proxy, branch_count``.

        ``n`` counts states from 1; the first row has no sigma.
        """
        for i in range(len(self.states)):
            sigma = self.sigma_trace[i - 1] if i else None
            yield (
                i + 1,
                self.class_counts[i],
                sigma,
                self.coupling_trace[i],
                self.size_trace[i],
                self.branch_trace[i],
            )


def run_trajectory(
    deltas: Sequence[SpecDelta],
    policy: DevelopmentPolicy,
    caps: Caps = DEFAULT_CAPS,
) -> Trajectory:
    """Apply ``deltas`` in order from the empty state.

    An ExplosionError or ConsistencyError stops the run; the states reached
    so far are kept and the error is stored on the trajectory.
    """
    states = []
    state = EMPTY_STATE
    error = None
    for d in deltas:
        try:
            state = apply_delta(state, d, policy, caps)
        except (ExplosionError, ConsistencyError) as exc:
            error = exc
            break
        states.append(state)
    return Trajectory.from_states(states, len(deltas), error)


# -- schedules --------------------------------------------------------------------------


def _step_seed(base, n):
    lo, hi = np.random.SeedSequence([base, n]).generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def gadget_points(step, budget, limit=64):
    """Point specs labelling the paths of a fresh ``budget``-diamond gadget."""
    pts = []
    for bits in product((0, 1), repeat=budget):
        if len(pts) >= limit:
            break
        pts.append(PointSpec(bits, f"f{step}.{bitstring(bits)}"))
    return tuple(pts)


def _draw_budget(rng, k_range):
    lo, hi = k_range
    return int(rng.integers(lo, hi + 1))


def make_schedule(steps, k_range, seed, attach_hint=SHARED) -> list:
    """``steps`` deltas with budgets drawn uniformly from ``k_range`` (inclusive)."""
    lo, hi = k_range
    if not 1 <= lo <= hi:
        raise ValueError("k_range must satisfy 1 <= lo <= hi")
    rng = _rng(seed, 0xD5)
    out = []
    for n in range(steps):
        k = _draw_budget(rng, k_range)
        out.append(SpecDelta(k, attach_hint, gadget_points(n, k), _step_seed(seed, n)))
    return out


def twin_schedules(steps, k_range, seed, attach_hint=SHARED) -> tuple:
    """Two schedules identical in seeds, hints and points but with ``K_a != K_b`` at every step.

    When the range holds a single value the twin uses that value plus one.
    """
    a = make_schedule(steps, k_range, seed, attach_hint)
    rng = _rng(seed, 0x7A)
    lo, hi = k_range
    b = []
    for d in a:
        if lo == hi:
            k = d.branch_budget + 1
        else:
            k = d.branch_budget
            while k == d.branch_budget:
                k = _draw_budget(rng, k_range)
        b.append(SpecDelta(k, d.attach_hint, d.new_points, d.seed))
    return a, b

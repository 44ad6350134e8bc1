"""Point specifications, executable test semantics and suite generation.

An input is the sequence of binary decisions taken at the branches met on
a walk from the entry.  Two inputs are equivalent exactly when they drive
the walk down the same path, so one test per class covers the partition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .cfg import ControlFlowGraph, EqcpSet, NodeKind, OutputVector, _lookup
from .errors import ConsistencyError, InputExhausted

ISOLATED = "isolated"
SHARED = "shared"
ATTACH_HINTS = (ISOLATED, SHARED)

InputVector = tuple  # tuple of 0/1 decisions


def as_input(bits) -> InputVector:
    """Normalise a bitstring such as ``"0110"`` (or ``"-"`` for empty) or an iterable of 0/1."""
    if isinstance(bits, str):
        if bits in ("", "-"):
            return ()
        if set(bits) - {"0", "1"}:
            raise ValueError(f"not a bitstring: {bits!r}")
        return tuple(int(c) for c in bits)
    out = tuple(int(b) for b in bits)
    if any(b not in (0, 1) for b in out):
        raise ValueError(f"decisions must be 0 or 1: {out}")
    return out


def bitstring(decisions) -> str:
    return "".join(str(d) for d in decisions) or "-"


@dataclass(frozen=True)
class PointSpec:
    input: InputVector
    expected: OutputVector

    def __post_init__(self):
        object.__setattr__(self, "input", as_input(self.input))
        if not isinstance(self.expected, str) or not self.expected or any(c.isspace() for c in self.expected):
            raise ValueError(f"output label must be a non-empty token: {self.expected!r}")


@dataclass(frozen=True)
class TestCase:
    input: InputVector
    expected: OutputVector

    __test__ = False  # keep pytest from collecting this class


SpecSet = tuple  # tuple[PointSpec, ...]


def validate_consistency(specs: Iterable[PointSpec]) -> None:
    """Raise ConsistencyError on the first input mapped to two different outputs."""
    seen = {}
    for p in specs:
        prev = seen.get(p.input)
        if prev is None:
            seen[p.input] = p
        elif prev.expected != p.expected:
            raise ConsistencyError(prev, p)


def is_consistent(specs: Iterable[PointSpec]) -> bool:
    try:
        validate_consistency(specs)
    except ConsistencyError:
        return False
    return True


@dataclass(frozen=True)
class SpecDelta:
    """One increment of specification: a branch budget plus the new points."""

    branch_budget: int
    attach_hint: str = SHARED
    new_points: SpecSet = field(default_factory=tuple)
    seed: int = 0

    def __post_init__(self):
        if int(self.branch_budget) < 1:
            raise ValueError("branch budget must be at least 1")
        if self.attach_hint not in ATTACH_HINTS:
            raise ValueError(f"attach_hint must be one of {ATTACH_HINTS}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "new_points", tuple(self.new_points))
        validate_consistency(self.new_points)


def execute(graph: ControlFlowGraph, labeler, decisions) -> OutputVector:
    """Walk from the entry consuming one decision per binary choice."""
    decisions = as_input(decisions)
    pos = 0
    node = graph.entry
    seq = [node]
    while node != graph.exit:
        succs = graph.successors(node)
        if graph.kind(node) is NodeKind.BRANCH:
            if pos >= len(decisions):
                raise InputExhausted(f"no decision left at branch {node}")
            node = succs[decisions[pos]]
            pos += 1
        elif len(succs) > 1:
            # entry fan-out: a chain of binary choices
            idx = 0
            while idx < len(succs) - 1:
                if pos >= len(decisions):
                    raise InputExhausted(f"no decision left at entry fan-out {node}")
                bit = decisions[pos]
                pos += 1
                if bit == 0:
                    break
                idx += 1
            node = succs[idx]
        else:
            node = succs[0]
        seq.append(node)
    return _lookup(labeler, tuple(seq))


def run_test(test: TestCase, graph: ControlFlowGraph, labeler) -> bool:
    return execute(graph, labeler, test.input) == test.expected


def tests_from_eqcp(eqcp: EqcpSet) -> list:
    """One test per class: its canonical input and its output label."""
    return [TestCase(c.decisions, c.output_label) for c in eqcp]


tests_from_eqcp.__test__ = False


@dataclass(frozen=True)
class SuiteResult:
    passed: int
    failed: int
    errored: int

    @property
    def total(self):
        return self.passed + self.failed + self.errored

    @property
    def all_passed(self):
        return self.failed == 0 and self.errored == 0


def run_suite(tests, graph, labeler) -> SuiteResult:
    """Run every test; an exception counts as an error, not a failure."""
    passed = failed = errored = 0
    for t in tests:
        try:
            ok = run_test(t, graph, labeler)
        except Exception:
            errored += 1
            continue
        if ok:
            passed += 1
        else:
            failed += 1
    return SuiteResult(passed, failed, errored)


def format_specs(points: Iterable) -> str:
    """One ``point <bits> <label>`` line per point; ``-`` stands for no decisions."""
    return "".join(f"point {bitstring(p.input)} {p.expected}\n" for p in points)


def parse_specs(text: str) -> SpecSet:
    out = []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        if len(parts) != 3 or parts[0] != "point":
            raise ValueError(f"bad point line: {ln!r}")
        out.append(PointSpec(as_input(parts[1]), parts[2]))
    return tuple(out)

"""Grid topology and the DC measurement Jacobian.

Two text formats are understood. The native line-oriented format::

    # comment
    case demo
    bus 1
    bus 2
    branch 1 2 0.5
    slack 1

and MATPOWER case files (``mpc.bus`` / ``mpc.branch`` tables), of which only
bus ids, branch reactances, branch status and the reference bus are used.
"""

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
import re

import numpy as np


class CaseError(ValueError):
    """Raised when a grid case violates a structural invariant."""


class CaseSyntaxError(CaseError):
    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    reactance: float


@dataclass(frozen=True)
class GridCase:
    """Bus/branch topology with per-unit reactances and a slack bus."""

    buses: tuple
    branches: tuple
    slack: int
    name: str = "case"

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(int(b) for b in self.buses))
        object.__setattr__(self, "branches", tuple(
            b if isinstance(b, Branch) else Branch(int(b[0]), int(b[1]), float(b[2]))
            for b in self.branches))
        _validate(self)

    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def n_branches(self):
        return len(self.branches)


def _validate(case):
    buses = set(case.buses)
    if len(buses) != len(case.buses):
        raise CaseError("duplicate bus id")
    if not buses:
        raise CaseError("case has no buses")
    if case.slack not in buses:
        raise CaseError(f"unknown slack bus {case.slack}")
    adjacency = {b: set() for b in buses}
    for br in case.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in buses:
                raise CaseError(f"branch references unknown bus {end}")
        if br.from_bus == br.to_bus:
            raise CaseError(f"self-loop at bus {br.from_bus}")
        if not br.reactance > 0 or not np.isfinite(br.reactance):
            raise CaseError(
                f"non-positive reactance {br.reactance} on branch {br.from_bus}-{br.to_bus}")
        adjacency[br.from_bus].add(br.to_bus)
        adjacency[br.to_bus].add(br.from_bus)
    seen, stack = {case.slack}, [case.slack]
    while stack:
        for nb in adjacency[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if seen != buses:
        missing = sorted(buses - seen)
        raise CaseError(f"disconnected graph: buses {missing[:10]} unreachable from slack")


def parse_case(text):
    """Parse the native case format into a validated :class:`GridCase`."""
    name = None
    buses, branches, slack = [], [], None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        tokens = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", line)]
        if not tokens:
            continue
        (kw, kcol), args = tokens[0], tokens[1:]
        arity = {"case": 1, "bus": 1, "branch": 3, "slack": 1}
        if kw not in arity:
            raise CaseSyntaxError(f"unknown keyword {kw!r}", lineno, kcol)
        if len(args) != arity[kw]:
            col = args[arity[kw]][1] if len(args) > arity[kw] else len(raw.rstrip()) + 1
            raise CaseSyntaxError(
                f"{kw!r} expects {arity[kw]} argument(s), got {len(args)}", lineno, col)
        if kw == "case":
            if name is not None:
                raise CaseSyntaxError("duplicate case header", lineno, kcol)
            name = args[0][0]
        elif kw == "bus":
            buses.append(_int_token(args[0], lineno))
        elif kw == "branch":
            f, t = _int_token(args[0], lineno), _int_token(args[1], lineno)
            branches.append(Branch(f, t, _float_token(args[2], lineno)))
        else:
            if slack is not None:
                raise CaseSyntaxError("duplicate slack line", lineno, kcol)
            slack = _int_token(args[0], lineno)
    if name is None:
        raise CaseSyntaxError("missing 'case <name>' header", 1, 1)
    if slack is None:
        raise CaseError("no slack bus declared")
    return GridCase(tuple(buses), tuple(branches), slack, name)


def _int_token(tok, lineno):
    try:
        return int(tok[0])
    except ValueError:
        raise CaseSyntaxError(f"expected integer bus id, got {tok[0]!r}", lineno, tok[1]) from None


def _float_token(tok, lineno):
    try:
        return float(tok[0])
    except ValueError:
        raise CaseSyntaxError(f"expected number, got {tok[0]!r}", lineno, tok[1]) from None


def _matpower_table(text, field):
    m = re.search(rf"mpc\.{field}\s*=\s*\[(.*?)\]\s*;", text, flags=re.S)
    if m is None:
        raise CaseError(f"MATPOWER text has no mpc.{field} table")
    rows = []
    for chunk in re.split(r"[;\n]", m.group(1)):
        chunk = chunk.split("%", 1)[0].strip()
        if chunk:
            rows.append([float(v) for v in chunk.replace(",", " ").split()])
    return rows


def parse_matpower(text, name=None):
    """Convert MATPOWER case text to a :class:`GridCase`.

    Out-of-service branches (status 0) are dropped; the first bus of type 3
    becomes the slack.
    """
    bus_rows = _matpower_table(text, "bus")
    branch_rows = _matpower_table(text, "branch")
    buses = [int(r[0]) for r in bus_rows]
    refs = [int(r[0]) for r in bus_rows if len(r) > 1 and int(r[1]) == 3]
    if not refs:
        raise CaseError("MATPOWER case has no reference (type 3) bus")
    branches = [Branch(int(r[0]), int(r[1]), r[3]) for r in branch_rows
                if len(r) <= 10 or r[10] != 0]
    if name is None:
        m = re.search(r"function\s+mpc\s*=\s*(\w+)", text)
        name = m.group(1) if m else "matpower"
    return GridCase(tuple(buses), tuple(branches), refs[0], name)


def format_case(case):
    """Render a case in the native format (round-trips through parse_case)."""
    lines = [f"case {case.name}"]
    lines += [f"bus {b}" for b in case.buses]
    lines += [f"branch {b.from_bus} {b.to_bus} {b.reactance!r}" for b in case.branches]
    lines.append(f"slack {case.slack}")
    return "\n".join(lines) + "\n"


BUNDLED = {"ieee14": "case14.m", "ieee30": "case30.m", "ieee118": "case118.m"}


def load_case(source):
    """Load a case from a bundled name (``ieee14``/``ieee30``/``ieee118``) or a path."""
    key = re.sub(r"^case(\d+)$", r"ieee\1", str(source).lower())
    if key in BUNDLED:
        text = resources.files("gridsec.cases").joinpath(BUNDLED[key]).read_text()
        return parse_matpower(text, name=key)
    path = Path(source)
    text = path.read_text()
    if path.suffix == ".m" or "mpc.bus" in text:
        return parse_matpower(text)
    return parse_case(text)


@dataclass(frozen=True)
class Jacobian:
    """DC measurement Jacobian with labelled rows and state columns."""

    matrix: np.ndarray
    row_labels: tuple
    state_labels: tuple

    @property
    def shape(self):
        return self.matrix.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def build_jacobian(case):
    """Injections at every bus (sorted by id), then both flow directions per branch.

    Angles are the state; the slack angle is fixed at zero and its column removed.
    """
    buses = sorted(case.buses)
    col = {b: i for i, b in enumerate(buses)}
    nb = len(buses)
    flows = np.zeros((case.n_branches, nb))
    incidence = np.zeros((case.n_branches, nb))
    for l, br in enumerate(case.branches):
        y = 1.0 / br.reactance
        flows[l, col[br.from_bus]] = y
        flows[l, col[br.to_bus]] = -y
        incidence[l, col[br.from_bus]] = 1.0
        incidence[l, col[br.to_bus]] = -1.0
    injections = incidence.T @ flows
    rows = [injections]
    labels = [f"injection@{b}" for b in buses]
    for l, br in enumerate(case.branches):
        rows.append(np.vstack([flows[l], -flows[l]]))
        labels += [f"flow {br.from_bus}->{br.to_bus}", f"flow {br.to_bus}->{br.from_bus}"]
    full = np.vstack(rows)
    keep = [i for i, b in enumerate(buses) if b != case.slack]
    matrix = np.ascontiguousarray(full[:, keep])
    matrix.setflags(write=False)
    return Jacobian(matrix, tuple(labels), tuple(buses[i] for i in keep))

"""Network data model, case-file I/O and validation."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

# susceptances are per-unit on this base; flows are in MW
BASE_MVA = 100.0

CASE_DIR = Path(__file__).parent / "cases"


class CaseError(ValueError):
    """Raised when a case file cannot be parsed or fails validation."""


@dataclass(frozen=True)
class Bus:
    id: int
    demand_base: float = 0.0
    name: str = ""


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    base_capacity: float
    expansion_cost: float = 0.0
    candidate: bool = False
    name: str = ""


@dataclass(frozen=True)
class Generator:
    bus: int
    p_max: float
    marginal_cost: float
    strategic: bool = False
    alpha: float = 1.0
    name: str = ""


@dataclass(frozen=True)
class DemandProfile:
    shape: tuple

    @property
    def horizon(self):
        return len(self.shape)


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning"
    message: str

    def __str__(self):
        return f"{self.level}: {self.message}"


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple
    lines: tuple
    generators: tuple
    demand_profile: DemandProfile
    slack_bus: int = 0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def n_line(self):
        return len(self.lines)

    @property
    def n_gen(self):
        return len(self.generators)

    @property
    def horizon(self):
        return self.demand_profile.horizon

    @property
    def strategic(self):
        """Indices of strategic generators, in case order."""
        return [i for i, g in enumerate(self.generators) if g.strategic]

    @property
    def candidates(self):
        return [k for k, ln in enumerate(self.lines) if ln.candidate]

    @property
    def demand_base(self):
        return np.array([b.demand_base for b in self.buses], dtype=float)

    def demand(self, t):
        """Per-bus demand D_n(t) in MW."""
        return self.demand_base * self.demand_profile.shape[t]

    def total_demand(self, t):
        return float(self.demand_base.sum() * self.demand_profile.shape[t])

    @property
    def peak_total_demand(self):
        return float(self.demand_base.sum() * max(self.demand_profile.shape))

    def incidence(self):
        """Bus-by-line incidence matrix, +1 at the sending bus."""
        if "incidence" not in self._cache:
            M = np.zeros((self.n_bus, self.n_line))
            for k, ln in enumerate(self.lines):
                M[ln.from_bus, k] = 1.0
                M[ln.to_bus, k] = -1.0
            self._cache["incidence"] = M
        return self._cache["incidence"]

    def flow_coefficients(self):
        """MW flow per radian of angle difference on each line."""
        return BASE_MVA * np.array([ln.susceptance for ln in self.lines])

    def gen_bus_matrix(self):
        """Bus-by-generator 0/1 connection matrix."""
        if "genbus" not in self._cache:
            M = np.zeros((self.n_bus, self.n_gen))
            for i, g in enumerate(self.generators):
                M[g.bus, i] = 1.0
            self._cache["genbus"] = M
        return self._cache["genbus"]

    def ptdf(self):
        """Line flow per MW injected at each bus, withdrawn at the slack."""
        if "ptdf" not in self._cache:
            A = self.incidence()
            bf = np.diag(self.flow_coefficients()) @ A.T
            Bbus = A @ bf
            keep = [n for n in range(self.n_bus) if n != self.slack_bus]
            X = np.zeros((self.n_bus, self.n_bus))
            X[np.ix_(keep, keep)] = np.linalg.inv(Bbus[np.ix_(keep, keep)])
            self._cache["ptdf"] = bf @ X
        return self._cache["ptdf"]

    def line_index(self, name):
        for k, ln in enumerate(self.lines):
            if ln.name == name:
                return k
        raise KeyError(f"no line named {name!r}")

    def base_capacities(self):
        return np.array([ln.base_capacity for ln in self.lines], dtype=float)

    def with_candidates(self, names):
        """Copy of the case in which exactly the named lines are candidates."""
        wanted = set(names)
        unknown = wanted - {ln.name for ln in self.lines}
        if unknown:
            raise CaseError(f"unknown candidate lines: {sorted(unknown)}")
        lines = tuple(_replace(ln, candidate=ln.name in wanted) for ln in self.lines)
        return NetworkCase(self.buses, lines, self.generators, self.demand_profile, self.slack_bus)

    def with_profile(self, shape):
        return NetworkCase(self.buses, self.lines, self.generators, DemandProfile(tuple(float(s) for s in shape)), self.slack_bus)


def _replace(obj, **kw):
    d = asdict(obj)
    d.update(kw)
    return type(obj)(**d)


def effective_capacity(line, design_value, mode="continuous", fixed_increment=0.0):
    """Capacity L = L_base + z * dL under a sampled design value.

    In continuous mode the design value is the increment dL (z = 1); in
    discrete mode it is the upgrade flag z and dL = ``fixed_increment``.
    """
    if mode == "continuous":
        if design_value < 0:
            raise ValueError(f"negative capacity increment {design_value} on line {line.name}")
        return line.base_capacity + design_value
    if mode == "discrete":
        if design_value not in (0, 1):
            raise ValueError(f"discrete design value must be 0 or 1, got {design_value}")
        return line.base_capacity + design_value * fixed_increment
    raise ValueError(f"unknown design mode {mode!r}")


def capacities(case, design=None, mode="continuous", fixed_increment=0.0):
    """Effective capacities of every line; ``design`` covers candidates only."""
    caps = case.base_capacities()
    if design is None:
        return caps
    cand = case.candidates
    if len(design) != len(cand):
        raise ValueError(f"design has {len(design)} entries, case has {len(cand)} candidate lines")
    for k, w in zip(cand, design):
        caps[k] = effective_capacity(case.lines[k], w, mode, fixed_increment)
    return caps


def validate(case):
    """Return a list of diagnostics; an empty list means the case is valid."""
    out = []
    err = lambda msg: out.append(Diagnostic("error", msg))  # noqa: E731
    nb = case.n_bus
    ids = [b.id for b in case.buses]
    if sorted(ids) != list(range(nb)) or ids != list(range(nb)):
        err(f"bus ids must be dense 0..{nb - 1} in order, got {ids}")
    for b in case.buses:
        if not b.demand_base >= 0:
            err(f"bus {b.id}: demand_base must be >= 0 (got {b.demand_base})")
    for k, ln in enumerate(case.lines):
        tag = f"line {k} ({ln.name})" if ln.name else f"line {k}"
        for end in ("from_bus", "to_bus"):
            v = getattr(ln, end)
            if not (isinstance(v, int) and 0 <= v < nb):
                err(f"{tag}: {end} {v} references a nonexistent bus")
        if ln.from_bus == ln.to_bus:
            err(f"{tag}: from_bus equals to_bus")
        if not ln.susceptance > 0:
            err(f"{tag}: susceptance must be > 0 (got {ln.susceptance})")
        if not ln.base_capacity >= 0:
            err(f"{tag}: base_capacity must be >= 0 (got {ln.base_capacity})")
        if not ln.expansion_cost >= 0:
            err(f"{tag}: expansion_cost must be >= 0 (got {ln.expansion_cost})")
    for i, g in enumerate(case.generators):
        tag = f"generator {i} ({g.name})" if g.name else f"generator {i}"
        if not (isinstance(g.bus, int) and 0 <= g.bus < nb):
            err(f"{tag}: bus {g.bus} references a nonexistent bus")
        for name in ("p_max", "marginal_cost", "alpha"):
            if not getattr(g, name) > 0:
                err(f"{tag}: {name} must be > 0 (got {getattr(g, name)})")
    shape = case.demand_profile.shape
    if len(shape) == 0:
        err("profile: shape is empty")
    elif not all(s > 0 for s in shape):
        err("profile: all shape entries must be > 0")
    if not (isinstance(case.slack_bus, int) and 0 <= case.slack_bus < nb):
        err(f"slack_bus {case.slack_bus} references a nonexistent bus")
    if out:
        return out
    if not _connected(case):
        err("network not connected")
    cap = sum(g.p_max for g in case.generators)
    peak = case.peak_total_demand
    if cap < peak:
        out.append(Diagnostic("warning", f"adequacy: total capacity {cap:g} MW below peak demand {peak:g} MW"))
    return out


def _connected(case):
    adj = [[] for _ in range(case.n_bus)]
    for ln in case.lines:
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    seen = {0}
    queue = deque([0])
    while queue:
        for m in adj[queue.popleft()]:
            if m not in seen:
                seen.add(m)
                queue.append(m)
    return len(seen) == case.n_bus


def case_from_dict(doc):
    try:
        buses = tuple(Bus(id=int(b["id"]), demand_base=float(b.get("demand_base", 0.0)), name=str(b.get("name", b["id"]))) for b in doc["buses"])
        lines = tuple(
            Line(
                from_bus=int(ln["from_bus"]),
                to_bus=int(ln["to_bus"]),
                susceptance=float(ln["susceptance"]),
                base_capacity=float(ln["base_capacity"]),
                expansion_cost=float(ln.get("expansion_cost", 0.0)),
                candidate=bool(ln.get("candidate", False)),
                name=str(ln.get("name", f"{ln['from_bus']}-{ln['to_bus']}")),
            )
            for ln in doc["lines"]
        )
        gens = tuple(
            Generator(
                bus=int(g["bus"]),
                p_max=float(g["p_max"]),
                marginal_cost=float(g["marginal_cost"]),
                strategic=bool(g.get("strategic", False)),
                alpha=float(g.get("alpha", 1.0)),
                name=str(g.get("name", f"G{i}")),
            )
            for i, g in enumerate(doc["generators"])
        )
        prof = doc["profile"]
        shape = prof["shape"] if isinstance(prof, dict) else prof
        shape = tuple(float(s) for s in shape)
        if isinstance(prof, dict) and "horizon" in prof and int(prof["horizon"]) != len(shape):
            raise CaseError(f"profile: horizon {prof['horizon']} does not match {len(shape)} shape entries")
        slack = int(doc.get("slack_bus", 0))
    except CaseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseError(f"malformed case document: {exc!r}") from exc
    return NetworkCase(buses, lines, gens, DemandProfile(shape), slack)


def case_to_dict(case):
    return {
        "slack_bus": case.slack_bus,
        "buses": [asdict(b) for b in case.buses],
        "lines": [asdict(ln) for ln in case.lines],
        "generators": [asdict(g) for g in case.generators],
        "profile": {"horizon": case.horizon, "shape": list(case.demand_profile.shape)},
    }


def resolve_case_path(path):
    """Accept a path or the name of a bundled case (``ieee30``, ``toy2``...)."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (CASE_DIR / p.name, CASE_DIR / f"{p.name}.case"):
        if cand.exists():
            return cand
    raise CaseError(f"case file not found: {path}")


def load_case(path):
    """Parse and validate a case file; raises :class:`CaseError`."""
    p = resolve_case_path(path)
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise CaseError(f"{p}: parse failure: {exc}") from exc
    if not isinstance(doc, dict):
        raise CaseError(f"{p}: expected a mapping at top level")
    case = case_from_dict(doc)
    errors = [d for d in validate(case) if d.level == "error"]
    if errors:
        raise CaseError(f"{p}: " + "; ".join(d.message for d in errors))
    return case


def dump_case(case, path):
    text = yaml.safe_dump(case_to_dict(case), sort_keys=False, default_flow_style=None, width=120)
    Path(path).write_text(text)


def diurnal_shape(days=2, trough=0.7, peak=1.1, trough_hour=4, peak_hour=18):
    """Smooth daily load shape with given trough/peak hours, repeated."""
    mid, amp = (peak + trough) / 2, (peak - trough) / 2
    rise = peak_hour - trough_hour
    out = []
    for h in range(24):
        s = (h - trough_hour) % 24
        if s <= rise:
            v = mid - amp * math.cos(math.pi * s / rise)
        else:
            v = mid + amp * math.cos(math.pi * (s - rise) / (24 - rise))
        out.append(round(v, 4))
    return out * days

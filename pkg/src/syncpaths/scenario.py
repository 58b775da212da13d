"""Scenario description, its plain-text file format and the built-in examples.

File format: one ``key = value`` assignment per line, ``#`` starts a comment,
lists are comma separated, polynomial coefficients are in ascending powers
of ``s``. Indices in keys are 1-based. See ``docs/scenario-format.md``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .closed_loop import ClosedLoop, PlantCascade
from .controller import PathConfig, SyncedController, augment_integrator
from .gating import GateSchedule, disabled, transitions_in
from .lti import PIParams, RationalTransferFunction

__all__ = [
    "ScenarioError",
    "SimConfig",
    "Scenario",
    "validate_scenario",
    "parse_scenario",
    "load_scenario",
    "serialize_scenario",
    "builtin_example",
    "BUILTIN_NAMES",
]

GRID_TOLERANCE = 1e-9


class ScenarioError(ValueError):
    """Invalid scenario text or configuration."""


@dataclass(frozen=True)
class SimConfig:
    t_end: float = 200.0
    dt: float = 1e-3
    record_stride: int = 10

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ScenarioError(f"sim.dt must be positive, got {self.dt}")
        if not (math.isfinite(self.t_end) and self.t_end >= self.dt):
            raise ScenarioError(f"sim.t_end must be >= sim.dt, got {self.t_end}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ScenarioError(f"sim.record_stride must be a positive integer, got {self.record_stride}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class Scenario:
    """Complete experiment: plant cascade, control paths, gates, grid.

    ``initial`` maps ``"path.<i>"`` / ``"plant.<j>"`` (1-based) to state
    vectors; anything absent starts at zero.
    """

    plants: tuple[RationalTransferFunction, ...]
    paths: tuple[PathConfig, ...]
    w_gate: GateSchedule
    u_gate: GateSchedule
    sim: SimConfig = SimConfig()
    initial: Mapping[str, tuple[float, ...]] = field(default_factory=dict)

    def without_sync(self) -> "Scenario":
        return replace(self, u_gate=disabled(self.u_gate))

    def build(self) -> ClosedLoop:
        controller = SyncedController(self.paths, self.w_gate, self.u_gate)
        plant = PlantCascade(self.plants)
        states = [s.state.copy() for s in controller.states]
        plant_state = np.zeros(plant.n_states)
        for key, values in self.initial.items():
            kind, _, idx = key.partition(".")
            i = int(idx) - 1
            vec = np.array(values, dtype=float)
            if kind == "path" and 0 <= i < len(states):
                if vec.shape != states[i].shape:
                    raise ScenarioError(
                        f"init.{key}: expected {states[i].size} value(s), got {vec.size}")
                states[i] = vec
            elif kind == "plant" and 0 <= i < len(plant):
                n, o = plant.sizes[i], plant.offsets[i]
                if vec.size != n:
                    raise ScenarioError(f"init.{key}: expected {n} value(s), got {vec.size}")
                plant_state[o:o + n] = vec
            else:
                raise ScenarioError(f"init.{key}: no such path or plant stage")
        controller.set_states(states)
        return ClosedLoop(controller, plant, plant_state)


def _on_grid(t: float, dt: float) -> bool:
    return abs(t - round(t / dt) * dt) <= GRID_TOLERANCE


def validate_scenario(scenario: Scenario) -> None:
    """Raise :class:`ScenarioError` unless the scenario can be simulated."""
    sim = scenario.sim
    if not _on_grid(sim.t_end, sim.dt):
        raise ScenarioError(f"sim.t_end={sim.t_end} is not a multiple of sim.dt={sim.dt}")
    for name, sched in (("w_gate", scenario.w_gate), ("u_gate", scenario.u_gate)):
        for ts in transitions_in(sched, 0.0, sim.t_end):
            if not _on_grid(ts, sim.dt):
                raise ScenarioError(
                    f"{name}: switch instant t={ts!r} is off the integration grid (dt={sim.dt})")
    for i, p in enumerate(scenario.paths):
        if p.sync_integrator and p.transfer_function.den[0] == 0.0:
            raise ScenarioError(
                f"path {i + 1}: sync integrator on a controller that already integrates")
    try:
        scenario.build()
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


# -- text format ------------------------------------------------------------

_KEY_RE = re.compile(r"^[a-z_]+(\.[a-z0-9_]+)*$")
_GATE_KEYS = ("period", "active_fraction", "phase", "enabled")
_PATH_KEYS = ("setpoint", "kp", "ki", "num", "den", "measure", "sync_error_gain", "augment")


def _fmt(v: float) -> str:
    return repr(float(v))


def _fmt_list(vs) -> str:
    return ", ".join(_fmt(v) for v in vs)


class _Entries:
    """Parsed assignments with line numbers, consumed key by key."""

    def __init__(self, text: str):
        self.values: dict[str, tuple[str, int]] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ScenarioError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            if not _KEY_RE.match(key):
                raise ScenarioError(f"line {lineno}: malformed key {key!r}")
            if key in self.values:
                raise ScenarioError(
                    f"line {lineno}: duplicate key {key!r} (first set on line {self.values[key][1]})")
            if not value:
                raise ScenarioError(f"line {lineno}: {key}: missing value")
            self.values[key] = (value, lineno)
        self.used: set[str] = set()

    def has(self, key: str) -> bool:
        return key in self.values

    def line(self, key: str) -> int:
        return self.values[key][1]

    def _raw(self, key: str) -> str:
        self.used.add(key)
        return self.values[key][0]

    def number(self, key: str) -> float:
        raw = self._raw(key)
        try:
            v = float(raw)
        except ValueError:
            raise ScenarioError(f"line {self.line(key)}: {key}: malformed number {raw!r}") from None
        if not math.isfinite(v):
            raise ScenarioError(f"line {self.line(key)}: {key}: value must be finite")
        return v

    def integer(self, key: str) -> int:
        raw = self._raw(key)
        try:
            return int(raw)
        except ValueError:
            raise ScenarioError(f"line {self.line(key)}: {key}: malformed integer {raw!r}") from None

    def numbers(self, key: str) -> tuple[float, ...]:
        raw = self._raw(key)
        out = []
        for item in raw.split(","):
            try:
                v = float(item.strip())
            except ValueError:
                raise ScenarioError(
                    f"line {self.line(key)}: {key}: malformed number {item.strip()!r}") from None
            if not math.isfinite(v):
                raise ScenarioError(f"line {self.line(key)}: {key}: value must be finite")
            out.append(v)
        return tuple(out)

    def boolean(self, key: str) -> bool:
        raw = self._raw(key).lower()
        if raw in ("true", "yes", "1", "on"):
            return True
        if raw in ("false", "no", "0", "off"):
            return False
        raise ScenarioError(f"line {self.line(key)}: {key}: expected true or false, got {raw!r}")

    def indices(self, prefix: str) -> list[int]:
        found = set()
        for key in self.values:
            parts = key.split(".")
            if parts[0] == prefix and len(parts) >= 2 and parts[1].isdigit():
                found.add(int(parts[1]))
        return sorted(found)


def _wrap(entries: _Entries, key: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        where = f"line {entries.line(key)}: " if entries.has(key) else ""
        raise ScenarioError(f"{where}{key}: {exc}") from None


def parse_scenario(text: str) -> Scenario:
    """Parse and fully validate scenario text. Unknown keys are rejected."""
    e = _Entries(text)
    missing = []

    def need(*keys):
        for k in keys:
            if not e.has(k):
                missing.append(k)

    plant_idx = e.indices("plant")
    path_idx = e.indices("path")
    if not plant_idx:
        missing.append("plant.1.num")
        missing.append("plant.1.den")
    if not path_idx:
        missing.append("path.1.setpoint")
    for label, idx in (("plant", plant_idx), ("path", path_idx)):
        if idx and idx != list(range(1, len(idx) + 1)):
            raise ScenarioError(f"{label} indices must run 1..N without gaps, got {idx}")
    for j in plant_idx:
        need(f"plant.{j}.num", f"plant.{j}.den")
    for i in path_idx:
        need(f"path.{i}.setpoint", f"path.{i}.measure")
        pi = e.has(f"path.{i}.kp") or e.has(f"path.{i}.ki")
        tf = e.has(f"path.{i}.num") or e.has(f"path.{i}.den")
        if pi and tf:
            raise ScenarioError(f"path.{i}: give either kp/ki or num/den, not both")
        if tf:
            need(f"path.{i}.num", f"path.{i}.den")
        else:
            need(f"path.{i}.kp", f"path.{i}.ki")
    need("w_gate.period", "w_gate.active_fraction", "sim.dt", "sim.t_end")
    if missing:
        raise ScenarioError("missing required key(s): " + ", ".join(missing))

    plants = []
    for j in plant_idx:
        k = f"plant.{j}.den"
        plants.append(_wrap(e, k, RationalTransferFunction,
                            e.numbers(f"plant.{j}.num"), e.numbers(k)))

    paths = []
    for i in path_idx:
        pre = f"path.{i}."
        if e.has(pre + "kp"):
            ctrl = _wrap(e, pre + "ki", PIParams, e.number(pre + "kp"), e.number(pre + "ki"))
        else:
            ctrl = _wrap(e, pre + "den", RationalTransferFunction,
                         e.numbers(pre + "num"), e.numbers(pre + "den"))
        measure = e.integer(pre + "measure")
        if not 1 <= measure <= len(plants):
            raise ScenarioError(
                f"line {e.line(pre + 'measure')}: {pre}measure: must be in 1..{len(plants)}")
        gain = e.number(pre + "sync_error_gain") if e.has(pre + "sync_error_gain") else 1.0
        cfg = _wrap(e, pre + "setpoint", PathConfig,
                    e.number(pre + "setpoint"), ctrl, measure - 1, gain)
        if e.has(pre + "augment") and e.boolean(pre + "augment"):
            cfg = augment_integrator(cfg)
        paths.append(cfg)

    def gate(prefix, base=None):
        kw = {}
        for name in _GATE_KEYS:
            key = f"{prefix}.{name}"
            if e.has(key):
                kw[name] = e.boolean(key) if name == "enabled" else e.number(key)
            elif base is not None:
                kw[name] = getattr(base, name)
        return _wrap(e, f"{prefix}.active_fraction", GateSchedule, **kw)

    w_gate = gate("w_gate")
    u_gate = gate("u_gate", base=w_gate)

    stride = e.integer("sim.record_stride") if e.has("sim.record_stride") else SimConfig.record_stride
    sim = _wrap(e, "sim.dt", SimConfig, e.number("sim.t_end"), e.number("sim.dt"), stride)

    initial = {}
    for key in e.values:
        if key.startswith("init."):
            initial[key[len("init."):]] = e.numbers(key)

    unknown = [k for k in e.values if k not in e.used]
    if unknown:
        k = unknown[0]
        raise ScenarioError(f"line {e.line(k)}: unknown key {k!r}")

    scenario = Scenario(tuple(plants), tuple(paths), w_gate, u_gate, sim, initial)
    validate_scenario(scenario)
    return scenario


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def serialize_scenario(scenario: Scenario) -> str:
    lines = []
    for j, tf in enumerate(scenario.plants, start=1):
        lines.append(f"plant.{j}.num = {_fmt_list(tf.num)}")
        lines.append(f"plant.{j}.den = {_fmt_list(tf.den)}")
    for i, p in enumerate(scenario.paths, start=1):
        lines.append(f"path.{i}.setpoint = {_fmt(p.setpoint)}")
        if isinstance(p.controller, PIParams):
            lines.append(f"path.{i}.kp = {_fmt(p.controller.kp)}")
            lines.append(f"path.{i}.ki = {_fmt(p.controller.ki)}")
        else:
            lines.append(f"path.{i}.num = {_fmt_list(p.controller.num)}")
            lines.append(f"path.{i}.den = {_fmt_list(p.controller.den)}")
        lines.append(f"path.{i}.measure = {p.measurement_index + 1}")
        lines.append(f"path.{i}.sync_error_gain = {_fmt(p.sync_error_gain)}")
        lines.append(f"path.{i}.augment = {'true' if p.sync_integrator else 'false'}")
    for prefix, g in (("w_gate", scenario.w_gate), ("u_gate", scenario.u_gate)):
        lines.append(f"{prefix}.period = {_fmt(g.period)}")
        lines.append(f"{prefix}.active_fraction = {_fmt(g.active_fraction)}")
        lines.append(f"{prefix}.phase = {_fmt(g.phase)}")
        lines.append(f"{prefix}.enabled = {'true' if g.enabled else 'false'}")
    lines.append(f"sim.dt = {_fmt(scenario.sim.dt)}")
    lines.append(f"sim.t_end = {_fmt(scenario.sim.t_end)}")
    lines.append(f"sim.record_stride = {scenario.sim.record_stride}")
    for key in sorted(scenario.initial):
        lines.append(f"init.{key} = {_fmt_list(scenario.initial[key])}")
    return "\n".join(lines) + "\n"


# -- built-in examples --------------------------------------------------------

def _example1() -> Scenario:
    gate = GateSchedule(period=50.0, active_fraction=0.7)
    return Scenario(
        plants=(
            RationalTransferFunction((2.0,), (12.0, 4.0, 1.0)),
            RationalTransferFunction((2.0,), (4.0, 1.0)),
        ),
        paths=(
            PathConfig(100.0, PIParams(2.0, 10.0), measurement_index=0),
            PathConfig(50.0, PIParams(3.0, 18.0), measurement_index=1),
        ),
        w_gate=gate,
        u_gate=gate,
        sim=SimConfig(),
    )


def _example2a() -> Scenario:
    s = _example1()
    return replace(s, plants=(s.plants[0], RationalTransferFunction((4.0,), (4.0, 1.0))))


def _example2b() -> Scenario:
    s = _example2a()
    return replace(s, paths=(s.paths[0], replace(s.paths[1], controller=PIParams(3.0, 6.0))))


_BUILTINS = {"example1": _example1, "example2a": _example2a, "example2b": _example2b}
BUILTIN_NAMES = tuple(_BUILTINS)


def builtin_example(name: str) -> Scenario:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ScenarioError(
            f"unknown example {name!r}; valid names: {', '.join(BUILTIN_NAMES)}") from None

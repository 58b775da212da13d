"""Periodic binary switching functions for path selection and sync enabling."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

__all__ = [
    "GateSchedule",
    "GateSet",
    "gate_value",
    "complement_value",
    "gate_set_at",
    "transitions_in",
    "disabled",
]


@dataclass(frozen=True)
class GateSchedule:
    """Periodic gate, high on ``[phase + kT, phase + kT + fraction*T)``.

    A disabled schedule holds both the gate and its complement at 0.
    """

    period: float
    active_fraction: float
    phase: float = 0.0
    enabled: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.period) and self.period > 0):
            raise ValueError(f"period must be positive and finite, got {self.period}")
        if not 0.0 <= self.active_fraction <= 1.0:
            raise ValueError(f"active_fraction must lie in [0, 1], got {self.active_fraction}")
        if not math.isfinite(self.phase):
            raise ValueError(f"phase must be finite, got {self.phase}")

    @property
    def active_duration(self) -> float:
        return self.active_fraction * self.period


def disabled(schedule: GateSchedule) -> GateSchedule:
    return replace(schedule, enabled=False)


class GateSet(NamedTuple):
    w: int
    w_bar: int
    u: int
    u_bar: int


def gate_value(schedule: GateSchedule, t: float) -> int:
    if not schedule.enabled:
        return 0
    pos = math.fmod(t - schedule.phase, schedule.period)
    if pos < 0:
        pos += schedule.period
    # compared in time units so the edges agree with transitions_in
    return 1 if pos < schedule.active_duration else 0


def complement_value(schedule: GateSchedule, t: float) -> int:
    if not schedule.enabled:
        return 0
    return 1 - gate_value(schedule, t)


def gate_set_at(w_sched: GateSchedule, u_sched: GateSchedule, t: float) -> GateSet:
    if not w_sched.enabled:
        raise ValueError("the path-selection gate w cannot be disabled: a main path must exist")
    w = gate_value(w_sched, t)
    return GateSet(w, 1 - w, gate_value(u_sched, t), complement_value(u_sched, t))


def transitions_in(schedule: GateSchedule, t0: float, t1: float) -> list[float]:
    """Instants strictly after ``t0`` and before ``t1`` where the gate flips.

    The window start itself is never reported: there is no earlier value
    inside the window to differ from.
    """
    if t1 < t0:
        raise ValueError(f"t0 must not exceed t1 ({t0} > {t1})")
    frac = schedule.active_fraction
    if not schedule.enabled or frac in (0.0, 1.0):
        return []
    T = schedule.period
    on = schedule.active_duration
    k0 = math.floor((t0 - schedule.phase) / T) - 1
    k1 = math.ceil((t1 - schedule.phase) / T) + 1
    out = []
    for k in range(k0, k1 + 1):
        start = schedule.phase + k * T
        for edge in (start, start + on):
            if t0 < edge < t1:
                out.append(edge)
    return sorted(out)

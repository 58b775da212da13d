"""Synced parallel control paths.

One path is active at a time (selected by gate ``w``) and regulates its own
plant measurement. Every other path runs in the background: while its sync
gate is open it is driven by the difference between the active path's output
and its own output, so its state keeps tracking the active actuation and the
hand-over at a switch instant is bumpless.

Path gate bindings: path 0 is active when ``w = 1`` and syncs through ``u_bar``;
path 1 is active when ``w = 0`` and syncs through ``u``. Paths beyond the
second are permanent background paths and sync whenever the ``u`` schedule is
enabled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence, Union

import numpy as np

from .gating import GateSchedule, GateSet, gate_set_at
from .lti import NumericFailure, PIParams, RationalTransferFunction, as_transfer_function, realize

__all__ = [
    "PathConfig",
    "PathState",
    "SyncedController",
    "path_drive_input",
    "augment_integrator",
    "sync_gate_of",
]

Controller = Union[PIParams, RationalTransferFunction]


@dataclass(frozen=True)
class PathConfig:
    """Static description of one control path.

    ``sync_integrator`` is set by :func:`augment_integrator`; when true an
    integrator with gain ``sync_error_gain`` sits in front of the controller
    on the sync-error input only.
    """

    setpoint: float
    controller: Controller
    measurement_index: int
    sync_error_gain: float = 1.0
    sync_integrator: bool = False

    def __post_init__(self):
        as_transfer_function(self.controller)
        if self.measurement_index < 0:
            raise ValueError(f"measurement_index must be >= 0, got {self.measurement_index}")
        if not math.isfinite(self.setpoint):
            raise ValueError("setpoint must be finite")
        if not math.isfinite(self.sync_error_gain):
            raise ValueError("sync_error_gain must be finite")

    @property
    def transfer_function(self) -> RationalTransferFunction:
        return as_transfer_function(self.controller)


def augment_integrator(path: PathConfig) -> PathConfig:
    """Add an integrator to the sync-error path unless the controller has one.

    Controllers with a pole at the origin (PI) come back unchanged.
    """
    if path.transfer_function.den[0] == 0.0:
        return path
    return replace(path, sync_integrator=True)


@dataclass
class PathState:
    state: np.ndarray
    output: float = 0.0


def sync_gate_of(index: int, gates: GateSet) -> int:
    if index == 0:
        return gates.u_bar
    if index == 1:
        return gates.u
    return gates.u + gates.u_bar


def path_drive_input(
    path: PathConfig,
    active: bool,
    sync_gate: int,
    measurement: float,
    active_output: float,
    own_output: float,
) -> float:
    """Gated input of a path: reference error when active, sync error otherwise."""
    if active:
        return path.setpoint - measurement
    return sync_gate * (active_output - own_output)


class SyncedController:
    """Bank of parallel control paths sharing a ``w``/``u`` gate pair.

    Parameters
    ----------
    paths : sequence of PathConfig
        Path 0 is the one selected by ``w = 1``.
    w_schedule, u_schedule : GateSchedule
        ``w`` picks the active path, ``u`` enables the sync loops. Passing
        a disabled ``u_schedule`` turns every sync loop off.
    initial_states : optional sequence of arrays
        Per-path state vectors (controller realization states followed by
        the sync integrator state when present). Zero by default.
    """

    def __init__(
        self,
        paths: Sequence[PathConfig],
        w_schedule: GateSchedule,
        u_schedule: GateSchedule,
        initial_states=None,
    ):
        if not paths:
            raise ValueError("at least one control path is required")
        if not w_schedule.enabled:
            raise ValueError("the path-selection gate w cannot be disabled")
        if len(paths) == 1 and w_schedule.active_fraction < 1.0:
            raise ValueError("a single path needs w_gate.active_fraction = 1")
        self.paths = tuple(paths)
        self.w_schedule = w_schedule
        self.u_schedule = u_schedule
        self.models = tuple(realize(p.controller) for p in self.paths)
        for i, (p, m) in enumerate(zip(self.paths, self.models)):
            if not p.sync_integrator and 1.0 + m.D == 0.0:
                raise ValueError(
                    f"path {i + 1}: singular sync algebraic loop (1 + feedthrough = 0)"
                )
        self.sizes = tuple(m.n + int(p.sync_integrator) for p, m in zip(self.paths, self.models))
        self.offsets = tuple(int(v) for v in np.cumsum((0,) + self.sizes[:-1]))
        self.n_states = sum(self.sizes)
        self.states = [PathState(np.zeros(n)) for n in self.sizes]
        if initial_states is not None:
            self.set_states(initial_states)

    def set_states(self, states) -> None:
        if len(states) != len(self.paths):
            raise ValueError(f"expected {len(self.paths)} path states, got {len(states)}")
        for i, s in enumerate(states):
            arr = np.array(s, dtype=float).reshape(-1)
            if arr.shape != (self.sizes[i],):
                raise ValueError(f"path {i + 1}: state must have {self.sizes[i]} entries")
            self.states[i] = PathState(arr)

    def flat_state(self) -> np.ndarray:
        if not self.n_states:
            return np.zeros(0)
        return np.concatenate([s.state for s in self.states])

    def split(self, flat: np.ndarray) -> list[np.ndarray]:
        return [flat[o:o + n] for o, n in zip(self.offsets, self.sizes)]

    def gates(self, t: float) -> GateSet:
        return gate_set_at(self.w_schedule, self.u_schedule, t)

    def active_index(self, gates: GateSet) -> int:
        return 0 if gates.w else 1

    # -- algebraic part -------------------------------------------------

    def _own_contribution(self, i: int, z: np.ndarray) -> float:
        m = self.models[i]
        return float(m.C @ z[:m.n]) if m.n else 0.0

    def resolve_outputs(
        self,
        gates: GateSet,
        measurements: Sequence[float],
        states: Sequence[np.ndarray] | None = None,
        homogeneous: bool = False,
    ) -> list[float]:
        """Outputs of all paths at one instant.

        A background path without sync integrator feeds its own output back
        through its feedthrough term; the scalar loop
        ``X = c + D * g * (X_act - X)`` is solved exactly.

        ``homogeneous`` drops the setpoints, which yields the linear part of
        the (affine) closed-loop map.
        """
        if states is None:
            states = [s.state for s in self.states]
        act = self.active_index(gates)
        out = [0.0] * len(self.paths)

        p, m = self.paths[act], self.models[act]
        setpoint = 0.0 if homogeneous else p.setpoint
        ref_error = setpoint - measurements[p.measurement_index]
        x_act = self._own_contribution(act, states[act]) + m.D * ref_error
        out[act] = x_act

        for i, (p, m) in enumerate(zip(self.paths, self.models)):
            if i == act:
                continue
            c = self._own_contribution(i, states[i])
            g = sync_gate_of(i, gates)
            if p.sync_integrator:
                out[i] = c + m.D * p.sync_error_gain * states[i][-1]
            elif g:
                out[i] = (c + m.D * x_act) / (1.0 + m.D)
            else:
                out[i] = c
        return out

    def sync_errors(self, gates: GateSet, outputs: Sequence[float]) -> list[float]:
        """Per-path sync error; zero for the active path and closed sync gates."""
        act = self.active_index(gates)
        return [
            0.0 if i == act else path_drive_input(
                p, False, sync_gate_of(i, gates), 0.0, outputs[act], outputs[i])
            for i, p in enumerate(self.paths)
        ]

    def controller_output(self, gates: GateSet, outputs: Sequence[float]) -> float:
        return outputs[self.active_index(gates)]

    # -- dynamics ---------------------------------------------------------

    def derivatives(
        self,
        gates: GateSet,
        measurements: Sequence[float],
        states: Sequence[np.ndarray] | None = None,
        homogeneous: bool = False,
    ) -> tuple[list[np.ndarray], list[float]]:
        """State derivatives of every path plus the resolved outputs."""
        if states is None:
            states = [s.state for s in self.states]
        outputs = self.resolve_outputs(gates, measurements, states, homogeneous)
        act = self.active_index(gates)
        derivs = []
        for i, (p, m) in enumerate(zip(self.paths, self.models)):
            z = states[i]
            if i == act:
                setpoint = 0.0 if homogeneous else p.setpoint
                v = setpoint - measurements[p.measurement_index]
                q_dot = 0.0
            else:
                e = path_drive_input(p, False, sync_gate_of(i, gates), 0.0, outputs[act], outputs[i])
                if p.sync_integrator:
                    v = p.sync_error_gain * z[-1]
                    q_dot = e
                else:
                    v = e
            d = np.empty(self.sizes[i])
            if m.n:
                d[:m.n] = m.A @ z[:m.n] + m.B * v
            if p.sync_integrator:
                d[-1] = q_dot
            derivs.append(d)
        return derivs, outputs

    def advance_states(
        self,
        t: float,
        dt: float,
        measurement_provider: Callable[[float], Sequence[float]],
    ) -> list[PathState]:
        """One RK4 step of all path states with gates held at their value at ``t``.

        Outputs are re-resolved at every stage from the stage states and the
        stage-time measurements.
        """
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        gates = self.gates(t)
        x0 = [s.state for s in self.states]

        def f(tt, zs):
            return self.derivatives(gates, measurement_provider(tt), zs)[0]

        k1 = f(t, x0)
        k2 = f(t + dt / 2, [z + dt / 2 * k for z, k in zip(x0, k1)])
        k3 = f(t + dt / 2, [z + dt / 2 * k for z, k in zip(x0, k2)])
        k4 = f(t + dt, [z + dt * k for z, k in zip(x0, k3)])
        new = [
            z + dt / 6 * (a + 2 * b + 2 * c + d)
            for z, a, b, c, d in zip(x0, k1, k2, k3, k4)
        ]
        for i, z in enumerate(new):
            if not np.all(np.isfinite(z)):
                raise NumericFailure(f"path {i + 1}: non-finite controller state at t={t + dt!r}")
        outputs = self.resolve_outputs(self.gates(t + dt), measurement_provider(t + dt), new)
        self.states = [PathState(z, x) for z, x in zip(new, outputs)]
        return self.states

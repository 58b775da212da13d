"""Fixed-step simulation of a synced controller driving a plant cascade.

The plant is a chain ``Y_c -> G_p1 -> Y1 -> G_p2 -> Y2 ...``. Controller and
plant states are integrated jointly with classical RK4 and gates sampled at
the start of every step.

Two kernels produce the same RK4 trajectory:

* ``"affine"`` (default): with the gates frozen the closed loop is an affine
  system ``x' = A x + b``. Its matrices are read off the very same
  right-hand side used by the stagewise kernel, and one RK4 step is applied
  as ``x+ = Phi x + Gamma b``. Steps between two recorded samples are
  composed into one map.
* ``"stagewise"``: the textbook four-stage update, re-resolving the
  algebraic controller outputs at every stage. Slow; kept as a cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .controller import SyncedController
from .gating import GateSet, gate_set_at, transitions_in
from .lti import NumericFailure, RationalTransferFunction, realize, rk4_propagator

__all__ = [
    "PlantCascade",
    "Trace",
    "ClosedLoop",
    "simulate",
    "run_comparison",
    "trace_columns",
]

DEFAULT_DIVERGENCE_LIMIT = 1e12


class PlantCascade:
    """Series connection of SISO stages; stage ``j`` is driven by ``Y_{j-1}``."""

    def __init__(self, stages: Sequence[RationalTransferFunction]):
        if not stages:
            raise ValueError("the plant cascade needs at least one stage")
        self.stages = tuple(stages)
        self.models = tuple(realize(s) for s in self.stages)
        self.sizes = tuple(m.n for m in self.models)
        self.offsets = tuple(int(v) for v in np.cumsum((0,) + self.sizes[:-1]))
        self.n_states = sum(self.sizes)

    def __len__(self):
        return len(self.stages)

    def depends_on_input(self, index: int) -> bool:
        """True when output ``index`` reacts instantaneously to the cascade input."""
        return all(m.D != 0.0 for m in self.models[:index + 1])

    def outputs(self, x: np.ndarray, y_in: float) -> list[float]:
        ys = []
        v = y_in
        for m, o, n in zip(self.models, self.offsets, self.sizes):
            v = (float(m.C @ x[o:o + n]) if n else 0.0) + m.D * v
            ys.append(v)
        return ys

    def derivative(self, x: np.ndarray, y_in: float, ys: Sequence[float]) -> np.ndarray:
        d = np.empty(self.n_states)
        inputs = [y_in] + list(ys[:-1])
        for m, o, n, v in zip(self.models, self.offsets, self.sizes, inputs):
            if n:
                d[o:o + n] = m.A @ x[o:o + n] + m.B * v
        return d


def trace_columns(n_paths: int, n_stages: int) -> tuple[str, ...]:
    return (
        ("t", "y_c")
        + tuple(f"x_c{i + 1}" for i in range(n_paths))
        + tuple(f"y{j + 1}" for j in range(n_stages))
        + ("w", "u")
        + tuple(f"e{i + 1}" for i in range(n_paths))
    )


@dataclass(frozen=True, eq=False)
class Trace:
    """Uniformly sampled simulation record, one row per sample."""

    columns: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise ValueError(
                f"trace data shape {self.data.shape} does not match {len(self.columns)} columns"
            )

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"unknown trace column {name!r}; have {', '.join(self.columns)}") from None

    def __len__(self):
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return self.columns == other.columns and np.array_equal(self.data, other.data)

    @property
    def t(self) -> np.ndarray:
        return self["t"]

    @property
    def sample_spacing(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self) > 1 else 0.0


class ClosedLoop:
    """Joint state layout and right-hand side of controller + plant."""

    def __init__(self, controller: SyncedController, plant: PlantCascade, plant_state=None):
        for i, p in enumerate(controller.paths):
            if p.measurement_index >= len(plant):
                raise ValueError(
                    f"path {i + 1} measures y{p.measurement_index + 1}, "
                    f"but the plant has {len(plant)} stage(s)"
                )
            if plant.depends_on_input(p.measurement_index):
                raise ValueError(
                    f"path {i + 1}: y{p.measurement_index + 1} has direct feedthrough "
                    "from the controller output (plant algebraic loop)"
                )
        self.controller = controller
        self.plant = plant
        self.nc = controller.n_states
        self.n_states = self.nc + plant.n_states
        self.columns = trace_columns(len(controller.paths), len(plant))
        if plant_state is None:
            plant_state = np.zeros(plant.n_states)
        self.plant_state = np.asarray(plant_state, dtype=float)
        if self.plant_state.shape != (plant.n_states,):
            raise ValueError(f"plant state must have {plant.n_states} entries")

    def initial_state(self) -> np.ndarray:
        return np.concatenate([self.controller.flat_state(), self.plant_state])

    def state_names(self) -> list[str]:
        names = []
        for i, n in enumerate(self.controller.sizes):
            names += [f"path{i + 1}.z{k}" for k in range(n)]
        for j, n in enumerate(self.plant.sizes):
            names += [f"plant{j + 1}.x{k}" for k in range(n)]
        return names

    def evaluate(self, x: np.ndarray, gates: GateSet, homogeneous: bool = False):
        """Derivative of the joint state and the recorded signals (minus t, w, u)."""
        zs = self.controller.split(x[:self.nc])
        xp = x[self.nc:]
        # measured outputs carry no feedthrough from y_c (checked in __init__)
        meas = self.plant.outputs(xp, 0.0)
        cdot, outputs = self.controller.derivatives(gates, meas, zs, homogeneous)
        y_c = self.controller.controller_output(gates, outputs)
        ys = self.plant.outputs(xp, y_c)
        pdot = self.plant.derivative(xp, y_c, ys)
        errors = self.controller.sync_errors(gates, outputs)
        xdot = np.concatenate(cdot + [pdot]) if self.nc else pdot
        signals = np.array([y_c] + outputs + ys + errors)
        return xdot, signals

    def affine_mode(self, gates: GateSet):
        """``(A, b, O, o)`` with ``x' = A x + b`` and ``signals = O x + o``."""
        n = self.n_states
        b, o = self.evaluate(np.zeros(n), gates)
        A = np.empty((n, n))
        O = np.empty((o.size, n))
        basis = np.eye(n)
        for j in range(n):
            A[:, j], O[:, j] = self.evaluate(basis[j], gates, homogeneous=True)
        return A, b, O, o


def _grid_index(t: float, dt: float) -> int:
    return int(round(t / dt))


def _check(x: np.ndarray, limit: float) -> bool:
    # written so that NaN fails the test
    return bool(np.abs(x).max(initial=0.0) <= limit)


def simulate(scenario, kernel: str = "affine", divergence_limit: float = DEFAULT_DIVERGENCE_LIMIT) -> Trace:
    """Run a scenario and return its recorded trace.

    Raises :class:`NumericFailure` when any state becomes non-finite or
    exceeds ``divergence_limit`` in magnitude.
    """
    from .scenario import validate_scenario

    validate_scenario(scenario)
    loop = scenario.build()
    sim = scenario.sim
    dt = sim.dt
    n_steps = _grid_index(sim.t_end, dt)
    stride = sim.record_stride
    x = loop.initial_state()
    w_sched, u_sched = scenario.w_gate, scenario.u_gate

    def mode_at_step(k):
        # gates are aligned to the grid, so the mid-step value equals the
        # value at the step start without rounding ambiguity at edges
        return gate_set_at(w_sched, u_sched, (k + 0.5) * dt)

    switch_steps = sorted(
        {_grid_index(ts, dt) for ts in transitions_in(w_sched, 0.0, sim.t_end)}
        | {_grid_index(ts, dt) for ts in transitions_in(u_sched, 0.0, sim.t_end)}
    )

    n_rec = n_steps // stride + 1
    states = np.empty((n_rec, loop.n_states))
    modes: list[GateSet] = []
    states[0] = x
    modes.append(mode_at_step(0))

    def fail(k, xs):
        t_fail = k * dt
        gates = mode_at_step(k)
        with np.errstate(all="ignore"):
            _, sig = loop.evaluate(xs, gates)
        names = loop.columns[1:len(sig) + 1]
        bad = [nm for nm, v in zip(names, sig) if not abs(v) <= divergence_limit]
        if not bad:
            bad = [nm for nm, v in zip(loop.state_names(), xs) if not abs(v) <= divergence_limit]
        raise NumericFailure(
            f"numeric failure at t={t_fail!r}: column {bad[0] if bad else '?'} "
            "is non-finite or diverging"
        )

    if kernel == "affine":
        cache_mode = {}
        cache_map = {}

        def chunk_map(gates, length):
            key = (gates, length)
            if key not in cache_map:
                if gates not in cache_mode:
                    A, b, _, _ = loop.affine_mode(gates)
                    phi, gamma = rk4_propagator(A, dt)
                    cache_mode[gates] = (phi, gamma @ b)
                phi, c = cache_mode[gates]
                M, v = phi, c
                for _ in range(length - 1):
                    M, v = phi @ M, phi @ v + c
                cache_map[key] = (M, v)
            return cache_map[key]

        k = 0
        sw = iter(switch_steps + [n_steps + 1])
        next_sw = next(sw)
        with np.errstate(all="ignore"):
            while k < n_steps:
                while next_sw <= k:
                    next_sw = next(sw)
                nxt = min((k // stride + 1) * stride, next_sw, n_steps)
                M, v = chunk_map(mode_at_step(k), nxt - k)
                x = M @ x + v
                if not _check(x, divergence_limit):
                    fail(nxt, x)
                k = nxt
                if k % stride == 0:
                    states[k // stride] = x
                    modes.append(mode_at_step(k))
    elif kernel == "stagewise":
        for k in range(n_steps):
            gates = mode_at_step(k)
            f = lambda xx: loop.evaluate(xx, gates)[0]  # noqa: E731
            with np.errstate(all="ignore"):
                k1 = f(x)
                k2 = f(x + dt / 2 * k1)
                k3 = f(x + dt / 2 * k2)
                k4 = f(x + dt * k3)
                x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not _check(x, divergence_limit):
                fail(k + 1, x)
            if (k + 1) % stride == 0:
                states[(k + 1) // stride] = x
                modes.append(mode_at_step(k + 1))
    else:
        raise ValueError(f"unknown kernel {kernel!r}")

    return _assemble(loop, states, modes, dt * stride, direct=kernel == "stagewise")


def _assemble(loop, states, modes, spacing, direct=False) -> Trace:
    n_rec = states.shape[0]
    n_sig = len(loop.columns) - 3
    data = np.empty((n_rec, len(loop.columns)))
    # rounded so sample times print as short decimals
    data[:, 0] = np.round(np.arange(n_rec) * spacing, 12)
    signals = np.empty((n_rec, n_sig))
    if direct:
        for i, g in enumerate(modes):
            signals[i] = loop.evaluate(states[i], g)[1]
    else:
        idx_by_mode: dict[GateSet, list[int]] = {}
        for i, g in enumerate(modes):
            idx_by_mode.setdefault(g, []).append(i)
        for g, idx in idx_by_mode.items():
            _, _, O, o = loop.affine_mode(g)
            idx = np.asarray(idx)
            signals[idx] = states[idx] @ O.T + o
    n_paths = len(loop.controller.paths)
    n_stages = len(loop.plant)
    head = 1 + n_paths + n_stages
    data[:, 1:1 + head] = signals[:, :head]
    data[:, 1 + head] = [g.w for g in modes]
    data[:, 2 + head] = [g.u for g in modes]
    data[:, 3 + head:] = signals[:, head:]
    return Trace(loop.columns, data)


def run_comparison(scenario, **kwargs) -> tuple[Trace, Trace]:
    """Simulate ``scenario`` as configured and with every sync loop disabled."""
    return simulate(scenario, **kwargs), simulate(scenario.without_sync(), **kwargs)

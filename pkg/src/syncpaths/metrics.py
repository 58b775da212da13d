"""Switch-instant bump and per-epoch tracking metrics over recorded traces."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .closed_loop import Trace
from .gating import GateSchedule, gate_value, transitions_in

__all__ = [
    "Epoch",
    "SwitchBump",
    "SwitchBumpReport",
    "TrackingReport",
    "epochs",
    "switch_bumps",
    "tracking_metrics",
    "epoch_tracking",
    "comparison_metrics",
    "format_report",
]

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

# relative slack when matching requested instants to sample times
_TIME_EPS = 1e-9


class Epoch(NamedTuple):
    start: float
    end: float
    active_index: int


def epochs(w_schedule: GateSchedule, t0: float, t1: float) -> list[Epoch]:
    """Split ``[t0, t1]`` at the switch instants of ``w``."""
    cuts = [t0] + transitions_in(w_schedule, t0, t1) + [t1]
    return [
        Epoch(a, b, 0 if gate_value(w_schedule, a) else 1)
        for a, b in zip(cuts[:-1], cuts[1:])
        if b > a
    ]


@dataclass(frozen=True)
class SwitchBump:
    t: float
    jump: float
    peak_deviation: dict[str, float]
    settling_time: dict[str, float | None] = field(default_factory=dict)


@dataclass(frozen=True)
class SwitchBumpReport:
    entries: tuple[SwitchBump, ...]
    sample_spacing: float

    @property
    def jumps(self) -> list[float]:
        return [b.jump for b in self.entries]

    def max_peak(self, column: str) -> float:
        return max((b.peak_deviation[column] for b in self.entries), default=0.0)


@dataclass(frozen=True)
class TrackingReport:
    iae: float
    itae: float
    steady_state_error: float
    oscillation_energy: float


def _output_columns(trace: Trace) -> list[str]:
    return [c for c in trace.columns if c[0] == "y" and c[1:].isdigit()]


def _settling(t, y, start, end, ref, band):
    """Time after ``start`` from which ``y`` stays within the band until ``end``."""
    mask = (t >= start - _TIME_EPS) & (t < end - _TIME_EPS)
    tt, yy = t[mask], y[mask]
    if not tt.size:
        return None
    tol = band * abs(ref)
    outside = np.nonzero(np.abs(yy - ref) > tol)[0]
    if not outside.size:
        return 0.0
    last = outside[-1]
    if last + 1 >= tt.size:
        return None
    return float(tt[last + 1] - start)


def switch_bumps(
    trace: Trace,
    switch_times: Sequence[float],
    window: float = 5.0,
    columns: Sequence[str] | None = None,
    references: Mapping[float, Mapping[str, float]] | None = None,
    band: float = 0.02,
    baseline: float = 1.0,
) -> SwitchBumpReport:
    """Measure what happens to ``y_c`` and the plant outputs at each switch.

    The jump is ``|y_c|`` difference between the samples straddling the
    instant (the sample at the instant already belongs to the new mode). The
    peak deviation of each output is taken over ``[t_s, t_s + window]``
    relative to its mean over the ``baseline`` seconds before ``t_s``.

    ``references`` optionally maps a switch instant to per-column targets;
    settling time is then reported until the next switch (or trace end) for
    a band of ``band * |reference|``.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    if not window > 0:
        raise ValueError(f"window must be positive, got {window}")
    t = trace.t
    y_c = trace["y_c"]
    cols = list(columns) if columns is not None else _output_columns(trace)
    times = sorted(float(ts) for ts in switch_times)
    entries = []
    for n, ts in enumerate(times):
        if not (t[0] < ts <= t[-1] + _TIME_EPS):
            raise ValueError(f"switch instant {ts} outside trace range [{t[0]}, {t[-1]}]")
        i = int(np.searchsorted(t, ts - _TIME_EPS))
        jump = float(abs(y_c[i] - y_c[i - 1]))
        pre = (t >= ts - baseline - _TIME_EPS) & (t < ts - _TIME_EPS)
        post = (t >= ts - _TIME_EPS) & (t <= ts + window + _TIME_EPS)
        peaks = {}
        for c in cols:
            y = trace[c]
            base = y[pre].mean() if pre.any() else y[i - 1]
            peaks[c] = float(np.abs(y[post] - base).max())
        settle = {}
        if references and ts in references:
            end = times[n + 1] if n + 1 < len(times) else t[-1] + _TIME_EPS * 2
            for c, ref in references[ts].items():
                settle[c] = _settling(t, trace[c], ts, end, ref, band)
        entries.append(SwitchBump(ts, jump, peaks, settle))
    return SwitchBumpReport(tuple(entries), trace.sample_spacing)


def tracking_metrics(
    trace: Trace,
    epoch: tuple[float, float],
    reference: float,
    output_column: str,
) -> TrackingReport:
    """IAE, ITAE, steady-state error and oscillation energy over one epoch.

    Integrals use the trapezoidal rule on the recorded samples in
    ``[start, end]``; ITAE weights by time since the epoch start. The
    steady-state error is the mean absolute error over the last 20 % of the
    epoch and the oscillation energy is the variance of the least-squares
    detrended signal over the last 50 %.
    """
    start, end = float(epoch[0]), float(epoch[1])
    if not end > start:
        raise ValueError(f"epoch must have positive length, got [{start}, {end}]")
    y_all = trace[output_column]
    t_all = trace.t
    if start < t_all[0] - _TIME_EPS or end > t_all[-1] + _TIME_EPS:
        raise ValueError(f"epoch [{start}, {end}] outside trace range")
    m = (t_all >= start - _TIME_EPS) & (t_all <= end + _TIME_EPS)
    t, y = t_all[m], y_all[m]
    if t.size < 2:
        raise ValueError("epoch holds fewer than two samples")
    err = np.abs(reference - y)
    iae = float(_trapezoid(err, t))
    itae = float(_trapezoid((t - start) * err, t))

    tail = t >= start + 0.8 * (end - start) - _TIME_EPS
    sse = float(err[tail].mean())

    half = t >= start + 0.5 * (end - start) - _TIME_EPS
    th, yh = t[half], y[half]
    if th.size >= 3:
        coef = np.polyfit(th - th[0], yh, 1)
        resid = yh - np.polyval(coef, th - th[0])
        osc = float(np.mean(resid * resid))
    else:
        osc = 0.0
    return TrackingReport(iae, itae, sse, osc)


def epoch_tracking(trace: Trace, scenario) -> list[tuple[Epoch, TrackingReport]]:
    """Tracking metrics of the active path's own output in every ``w`` epoch."""
    out = []
    for ep in epochs(scenario.w_gate, float(trace.t[0]), float(trace.t[-1])):
        path = scenario.paths[ep.active_index]
        col = f"y{path.measurement_index + 1}"
        out.append((ep, tracking_metrics(trace, (ep.start, ep.end), path.setpoint, col)))
    return out


def _switch_references(scenario, t_end: float) -> dict[float, dict[str, float]]:
    refs = {}
    for ep in epochs(scenario.w_gate, 0.0, t_end)[1:]:
        p = scenario.paths[ep.active_index]
        refs[ep.start] = {f"y{p.measurement_index + 1}": p.setpoint}
    return refs


def comparison_metrics(
    scenario,
    traces: Mapping[str, Trace],
    window: float = 5.0,
    band: float = 0.02,
) -> dict[str, float | int | str]:
    """Flat ``key -> value`` metrics for one or more labelled traces."""
    out: dict[str, float | int | str] = {}
    for label, trace in traces.items():
        t_end = float(trace.t[-1])
        switches = transitions_in(scenario.w_gate, 0.0, t_end + _TIME_EPS)
        switches = [ts for ts in switches if ts <= t_end + _TIME_EPS]
        bumps = switch_bumps(trace, switches, window=window, band=band,
                             references=_switch_references(scenario, t_end))
        out[f"{label}.sample_spacing"] = bumps.sample_spacing
        out[f"{label}.switch_count"] = len(bumps.entries)
        for b in bumps.entries:
            key = f"{label}.switch@{b.t!r}"
            out[f"{key}.jump_y_c"] = b.jump
            for c, v in b.peak_deviation.items():
                out[f"{key}.peak_{c}"] = v
            for c, v in b.settling_time.items():
                out[f"{key}.settling_{c}"] = "never" if v is None else v
        for k, (ep, rep) in enumerate(epoch_tracking(trace, scenario), start=1):
            key = f"{label}.epoch{k}"
            out[f"{key}.start"] = ep.start
            out[f"{key}.end"] = ep.end
            out[f"{key}.active_path"] = ep.active_index + 1
            out[f"{key}.iae"] = rep.iae
            out[f"{key}.itae"] = rep.itae
            out[f"{key}.steady_state_error"] = rep.steady_state_error
            out[f"{key}.oscillation_energy"] = rep.oscillation_energy
    return out


def format_report(title: str, metrics: Mapping[str, float | int | str]) -> str:
    """Human-readable summary followed by one ``key=value`` line per metric."""
    labels = sorted({k.split(".", 1)[0] for k in metrics})
    lines = [f"# {title}"]
    for label in labels:
        jumps = [v for k, v in metrics.items()
                 if k.startswith(label + ".") and k.endswith(".jump_y_c")]
        itae = [v for k, v in metrics.items()
                if k.startswith(label + ".") and k.endswith(".itae")]
        lines.append(
            f"# {label}: {metrics.get(label + '.switch_count', 0)} switches, "
            f"max |jump y_c| = {max(jumps, default=0.0):.6g}, "
            f"total ITAE = {sum(itae):.6g}"
        )
    lines.append("")
    for k, v in metrics.items():
        lines.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
    return "\n".join(lines) + "\n"

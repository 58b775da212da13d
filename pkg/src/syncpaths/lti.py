"""Rational transfer functions, state-space realization and fixed-step RK4.

Polynomial coefficients are stored in ascending powers of ``s`` so that
``num[0] / den[0]`` is the DC gain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NumericFailure",
    "RationalTransferFunction",
    "StateSpaceModel",
    "PIParams",
    "as_transfer_function",
    "realize",
    "dc_gain",
    "rk4_step",
    "rk4_propagator",
    "step_response",
    "analytic_step_response",
]


class NumericFailure(ArithmeticError):
    """Raised when an integrated state becomes non-finite or diverges."""


def _trim(coeffs: Sequence[float]) -> tuple[float, ...]:
    c = [float(v) for v in coeffs]
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class RationalTransferFunction:
    """Proper rational function ``num(s) / den(s)``, ascending coefficients."""

    num: tuple[float, ...]
    den: tuple[float, ...]

    def __post_init__(self):
        num = tuple(float(v) for v in self.num)
        den = tuple(float(v) for v in self.den)
        if not num or not den:
            raise ValueError("numerator and denominator must be non-empty")
        if not all(math.isfinite(v) for v in num + den):
            raise ValueError(f"non-finite coefficient in {num} / {den}")
        if den[-1] == 0.0:
            raise ValueError(f"leading denominator coefficient is zero: {den}")
        num = _trim(num)
        if len(num) > len(den):
            raise ValueError(
                f"improper transfer function: degree(num)={len(num) - 1} > "
                f"degree(den)={len(den) - 1}"
            )
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def order(self) -> int:
        return len(self.den) - 1

    @property
    def strictly_proper(self) -> bool:
        return len(self.num) < len(self.den) or self.num == (0.0,)

    def __call__(self, s: complex) -> complex:
        return np.polyval(self.num[::-1], s) / np.polyval(self.den[::-1], s)


@dataclass(frozen=True)
class PIParams:
    """PI controller ``kp + ki/s``."""

    kp: float
    ki: float

    def __post_init__(self):
        if not (math.isfinite(self.kp) and math.isfinite(self.ki)):
            raise ValueError("PI gains must be finite")
        if self.ki < 0:
            raise ValueError(f"ki must be >= 0, got {self.ki}")

    def to_tf(self) -> RationalTransferFunction:
        return RationalTransferFunction((self.ki, self.kp), (0.0, 1.0))


def as_transfer_function(obj) -> RationalTransferFunction:
    if isinstance(obj, RationalTransferFunction):
        return obj
    if isinstance(obj, PIParams):
        return obj.to_tf()
    raise TypeError(f"expected RationalTransferFunction or PIParams, got {type(obj).__name__}")


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """SISO model ``x' = A x + B u``, ``y = C x + D u``.

    ``B`` and ``C`` are stored as 1-D arrays of length n. ``n == 0`` is a
    pure gain.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def output(self, x: np.ndarray, u: float) -> float:
        return float(self.C @ x) + self.D * u

    def __eq__(self, other):
        if not isinstance(other, StateSpaceModel):
            return NotImplemented
        return (
            np.array_equal(self.A, other.A)
            and np.array_equal(self.B, other.B)
            and np.array_equal(self.C, other.C)
            and self.D == other.D
        )


def realize(tf) -> StateSpaceModel:
    """Controllable canonical realization of a proper transfer function.

    The denominator is normalized to be monic; the direct feedthrough is the
    ratio of the leading coefficients when the degrees match and the
    remainder of the polynomial division gives ``C``.

    >>> m = realize(RationalTransferFunction((2.0,), (12.0, 4.0, 1.0)))
    >>> m.A.tolist(), m.B.tolist(), m.C.tolist(), m.D
    ([[0.0, 1.0], [-12.0, -4.0]], [0.0, 1.0], [2.0, 0.0], 0.0)
    """
    tf = as_transfer_function(tf)
    n = tf.order
    lead = tf.den[-1]
    den = [a / lead for a in tf.den]
    num = [b / lead for b in tf.num] + [0.0] * (n + 1 - len(tf.num))
    D = num[n]
    rem = [num[i] - D * den[i] for i in range(n)]

    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = [-a for a in den[:n]]
    B = np.zeros(n)
    if n:
        B[-1] = 1.0
    C = np.array(rem, dtype=float)
    return StateSpaceModel(A, B, C, float(D))


def dc_gain(tf) -> float:
    tf = as_transfer_function(tf)
    if tf.den[0] == 0.0:
        raise ValueError("no finite DC gain: denominator has a root at s=0")
    return tf.num[0] / tf.den[0]


def rk4_step(
    model: StateSpaceModel,
    state: np.ndarray,
    input_at: Callable[[float], float],
    t: float,
    dt: float,
) -> np.ndarray:
    """Advance ``x' = A x + B u(t)`` by one classical RK4 step."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    A, B = model.A, model.B
    h = dt
    u0 = input_at(t)
    um = input_at(t + 0.5 * h)
    u1 = input_at(t + h)
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = A @ state + B * u0
        k2 = A @ (state + 0.5 * h * k1) + B * um
        k3 = A @ (state + 0.5 * h * k2) + B * um
        k4 = A @ (state + h * k3) + B * u1
        out = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericFailure(f"non-finite state after RK4 step at t={t!r}")
    return out


def rk4_propagator(A: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Matrices ``(Phi, Gamma)`` of one RK4 step of ``x' = A x + b``, b constant.

    Applying RK4 to an affine system with constant forcing gives exactly
    ``x+ = Phi x + Gamma b`` with the degree-4 Taylor truncations below.
    """
    n = A.shape[0]
    hA = dt * A
    eye = np.eye(n)
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    phi = eye + hA + hA2 / 2.0 + hA3 / 6.0 + (hA3 @ hA) / 24.0
    gamma = dt * (eye + hA / 2.0 + hA2 / 6.0 + hA3 / 24.0)
    return phi, gamma


def step_response(tf, t_end: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit-step response of ``tf`` from rest, sampled every ``dt``.

    Integrates the realized model with RK4 (constant input over each step).
    """
    model = realize(tf)
    n_steps = int(round(t_end / dt))
    t = np.arange(n_steps + 1) * dt
    if model.n == 0:
        return t, np.full(n_steps + 1, model.D)
    phi, gamma = rk4_propagator(model.A, dt)
    drive = gamma @ model.B
    x = np.zeros(model.n)
    states = np.empty((n_steps + 1, model.n))
    states[0] = x
    for k in range(1, n_steps + 1):
        x = phi @ x + drive
        states[k] = x
    return t, states @ model.C + model.D


def analytic_step_response(tf, t):
    """Closed-form unit-step response for first-order or underdamped
    second-order strictly proper transfer functions.

    Works elementwise when ``t`` is an array.
    """
    tf = as_transfer_function(tf)
    t = np.asarray(t, dtype=float)
    if not tf.strictly_proper:
        raise ValueError("analytic step response needs a strictly proper transfer function")
    if tf.order == 1:
        a0, a1 = tf.den
        if a0 == 0.0:
            raise ValueError("pure integrator is not supported")
        gain, pole = tf.num[0] / a1, a0 / a1
        return (gain / pole) * (1.0 - np.exp(-pole * t))
    if tf.order == 2:
        a0, a1, a2 = (a / tf.den[2] for a in tf.den)
        num = [b / tf.den[2] for b in tf.num] + [0.0]
        b0, b1 = num[0], num[1]
        sigma = a1 / 2.0
        wd2 = a0 - sigma * sigma
        if wd2 <= 0.0:
            raise ValueError("only complex-conjugate pole pairs are supported")
        wd = math.sqrt(wd2)
        decay = np.exp(-sigma * t)
        unit = (1.0 - decay * (np.cos(wd * t) + (sigma / wd) * np.sin(wd * t))) / a0
        impulse = decay * np.sin(wd * t) / wd
        return b0 * unit + b1 * impulse
    raise ValueError(f"unsupported order {tf.order} for analytic step response")

"""Adaptive virtual impedance: filtered q current drives R and X.

The virtual resistance and reactance rise linearly with the filtered
q-axis inverter current, so the apparent source impedance grows with the
reactive loading while the X/R ratio stays fixed (m = n).  The resulting
feed-forward voltage correction is subtracted from the oscillator's
voltage reference, which is what bends the reactive droop during sags.

Sign convention in this module: q-axis current is positive when the
inverter exports inductive reactive power (a sag pushes it positive).
The engine maps the standard dq components into this convention (negated
q) before calling in, and un-negates the q-axis voltage on the way out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg


@dataclass
class VimParams:
    r_v0: float = 0.0       # initial virtual resistance [ohm]
    x_v0: float = 0.0       # initial virtual reactance [ohm]
    m: float = 0.0          # adaptive resistance gain [ohm/A]
    n: float = 0.0          # adaptive reactance gain [ohm/A]
    omega_f: float = 2.0 * math.pi * 40.0  # current filter corner [rad/s]
    feedforward_gain: float = 0.0          # F in the voltage-loop bypass
    clamp_non_negative: bool = True
    filter_numerator: str = "wf2"          # "wf2" (unity DC gain) or "wf"

    def __post_init__(self):
        if self.m < 0 or self.n < 0:
            raise ValueError("m, n must be >= 0")
        if self.omega_f <= 0:
            raise ValueError("omega_f must be > 0")
        if self.filter_numerator not in ("wf2", "wf"):
            raise ValueError("filter_numerator must be 'wf2' or 'wf'")

    @classmethod
    def with_gain(cls, k: float, **kw) -> "VimParams":
        """Same resistance and reactance gain (constant X/R objective)."""
        return cls(m=k, n=k, **kw)


@dataclass
class VimState:
    """Second-order filter states per axis, plus the latest R/X outputs."""

    x1d: np.ndarray
    x2d: np.ndarray
    x1q: np.ndarray
    x2q: np.ndarray
    r_vim: np.ndarray
    x_vim: np.ndarray

    @classmethod
    def zeros(cls) -> "VimState":
        return cls(*(np.zeros(3) for _ in range(6)))

    @classmethod
    def steady(cls, i_fd: np.ndarray, i_fq: np.ndarray) -> "VimState":
        """Filter settled at a constant input (unity-DC-gain reading)."""
        return cls(np.asarray(i_fd, float).copy(), np.zeros(3),
                   np.asarray(i_fq, float).copy(), np.zeros(3),
                   np.zeros(3), np.zeros(3))

    @property
    def i_fd(self) -> np.ndarray:
        return self.x1d

    @property
    def i_fq(self) -> np.ndarray:
        return self.x1q

    def copy(self) -> "VimState":
        return VimState(self.x1d.copy(), self.x2d.copy(), self.x1q.copy(),
                        self.x2q.copy(), self.r_vim.copy(), self.x_vim.copy())


@lru_cache(maxsize=32)
def filter_discretization(omega_f: float, dt: float, numerator: str):
    """ZOH discretization (Ad, Bd) of the second-order current filter.

    Continuous form: x1' = x2, x2' = -wf^2 x1 - wf x2 + num * u with
    num = wf^2 (unity DC gain) or wf (as-written low-gain reading).
    """
    num = omega_f ** 2 if numerator == "wf2" else omega_f
    a = np.array([[0.0, 1.0], [-omega_f ** 2, -omega_f]])
    b = np.array([0.0, num])
    ad = scipy.linalg.expm(a * dt)
    bd = np.linalg.solve(a, (ad - np.eye(2)) @ b)
    return ad, bd


def filter_step(state: VimState, i_inv_dq, params: VimParams,
                dt: float) -> VimState:
    """Advance the d and q current filters one step; input (i_d, i_q)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    i_d, i_q = np.asarray(i_inv_dq[0], float), np.asarray(i_inv_dq[1], float)
    ad, bd = filter_discretization(params.omega_f, dt, params.filter_numerator)
    new = state.copy()
    new.x1d = ad[0, 0] * state.x1d + ad[0, 1] * state.x2d + bd[0] * i_d
    new.x2d = ad[1, 0] * state.x1d + ad[1, 1] * state.x2d + bd[1] * i_d
    new.x1q = ad[0, 0] * state.x1q + ad[0, 1] * state.x2q + bd[0] * i_q
    new.x2q = ad[1, 0] * state.x1q + ad[1, 1] * state.x2q + bd[1] * i_q
    return new


def compute_vim(i_fq, params: VimParams):
    """Adaptive impedance from the filtered q current, per phase."""
    i_fq = np.asarray(i_fq, dtype=float)
    r = params.r_v0 + params.m * i_fq
    x = params.x_v0 + params.n * i_fq
    if params.clamp_non_negative:
        r = np.maximum(r, 0.0)
        x = np.maximum(x, 0.0)
    return r, x


def feedforward_voltage(i_f_dq, r, x):
    """Voltage correction (v_d, v_q) = -(R + jX) applied to the current.

    v_d = -R i_fd - X i_fq,  v_q = -R i_fq + X i_fd  (module q convention).
    """
    i_fd, i_fq = np.asarray(i_f_dq[0], float), np.asarray(i_f_dq[1], float)
    v_d = -r * i_fd - x * i_fq
    v_q = -r * i_fq + x * i_fd
    return v_d, v_q


def step_overshoot_fraction() -> float:
    """Analytic step-response overshoot of the zeta = 0.5 filter."""
    zeta = 0.5
    return math.exp(-math.pi * zeta / math.sqrt(1.0 - zeta ** 2))

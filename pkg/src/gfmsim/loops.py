"""Nested per-phase dq voltage and current PI loops with anti-windup.

The voltage loop turns the VIm-corrected voltage error into an inductor
current reference; a magnitude limiter clips that reference and freezes
the voltage-loop integrators while it is active (conditional
integration); the current loop turns the current error into the bridge
voltage command with decoupling feed-forwards.

Discrete realization: trapezoidal integrators at the controller period.
The PI output of a tick uses the integrator advanced with that tick's
error; when the limiter saturates a phase, the advance is rolled back by
``commit_voltage_integrators`` so frozen ticks add no area.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LoopGains:
    k_pv: float           # voltage loop proportional [1/ohm]
    k_iv: float           # voltage loop integral [1/(ohm s)]
    k_pi: float           # current loop proportional [ohm]
    k_ii: float           # current loop integral [ohm/s]
    omega_v: float = 2.0 * np.pi * 400.0
    omega_i: float = 2.0 * np.pi * 1500.0
    l_f: float = 2e-3               # physical values for decoupling terms
    c_f: float = 20e-6
    feedforward_gain: float = 0.0   # F multiplying the VIm bypass term
    i_max: float = np.inf           # current reference magnitude limit [A]

    def __post_init__(self):
        if min(self.k_pv, self.k_iv, self.k_pi, self.k_ii) <= 0:
            raise ValueError("all PI gains must be > 0")
        if self.omega_i <= self.omega_v:
            raise ValueError("current loop must be faster than voltage loop")
        if self.i_max <= 0:
            raise ValueError("i_max must be > 0")


def design_gains(l_f: float, r_f: float, c_f: float,
                 omega_i: float = 2.0 * np.pi * 1500.0,
                 omega_v: float = 2.0 * np.pi * 400.0,
                 **overrides) -> LoopGains:
    """Bandwidth-based gain design.

    k_pi = L_f w_i, k_ii = R_f w_i, k_pv = C_f w_v, k_iv = 2 k_pv w_v^2 / w_i.
    Keyword overrides replace individual gains (e.g. to reproduce a
    published gain set that disagrees with the formulas).
    """
    if min(l_f, r_f, c_f, omega_i, omega_v) <= 0:
        raise ValueError("all design inputs must be > 0")
    k_pv = c_f * omega_v
    gains = dict(
        k_pi=l_f * omega_i,
        k_ii=r_f * omega_i,
        k_pv=k_pv,
        k_iv=2.0 * k_pv * omega_v ** 2 / omega_i,
        omega_v=omega_v,
        omega_i=omega_i,
        l_f=l_f,
        c_f=c_f,
    )
    gains.update(overrides)
    return LoopGains(**gains)


def table_gains(**overrides) -> LoopGains:
    """The published numeric gain set (k_pv 0.5, k_iv 67, k_pi 5, k_ii 250)."""
    gains = dict(k_pv=0.5, k_iv=67.0, k_pi=5.0, k_ii=250.0)
    gains.update(overrides)
    return LoopGains(**gains)


@dataclass
class PiState:
    """Integrator accumulators and previous errors, per phase (3,)."""

    int_vd: np.ndarray = field(default_factory=lambda: np.zeros(3))
    int_vq: np.ndarray = field(default_factory=lambda: np.zeros(3))
    int_id: np.ndarray = field(default_factory=lambda: np.zeros(3))
    int_iq: np.ndarray = field(default_factory=lambda: np.zeros(3))
    e_vd_prev: np.ndarray = field(default_factory=lambda: np.zeros(3))
    e_vq_prev: np.ndarray = field(default_factory=lambda: np.zeros(3))
    e_id_prev: np.ndarray = field(default_factory=lambda: np.zeros(3))
    e_iq_prev: np.ndarray = field(default_factory=lambda: np.zeros(3))
    saturated: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=bool))

    def copy(self) -> "PiState":
        return PiState(*(getattr(self, f).copy() for f in (
            "int_vd", "int_vq", "int_id", "int_iq",
            "e_vd_prev", "e_vq_prev", "e_id_prev", "e_iq_prev", "saturated")))


def voltage_loop_step(v_ref_dq, v_vim_dq, v_pcc_dq, gains: LoopGains,
                      state: PiState, dt: float):
    """PI on the VIm-corrected voltage error, plus the -F*V_VIm bypass.

    Returns the (unlimited) current reference and a candidate state with
    integrators advanced; the caller must resolve saturation with
    ``commit_voltage_integrators`` so frozen ticks do not integrate.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    e_d = v_ref_dq[0] + v_vim_dq[0] - v_pcc_dq[0]
    e_q = v_ref_dq[1] + v_vim_dq[1] - v_pcc_dq[1]
    new = state.copy()
    new.int_vd = state.int_vd + 0.5 * dt * (e_d + state.e_vd_prev)
    new.int_vq = state.int_vq + 0.5 * dt * (e_q + state.e_vq_prev)
    new.e_vd_prev = np.asarray(e_d, float).copy()
    new.e_vq_prev = np.asarray(e_q, float).copy()
    f = gains.feedforward_gain
    i_d = gains.k_pv * e_d + gains.k_iv * new.int_vd - f * v_vim_dq[0]
    i_q = gains.k_pv * e_q + gains.k_iv * new.int_vq - f * v_vim_dq[1]
    return (i_d, i_q), new


def limit_current_ref(i_ref_dq, i_max: float):
    """Clip the reference vector to magnitude i_max, preserving its angle."""
    if i_max <= 0:
        raise ValueError("i_max must be > 0")
    i_d = np.asarray(i_ref_dq[0], dtype=float)
    i_q = np.asarray(i_ref_dq[1], dtype=float)
    mag = np.hypot(i_d, i_q)
    saturated = mag > i_max
    scale = np.where(saturated, i_max / np.maximum(mag, 1e-300), 1.0)
    return (i_d * scale, i_q * scale), saturated


def commit_voltage_integrators(old: PiState, candidate: PiState,
                               saturated: np.ndarray) -> PiState:
    """Keep the advanced voltage integrators only on unsaturated phases."""
    out = candidate.copy()
    out.int_vd = np.where(saturated, old.int_vd, candidate.int_vd)
    out.int_vq = np.where(saturated, old.int_vq, candidate.int_vq)
    out.saturated = np.asarray(saturated, dtype=bool).copy()
    return out


def current_loop_step(i_ref_dq, i_fb_dq, v_pcc_dq, gains: LoopGains,
                      omega: float, state: PiState, dt: float,
                      variant: str = "standard"):
    """Current PI producing the bridge voltage command.

    'standard' uses inductor-current feedback with the usual decoupling
    (v_c = PI(e) -/+ w L_f i_q/d + v_pcc).  'verbatim' keeps the
    small-signal paper form: the written error (delivered current plus a
    w C_f v_pcc capacitor-current estimate) equals the inductor current
    by KCL, so the same i_fb feeds the PI, while the trailing cross term
    is w L_f v_pcc with the written signs (its q axis is sag-positive).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    l_f = gains.l_f
    e_d = i_ref_dq[0] - i_fb_dq[0]
    e_q = i_ref_dq[1] - i_fb_dq[1]
    if variant == "standard":
        ff_d = -omega * l_f * i_fb_dq[1] + v_pcc_dq[0]
        ff_q = omega * l_f * i_fb_dq[0] + v_pcc_dq[1]
    elif variant == "verbatim":
        ff_d = omega * l_f * v_pcc_dq[1]
        ff_q = -omega * l_f * v_pcc_dq[0]
    else:
        raise ValueError(f"unknown current-loop variant '{variant}'")

    new = state.copy()
    new.int_id = state.int_id + 0.5 * dt * (e_d + state.e_id_prev)
    new.int_iq = state.int_iq + 0.5 * dt * (e_q + state.e_iq_prev)
    new.e_id_prev = np.asarray(e_d, float).copy()
    new.e_iq_prev = np.asarray(e_q, float).copy()
    v_d = gains.k_pi * e_d + gains.k_ii * new.int_id + ff_d
    v_q = gains.k_pi * e_q + gains.k_ii * new.int_iq + ff_q
    return (v_d, v_q), new

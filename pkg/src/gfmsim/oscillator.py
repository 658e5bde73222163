"""Per-phase virtual oscillators and reference-frame machinery.

Each phase runs an independent two-state limit-cycle oscillator whose
equilibria realize the droop laws

    omega = omega_n - (k_v k_i / (C V^2)) (P - P*)
    0     = (xi / k_v^2) V (2 Vn^2 - 2 V^2) - (k_v k_i / (C V)) (Q - Q*)

with V the RMS amplitude (state norm is sqrt(2) V).  The measured current
enters rotated by 90 degrees, which is what places P in the frequency
equation and Q in the amplitude equation; the dispatch term i_ref makes
(P*, Q*, Vn, omega_n) an equilibrium.

Per-phase synchronous frames use the oscillator's own output as the d-axis
(its own voltage maps to (||v||, 0)).  Measured signals get their
quadrature from a SOGI generator tuned at omega_n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import OscillatorCollapseError, UndefinedAngleError

SQRT2 = math.sqrt(2.0)

# Droop-scale calibration: 1 Hz of frequency droop per this many watts of
# per-phase power error, evaluated at nominal amplitude.  Sets c_osc when
# not given explicitly.  Together with k_v this keeps the current-feedback
# loop crossover below the network envelope lag poles (stable closed loop
# on the weak-grid study network; verified by eigenvalues of the full
# discrete loop map).
WATTS_PER_HZ = 1200.0


@dataclass
class OscillatorParams:
    k_i: float = 0.1            # current scaling [V/A]
    k_v: float = 214.1          # voltage scaling [-]
    xi: float = 15.0            # speed constant [(V s)^-2]
    v_nominal: float = 80.0     # nominal RMS amplitude [V]
    omega_n: float = 2.0 * np.pi * 60.0
    p_ref: float = 300.0        # per-phase [W]
    q_ref: float = 0.0          # per-phase [var]
    c_osc: float | None = None  # virtual capacitance [F]

    def __post_init__(self):
        if self.c_osc is None:
            # frequency droop slope k_v k_i / (C Vn^2) = 2 pi / WATTS_PER_HZ
            self.c_osc = self.k_v * self.k_i * WATTS_PER_HZ / (
                2.0 * np.pi * self.v_nominal ** 2)
        for name in ("k_i", "k_v", "c_osc", "xi", "v_nominal", "omega_n"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def freq_droop_slope(self) -> float:
        """d(omega)/d(P) at nominal amplitude [rad/s per W]."""
        return self.k_v * self.k_i / (self.c_osc * self.v_nominal ** 2)

    @property
    def reactive_droop_coeff(self) -> float:
        """kappa in Q(V) = Q* + kappa V^2 (2 Vn^2 - 2 V^2) [var/V^4]."""
        return self.xi * self.c_osc / (self.k_v ** 3 * self.k_i)


@dataclass
class OscillatorState:
    """Three per-phase oscillator 2-vectors (alpha, beta components)."""

    v_alpha: np.ndarray
    v_beta: np.ndarray

    @classmethod
    def nominal(cls, params: OscillatorParams,
                angles: np.ndarray | None = None) -> "OscillatorState":
        if angles is None:
            from .circuit import PHASE_ANGLES
            angles = PHASE_ANGLES
        norm = SQRT2 * params.v_nominal
        return cls(norm * np.cos(angles), norm * np.sin(angles))

    def amplitude(self) -> np.ndarray:
        """Per-phase RMS amplitude."""
        return np.hypot(self.v_alpha, self.v_beta) / SQRT2

    def copy(self) -> "OscillatorState":
        return OscillatorState(self.v_alpha.copy(), self.v_beta.copy())


def _osc_deriv(va, vb, i_a, i_b, p: OscillatorParams):
    """Right-hand side of the oscillator ODE (all arrays per phase)."""
    norm2 = va * va + vb * vb
    # dispatch current reference: P along v, Q along -Jv
    ira = (2.0 / norm2) * (p.p_ref * va + p.q_ref * vb)
    irb = (2.0 / norm2) * (p.p_ref * vb - p.q_ref * va)
    ea, eb = i_a - ira, i_b - irb
    gain_amp = (p.xi / p.k_v ** 2) * (2.0 * p.v_nominal ** 2 - norm2)
    ki_c = p.k_v * p.k_i / p.c_osc
    # J rotates (x, y) -> (-y, x); current error enters rotated
    dva = -p.omega_n * vb + gain_amp * va - ki_c * (-eb)
    dvb = p.omega_n * va + gain_amp * vb - ki_c * ea
    return dva, dvb


def oscillator_step(state: OscillatorState, i_fb: np.ndarray,
                    params: OscillatorParams, dt: float) -> OscillatorState:
    """Advance the three oscillators by dt (RK4), i_fb shape (3, 2).

    i_fb[:, 0] is the instantaneous extracted current, i_fb[:, 1] its
    quadrature (90 degrees lagging).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    amp = state.amplitude()
    if np.any(amp <= 0):
        raise ValueError("oscillator amplitude must be > 0")
    i_a, i_b = i_fb[:, 0], i_fb[:, 1]
    va, vb = state.v_alpha, state.v_beta

    k1 = _osc_deriv(va, vb, i_a, i_b, params)
    k2 = _osc_deriv(va + dt / 2 * k1[0], vb + dt / 2 * k1[1], i_a, i_b, params)
    k3 = _osc_deriv(va + dt / 2 * k2[0], vb + dt / 2 * k2[1], i_a, i_b, params)
    k4 = _osc_deriv(va + dt * k3[0], vb + dt * k3[1], i_a, i_b, params)
    new = OscillatorState(
        va + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        vb + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
    )
    new_amp = new.amplitude()
    if np.any(new_amp < 0.05 * params.v_nominal):
        ph = int(np.argmin(new_amp))
        raise OscillatorCollapseError("abc"[ph], float(new_amp[ph]))
    return new


def instantaneous_frequency(state: OscillatorState, i_fb: np.ndarray,
                            params: OscillatorParams) -> np.ndarray:
    """d(theta)/dt per phase, from the ODE right-hand side."""
    dva, dvb = _osc_deriv(state.v_alpha, state.v_beta,
                          i_fb[:, 0], i_fb[:, 1], params)
    norm2 = state.v_alpha ** 2 + state.v_beta ** 2
    return (state.v_alpha * dvb - state.v_beta * dva) / norm2


def frame_angle(state: OscillatorState) -> np.ndarray:
    """Per-phase d-axis angle; the oscillator's own voltage is the d axis."""
    if np.any(np.hypot(state.v_alpha, state.v_beta) == 0):
        raise UndefinedAngleError("zero oscillator vector has no angle")
    return np.arctan2(state.v_beta, state.v_alpha)


def abc_to_dq(x, quadrature, theta):
    """Rotate an (instantaneous, quadrature) pair into the frame at theta.

    A signal in phase with the frame maps to (amplitude, 0); a signal
    lagging the frame by 90 degrees maps to (0, -amplitude).
    """
    c, s = np.cos(theta), np.sin(theta)
    d = x * c + quadrature * s
    q = -x * s + quadrature * c
    return d, q


def dq_to_abc(d, q, theta):
    """Inverse rotation; returns the (instantaneous, quadrature) pair."""
    c, s = np.cos(theta), np.sin(theta)
    return d * c - q * s, d * s + q * c


class Sogi:
    """Second-order generalized integrator quadrature generator.

    Tracks a sinusoid near omega0 and produces its 90-degree-lagging
    quadrature.  Discretized exactly (ZOH on the input) at step dt.
    ``x`` and ``qx`` are per-phase arrays of shape (3,).
    """

    def __init__(self, omega0: float, dt: float, k_s: float = SQRT2):
        self.k_s = k_s
        self.dt = dt
        self.x = np.zeros(3)
        self.qx = np.zeros(3)
        self.retune(omega0)

    def retune(self, omega0: float):
        """Re-center the generator (a converged frequency-adaptive SOGI)."""
        self.omega0 = omega0
        a = np.array([[-self.k_s * omega0, -omega0], [omega0, 0.0]])
        b = np.array([self.k_s * omega0, 0.0])
        self.ad = scipy.linalg.expm(a * self.dt)
        self.bd = np.linalg.solve(a, (self.ad - np.eye(2)) @ b)

    def init_from_phasor(self, phasor: np.ndarray, theta: float):
        """Set states consistent with RMS phasors at grid angle theta."""
        rot = np.asarray(phasor) * np.exp(1j * theta)
        self.x = SQRT2 * np.real(rot)
        self.qx = SQRT2 * np.imag(rot)

    def step(self, u: np.ndarray):
        x_new = self.ad[0, 0] * self.x + self.ad[0, 1] * self.qx + self.bd[0] * u
        qx_new = self.ad[1, 0] * self.x + self.ad[1, 1] * self.qx + self.bd[1] * u
        self.x, self.qx = x_new, qx_new


def single_phase_power(v, qv, i, qi):
    """Cycle-smooth P and Q from (signal, quadrature) pairs.

    P = (v i + qv qi)/2, Q = (qv i - v qi)/2; exact cycle averages for
    sinusoidal steady state, generator convention (lagging current
    exported = positive Q).
    """
    p = 0.5 * (v * i + qv * qi)
    q = 0.5 * (qv * i - v * qi)
    return p, q

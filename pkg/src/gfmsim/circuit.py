"""Averaged three-phase electrical network around the PCC.

Topology per phase: inverter bridge voltage v_c -> (R_f, L_f) filter branch
-> PCC node with shunt C_f -> local R-L load branches -> (R_g, L_g) grid
branch -> stiff grid source.

Conventions used throughout the package:

* Voltage/current "amplitudes" are RMS phase quantities; instantaneous
  signals are ``sqrt(2) * A * cos(theta)``.
* Phase order a, b, c with angles (0, -2pi/3, +2pi/3).
* ``i_inv`` is the grid-branch current (what flows beyond the PCC toward
  the grid); load branch currents are tracked separately, so KCL at the
  PCC reads ``i_c = i_l - i_inv - sum(i_load)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericBlowupError, SingularNetworkError

PHASE_ANGLES = np.array([0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0])
SQRT2 = math.sqrt(2.0)


@dataclass
class LoadBranch:
    """Series R-L branch at the PCC, switched in at ``t_connect``."""

    r: float
    l: float
    t_connect: float = 0.0

    def impedance(self, omega: float) -> complex:
        return self.r + 1j * omega * self.l


@dataclass
class CircuitParams:
    r_f: float = 0.15
    l_f: float = 2e-3
    c_f: float = 20e-6
    r_g: float = 0.35
    l_g: float = 4e-3
    loads: list[LoadBranch] = field(default_factory=list)

    def __post_init__(self):
        if self.r_f < 0 or self.r_g < 0:
            raise ValueError("resistances must be >= 0")
        if self.l_f <= 0 or self.l_g <= 0 or self.c_f <= 0:
            raise ValueError("L_f, L_g, C_f must be > 0")
        for ld in self.loads:
            if ld.l <= 0 or ld.r < 0:
                raise ValueError("load branches need R >= 0, L > 0")
            if ld.t_connect < 0:
                raise ValueError("load connect times must be non-negative")

    def active_loads(self, t: float) -> list[LoadBranch]:
        return [ld for ld in self.loads if t >= ld.t_connect]


@dataclass
class GridSource:
    """Stiff source behind the grid branch.

    ``amplitude`` is the RMS phase voltage.  ``amplitude_schedule`` and
    ``omega_schedule`` are piecewise-constant (time, value) breakpoint
    lists applied on top of the base values; ``phase_scale_schedule``
    carries per-phase multipliers for unbalanced sags.
    """

    amplitude: float = 80.0
    omega: float = 2.0 * np.pi * 60.0
    amplitude_schedule: list[tuple[float, float]] = field(default_factory=list)
    omega_schedule: list[tuple[float, float]] = field(default_factory=list)
    phase_scale_schedule: list[tuple[float, tuple[float, float, float]]] = field(
        default_factory=list
    )
    theta0: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("grid amplitude must be >= 0")
        for sched in (self.amplitude_schedule, self.omega_schedule,
                      self.phase_scale_schedule):
            times = [b[0] for b in sched]
            if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
                raise ValueError("schedule breakpoints must be strictly increasing")

    def amplitude_at(self, t: float) -> float:
        a = self.amplitude
        for tb, val in self.amplitude_schedule:
            if t >= tb:
                a = val
        return a

    def omega_at(self, t: float) -> float:
        w = self.omega
        for tb, val in self.omega_schedule:
            if t >= tb:
                w = val
        return w

    def phase_scales_at(self, t: float) -> np.ndarray:
        s = np.ones(3)
        for tb, val in self.phase_scale_schedule:
            if t >= tb:
                s = np.asarray(val, dtype=float)
        return s

    def theta_at(self, t: float) -> float:
        """Grid electrical angle, exact for the piecewise-constant omega."""
        theta = self.theta0
        t_prev = 0.0
        w = self.omega
        for tb, val in self.omega_schedule:
            if tb >= t:
                break
            theta += w * (tb - t_prev)
            t_prev = tb
            w = val
        theta += w * (t - t_prev)
        return theta

    def instantaneous(self, t: float) -> np.ndarray:
        """Per-phase grid voltage at time t [V]."""
        theta = self.theta_at(t)
        amps = SQRT2 * self.amplitude_at(t) * self.phase_scales_at(t)
        return amps * np.cos(theta + PHASE_ANGLES)

    def phasors_at(self, t: float) -> np.ndarray:
        """Per-phase RMS phasors (phase-a angle reference) at time t."""
        amps = self.amplitude_at(t) * self.phase_scales_at(t)
        return amps * np.exp(1j * PHASE_ANGLES)


@dataclass
class PlantState:
    """Electrical state: all arrays are per-phase (3,) except i_load (n, 3)."""

    i_l: np.ndarray
    v_pcc: np.ndarray
    i_inv: np.ndarray
    i_load: np.ndarray

    @classmethod
    def zeros(cls, n_loads: int) -> "PlantState":
        return cls(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros((n_loads, 3)))

    def copy(self) -> "PlantState":
        return PlantState(self.i_l.copy(), self.v_pcc.copy(),
                          self.i_inv.copy(), self.i_load.copy())

    def output_current(self) -> np.ndarray:
        """Current the inverter delivers into the PCC bus (i_l - i_c)."""
        return self.i_inv + self.i_load.sum(axis=0)

    def check_finite(self, t: float | None = None):
        for name in ("i_l", "v_pcc", "i_inv", "i_load"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NumericBlowupError(name, t)


def _deriv(i_l, v_pcc, i_inv, i_load, v_c, v_g, params: CircuitParams,
           active: np.ndarray, inverter_connected: bool):
    di_l = (v_c - v_pcc - params.r_f * i_l) / params.l_f if inverter_connected \
        else np.zeros(3)
    i_load_sum = (i_load * active[:, None]).sum(axis=0) if len(active) else 0.0
    dv = (i_l - i_inv - i_load_sum) / params.c_f
    di_inv = (v_pcc - v_g - params.r_g * i_inv) / params.l_g
    di_load = np.zeros_like(i_load)
    for j, ld in enumerate(params.loads):
        if active[j]:
            di_load[j] = (v_pcc - ld.r * i_load[j]) / ld.l
    return di_l, dv, di_inv, di_load


def step_plant(state: PlantState, v_c_abc: np.ndarray, grid: GridSource,
               params: CircuitParams, t: float, dt: float,
               inverter_connected: bool = True) -> PlantState:
    """Advance the network one fixed RK4 step of size dt.

    Loads whose connect time is still in the future contribute nothing and
    keep zero branch current.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    state.check_finite(t)
    v_c_abc = np.asarray(v_c_abc, dtype=float)
    if not np.all(np.isfinite(v_c_abc)):
        raise NumericBlowupError("v_c_abc", t)

    active = np.array([t >= ld.t_connect for ld in params.loads])

    def f(ti, il, vp, ig, ild):
        return _deriv(il, vp, ig, ild, v_c_abc, grid.instantaneous(ti),
                      params, active, inverter_connected)

    il0, vp0, ig0, ild0 = state.i_l, state.v_pcc, state.i_inv, state.i_load
    k1 = f(t, il0, vp0, ig0, ild0)
    k2 = f(t + dt / 2, il0 + dt / 2 * k1[0], vp0 + dt / 2 * k1[1],
           ig0 + dt / 2 * k1[2], ild0 + dt / 2 * k1[3])
    k3 = f(t + dt / 2, il0 + dt / 2 * k2[0], vp0 + dt / 2 * k2[1],
           ig0 + dt / 2 * k2[2], ild0 + dt / 2 * k2[3])
    k4 = f(t + dt, il0 + dt * k3[0], vp0 + dt * k3[1],
           ig0 + dt * k3[2], ild0 + dt * k3[3])

    def rk(x0, i):
        return x0 + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])

    new = PlantState(rk(il0, 0), rk(vp0, 1), rk(ig0, 2), rk(ild0, 3))
    new.check_finite(t + dt)
    return new


def solve_phasor(grid: GridSource, params: CircuitParams,
                 connected_loads: list[int] | None = None,
                 inverter_branch: np.ndarray | complex | None = None,
                 t: float = 0.0) -> dict:
    """Steady-state phasor solution of the single-node network.

    ``inverter_branch`` is None for an open inverter branch, or the v_c
    source phasor (scalar applied to all phases with the standard phase
    shifts, or a (3,) complex array).  Returns RMS phasors keyed by
    'v_pcc', 'i_inv', 'i_l', 'i_load' (n, 3) and 'v_c'.
    """
    omega = grid.omega_at(t)
    v_g = grid.phasors_at(t)

    if connected_loads is None:
        connected_loads = [j for j, ld in enumerate(params.loads)
                           if ld.t_connect <= t]

    z_g = params.r_g + 1j * omega * params.l_g
    y_c = 1j * omega * params.c_f
    y_total = 1.0 / z_g + y_c
    inj = v_g / z_g

    z_loads = {}
    for j in connected_loads:
        z_loads[j] = params.loads[j].impedance(omega)
        y_total = y_total + 1.0 / z_loads[j]

    v_c = None
    if inverter_branch is not None:
        v_c = np.asarray(inverter_branch, dtype=complex)
        if v_c.ndim == 0:
            v_c = v_c * np.exp(1j * PHASE_ANGLES)
        z_f = params.r_f + 1j * omega * params.l_f
        y_total = y_total + 1.0 / z_f
        inj = inj + v_c / z_f

    if abs(y_total) < 1e-15:
        raise SingularNetworkError("no closed branch at the PCC node")
    has_source = np.any(np.abs(v_g) > 0) or (
        v_c is not None and np.any(np.abs(v_c) > 0))
    if not has_source:
        # homogeneous network: unique solution is zero, but flag the
        # degenerate call since the oracle expects a driven network
        raise SingularNetworkError("no source present")

    v_pcc = inj / y_total
    i_inv = (v_pcc - v_g) / z_g
    sol = {
        "v_pcc": v_pcc,
        "i_inv": i_inv,
        "i_c": v_pcc * y_c,
        "omega": omega,
    }
    i_load = np.zeros((len(params.loads), 3), dtype=complex)
    for j, z in z_loads.items():
        i_load[j] = v_pcc / z
    sol["i_load"] = i_load
    if v_c is not None:
        sol["v_c"] = v_c
        sol["i_l"] = (v_c - v_pcc) / (params.r_f + 1j * omega * params.l_f)
    else:
        sol["i_l"] = np.zeros(3, dtype=complex)
    return sol


def state_from_phasor(sol: dict, theta: float) -> PlantState:
    """Instantaneous plant state consistent with a phasor solution.

    ``theta`` is the grid electrical angle at the instant of interest;
    x(t) = sqrt(2) * Re(X * e^(j theta)).
    """

    def inst(x):
        return SQRT2 * np.real(np.asarray(x) * np.exp(1j * theta))

    return PlantState(inst(sol["i_l"]), inst(sol["v_pcc"]),
                      inst(sol["i_inv"]), inst(sol["i_load"]))


def measure_sag(v_before: float, v_after: float) -> float:
    """Voltage sag in percent relative to the pre-event amplitude."""
    if v_before <= 0:
        raise ValueError("v_before must be > 0")
    return 100.0 * (v_before - v_after) / v_before


def total_energy(state: PlantState, params: CircuitParams) -> float:
    """Stored magnetic + electric energy of the network [J]."""
    e = 0.5 * params.l_f * np.sum(state.i_l ** 2)
    e += 0.5 * params.c_f * np.sum(state.v_pcc ** 2)
    e += 0.5 * params.l_g * np.sum(state.i_inv ** 2)
    for j, ld in enumerate(params.loads):
        e += 0.5 * ld.l * np.sum(state.i_load[j] ** 2)
    return float(e)

"""Closed-form droop analytics and the impedance-gain trade-off.

The plain reactive droop comes from the oscillator amplitude equation;
the modified droop divides it by sqrt(1 + (k Q / (Z V))^2), which bends
the curve left: little change near nominal voltage, progressively less
reactive power at deeper sags.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .oscillator import OscillatorParams


def active_droop(p: float, params: OscillatorParams, v_z: float) -> float:
    """Steady frequency for a given per-phase active power [rad/s]."""
    if v_z <= 0:
        raise ValueError("v_z must be > 0")
    return params.omega_n - params.k_v * params.k_i / (
        params.c_osc * v_z ** 2) * (p - params.p_ref)


def reactive_droop_plain(v_z, params: OscillatorParams):
    """Per-phase reactive power on the plain droop curve [var]."""
    v_z = np.asarray(v_z, dtype=float)
    if np.any(v_z <= 0):
        raise ValueError("v_z must be > 0")
    kappa = params.reactive_droop_coeff
    q = params.q_ref + kappa * v_z ** 2 * (
        2.0 * params.v_nominal ** 2 - 2.0 * v_z ** 2)
    return q if q.ndim else float(q)


def reactive_droop_vim(q_plain, k: float, z: float, v_z):
    """Reactive droop with the adaptive virtual impedance engaged.

    ``z`` is the magnitude of the total source impedance (filter plus
    grid branch) at the fundamental.
    """
    if z <= 0:
        raise ValueError("z must be > 0")
    q_plain = np.asarray(q_plain, dtype=float)
    v_z = np.asarray(v_z, dtype=float)
    if np.any(v_z <= 0):
        raise ValueError("v_z must be > 0")
    q = q_plain / np.sqrt(1.0 + (k * q_plain / (z * v_z)) ** 2)
    return q if q.ndim else float(q)


def source_impedance_magnitude(r_f, l_f, r_g, l_g, omega) -> float:
    """|Z_filter + Z_grid| at the fundamental frequency."""
    return float(abs(r_f + r_g + 1j * omega * (l_f + l_g)))


@dataclass
class DroopCurve:
    """Sampled (V, Q) droop curves for one impedance gain."""

    v: np.ndarray
    q_plain: np.ndarray
    q_vim: np.ndarray
    k: float
    z: float
    params: OscillatorParams

    def to_csv(self, path):
        header = "v_rms [V],q_plain [var],q_vim [var]"
        data = np.column_stack([self.v, self.q_plain, self.q_vim])
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def reactive_curve(params: OscillatorParams, k: float, z: float,
                   v_lo: float | None = None, v_hi: float | None = None,
                   n: int = 101) -> DroopCurve:
    """Sample the plain and modified droop over [v_lo, v_hi]."""
    v_lo = 0.7 * params.v_nominal if v_lo is None else v_lo
    v_hi = params.v_nominal if v_hi is None else v_hi
    v = np.linspace(v_lo, v_hi, n)
    q_plain = reactive_droop_plain(v, params)
    q_vim = reactive_droop_vim(q_plain, k, z, v)
    return DroopCurve(v, q_plain, q_vim, k, z, params)


@dataclass
class KSelection:
    """Result of the impedance-gain trade-off."""

    k: float | None
    feasible: bool
    binding_constraint: str | None
    table: list[dict] = field(default_factory=list)

    def table_text(self) -> str:
        lines = ["k [ohm/A]  I_at_sag [A]  Q_retention  feasible"]
        for row in self.table:
            lines.append(
                f"{row['k']:<10.4g} {row['i_at_sag']:<13.4g} "
                f"{row['q_retention']:<12.4g} {row['feasible']}")
        return "\n".join(lines)


def select_k(params: OscillatorParams, z: float, i_max_rms: float,
             sag_target_pct: float, q_retention_floor: float,
             k_grid=None) -> KSelection:
    """Smallest gain meeting the current limit at the target sag.

    Feasibility: RMS current sqrt(P*^2 + Q_vim^2)/V stays below
    ``i_max_rms`` at the target sag, while Q_vim at a 5% sag retains at
    least ``q_retention_floor`` of the plain value there.
    """
    if k_grid is None:
        k_grid = np.round(np.arange(0.0, 0.501, 0.005), 6)
    if sag_target_pct < 0 or sag_target_pct >= 100:
        raise ValueError("sag target must be in [0, 100)")

    v_sag = params.v_nominal * (1.0 - sag_target_pct / 100.0)
    v_5 = params.v_nominal * 0.95
    q_sag_plain = reactive_droop_plain(v_sag, params)
    q_5_plain = reactive_droop_plain(v_5, params)

    table = []
    chosen = None
    for k in k_grid:
        q_sag = reactive_droop_vim(q_sag_plain, k, z, v_sag)
        i_at_sag = np.hypot(params.p_ref, q_sag) / v_sag
        q_5 = reactive_droop_vim(q_5_plain, k, z, v_5)
        retention = 1.0 if q_5_plain == 0 else q_5 / q_5_plain
        ok = (i_at_sag <= i_max_rms) and (retention >= q_retention_floor)
        table.append(dict(k=float(k), i_at_sag=float(i_at_sag),
                          q_retention=float(retention), feasible=bool(ok)))
        if ok and chosen is None:
            chosen = float(k)

    if sag_target_pct == 0 and table and table[0]["feasible"]:
        chosen = 0.0
    if chosen is not None:
        return KSelection(chosen, True, None, table)
    current_ok = any(r["i_at_sag"] <= i_max_rms for r in table)
    binding = "q_retention_floor" if current_ok else "i_max"
    return KSelection(None, False, binding, table)

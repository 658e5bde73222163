"""Compiled inner loop of the co-simulation.

Mirrors ``engine._controller_tick_reference`` plus the RK4 plant substeps,
operating on flat float64 arrays.  The reference path stays the source of
truth; an equivalence test keeps the two in lock-step.  Set
``GFMSIM_DISABLE_JIT=1`` to run this module uncompiled.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    if os.environ.get("GFMSIM_DISABLE_JIT"):
        raise ImportError
    from numba import njit
except ImportError:                                    # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn
        return wrap

SQRT2 = math.sqrt(2.0)
PHASE_ANGLES = (0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0)

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_COLLAPSE = 2


@njit(cache=True)
def _plant_deriv_phase(il, vp, ig, iload_ph, v_c, v_g, r_f, l_f, c_f, r_g,
                       l_g, load_r, load_l, load_active, inverter_on,
                       d_iload_ph):
    n_loads = load_r.shape[0]
    s = 0.0
    for j in range(n_loads):
        if load_active[j]:
            s += iload_ph[j]
            d_iload_ph[j] = (vp - load_r[j] * iload_ph[j]) / load_l[j]
        else:
            d_iload_ph[j] = 0.0
    di_l = (v_c - vp - r_f * il) / l_f if inverter_on else 0.0
    dvp = (il - ig - s) / c_f
    dig = (vp - v_g - r_g * ig) / l_g
    return di_l, dvp, dig


@njit(cache=True)
def _run_segment(
    # timing
    ts, dtp, n_sub, n_ticks, tick0, log_every,
    # flags: 0/1
    variant_verbatim, inverter_on, clamp,
    # circuit
    r_f, l_f, c_f, r_g, l_g, load_r, load_l, load_active,
    # grid over this segment (constant)
    amps_peak, omega_g, theta0, t_seg0,
    # oscillator params
    k_i, k_v, c_osc, xi, vzn, wn, pref, qref,
    # loop gains
    kpv, kiv, kpi, kii, glf, ff, imax,
    # VIm gains
    rv0, xv0, m_gain, n_gain,
    # discretizations
    sogi_ad, sogi_bd, vim_ad, vim_bd,
    # mutable state
    il, vp, ig, iload,                       # plant, iload (3, n_loads)
    va, vb,                                  # oscillator
    sv_x, sv_q, sio_x, sio_q, sil_x, sil_q,  # SOGI channels
    vx1d, vx2d, vx1q, vx2q,                  # VIm filter
    int_vd, int_vq, int_id, int_iq,
    evd_p, evq_p, eid_p, eiq_p, sat,         # PI state (sat float 0/1)
    v_c,                                     # held bridge command
    # log buffers
    times, rows, row_start,
):
    n_loads = load_r.shape[0]
    d_iload = np.zeros(n_loads)
    k1l = np.zeros(n_loads)
    k2l = np.zeros(n_loads)
    k3l = np.zeros(n_loads)
    k4l = np.zeros(n_loads)
    tmp = np.zeros(n_loads)
    row_i = row_start
    xi_kv2 = xi / (k_v * k_v)
    ki_c = k_v * k_i / c_osc
    collapse2 = (0.05 * vzn * SQRT2) ** 2

    for it in range(n_ticks):
        tick = tick0 + it
        t = tick * ts

        # finiteness guard on a cheap checksum
        chk = 0.0
        for ph in range(3):
            chk += il[ph] + vp[ph] + ig[ph] + va[ph] + v_c[ph]
        if not math.isfinite(chk):
            return STATUS_NONFINITE, tick, row_i

        # --- sample + SOGI ------------------------------------------------
        io = np.zeros(3)
        for ph in range(3):
            s = 0.0
            for j in range(n_loads):
                s += iload[ph, j]
            io[ph] = ig[ph] + s
        for ph in range(3):
            u = vp[ph]
            x0, q0 = sv_x[ph], sv_q[ph]
            sv_x[ph] = sogi_ad[0, 0] * x0 + sogi_ad[0, 1] * q0 + sogi_bd[0] * u
            sv_q[ph] = sogi_ad[1, 0] * x0 + sogi_ad[1, 1] * q0 + sogi_bd[1] * u
            u = io[ph]
            x0, q0 = sio_x[ph], sio_q[ph]
            sio_x[ph] = sogi_ad[0, 0] * x0 + sogi_ad[0, 1] * q0 + sogi_bd[0] * u
            sio_q[ph] = sogi_ad[1, 0] * x0 + sogi_ad[1, 1] * q0 + sogi_bd[1] * u
            u = il[ph]
            x0, q0 = sil_x[ph], sil_q[ph]
            sil_x[ph] = sogi_ad[0, 0] * x0 + sogi_ad[0, 1] * q0 + sogi_bd[0] * u
            sil_q[ph] = sogi_ad[1, 0] * x0 + sogi_ad[1, 1] * q0 + sogi_bd[1] * u

        # --- oscillator RK4 ------------------------------------------------
        # a disabled inverter idles the oscillator (no current feedback)
        freq = np.zeros(3)
        for ph in range(3):
            if inverter_on:
                ia, ib = io[ph], sio_q[ph]
            else:
                ia, ib = 0.0, 0.0
            a0, b0 = va[ph], vb[ph]

            # stage derivative, inlined four times
            a, b = a0, b0
            n2 = a * a + b * b
            ira = (2.0 / n2) * (pref * a + qref * b)
            irb = (2.0 / n2) * (pref * b - qref * a)
            g = xi_kv2 * (2.0 * vzn * vzn - n2)
            k1a = -wn * b + g * a + ki_c * (ib - irb)
            k1b = wn * a + g * b - ki_c * (ia - ira)

            a, b = a0 + 0.5 * ts * k1a, b0 + 0.5 * ts * k1b
            n2 = a * a + b * b
            ira = (2.0 / n2) * (pref * a + qref * b)
            irb = (2.0 / n2) * (pref * b - qref * a)
            g = xi_kv2 * (2.0 * vzn * vzn - n2)
            k2a = -wn * b + g * a + ki_c * (ib - irb)
            k2b = wn * a + g * b - ki_c * (ia - ira)

            a, b = a0 + 0.5 * ts * k2a, b0 + 0.5 * ts * k2b
            n2 = a * a + b * b
            ira = (2.0 / n2) * (pref * a + qref * b)
            irb = (2.0 / n2) * (pref * b - qref * a)
            g = xi_kv2 * (2.0 * vzn * vzn - n2)
            k3a = -wn * b + g * a + ki_c * (ib - irb)
            k3b = wn * a + g * b - ki_c * (ia - ira)

            a, b = a0 + ts * k3a, b0 + ts * k3b
            n2 = a * a + b * b
            ira = (2.0 / n2) * (pref * a + qref * b)
            irb = (2.0 / n2) * (pref * b - qref * a)
            g = xi_kv2 * (2.0 * vzn * vzn - n2)
            k4a = -wn * b + g * a + ki_c * (ib - irb)
            k4b = wn * a + g * b - ki_c * (ia - ira)

            va[ph] = a0 + ts / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            vb[ph] = b0 + ts / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)

            n2 = va[ph] * va[ph] + vb[ph] * vb[ph]
            if n2 < collapse2:
                return STATUS_COLLAPSE, tick, row_i
            ira = (2.0 / n2) * (pref * va[ph] + qref * vb[ph])
            irb = (2.0 / n2) * (pref * vb[ph] - qref * va[ph])
            g = xi_kv2 * (2.0 * vzn * vzn - n2)
            dva = -wn * vb[ph] + g * va[ph] + ki_c * (ib - irb)
            dvb = wn * va[ph] + g * vb[ph] - ki_c * (ia - ira)
            freq[ph] = (va[ph] * dvb - vb[ph] * dva) / n2

        # --- controller ----------------------------------------------------
        log_now = (tick % log_every) == 0
        if log_now:
            times[row_i] = t
        for ph in range(3):
            th = math.atan2(vb[ph], va[ph])
            c, s = math.cos(th), math.sin(th)
            vp_d = vp[ph] * c + sv_q[ph] * s
            vp_q = -vp[ph] * s + sv_q[ph] * c
            il_d = il[ph] * c + sil_q[ph] * s
            il_q = -il[ph] * s + sil_q[ph] * c
            io_d = io[ph] * c + sio_q[ph] * s
            io_q = -io[ph] * s + sio_q[ph] * c

            # VIm filter on (io_d, -io_q): q axis is sag-positive
            u = io_d
            x0, x1 = vx1d[ph], vx2d[ph]
            vx1d[ph] = vim_ad[0, 0] * x0 + vim_ad[0, 1] * x1 + vim_bd[0] * u
            vx2d[ph] = vim_ad[1, 0] * x0 + vim_ad[1, 1] * x1 + vim_bd[1] * u
            u = -io_q
            x0, x1 = vx1q[ph], vx2q[ph]
            vx1q[ph] = vim_ad[0, 0] * x0 + vim_ad[0, 1] * x1 + vim_bd[0] * u
            vx2q[ph] = vim_ad[1, 0] * x0 + vim_ad[1, 1] * x1 + vim_bd[1] * u
            ifd, ifq = vx1d[ph], vx1q[ph]
            r_vim = rv0 + m_gain * ifq
            x_vim = xv0 + n_gain * ifq
            if clamp:
                if r_vim < 0.0:
                    r_vim = 0.0
                if x_vim < 0.0:
                    x_vim = 0.0
            vv_d = -r_vim * ifd - x_vim * ifq
            vv_q = -(-r_vim * ifq + x_vim * ifd)

            # voltage loop (trapezoidal, conditional integration)
            vref_d = math.hypot(va[ph], vb[ph])
            e_d = vref_d + vv_d - vp_d
            e_q = vv_q - vp_q
            cand_vd = int_vd[ph] + 0.5 * ts * (e_d + evd_p[ph])
            cand_vq = int_vq[ph] + 0.5 * ts * (e_q + evq_p[ph])
            evd_p[ph] = e_d
            evq_p[ph] = e_q
            ird = kpv * e_d + kiv * cand_vd - ff * vv_d
            irq = kpv * e_q + kiv * cand_vq - ff * vv_q
            mag = math.hypot(ird, irq)
            if mag > imax:
                sc = imax / mag
                ird *= sc
                irq *= sc
                sat[ph] = 1.0
            else:
                int_vd[ph] = cand_vd
                int_vq[ph] = cand_vq
                sat[ph] = 0.0

            # current loop
            e_id = ird - il_d
            e_iq = irq - il_q
            int_id[ph] = int_id[ph] + 0.5 * ts * (e_id + eid_p[ph])
            int_iq[ph] = int_iq[ph] + 0.5 * ts * (e_iq + eiq_p[ph])
            eid_p[ph] = e_id
            eiq_p[ph] = e_iq
            if variant_verbatim:
                ff_d = wn * glf * vp_q
                ff_q = -wn * glf * vp_d
            else:
                ff_d = -wn * glf * il_q + vp_d
                ff_q = wn * glf * il_d + vp_q
            v_cd = kpi * e_id + kii * int_id[ph] + ff_d
            v_cq = kpi * e_iq + kii * int_iq[ph] + ff_q
            v_c[ph] = v_cd * c - v_cq * s

            if log_now:
                amp_ph = math.hypot(sv_x[ph], sv_q[ph]) / SQRT2
                p_ph = 0.5 * (sv_x[ph] * sio_x[ph] + sv_q[ph] * sio_q[ph])
                q_ph = 0.5 * (sv_q[ph] * sio_x[ph] - sv_x[ph] * sio_q[ph])
                rows[row_i, 0 * 3 + ph] = vp[ph]
                rows[row_i, 1 * 3 + ph] = il[ph]
                rows[row_i, 2 * 3 + ph] = io[ph]
                rows[row_i, 3 * 3 + ph] = v_c[ph]
                rows[row_i, 4 * 3 + ph] = amp_ph
                rows[row_i, 5 * 3 + ph] = math.hypot(va[ph], vb[ph]) / SQRT2
                rows[row_i, 6 * 3 + ph] = freq[ph]
                rows[row_i, 7 * 3 + ph] = vp_d
                rows[row_i, 8 * 3 + ph] = vp_q
                rows[row_i, 9 * 3 + ph] = io_d
                rows[row_i, 10 * 3 + ph] = io_q
                rows[row_i, 11 * 3 + ph] = r_vim
                rows[row_i, 12 * 3 + ph] = x_vim
                rows[row_i, 13 * 3 + ph] = sat[ph]
                rows[row_i, 14 * 3 + ph] = p_ph
                rows[row_i, 15 * 3 + ph] = q_ph
        if log_now:
            row_i += 1

        # --- plant substeps -------------------------------------------------
        for jsub in range(n_sub):
            t_j = t + jsub * dtp
            for ph in range(3):
                il0, vp0, ig0 = il[ph], vp[ph], ig[ph]
                for j in range(n_loads):
                    tmp[j] = iload[ph, j]
                pa = PHASE_ANGLES[ph]
                vcp = v_c[ph]

                th1 = theta0 + omega_g * (t_j - t_seg0)
                vg1 = amps_peak[ph] * math.cos(th1 + pa)
                th2 = theta0 + omega_g * (t_j + 0.5 * dtp - t_seg0)
                vg2 = amps_peak[ph] * math.cos(th2 + pa)
                th3 = theta0 + omega_g * (t_j + dtp - t_seg0)
                vg3 = amps_peak[ph] * math.cos(th3 + pa)

                k1 = _plant_deriv_phase(il0, vp0, ig0, tmp, vcp, vg1, r_f,
                                        l_f, c_f, r_g, l_g, load_r, load_l,
                                        load_active, inverter_on, k1l)
                for j in range(n_loads):
                    d_iload[j] = tmp[j] + 0.5 * dtp * k1l[j]
                k2 = _plant_deriv_phase(il0 + 0.5 * dtp * k1[0],
                                        vp0 + 0.5 * dtp * k1[1],
                                        ig0 + 0.5 * dtp * k1[2], d_iload,
                                        vcp, vg2, r_f, l_f, c_f, r_g, l_g,
                                        load_r, load_l, load_active,
                                        inverter_on, k2l)
                for j in range(n_loads):
                    d_iload[j] = tmp[j] + 0.5 * dtp * k2l[j]
                k3 = _plant_deriv_phase(il0 + 0.5 * dtp * k2[0],
                                        vp0 + 0.5 * dtp * k2[1],
                                        ig0 + 0.5 * dtp * k2[2], d_iload,
                                        vcp, vg2, r_f, l_f, c_f, r_g, l_g,
                                        load_r, load_l, load_active,
                                        inverter_on, k3l)
                for j in range(n_loads):
                    d_iload[j] = tmp[j] + dtp * k3l[j]
                k4 = _plant_deriv_phase(il0 + dtp * k3[0],
                                        vp0 + dtp * k3[1],
                                        ig0 + dtp * k3[2], d_iload,
                                        vcp, vg3, r_f, l_f, c_f, r_g, l_g,
                                        load_r, load_l, load_active,
                                        inverter_on, k4l)
                il[ph] = il0 + dtp / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
                vp[ph] = vp0 + dtp / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
                ig[ph] = ig0 + dtp / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
                for j in range(n_loads):
                    iload[ph, j] = tmp[j] + dtp / 6.0 * (
                        k1l[j] + 2 * k2l[j] + 2 * k3l[j] + k4l[j])

    return STATUS_OK, tick0 + n_ticks, row_i


def run_segment_kernel(seg_setup, ctrl, plant, tick0, n_ticks, times, rows,
                       row_i):
    """Pack engine state, run the compiled segment, unpack the state back."""
    from .errors import NumericBlowupError, OscillatorCollapseError
    from .oscillator import Sogi  # noqa: F401  (discretization source)
    from .vim import filter_discretization

    sim = seg_setup.sim
    circuit, grid = seg_setup.circuit, seg_setup.grid
    oscp, g, vimp = seg_setup.osc, seg_setup.gains, seg_setup.vim
    t0 = tick0 * sim.t_s
    n_loads = len(circuit.loads)
    load_r = np.array([ld.r for ld in circuit.loads], dtype=float)
    load_l = np.array([ld.l for ld in circuit.loads], dtype=float)
    load_active = np.array([t0 >= ld.t_connect - 1e-12
                            for ld in circuit.loads])
    amps_peak = (SQRT2 * grid.amplitude_at(t0)
                 * grid.phase_scales_at(t0)).astype(float)
    omega_g = float(grid.omega_at(t0))
    theta0 = float(grid.theta_at(t0))

    vim_ad, vim_bd = filter_discretization(vimp.omega_f, sim.t_s,
                                           vimp.filter_numerator)
    sogi = ctrl.sogi_v  # all three share the discretization
    iload = np.ascontiguousarray(plant.i_load.T) if n_loads else \
        np.zeros((3, 0))
    sat_f = ctrl.pi.saturated.astype(np.float64)

    status, tick_out, row_out = _run_segment(
        sim.t_s, sim.dt_plant, sim.n_sub, n_ticks, tick0, sim.log_every,
        1 if seg_setup.current_loop_variant == "verbatim" else 0,
        1 if seg_setup.inverter_enabled else 0,
        1 if vimp.clamp_non_negative else 0,
        circuit.r_f, circuit.l_f, circuit.c_f, circuit.r_g, circuit.l_g,
        load_r, load_l, load_active,
        amps_peak, omega_g, theta0, t0,
        oscp.k_i, oscp.k_v, oscp.c_osc, oscp.xi, oscp.v_nominal,
        oscp.omega_n, oscp.p_ref, oscp.q_ref,
        g.k_pv, g.k_iv, g.k_pi, g.k_ii, g.l_f, g.feedforward_gain, g.i_max,
        vimp.r_v0, vimp.x_v0, vimp.m, vimp.n,
        sogi.ad, sogi.bd, vim_ad, vim_bd,
        plant.i_l, plant.v_pcc, plant.i_inv, iload,
        ctrl.osc.v_alpha, ctrl.osc.v_beta,
        ctrl.sogi_v.x, ctrl.sogi_v.qx, ctrl.sogi_io.x, ctrl.sogi_io.qx,
        ctrl.sogi_il.x, ctrl.sogi_il.qx,
        ctrl.vimstate.x1d, ctrl.vimstate.x2d, ctrl.vimstate.x1q,
        ctrl.vimstate.x2q,
        ctrl.pi.int_vd, ctrl.pi.int_vq, ctrl.pi.int_id, ctrl.pi.int_iq,
        ctrl.pi.e_vd_prev, ctrl.pi.e_vq_prev, ctrl.pi.e_id_prev,
        ctrl.pi.e_iq_prev, sat_f,
        ctrl.v_c,
        times, rows, row_i,
    )
    ctrl.pi.saturated = sat_f > 0.5
    if n_loads:
        plant.i_load[:] = iload.T
    if status == STATUS_NONFINITE:
        raise NumericBlowupError("plant state", tick_out * sim.t_s)
    if status == STATUS_COLLAPSE:
        raise OscillatorCollapseError("?", 0.0, tick_out * sim.t_s)
    return tick_out, row_out

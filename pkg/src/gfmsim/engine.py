"""Deterministic co-simulation: continuous plant, sampled controller.

The plant integrates with fixed-step RK4 at ``dt_plant``; the digital
controller runs every ``t_s`` (zero-order hold on the bridge voltage
command).  Events are snapped to controller tick boundaries and split the
run into segments with constant schedules, so a run is bit-reproducible.

Controller tick order: sample measurements -> SOGI quadratures ->
oscillator update -> per-phase dq transforms -> VIm filter / gains /
feed-forward -> voltage loop -> current limiter -> current loop ->
hold the bridge command for the next plant substeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel
from .circuit import (PHASE_ANGLES, CircuitParams, GridSource, LoadBranch,
                      PlantState, measure_sag, solve_phasor, state_from_phasor,
                      step_plant)
from .errors import NumericBlowupError, OscillatorCollapseError
from .loops import (LoopGains, PiState, commit_voltage_integrators,
                    current_loop_step, limit_current_ref, voltage_loop_step)
from .oscillator import (OscillatorParams, OscillatorState, Sogi, abc_to_dq,
                         dq_to_abc, frame_angle, instantaneous_frequency,
                         oscillator_step, single_phase_power)
from .vim import VimParams, VimState, compute_vim, feedforward_voltage, filter_step

SQRT2 = math.sqrt(2.0)


@dataclass
class SimConfig:
    t_end: float = 10.0
    dt_plant: float = 5e-6
    t_s: float = 50e-6
    log_every: int = 4          # log every n-th controller tick

    def __post_init__(self):
        if self.t_end <= 0:
            raise ValueError("t_end must be > 0")
        n = self.t_s / self.dt_plant
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("t_s must be an integer multiple of dt_plant")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")

    @property
    def n_sub(self) -> int:
        return int(round(self.t_s / self.dt_plant))


# ---------------------------------------------------------------------------
# events


@dataclass
class LoadConnect:
    t: float
    r: float
    l: float


@dataclass
class GridAmplitudeStep:
    t: float
    scale: tuple[float, float, float] | float = 1.0  # relative to nominal
    amplitude: float | None = None                   # absolute override

    def scales(self) -> tuple[float, float, float]:
        s = self.scale
        return (s, s, s) if np.isscalar(s) else tuple(s)


@dataclass
class GridFrequencyStep:
    t: float
    omega: float


@dataclass
class ReferenceStep:
    t: float
    p_ref: float | None = None   # per phase [W]
    q_ref: float | None = None   # per phase [var]


@dataclass
class GainChange:
    t: float
    k: float


Event = LoadConnect | GridAmplitudeStep | GridFrequencyStep | ReferenceStep | GainChange


@dataclass
class EventSchedule:
    events: list = field(default_factory=list)

    def __post_init__(self):
        times = [e.t for e in self.events]
        if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("event times must be non-decreasing")
        if any(t < 0 for t in times):
            raise ValueError("event times must be non-negative")

    def snapped(self, t_s: float) -> "EventSchedule":
        evs = [replace(e, t=round(e.t / t_s) * t_s) for e in self.events]
        return EventSchedule(sorted(evs, key=lambda e: e.t))


# ---------------------------------------------------------------------------
# time-series log

CHANNEL_GROUPS = [
    ("v_pcc", "V"), ("i_l", "A"), ("i_out", "A"), ("v_c", "V"),
    ("amp_pcc", "V"), ("v_osc_amp", "V"), ("osc_freq", "rad/s"),
    ("v_pcc_d", "V"), ("v_pcc_q", "V"), ("i_out_d", "A"), ("i_out_q", "A"),
    ("r_vim", "ohm"), ("x_vim", "ohm"), ("sat", "bool"),
    ("p", "W"), ("q", "var"),
]
CHANNEL_NAMES = [f"{g}_{ph}" for g, _ in CHANNEL_GROUPS for ph in "abc"]
CHANNEL_UNITS = {f"{g}_{ph}": u for g, u in CHANNEL_GROUPS for ph in "abc"}
N_CHANNELS = len(CHANNEL_NAMES)


@dataclass
class TimeSeriesLog:
    time: np.ndarray
    data: dict
    units: dict

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name]

    def group(self, name: str) -> np.ndarray:
        """(n, 3) array of a per-phase channel group."""
        return np.column_stack([self.data[f"{name}_{ph}"] for ph in "abc"])

    @property
    def dt(self) -> float:
        return float(self.time[1] - self.time[0])

    def to_csv(self, path):
        names = ["time"] + list(self.data.keys())
        units = ["s"] + [self.units[n] for n in self.data]
        with open(path, "w") as fh:
            fh.write("# units: " + ",".join(units) + "\n")
            fh.write(",".join(names) + "\n")
            mat = np.column_stack([self.time] + [self.data[n] for n in self.data])
            np.savetxt(fh, mat, delimiter=",", fmt="%.9g")

    @classmethod
    def from_csv(cls, path) -> "TimeSeriesLog":
        with open(path) as fh:
            unit_line = fh.readline().strip()
            header = fh.readline().strip().split(",")
            mat = np.loadtxt(fh, delimiter=",")
        units = unit_line.split(": ", 1)[1].split(",")
        data = {name: mat[:, j] for j, name in enumerate(header) if j > 0}
        return cls(mat[:, 0], data, dict(zip(header[1:], units[1:])))


# ---------------------------------------------------------------------------
# runner


@dataclass
class RunSetup:
    """Everything the engine needs for one run."""

    circuit: CircuitParams
    grid: GridSource
    osc: OscillatorParams
    gains: LoopGains
    vim: VimParams
    sim: SimConfig = field(default_factory=SimConfig)
    schedule: EventSchedule = field(default_factory=EventSchedule)
    inverter_enabled: bool = True
    current_loop_variant: str = "standard"


def _thevenin_at_pcc(circuit: CircuitParams, grid: GridSource, t: float):
    """Open-circuit voltage and impedance seen by the inverter output."""
    sol = solve_phasor(grid, circuit, inverter_branch=None, t=t)
    omega = grid.omega_at(t)
    y = 1.0 / (circuit.r_g + 1j * omega * circuit.l_g)
    y += 1j * omega * circuit.c_f
    for ld in circuit.active_loads(t):
        y += 1.0 / ld.impedance(omega)
    return sol["v_pcc"][0], 1.0 / y


def _solve_equilibrium(setup: RunSetup, circuit: CircuitParams):
    """Pre-event droop equilibrium: oscillator amplitude, angle, current.

    Finds (V_z, delta) such that the inverter held at the VIm-corrected
    reference delivers P = P* and Q on the plain droop curve into the
    network Thevenin.  Returns phase-a RMS phasors in the grid frame.
    """
    from scipy.optimize import root

    from .droop import reactive_droop_plain

    osc, vimp = setup.osc, setup.vim
    v_th, z_th = _thevenin_at_pcc(circuit, setup.grid, 0.0)

    def current_for(v_osc: complex) -> complex:
        i = (v_osc - v_th) / z_th
        for _ in range(60):
            i_fq = -SQRT2 * (i * np.exp(-1j * np.angle(v_osc))).imag
            r = vimp.r_v0 + vimp.m * i_fq
            x = vimp.x_v0 + vimp.n * i_fq
            if vimp.clamp_non_negative:
                r, x = max(r, 0.0), max(x, 0.0)
            i_new = (v_osc - v_th) / (z_th + r + 1j * x)
            if abs(i_new - i) < 1e-12:
                i = i_new
                break
            i = 0.5 * (i + i_new)
        return i

    def residual(x):
        v_z, delta = x
        if v_z <= 0.05 * osc.v_nominal:
            return [1e6, 1e6]
        v_osc = v_z * np.exp(1j * delta)
        i = current_for(v_osc)
        s = v_osc * np.conj(i)
        return [s.real - osc.p_ref,
                s.imag - reactive_droop_plain(v_z, osc)]

    sol = root(residual, x0=[osc.v_nominal, 0.0], method="hybr")
    if not sol.success or sol.x[0] <= 0.1 * osc.v_nominal:
        return None
    v_z, delta = sol.x
    v_osc = v_z * np.exp(1j * delta)
    i = current_for(v_osc)
    i_fq = -SQRT2 * (i * np.exp(-1j * delta)).imag
    r = vimp.r_v0 + vimp.m * i_fq
    x = vimp.x_v0 + vimp.n * i_fq
    if vimp.clamp_non_negative:
        r, x = max(r, 0.0), max(x, 0.0)
    v_pcc = v_osc - (r + 1j * x) * i
    omega = setup.grid.omega_at(0.0)
    i_l = i + v_pcc * 1j * omega * circuit.c_f
    v_c = v_pcc + (circuit.r_f + 1j * omega * circuit.l_f) * i_l
    return dict(v_z=v_z, delta=delta, i_out=i, v_pcc=v_pcc, i_l=i_l, v_c=v_c)


class _ControllerState:
    """Mutable per-run controller state (reference implementation)."""

    def __init__(self, setup: RunSetup, plant: PlantState, sol: dict,
                 osc_state: OscillatorState, v_c_phasor: np.ndarray | None):
        self.osc = osc_state
        ts = setup.sim.t_s
        self.sogi_v = Sogi(setup.osc.omega_n, ts)
        self.sogi_io = Sogi(setup.osc.omega_n, ts)
        self.sogi_il = Sogi(setup.osc.omega_n, ts)
        self.sogi_v.init_from_phasor(sol["v_pcc"], 0.0)
        i_out_ph = sol["i_inv"] + sol["i_load"].sum(axis=0)
        self.sogi_io.init_from_phasor(i_out_ph, 0.0)
        self.sogi_il.init_from_phasor(sol["i_l"], 0.0)
        self.pi = PiState()
        self.vimstate = VimState.zeros()
        self.v_c = np.zeros(3)
        if not setup.inverter_enabled:
            return
        # place the loop at its operating point so startup is smooth
        theta = frame_angle(self.osc)
        vp_d, vp_q = abc_to_dq(self.sogi_v.x, self.sogi_v.qx, theta)
        il_d, il_q = abc_to_dq(self.sogi_il.x, self.sogi_il.qx, theta)
        io_d, io_q = abc_to_dq(self.sogi_io.x, self.sogi_io.qx, theta)
        self.vimstate = VimState.steady(io_d, -io_q)
        if setup.vim.filter_numerator == "wf":
            self.vimstate.x1d /= setup.vim.omega_f
            self.vimstate.x1q /= setup.vim.omega_f
        r, x = compute_vim(self.vimstate.i_fq, setup.vim)
        vv_d, vv_q = feedforward_voltage((self.vimstate.i_fd,
                                          self.vimstate.i_fq), r, x)
        vv_q = -vv_q
        g = setup.gains
        v_ref_d = SQRT2 * self.osc.amplitude()
        e_d = v_ref_d + vv_d - vp_d
        e_q = vv_q - vp_q
        f = g.feedforward_gain
        self.pi.int_vd = (il_d + f * vv_d - g.k_pv * e_d) / g.k_iv
        self.pi.int_vq = (il_q + f * vv_q - g.k_pv * e_q) / g.k_iv
        self.pi.e_vd_prev = np.asarray(e_d, float)
        self.pi.e_vq_prev = np.asarray(e_q, float)
        if v_c_phasor is None:
            v_c_dq = (SQRT2 * setup.osc.v_nominal * np.ones(3), np.zeros(3))
        else:
            vc_x = SQRT2 * np.real(v_c_phasor)
            vc_qx = SQRT2 * np.imag(v_c_phasor)
            v_c_dq = abc_to_dq(vc_x, vc_qx, theta)
        omega = setup.osc.omega_n
        if setup.current_loop_variant == "standard":
            ff_d = -omega * g.l_f * il_q + vp_d
            ff_q = omega * g.l_f * il_d + vp_q
        else:
            ff_d = omega * g.l_f * vp_q
            ff_q = -omega * g.l_f * vp_d
        self.pi.int_id = (v_c_dq[0] - ff_d) / g.k_ii
        self.pi.int_iq = (v_c_dq[1] - ff_q) / g.k_ii
        self.v_c = dq_to_abc(v_c_dq[0], v_c_dq[1], theta)[0]


def _controller_tick_reference(setup: RunSetup, ctrl: _ControllerState,
                               plant: PlantState):
    """One controller period, built from the public block functions."""
    g, vimp, oscp = setup.gains, setup.vim, setup.osc
    ts = setup.sim.t_s
    v_pcc = plant.v_pcc
    i_l = plant.i_l
    i_out = plant.output_current()
    ctrl.sogi_v.step(v_pcc)
    ctrl.sogi_io.step(i_out)
    ctrl.sogi_il.step(i_l)
    if setup.inverter_enabled:
        i_fb = np.column_stack([i_out, ctrl.sogi_io.qx])
    else:
        i_fb = np.zeros((3, 2))
    ctrl.osc = oscillator_step(ctrl.osc, i_fb, oscp, ts)
    theta = frame_angle(ctrl.osc)
    # raw signal + SOGI quadrature: keeps the loops wideband in the
    # direct channel (the bandpassed SOGI state cannot damp the LC modes)
    vp_dq = abc_to_dq(v_pcc, ctrl.sogi_v.qx, theta)
    il_dq = abc_to_dq(i_l, ctrl.sogi_il.qx, theta)
    io_dq = abc_to_dq(i_out, ctrl.sogi_io.qx, theta)

    ctrl.vimstate = filter_step(ctrl.vimstate, (io_dq[0], -io_dq[1]), vimp, ts)
    r_vim, x_vim = compute_vim(ctrl.vimstate.i_fq, vimp)
    ctrl.vimstate.r_vim, ctrl.vimstate.x_vim = r_vim, x_vim
    vv_d, vv_q = feedforward_voltage((ctrl.vimstate.i_fd, ctrl.vimstate.i_fq),
                                     r_vim, x_vim)
    vv_q = -vv_q

    v_ref = (SQRT2 * ctrl.osc.amplitude(), np.zeros(3))
    i_ref_unl, cand = voltage_loop_step(v_ref, (vv_d, vv_q), vp_dq, g,
                                        ctrl.pi, ts)
    i_ref, sat = limit_current_ref(i_ref_unl, g.i_max)
    ctrl.pi = commit_voltage_integrators(ctrl.pi, cand, sat)
    v_c_dq, ctrl.pi = current_loop_step(i_ref, il_dq, vp_dq, g, oscp.omega_n,
                                        ctrl.pi, ts,
                                        variant=setup.current_loop_variant)
    ctrl.v_c = dq_to_abc(v_c_dq[0], v_c_dq[1], theta)[0]

    # log quantities
    p_ph, q_ph = single_phase_power(ctrl.sogi_v.x, ctrl.sogi_v.qx,
                                    ctrl.sogi_io.x, ctrl.sogi_io.qx)
    freq = instantaneous_frequency(ctrl.osc, i_fb, oscp)
    amp = np.hypot(ctrl.sogi_v.x, ctrl.sogi_v.qx) / SQRT2
    row = np.concatenate([
        v_pcc, i_l, i_out, ctrl.v_c, amp, ctrl.osc.amplitude(), freq,
        vp_dq[0], vp_dq[1], io_dq[0], io_dq[1], r_vim, x_vim,
        sat.astype(float), p_ph, q_ph,
    ])
    return row


def _segments(setup: RunSetup):
    """Split [0, t_end] at event ticks; yield (t0, t1, setup_for_segment)."""
    ts = setup.sim.t_s
    sched = setup.schedule.snapped(ts)
    circuit = setup.circuit
    loads = [LoadBranch(ld.r, ld.l, round(ld.t_connect / ts) * ts)
             for ld in circuit.loads]
    for ev in sched.events:
        if isinstance(ev, LoadConnect):
            loads.append(LoadBranch(ev.r, ev.l, ev.t))
    circuit = replace(circuit, loads=loads)

    boundaries = sorted(
        {0.0, setup.sim.t_end}
        | {ev.t for ev in sched.events if 0 < ev.t < setup.sim.t_end}
        | {ld.t_connect for ld in loads if 0 < ld.t_connect < setup.sim.t_end})
    grid = setup.grid
    osc = setup.osc
    vim = setup.vim
    segs = []
    t_prev = 0.0
    pending = [ev for ev in sched.events]
    for tb in boundaries:
        if tb > t_prev:
            segs.append((t_prev, tb, circuit, grid, osc, vim))
            t_prev = tb
        for ev in [e for e in pending if e.t == tb]:
            if isinstance(ev, GridAmplitudeStep):
                amp = grid.amplitude if ev.amplitude is None else ev.amplitude
                sc = ev.scales()
                grid = replace(grid, amplitude_schedule=grid.amplitude_schedule
                               + ([] if ev.amplitude is None else [(tb, amp)]),
                               phase_scale_schedule=grid.phase_scale_schedule
                               + [(tb, sc)])
            elif isinstance(ev, GridFrequencyStep):
                grid = replace(grid, omega_schedule=grid.omega_schedule
                               + [(tb, ev.omega)])
            elif isinstance(ev, ReferenceStep):
                kw = {}
                if ev.p_ref is not None:
                    kw["p_ref"] = ev.p_ref
                if ev.q_ref is not None:
                    kw["q_ref"] = ev.q_ref
                osc = replace(osc, **kw)
            elif isinstance(ev, GainChange):
                vim = replace(vim, m=ev.k, n=ev.k)
    return segs, circuit, grid


def run_simulation(setup: RunSetup, use_kernel: bool = True) -> TimeSeriesLog:
    """Run one scenario; returns the decimated time-series log."""
    sim = setup.sim
    ts, n_sub = sim.t_s, sim.n_sub
    n_ticks = int(round(sim.t_end / ts))
    segs, full_circuit, _ = _segments(setup)

    # initial condition: phasor solution of the pre-event network, with the
    # inverter placed at its droop equilibrium when one can be found
    setup0 = replace(setup, circuit=full_circuit)
    eq = _solve_equilibrium(setup0, full_circuit) if setup.inverter_enabled \
        else None
    if eq is not None:
        sol = solve_phasor(setup.grid, full_circuit,
                           inverter_branch=eq["v_c"] * np.exp(1j * PHASE_ANGLES),
                           t=0.0)
        osc0 = OscillatorState(
            SQRT2 * eq["v_z"] * np.cos(eq["delta"] + PHASE_ANGLES),
            SQRT2 * eq["v_z"] * np.sin(eq["delta"] + PHASE_ANGLES))
        v_c_ph = eq["v_c"] * np.exp(1j * PHASE_ANGLES)
    else:
        v_c0 = setup.osc.v_nominal if setup.inverter_enabled else None
        sol = solve_phasor(setup.grid, full_circuit,
                           inverter_branch=v_c0, t=0.0)
        osc0 = OscillatorState.nominal(setup.osc)
        v_c_ph = None
    plant = state_from_phasor(sol, setup.grid.theta_at(0.0))
    if not setup.inverter_enabled:
        plant.i_l = np.zeros(3)
    ctrl = _ControllerState(setup0, plant, sol, osc0, v_c_ph)

    n_rows = (n_ticks + sim.log_every - 1) // sim.log_every
    times = np.empty(n_rows)
    rows = np.empty((n_rows, N_CHANNELS))
    row_i = 0
    tick = 0
    for (t0, t1, circuit, grid, osc, vim) in segs:
        seg_setup = replace(setup, circuit=circuit, grid=grid, osc=osc, vim=vim)
        if t0 > 0.0 and setup.inverter_enabled:
            # re-center the quadrature generators on the oscillator's own
            # frequency (a converged frequency-adaptive SOGI); event
            # boundaries are where operating frequency can move
            i_fb = np.column_stack([plant.output_current(), ctrl.sogi_io.qx])
            w_est = float(np.median(instantaneous_frequency(ctrl.osc, i_fb,
                                                            osc)))
            if 0.5 * osc.omega_n < w_est < 1.5 * osc.omega_n:
                for sogi in (ctrl.sogi_v, ctrl.sogi_io, ctrl.sogi_il):
                    sogi.retune(w_est)
        seg_ticks = int(round((t1 - t0) / ts))
        if use_kernel:
            tick, row_i = _kernel.run_segment_kernel(
                seg_setup, ctrl, plant, tick, seg_ticks, times, rows, row_i)
        else:
            for _ in range(seg_ticks):
                t = tick * ts
                row = _controller_tick_reference(seg_setup, ctrl, plant)
                if tick % sim.log_every == 0:
                    times[row_i] = t
                    rows[row_i] = row
                    row_i += 1
                for j in range(n_sub):
                    plant_new = step_plant(
                        plant, ctrl.v_c, grid, circuit,
                        t + j * sim.dt_plant, sim.dt_plant,
                        inverter_connected=setup.inverter_enabled)
                    plant.i_l, plant.v_pcc = plant_new.i_l, plant_new.v_pcc
                    plant.i_inv, plant.i_load = plant_new.i_inv, plant_new.i_load
                tick += 1

    data = {name: rows[:row_i, j] for j, name in enumerate(CHANNEL_NAMES)}
    return TimeSeriesLog(times[:row_i].copy(), data, dict(CHANNEL_UNITS))


# ---------------------------------------------------------------------------
# metrics


def cycle_average(x: np.ndarray, dt: float, f0: float) -> np.ndarray:
    """Sliding average over one fundamental cycle (valid region only)."""
    n = max(int(round(1.0 / (f0 * dt))), 1)
    if n > len(x):
        raise ValueError("window shorter than one fundamental cycle")
    kern = np.ones(n) / n
    return np.convolve(x, kern, mode="valid")


def _window_slice(time: np.ndarray, window) -> slice:
    t0, t1 = window
    i0 = int(np.searchsorted(time, t0))
    i1 = int(np.searchsorted(time, t1))
    if i1 <= i0:
        raise ValueError(f"empty metrics window {window}")
    return slice(i0, i1)


def compute_metrics(log: TimeSeriesLog, windows: dict,
                    f0: float = 60.0) -> dict:
    """Windowed metrics: sag, power plateaus, oscillation, saturation.

    ``windows`` maps names to (t0, t1); 'pre' and 'post' drive the sag
    metric, 'onset' and 'trailing' the oscillation peak-to-peak.
    Each window must span at least one fundamental cycle.
    """
    dt = log.dt
    if min(w[1] - w[0] for w in windows.values()) < 1.0 / f0:
        raise ValueError("window shorter than one fundamental cycle")
    amp = log.group("amp_pcc").mean(axis=1)
    p_tot = log.group("p").sum(axis=1)
    q_tot = log.group("q").sum(axis=1)
    sat_any = log.group("sat").max(axis=1)

    out = {}
    for name, win in windows.items():
        sl = _window_slice(log.time, win)
        out[f"amp_{name}"] = float(amp[sl].mean())
        out[f"p_{name}"] = float(p_tot[sl].mean())
        out[f"q_{name}"] = float(q_tot[sl].mean())
        out[f"sat_fraction_{name}"] = float(sat_any[sl].mean())
        pk = cycle_average(p_tot[sl], dt, f0)
        out[f"p_pkpk_{name}"] = float(pk.max() - pk.min())
        for ph in "abc":
            out[f"amp_{name}_{ph}"] = float(log[f"amp_pcc_{ph}"][sl].mean())
    if "pre" in windows and "post" in windows:
        out["sag_pct"] = measure_sag(out["amp_pre"], out["amp_post"])
    return out

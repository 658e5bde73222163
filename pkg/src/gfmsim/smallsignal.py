"""Linearized closed-loop model and the impedance-gain stability study.

The model stacks the grid branch, L-C filter, VIm current filter, the
bilinear VIm gain block linearized about a (Q_max, V_min) operating
point, and the voltage/current PI loops into one autonomous state matrix
(oscillator voltage and grid voltage are exogenous and held at zero:
with the loop synchronized their deviations are second order).

State ordering (single synchronous frame, balanced operating point):

    0  i_inv_d   grid-branch current
    1  i_inv_q
    2  i_l_d     filter inductor current
    3  i_l_q
    4  v_pcc_d   filter capacitor voltage
    5  v_pcc_q
    6  i_f_d     VIm filter output, d axis
    7  i_f_d'    (internal filter state)
    8  i_f_q     VIm filter output, q axis (sag-positive convention)
    9  i_f_q'
    10 int_v_d   voltage PI integrators
    11 int_v_q
    12 int_i_d   current PI integrators
    13 int_i_q

The VIm q-axis runs in the sag-positive convention used by the
time-domain controller: its input is the negated standard q current and
its q voltage output is negated on the way back into the voltage loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import CircuitParams, GridSource, solve_phasor
from .errors import InfeasibleOperatingPointError, ModelAssemblyError
from .loops import LoopGains
from .oscillator import OscillatorParams
from .vim import VimParams

SQRT2 = math.sqrt(2.0)

N_STATES = 14
STATE_LABELS = (
    "i_inv_d", "i_inv_q", "i_l_d", "i_l_q", "v_pcc_d", "v_pcc_q",
    "i_f_d", "i_f_d_rate", "i_f_q", "i_f_q_rate",
    "int_v_d", "int_v_q", "int_i_d", "int_i_q",
)
INPUT_LABELS = ("v_g_d", "v_g_q", "v_voc_d", "v_voc_q")
OUTPUT_LABELS = ("i_l_q", "v_pcc_d")


@dataclass
class OperatingPoint:
    """Linearization point: peak-dq values in the oscillator frame.

    ``i_f_q0`` is sag-positive (inductive export gives a positive value),
    matching the VIm block convention.
    """

    v_pcc0_dq: tuple[float, float]
    i_inv0_dq: tuple[float, float]     # standard dq (export q negative)
    i_l0_dq: tuple[float, float]
    i_f_d0: float
    i_f_q0: float
    r_vim0: float
    x_vim0: float
    omega0: float
    q_max: float
    v_min: float
    v_grid_required: float = 0.0


def compute_operating_point(q_max: float, v_min: float,
                            circuit: CircuitParams, osc: OscillatorParams,
                            vim: VimParams, grid: GridSource | None = None,
                            p0: float | None = None,
                            t: float = 0.0) -> OperatingPoint:
    """Operating point for the inverter exporting (p0, q_max) at V_min RMS.

    Solves the loaded phasor network for the grid-side consistency and
    raises if the loading cannot be realized.  The VIm values follow the
    unclamped adaptive law at the filtered (steady) currents.
    """
    if q_max < 0:
        raise ValueError("q_max must be >= 0")
    if not 0 < v_min <= osc.v_nominal:
        raise ValueError("need 0 < v_min <= nominal amplitude")
    p0 = osc.p_ref if p0 is None else p0

    omega = osc.omega_n if grid is None else grid.omega_at(t)
    # inverter output current phasor at v_pcc = v_min angle 0 (RMS)
    s = p0 + 1j * q_max
    i_out = np.conj(s / v_min)
    v_pcc = complex(v_min)

    # grid-side consistency on the loaded network
    i_c = v_pcc * 1j * omega * circuit.c_f
    i_loads = sum((v_pcc / ld.impedance(omega)
                   for ld in circuit.loads), 0j)
    i_g = i_out - i_loads
    v_g_req = v_pcc - (circuit.r_g + 1j * omega * circuit.l_g) * i_g
    if grid is not None and q_max == 0 and p0 == 0:
        sol = solve_phasor(grid, circuit, inverter_branch=None, t=t)
        v_div = float(np.abs(sol["v_pcc"][0]))
        if abs(v_div - v_min) > 1e-6 * osc.v_nominal:
            raise InfeasibleOperatingPointError(
                f"zero loading pins v_pcc at the divider value "
                f"{v_div:.4g} V, not {v_min:.4g} V")
    if abs(v_g_req) > 5.0 * osc.v_nominal:
        raise InfeasibleOperatingPointError(
            f"loading requires grid amplitude {abs(v_g_req):.4g} V")

    # peak-dq components in the v_pcc-aligned frame
    i_d0 = SQRT2 * i_out.real
    i_q0 = SQRT2 * i_out.imag          # standard convention: export -> < 0
    i_f_d0 = i_d0
    i_f_q0 = -i_q0                     # sag-positive
    if vim.filter_numerator == "wf":
        i_f_d0 /= vim.omega_f
        i_f_q0 /= vim.omega_f
    r0 = vim.r_v0 + vim.m * i_f_q0
    x0 = vim.x_v0 + vim.n * i_f_q0
    i_l = i_out + i_c
    return OperatingPoint(
        v_pcc0_dq=(SQRT2 * v_min, 0.0),
        i_inv0_dq=(i_d0, i_q0),
        i_l0_dq=(SQRT2 * i_l.real, SQRT2 * i_l.imag),
        i_f_d0=i_f_d0, i_f_q0=i_f_q0,
        r_vim0=r0, x_vim0=x0, omega0=omega,
        q_max=q_max, v_min=v_min,
        v_grid_required=float(abs(v_g_req)),
    )


def linearize_vim(op: OperatingPoint, vim: VimParams) -> np.ndarray:
    """2x2 gain from (di_f_d, di_f_q) to (dv_vim_d, dv_vim_q).

    Both q axes in the sag-positive convention.  The R*I and X*I products
    are bilinear, so the operating currents appear in the coefficients;
    the clamp is ignored (linearization of the unclamped law).
    """
    r0, x0 = op.r_vim0, op.x_vim0
    ifd0, ifq0 = op.i_f_d0, op.i_f_q0
    return np.array([
        [-r0, -(vim.m * ifd0 + x0 + vim.n * ifq0)],
        [x0, -r0 - vim.m * ifq0 + vim.n * ifd0],
    ])


def vim_feedforward_exact(i_f_d, i_f_q, vim: VimParams):
    """Nonlinear feed-forward voltage (unclamped law), for FD oracles."""
    r = vim.r_v0 + vim.m * i_f_q
    x = vim.x_v0 + vim.n * i_f_q
    return (-r * i_f_d - x * i_f_q, -r * i_f_q + x * i_f_d)


@dataclass
class LtiStateSpace:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    state_labels: tuple
    input_labels: tuple
    output_labels: tuple
    params: dict = field(default_factory=dict)

    def eigenvalues(self) -> np.ndarray:
        return eigenvalues(self.a)

    def label_manifest(self) -> str:
        lines = [f"{i}: {lab}" for i, lab in enumerate(self.state_labels)]
        return "\n".join(lines) + "\n"


@dataclass
class ModelContext:
    """Everything needed to rebuild the model as k varies."""

    circuit: CircuitParams
    gains: LoopGains
    osc: OscillatorParams
    vim: VimParams = field(default_factory=VimParams)
    q_max: float | None = None       # default: plain droop Q at v_min
    v_min: float | None = None       # default: 75% of nominal (25% sag)
    p0: float | None = None
    variant: str = "verbatim"
    grid_branch: tuple[float, float] | None = None   # (R, L) override

    def resolved_point(self, k: float) -> OperatingPoint:
        from .droop import reactive_droop_plain
        v_min = 0.75 * self.osc.v_nominal if self.v_min is None else self.v_min
        q_max = (reactive_droop_plain(v_min, self.osc)
                 if self.q_max is None else self.q_max)
        vim_k = self._vim_at(k)
        return compute_operating_point(q_max, v_min, self.circuit, self.osc,
                                       vim_k, p0=self.p0)

    def _vim_at(self, k: float) -> VimParams:
        return VimParams(r_v0=self.vim.r_v0, x_v0=self.vim.x_v0, m=k, n=k,
                         omega_f=self.vim.omega_f,
                         feedforward_gain=self.vim.feedforward_gain,
                         clamp_non_negative=self.vim.clamp_non_negative,
                         filter_numerator=self.vim.filter_numerator)

    def model_at(self, k: float,
                 op: OperatingPoint | None = None) -> LtiStateSpace:
        if op is None:
            op = self.resolved_point(k)
        return assemble_model(self.circuit, self.gains, self._vim_at(k),
                              op, variant=self.variant,
                              grid_branch=self.grid_branch)


def _assemble_parts(circuit: CircuitParams, gains: LoopGains, vim: VimParams,
                    op: OperatingPoint, variant: str,
                    grid_branch: tuple[float, float] | None):
    """Model pieces with the VIm voltage pair kept as explicit inputs.

    Returns (a_open, b, vim_in) where the full closed matrix is
    a_open + vim_in @ G and G is the 2 x n map from states to
    (v_vim_d, v_vim_q) in the standard-q convention.
    """
    if variant not in ("verbatim", "standard"):
        raise ModelAssemblyError(f"unknown current-loop variant '{variant}'")
    nx, nu = N_STATES, len(INPUT_LABELS)
    nv = 2  # injected VIm voltages (d, q standard)
    r_g, l_g = grid_branch if grid_branch is not None else (
        circuit.r_g, circuit.l_g)
    r_f, l_f, c_f = circuit.r_f, circuit.l_f, circuit.c_f
    w = op.omega0
    wf = vim.omega_f
    num = wf ** 2 if vim.filter_numerator == "wf2" else wf
    kpv, kiv = gains.k_pv, gains.k_iv
    kpi, kii = gains.k_pi, gains.k_ii
    ff = gains.feedforward_gain
    extra = ("v_vim_d", "v_vim_q")

    def sig(**coef):
        """Row over [x(14), u(4), v_vim(2)] from named coefficients."""
        row = np.zeros(nx + nu + nv)
        for name, val in coef.items():
            if name in STATE_LABELS:
                row[STATE_LABELS.index(name)] += val
            elif name in INPUT_LABELS:
                row[nx + INPUT_LABELS.index(name)] += val
            elif name in extra:
                row[nx + nu + extra.index(name)] += val
            else:
                raise ModelAssemblyError(f"unknown signal '{name}'")
        return row

    v_vim_d = sig(v_vim_d=1.0)
    v_vim_q = sig(v_vim_q=1.0)
    e_v_d = sig(v_voc_d=1.0, v_pcc_d=-1.0) + v_vim_d
    e_v_q = sig(v_voc_q=1.0, v_pcc_q=-1.0) + v_vim_q
    i_ref_d = kpv * e_v_d + kiv * sig(int_v_d=1.0) - ff * v_vim_d
    i_ref_q = kpv * e_v_q + kiv * sig(int_v_q=1.0) - ff * v_vim_q

    e_i_d = i_ref_d - sig(i_l_d=1.0)
    e_i_q = i_ref_q - sig(i_l_q=1.0)
    if variant == "verbatim":
        # paper-form loop.  Its written error term, delivered current
        # plus a w C_f v_pcc capacitor-current estimate, is exactly the
        # inductor current (KCL), so the realization feeds back i_l; the
        # trailing w L_f v_pcc cross terms are kept as written (the
        # written q axis is the sag-positive one, hence the signs here).
        v_c_d = kpi * e_i_d + kii * sig(int_i_d=1.0) + w * l_f * sig(v_pcc_q=1.0)
        v_c_q = kpi * e_i_q + kii * sig(int_i_q=1.0) - w * l_f * sig(v_pcc_d=1.0)
    else:
        v_c_d = (kpi * e_i_d + kii * sig(int_i_d=1.0)
                 - w * l_f * sig(i_l_q=1.0) + sig(v_pcc_d=1.0))
        v_c_q = (kpi * e_i_q + kii * sig(int_i_q=1.0)
                 + w * l_f * sig(i_l_d=1.0) + sig(v_pcc_q=1.0))

    rows = np.zeros((nx, nx + nu + nv))
    rows[0] = (-r_g * sig(i_inv_d=1.0) + w * l_g * sig(i_inv_q=1.0)
               + sig(v_pcc_d=1.0, v_g_d=-1.0)) / l_g
    rows[1] = (-r_g * sig(i_inv_q=1.0) - w * l_g * sig(i_inv_d=1.0)
               + sig(v_pcc_q=1.0, v_g_q=-1.0)) / l_g
    rows[2] = (-r_f * sig(i_l_d=1.0) + w * l_f * sig(i_l_q=1.0)
               + v_c_d - sig(v_pcc_d=1.0)) / l_f
    rows[3] = (-r_f * sig(i_l_q=1.0) - w * l_f * sig(i_l_d=1.0)
               + v_c_q - sig(v_pcc_q=1.0)) / l_f
    rows[4] = (sig(i_l_d=1.0, i_inv_d=-1.0) + w * c_f * sig(v_pcc_q=1.0)) / c_f
    rows[5] = (sig(i_l_q=1.0, i_inv_q=-1.0) - w * c_f * sig(v_pcc_d=1.0)) / c_f
    rows[6] = sig(i_f_d_rate=1.0)
    rows[7] = (-wf ** 2 * sig(i_f_d=1.0) - wf * sig(i_f_d_rate=1.0)
               + num * sig(i_inv_d=1.0))
    rows[8] = sig(i_f_q_rate=1.0)
    rows[9] = (-wf ** 2 * sig(i_f_q=1.0) - wf * sig(i_f_q_rate=1.0)
               + num * -sig(i_inv_q=1.0))
    rows[10] = e_v_d
    rows[11] = e_v_q
    rows[12] = e_i_d
    rows[13] = e_i_q

    return rows[:, :nx], rows[:, nx:nx + nu], rows[:, nx + nu:]


def vim_gain_map(op: OperatingPoint, vim: VimParams) -> np.ndarray:
    """2 x n map from states to (v_vim_d, v_vim_q), standard convention."""
    g = linearize_vim(op, vim)
    out = np.zeros((2, N_STATES))
    i_fd, i_fq = STATE_LABELS.index("i_f_d"), STATE_LABELS.index("i_f_q")
    out[0, i_fd], out[0, i_fq] = g[0, 0], g[0, 1]
    out[1, i_fd], out[1, i_fq] = -g[1, 0], -g[1, 1]
    return out


def assemble_model(circuit: CircuitParams, gains: LoopGains, vim: VimParams,
                   op: OperatingPoint, variant: str = "verbatim",
                   grid_branch: tuple[float, float] | None = None
                   ) -> LtiStateSpace:
    """Wire every block into the autonomous A matrix (plus B, C maps)."""
    a_open, b, vim_in = _assemble_parts(circuit, gains, vim, op, variant,
                                        grid_branch)
    a = a_open + vim_in @ vim_gain_map(op, vim)
    if not np.all(np.isfinite(a)):
        raise ModelAssemblyError("non-finite entry in A")
    c = np.zeros((len(OUTPUT_LABELS), N_STATES))
    c[0, STATE_LABELS.index("i_l_q")] = 1.0
    c[1, STATE_LABELS.index("v_pcc_d")] = 1.0
    r_g, l_g = grid_branch if grid_branch is not None else (
        circuit.r_g, circuit.l_g)
    params = dict(r_g=r_g, l_g=l_g, r_f=circuit.r_f, l_f=circuit.l_f,
                  c_f=circuit.c_f, omega0=op.omega0, omega_f=vim.omega_f,
                  numerator=vim.filter_numerator, variant=variant, k=vim.m,
                  q_max=op.q_max, v_min=op.v_min, k_pv=gains.k_pv,
                  k_iv=gains.k_iv, k_pi=gains.k_pi, k_ii=gains.k_ii,
                  f=gains.feedforward_gain)
    return LtiStateSpace(a, b, c, STATE_LABELS, INPUT_LABELS, OUTPUT_LABELS,
                         params)


def eigenvalues(a: np.ndarray) -> np.ndarray:
    """Spectrum of a real square matrix, sorted by real part descending."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix must be finite")
    eig = np.linalg.eigvals(a)
    return eig[np.argsort(-eig.real, kind="stable")]


@dataclass
class GainSweep:
    ks: np.ndarray
    spectra: list
    max_real: np.ndarray

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("k [ohm/A],index,real [1/s],imag [rad/s]\n")
            for k, spec in zip(self.ks, self.spectra):
                for i, lam in enumerate(spec):
                    fh.write(f"{k:.6g},{i},{lam.real:.9g},{lam.imag:.9g}\n")


def sweep_gain(k_lo: float, k_hi: float, steps: int, context: ModelContext,
               recompute_op: bool = True) -> GainSweep:
    """Eigenvalue loci over the impedance gain.

    ``recompute_op`` rebuilds the operating point per k (the adaptive R/X
    at the point scale with k); otherwise the k_lo point is frozen.
    """
    if not 0 <= k_lo < k_hi:
        raise ValueError("need 0 <= k_lo < k_hi")
    ks = np.linspace(k_lo, k_hi, steps)
    frozen = None if recompute_op else context.resolved_point(k_lo)
    spectra, max_real = [], []
    for k in ks:
        model = context.model_at(float(k), op=frozen)
        spec = eigenvalues(model.a)
        spectra.append(spec)
        max_real.append(spec.real.max())
    return GainSweep(ks, spectra, np.array(max_real))


def max_real_at(context: ModelContext, k: float,
                recompute_op: bool = True,
                frozen_op: OperatingPoint | None = None) -> float:
    op = frozen_op if not recompute_op else None
    return float(eigenvalues(context.model_at(k, op=op).a).real.max())


def critical_gain(context: ModelContext, k_lo: float = 0.0,
                  k_hi: float = 1.0, coarse_steps: int = 41,
                  tol: float = 1e-3, recompute_op: bool = True):
    """Bisection for the gain where the slowest eigenvalue crosses zero.

    Returns None when the max real part never changes sign on the range
    (stable everywhere, or already unstable at k_lo).
    """
    frozen = None if recompute_op else context.resolved_point(k_lo)

    def f(k):
        return max_real_at(context, k, recompute_op, frozen)

    ks = np.linspace(k_lo, k_hi, coarse_steps)
    vals = [f(k) for k in ks]
    bracket = None
    for (ka, va), (kb, vb) in zip(zip(ks, vals), zip(ks[1:], vals[1:])):
        if va < 0 <= vb:
            bracket = (ka, kb, va, vb)
            break
    if bracket is None:
        return None
    ka, kb, va, vb = bracket
    while kb - ka > tol:
        km = 0.5 * (ka + kb)
        vm = f(km)
        if vm < 0:
            ka = km
        else:
            kb = km
    return 0.5 * (ka + kb)


def simulate_nonlinear_model(context: ModelContext, k: float,
                             op: OperatingPoint | None = None,
                             v_g_step_frac: float = 0.01,
                             t_end: float = 0.6, dt: float = 5e-5):
    """Integrate the closed-loop model with the exact bilinear VIm law.

    Same wiring as ``assemble_model`` except the feed-forward voltage
    comes from the unclamped adaptive-impedance product instead of its
    linearization; the grid-voltage input steps by ``v_g_step_frac`` of
    the operating amplitude at t = 0.  States are deviations.  Returns
    (t, x-history) for ringdown-fitting against the linear eigenpair.
    """
    if op is None:
        op = context.resolved_point(k)
    vim = context._vim_at(k)
    a_open, b, vim_in = _assemble_parts(context.circuit, context.gains, vim,
                                        op, context.variant,
                                        context.grid_branch)
    i_fd = STATE_LABELS.index("i_f_d")
    i_fq = STATE_LABELS.index("i_f_q")
    v_d0, v_q0 = vim_feedforward_exact(op.i_f_d0, op.i_f_q0, vim)

    dv_g = v_g_step_frac * SQRT2 * op.v_grid_required
    bu = b @ np.array([dv_g, 0.0, 0.0, 0.0])

    def rhs(x):
        v_d, v_q = vim_feedforward_exact(op.i_f_d0 + x[i_fd],
                                         op.i_f_q0 + x[i_fq], vim)
        dv = np.array([v_d - v_d0, -(v_q - v_q0)])  # q back to standard
        return a_open @ x + bu + vim_in @ dv

    n = int(round(t_end / dt))
    x = np.zeros(N_STATES)
    hist = np.empty((n + 1, N_STATES))
    hist[0] = x
    for i in range(n):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        hist[i + 1] = x
    return np.arange(n + 1) * dt, hist


def dominant_eigenpair(model: LtiStateSpace, channel: str = "i_f_q",
                       input_name: str = "v_g_d") -> complex:
    """Complex eigenvalue pair dominating a channel's step response.

    Modal decomposition of the unit-step response: the residue of each
    pole on the observed channel, weighted by the pole's window energy,
    ranks the modes.  Returns the member with positive imaginary part.
    """
    a = model.a
    lam, v = np.linalg.eig(a)
    w = np.linalg.inv(v)
    bu = model.b[:, model.input_labels.index(input_name)]
    ch = model.state_labels.index(channel)
    # step response pole contributions: c_i = v[ch,i] (w_i . bu) / lambda_i
    with np.errstate(divide="ignore", invalid="ignore"):
        c = v[ch, :] * (w @ bu) / lam
    horizon = 0.5
    energy = np.abs(c) ** 2 * np.where(
        np.abs(lam.real) > 1e-9,
        (np.exp(2 * lam.real * horizon) - 1) / (2 * lam.real), horizon)
    osc = np.abs(lam.imag) > 1e-3
    if not np.any(osc):
        raise ValueError("no oscillatory mode in the model")
    idx = int(np.argmax(np.where(osc, energy, -np.inf)))
    lam_dom = lam[idx]
    return complex(lam_dom.real, abs(lam_dom.imag))


def fit_ringdown(t: np.ndarray, y: np.ndarray, order: int = 10):
    """Dominant damped-sinusoid (sigma, omega) of a ringdown trace.

    Linear-prediction (Prony-style) fit: an AR model of the detrended
    signal gives the discrete poles; residues from a least-squares modal
    fit select the pole carrying the most window energy.  Returns the
    (sigma, omega) of that pole, omega > 0.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float) - y[-1]
    # decimate for conditioning: aim for a few thousand samples
    step = max(len(y) // 2000, 1)
    y = y[::step]
    dt = (t[1] - t[0]) * step
    n = len(y)
    if n < 4 * order:
        raise ValueError("trace too short for the requested AR order")
    cols = [y[i:n - order + i] for i in range(order)]
    mat = np.column_stack(cols)
    rhs = y[order:]
    coef, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    poly = np.concatenate([[1.0], -coef[::-1]])
    z = np.roots(poly)
    z = z[np.abs(z) > 1e-12]
    s = np.log(z.astype(complex)) / dt
    # residues via least squares on the modal basis
    basis = np.power.outer(np.arange(n), np.zeros(len(z))) * 0 + \
        np.exp(np.outer(np.arange(n) * dt, s))
    res, *_ = np.linalg.lstsq(basis, y.astype(complex), rcond=None)
    energy = np.abs(res) ** 2 * np.array(
        [np.sum(np.exp(2 * si.real * np.arange(n) * dt)) for si in s])
    osc = np.abs(s.imag) > 1e-3
    if not np.any(osc):
        raise ValueError("no oscillatory mode found in trace")
    idx = np.argmax(np.where(osc, energy, -np.inf))
    return float(s[idx].real), float(abs(s[idx].imag))


def variant_report(context: ModelContext, k_lo: float = 0.0,
                   k_hi: float = 1.0) -> dict:
    """Critical gain for each Eq-variant and filter-numerator reading."""
    out = {}
    for variant in ("verbatim", "standard"):
        for numerator in ("wf2", "wf"):
            ctx = ModelContext(
                circuit=context.circuit, gains=context.gains,
                osc=context.osc,
                vim=VimParams(omega_f=context.vim.omega_f,
                              feedforward_gain=context.vim.feedforward_gain,
                              filter_numerator=numerator),
                q_max=context.q_max, v_min=context.v_min, p0=context.p0,
                variant=variant, grid_branch=context.grid_branch)
            out[(variant, numerator)] = critical_gain(ctx, k_lo, k_hi)
    return out

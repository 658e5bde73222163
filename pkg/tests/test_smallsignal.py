"""Linearized model, eigensolver contracts, gain sweep, critical gain."""

import numpy as np
import pytest

from gfmsim.circuit import CircuitParams, LoadBranch
from gfmsim.errors import InfeasibleOperatingPointError
from gfmsim.loops import table_gains
from gfmsim.oscillator import OscillatorParams
from gfmsim.smallsignal import (N_STATES, STATE_LABELS, GainSweep,
                                ModelContext, OperatingPoint, assemble_model,
                                compute_operating_point, critical_gain,
                                dominant_eigenpair, eigenvalues, fit_ringdown,
                                linearize_vim, simulate_nonlinear_model,
                                sweep_gain, variant_report,
                                vim_feedforward_exact)
from gfmsim.vim import VimParams


def study_circuit():
    return CircuitParams(loads=[LoadBranch(2.5, 10e-3, 0.0),
                                LoadBranch(2.5, 2e-3, 0.0)])


def study_context(**kw):
    args = dict(circuit=study_circuit(), gains=table_gains(),
                osc=OscillatorParams(), vim=VimParams(), variant="verbatim")
    args.update(kw)
    return ModelContext(**args)


def leverrier_charpoly(a):
    """Characteristic polynomial via the Faddeev-LeVerrier recursion."""
    n = a.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[k - 1] * np.eye(n)
        coeffs[k] = -np.trace(a @ m) / k
    return coeffs


class TestEigenvalues:
    def test_diagonal(self):
        eig = eigenvalues(np.diag([-1.0, -2.0, -3.0]))
        assert np.allclose(sorted(eig.real), [-3, -2, -1])
        assert np.allclose(eig.imag, 0)

    def test_second_order_canonical(self):
        w, zeta = 7.0, 0.3
        a = np.array([[0.0, 1.0], [-w ** 2, -2 * zeta * w]])
        eig = eigenvalues(a)
        expected = -zeta * w + 1j * w * np.sqrt(1 - zeta ** 2)
        assert eig[0] == pytest.approx(expected)
        assert eig[1] == pytest.approx(np.conj(expected))

    def test_random_5x5_against_charpoly_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            a = rng.normal(size=(5, 5))
            eig = np.sort_complex(eigenvalues(a))
            oracle = np.sort_complex(np.roots(leverrier_charpoly(a)))
            scale = np.abs(oracle).max()
            assert np.abs(eig - oracle).max() < 1e-6 * scale

    def test_characteristic_residual_contract(self):
        rng = np.random.default_rng(9)
        for n in (2, 4, 6):
            a = rng.normal(size=(n, n))
            coeffs = leverrier_charpoly(a)
            norm = np.linalg.norm(a)
            for lam in eigenvalues(a):
                resid = abs(np.polyval(coeffs, lam))
                assert resid < 1e-8 * max(norm ** n, 1.0)

    def test_conjugate_closure(self):
        a = study_context().model_at(0.1).a
        eig = eigenvalues(a)
        paired = np.sort_complex(np.conj(eig))
        assert np.allclose(np.sort_complex(eig), paired, atol=1e-6)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            eigenvalues(np.ones((2, 3)))
        with pytest.raises(ValueError):
            eigenvalues(np.array([[np.nan, 0], [0, 1]]))


class TestOperatingPoint:
    def test_zero_loading_zero_vim(self):
        cp = study_circuit()
        osc = OscillatorParams(p_ref=0.0)
        # at zero current the divider pins the voltage
        from gfmsim.circuit import GridSource, solve_phasor
        grid = GridSource(80.0)
        v_div = abs(solve_phasor(grid, cp, inverter_branch=None)["v_pcc"][0])
        op = compute_operating_point(0.0, v_div, cp, osc,
                                     VimParams.with_gain(0.2), grid=grid,
                                     p0=0.0)
        assert op.i_f_q0 == 0.0
        assert op.r_vim0 == 0.0 and op.x_vim0 == 0.0

    def test_zero_loading_wrong_voltage_infeasible(self):
        cp = study_circuit()
        from gfmsim.circuit import GridSource
        with pytest.raises(InfeasibleOperatingPointError):
            compute_operating_point(0.0, 70.0, cp, OscillatorParams(),
                                    VimParams.with_gain(0.2),
                                    grid=GridSource(80.0), p0=0.0)

    def test_doubling_m_doubles_r0(self):
        cp = study_circuit()
        osc = OscillatorParams()
        op1 = compute_operating_point(100.0, 60.0, cp, osc,
                                      VimParams(m=0.1, n=0.1))
        op2 = compute_operating_point(100.0, 60.0, cp, osc,
                                      VimParams(m=0.2, n=0.2))
        assert op2.r_vim0 == pytest.approx(2 * op1.r_vim0)
        assert op2.i_f_q0 == pytest.approx(op1.i_f_q0)

    def test_currents_match_phasor_oracle(self):
        """Study-network 25% sag loading: op currents from hand phasors."""
        cp = study_circuit()
        osc = OscillatorParams()
        q, v = 196.9, 60.0
        op = compute_operating_point(q, v, cp, osc, VimParams.with_gain(0.1))
        s = osc.p_ref + 1j * q
        i = np.conj(s / v)
        assert op.i_inv0_dq[0] == pytest.approx(np.sqrt(2) * i.real)
        assert op.i_inv0_dq[1] == pytest.approx(np.sqrt(2) * i.imag)
        assert op.i_f_q0 == pytest.approx(-np.sqrt(2) * i.imag)
        assert op.i_f_q0 > 0  # inductive export is sag positive


class TestLinearizeVim:
    def random_op(self, rng, vim):
        ifd, ifq = rng.uniform(0.5, 8.0, size=2)
        return OperatingPoint((90.0, 0.0), (ifd, -ifq), (ifd, -ifq),
                              ifd, ifq, vim.r_v0 + vim.m * ifq,
                              vim.x_v0 + vim.n * ifq, 377.0, 100.0, 60.0)

    def test_zero_op_zero_gain_block(self):
        vim = VimParams()
        op = OperatingPoint((113.0, 0.0), (0.0, 0.0), (0.0, 0.0), 0.0, 0.0,
                            0.0, 0.0, 377.0, 0.0, 80.0)
        assert np.allclose(linearize_vim(op, vim), 0.0)

    def test_against_central_differences(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            vim = VimParams(m=rng.uniform(0, 0.3), n=rng.uniform(0, 0.3),
                            r_v0=rng.uniform(0, 0.1), x_v0=rng.uniform(0, 0.1))
            op = self.random_op(rng, vim)
            g = linearize_vim(op, vim)
            h = 1e-6 * max(op.i_f_q0, 1.0)
            fd = np.zeros((2, 2))
            for j, (dd, dq) in enumerate(((h, 0.0), (0.0, h))):
                vp = vim_feedforward_exact(op.i_f_d0 + dd, op.i_f_q0 + dq, vim)
                vm = vim_feedforward_exact(op.i_f_d0 - dd, op.i_f_q0 - dq, vim)
                fd[0, j] = (vp[0] - vm[0]) / (2 * h)
                fd[1, j] = (vp[1] - vm[1]) / (2 * h)
            assert np.abs(g - fd).max() < 1e-8 * max(1.0, np.abs(g).max())

    def test_bilinear_residual_second_order(self):
        """Halving the perturbation quarters the linearization residual."""
        vim = VimParams(m=0.15, n=0.15)
        rng = np.random.default_rng(4)
        op = self.random_op(rng, vim)
        g = linearize_vim(op, vim)
        v0 = np.array(vim_feedforward_exact(op.i_f_d0, op.i_f_q0, vim))

        def residual(eps):
            d = np.array([0.7 * eps, -1.3 * eps])
            v = np.array(vim_feedforward_exact(op.i_f_d0 + d[0],
                                               op.i_f_q0 + d[1], vim))
            return np.linalg.norm(v - v0 - g @ d)

        r1, r2 = residual(0.1), residual(0.05)
        assert r1 / r2 == pytest.approx(4.0, rel=1e-6)


class TestAssembleModel:
    def test_state_count_and_labels(self):
        ctx = study_context()
        m = ctx.model_at(0.1)
        assert m.a.shape == (N_STATES, N_STATES)
        assert N_STATES == 14
        assert len(m.state_labels) == 14
        manifest = m.label_manifest()
        assert "0: i_inv_d" in manifest
        assert "13: int_i_q" in manifest

    def test_k_zero_vim_states_unobservable(self):
        """At zero gains and zero op current the VIm block decouples."""
        ctx = study_context(p0=0.0, q_max=0.0, v_min=60.84)
        m = ctx.model_at(0.0)
        fd = STATE_LABELS.index("i_f_d")
        fq = STATE_LABELS.index("i_f_q")
        others = [i for i in range(N_STATES)
                  if i not in (fd, fd + 1, fq, fq + 1)]
        # no path from the filter states back into the loop
        assert np.all(m.a[np.ix_(others, [fd, fd + 1, fq, fq + 1])] == 0.0)

    def test_baseline_hurwitz(self):
        eig = eigenvalues(study_context().model_at(0.0).a)
        assert eig.real.max() < 0

    def test_k_inside_limit_stable(self):
        """k = 0.1 below the critical gain: all real parts negative."""
        eig = eigenvalues(study_context().model_at(0.1).a)
        assert eig.real.max() < 0

    def test_spectrum_permutation_invariant(self):
        m = study_context().model_at(0.15)
        rng = np.random.default_rng(3)
        perm = rng.permutation(N_STATES)
        p = np.eye(N_STATES)[perm]
        eig1 = np.sort_complex(eigenvalues(m.a))
        eig2 = np.sort_complex(eigenvalues(p @ m.a @ p.T))
        assert np.allclose(eig1, eig2, atol=1e-8 * np.abs(eig1).max())


class TestSweepAndCritical:
    def test_k_zero_entry_matches_baseline(self):
        ctx = study_context()
        sweep = sweep_gain(0.0, 0.2, 5, ctx)
        base = eigenvalues(ctx.model_at(0.0).a)
        assert np.allclose(np.sort_complex(sweep.spectra[0]),
                           np.sort_complex(base))

    def test_max_real_continuity(self):
        ctx = study_context()
        coarse = sweep_gain(0.0, 0.3, 7, ctx).max_real
        fine = sweep_gain(0.0, 0.3, 13, ctx).max_real
        assert np.allclose(coarse, fine[::2], atol=1e-9)
        steps = np.abs(np.diff(fine))
        assert steps.max() < 10 * np.median(steps) + 1.0

    def test_toy_model_analytic_critical_gain(self):
        """A(k) = [[-1 + k, 1], [0, -1]] crosses exactly at k = 1."""

        class ToyContext:
            def resolved_point(self, k):
                return None

            def model_at(self, k, op=None):
                class M:
                    a = np.array([[-1.0 + k, 1.0], [0.0, -1.0]])
                return M()

        kc = critical_gain(ToyContext(), 0.0, 2.0, coarse_steps=21)
        assert kc == pytest.approx(1.0, abs=1e-3)

    def test_study_critical_gain_near_reported(self):
        kc = critical_gain(study_context())
        assert kc is not None
        assert 0.15 <= kc <= 0.29

    def test_no_crossing_returns_none(self):
        ctx = study_context()
        assert critical_gain(ctx, 0.0, 0.05, coarse_steps=6) is None

    def test_loci_csv(self, tmp_path):
        sweep = sweep_gain(0.0, 0.1, 3, study_context())
        path = tmp_path / "loci.csv"
        sweep.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "k [ohm/A],index,real [1/s],imag [rad/s]"
        assert len(lines) == 1 + 3 * N_STATES

    def test_variant_report_covers_grid(self):
        rep = variant_report(study_context(), 0.0, 0.6)
        assert set(rep) == {(v, n) for v in ("verbatim", "standard")
                            for n in ("wf2", "wf")}


class TestNonlinearValidation:
    def test_ringdown_matches_dominant_eigenpair(self):
        ctx = study_context(variant="standard")
        k = 0.1
        model = ctx.model_at(k)
        dom = dominant_eigenpair(model, channel="i_f_q")
        t, hist = simulate_nonlinear_model(ctx, k, v_g_step_frac=0.01)
        sig, om = fit_ringdown(t, hist[:, STATE_LABELS.index("i_f_q")])
        assert om == pytest.approx(abs(dom.imag), rel=0.15)
        assert sig == pytest.approx(dom.real, rel=0.15)

    def test_linearization_error_second_order(self):
        ctx = study_context(variant="standard")
        k = 0.1
        ch = STATE_LABELS.index("i_f_q")
        t, h_ref = simulate_nonlinear_model(ctx, k, v_g_step_frac=1e-7,
                                            t_end=0.3)
        y0 = h_ref[:, ch] / 1e-7
        resid = {}
        for frac in (0.01, 0.005):
            _, h = simulate_nonlinear_model(ctx, k, v_g_step_frac=frac,
                                            t_end=0.3)
            resid[frac] = np.abs(h[:, ch] / frac - y0).max()
        assert resid[0.01] / resid[0.005] == pytest.approx(2.0, rel=0.1)

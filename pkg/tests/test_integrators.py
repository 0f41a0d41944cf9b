"""Time integration: schemes, energy ledger audits, analytic envelopes."""

import math

import numpy as np
import pytest

from cbflab.domain import (
    SpectralVelocityField,
    constant_field,
    make_domain,
    norms,
    random_field,
    zero_field,
)
from cbflab.integrators import (
    BlowupError,
    MismatchedTrajectoriesError,
    SolverConfig,
    continuity_gap,
    decay_envelope_check,
    energy_identity_residual,
    perturbation_envelope,
    solve,
    step_deterministic,
    uniform_estimates_check,
)
from cbflab.operators import PhysicalParameters, empirical_constants
from cbflab.stochastic import (
    ConjugationProcess,
    constant_forcing,
    periodic_forcing,
    sample_path,
    shift_path,
    weighted_forcing_integral,
    zero_forcing,
)
from cbflab.domain import single_mode_field


PARAMS_2D = PhysicalParameters(2, 1.0, 1.0, 1.0, 3.0)


def params_with_eps(eps, base=PARAMS_2D):
    return PhysicalParameters(base.d, base.mu, base.alpha, base.beta, base.r, eps)


class TestStepping:
    def test_exact_linear_factor_single_mode(self):
        dom = make_domain(2, math.pi, 16)
        u = single_mode_field(dom, [0, 1], amplitude=0.3)
        cfg = SolverConfig(dt=0.02, t_start=0.0, t_end=0.02, include_B=False, include_C=False)
        traj = solve("deterministic", u, cfg, PARAMS_2D, zero_forcing())
        factor = math.exp(-(PARAMS_2D.mu + PARAMS_2D.alpha) * 0.02)
        assert np.allclose(traj.states[-1].coeffs, factor * u.coeffs, rtol=1e-13)

    def test_zero_stays_zero(self):
        dom = make_domain(2, math.pi, 16)
        cfg = SolverConfig(dt=0.01, t_start=0.0, t_end=0.1)
        traj = solve("deterministic", zero_field(dom), cfg, PARAMS_2D, zero_forcing())
        assert all(np.all(s.coeffs == 0.0) for s in traj.states)

    def test_unforced_energy_monotone(self):
        dom = make_domain(2, math.pi, 24)
        u0 = random_field(dom, seed=1, amplitude=0.8)
        cfg = SolverConfig(dt=2e-3, t_start=0.0, t_end=1.0)
        traj = solve("deterministic", u0, cfg, PARAMS_2D, zero_forcing())
        assert np.all(np.diff(traj.ledger["h_sq"]) <= 1e-14)

    def test_gronwall_decay_oracle(self):
        # f = 0: |u(t)|^2 below the analytic envelope e^{-a t} |u0|^2
        dom = make_domain(2, math.pi, 16)
        u0 = random_field(dom, seed=2, amplitude=0.6)
        cfg = SolverConfig(dt=2e-3, t_start=0.0, t_end=2.0)
        traj = solve("deterministic", u0, cfg, PARAMS_2D, zero_forcing())
        led = traj.ledger
        env = led["h_sq"][0] * np.exp(-PARAMS_2D.alpha * (led["t"] - led["t"][0]))
        assert np.all(led["h_sq"] <= env * (1 + 1e-12))

    def test_decay_envelope_with_forcing(self):
        dom = make_domain(2, math.pi, 16)
        g = single_mode_field(dom, [1, 0], amplitude=0.4)
        prof = constant_forcing(g, delta=0.5)
        u0 = random_field(dom, seed=3, amplitude=0.5)
        cfg = SolverConfig(dt=2e-3, t_start=0.0, t_end=2.0)
        traj = solve("deterministic", u0, cfg, PARAMS_2D, prof)
        lhs, rhs = decay_envelope_check(traj)
        assert np.all(lhs <= rhs * (1 + 1e-9) + 1e-12)

    def test_conjugated_zero_intensity_bitwise(self):
        dom = make_domain(2, math.pi, 16)
        u0 = random_field(dom, seed=4, amplitude=0.5)
        cfg = SolverConfig(dt=2e-3, t_start=0.0, t_end=0.5)
        det = solve("deterministic", u0, cfg, PARAMS_2D, zero_forcing())
        path = sample_path(9, -2.0, 2.0, 2e-3)
        conj = solve("conjugated", u0, cfg, params_with_eps(0.0), zero_forcing(), path=path)
        for a, b in zip(det.states, conj.states):
            assert np.array_equal(a.coeffs, b.coeffs)

    def test_conjugated_weight_exponents(self):
        # one Euler step isolates the weights: z^(-1) on advection, z^(1-r) on damping
        dom = make_domain(2, math.pi, 16)
        u0 = random_field(dom, seed=5, amplitude=0.5)
        eps, r = 0.7, 3.0
        path = sample_path(10, -1.0, 1.0, 0.01)
        proc = ConjugationProcess(path, eps)
        t0, dt = 0.25, 0.01
        z = proc.value(t0)
        from cbflab.operators import bilinear_B, nonlinear_C
        from cbflab.domain import dealias_coeffs, project_coeffs

        cfg = SolverConfig(dt=dt, scheme="imex_euler", t_start=t0, t_end=t0 + dt)
        params = PhysicalParameters(2, 1.0, 1.0, 1.0, r, eps)
        got = solve("conjugated", u0, cfg, params, zero_forcing(), path=path).states[-1].coeffs
        lam = params.mu * dom.k_sq + params.alpha
        n_hat = -bilinear_B(u0, u0).coeffs / z - params.beta * z ** (1.0 - r) * nonlinear_C(u0, r).coeffs
        n_hat = project_coeffs(dom, dealias_coeffs(dom, n_hat))
        expect = np.exp(-lam * dt) * (u0.coeffs + dt * n_hat)
        assert np.allclose(got, expect, rtol=1e-12, atol=1e-16)

    def test_blowup_guard(self):
        dom = make_domain(2, math.pi, 16)
        u0 = random_field(dom, seed=6, amplitude=500.0)
        cfg = SolverConfig(dt=0.05, t_start=0.0, t_end=1.0)
        with pytest.raises(BlowupError):
            solve("deterministic", u0, cfg, PARAMS_2D, zero_forcing())

    def test_inadmissible_rejected(self):
        dom = make_domain(3, math.pi, 8)
        cfg = SolverConfig(dt=0.01, t_start=0.0, t_end=0.1)
        with pytest.raises(ValueError, match="inadmissible"):
            solve("deterministic", zero_field(dom),
                  cfg, PhysicalParameters(3, 1.0, 1.0, 1.0, 2.0), zero_forcing())

    def test_public_single_step(self):
        dom = make_domain(2, math.pi, 16)
        u = random_field(dom, seed=7, amplitude=0.3)
        u1, rhs = step_deterministic(u, 0.0, 1e-3, PARAMS_2D, zero_forcing())
        assert norms(u1).h_norm_sq < norms(u).h_norm_sq
        u2, _ = step_deterministic(u1, 1e-3, 1e-3, PARAMS_2D, zero_forcing(), prev_rhs=rhs)
        assert norms(u2).h_norm_sq < norms(u1).h_norm_sq


class TestStratonovich:
    def test_zero_intensity_matches_heun_deterministic(self):
        dom = make_domain(2, math.pi, 16)
        u0 = random_field(dom, seed=8, amplitude=0.4)
        path = sample_path(11, -1.0, 1.0, 1e-3)
        cfg = SolverConfig(dt=1e-3, scheme="heun_stratonovich", t_start=0.0, t_end=0.2)
        a = solve("stratonovich", u0, cfg, params_with_eps(0.0), zero_forcing(), path=path)
        flat = sample_path(12, -1.0, 1.0, 1e-3)
        b = solve("stratonovich", u0, cfg, params_with_eps(0.0), zero_forcing(), path=flat)
        assert np.array_equal(a.states[-1].coeffs, b.states[-1].coeffs)

    def test_pure_noise_heun_factor(self):
        # drift disabled: one step multiplies by 1 + e dW + (e dW)^2 / 2
        dom = make_domain(2, math.pi, 8)
        u0 = constant_field(dom, [0.5, 0.0])
        eps = 0.8
        path = sample_path(13, -1.0, 1.0, 0.01)
        dt = 0.01
        cfg = SolverConfig(dt=dt, scheme="heun_stratonovich", t_start=0.0, t_end=dt,
                           include_B=False, include_C=False, include_linear=False)
        out = solve("stratonovich", u0, cfg, params_with_eps(eps), zero_forcing(), path=path)
        dw = path.value(dt) - path.value(0.0)
        factor = 1.0 + eps * dw + 0.5 * (eps * dw) ** 2
        assert np.allclose(out.states[-1].coeffs, factor * u0.coeffs, rtol=1e-13)

    def test_pure_noise_converges_to_exponential(self):
        dom = make_domain(2, math.pi, 8)
        u0 = constant_field(dom, [0.5, 0.0])
        eps, T = 0.8, 0.5
        path = sample_path(14, -1.0, 1.0, 0.025)
        errs = []
        for dt in (0.025, 0.0125, 0.00625):
            cfg = SolverConfig(dt=dt, scheme="heun_stratonovich", t_start=0.0, t_end=T,
                               include_B=False, include_C=False, include_linear=False)
            out = solve("stratonovich", u0, cfg, params_with_eps(eps), zero_forcing(), path=path)
            exact = math.exp(eps * path.value(T)) * u0.coeffs
            errs.append(np.max(np.abs(out.states[-1].coeffs - exact)))
        assert errs[0] > errs[1] > errs[2]

    def test_scheme_system_pairing(self):
        dom = make_domain(2, math.pi, 8)
        path = sample_path(15, -1.0, 1.0, 0.01)
        cfg = SolverConfig(dt=0.01, scheme="heun_stratonovich", t_start=0.0, t_end=0.1)
        with pytest.raises(ValueError):
            solve("deterministic", zero_field(dom), cfg, PARAMS_2D, zero_forcing())
        cfg2 = SolverConfig(dt=0.01, t_start=0.0, t_end=0.1)
        with pytest.raises(ValueError):
            solve("stratonovich", zero_field(dom), cfg2, PARAMS_2D, zero_forcing(), path=path)


class TestEnergyIdentity:
    def test_zero_trajectory(self):
        dom = make_domain(2, math.pi, 16)
        cfg = SolverConfig(dt=0.01, t_start=0.0, t_end=0.2)
        traj = solve("deterministic", zero_field(dom), cfg, PARAMS_2D, zero_forcing())
        assert np.all(energy_identity_residual(traj) == 0.0)

    def test_linear_only_exact(self):
        dom = make_domain(2, math.pi, 32)
        u0 = random_field(dom, seed=9, amplitude=1.0)
        cfg = SolverConfig(dt=1e-3, t_start=0.0, t_end=0.5, include_B=False, include_C=False)
        traj = solve("deterministic", u0, cfg, PARAMS_2D, zero_forcing())
        res = energy_identity_residual(traj, quadrature="exact-linear")
        assert res.max() <= 1e-10
        # cross-check the endpoint against the closed-form decay per mode
        lam = PARAMS_2D.mu * dom.k_sq + PARAMS_2D.alpha
        exact = np.exp(-lam * 0.5) * u0.coeffs
        assert np.allclose(traj.states[-1].coeffs, exact, rtol=1e-12, atol=1e-18)

    def test_richardson_order(self):
        dom = make_domain(2, math.pi, 16)
        u0 = random_field(dom, seed=10, amplitude=0.8)
        res = []
        for dt in (2e-3, 1e-3):
            cfg = SolverConfig(dt=dt, t_start=0.0, t_end=0.5)
            traj = solve("deterministic", u0, cfg, PARAMS_2D, zero_forcing())
            res.append(energy_identity_residual(traj).max())
        assert math.log2(res[0] / res[1]) >= 1.8

    def test_conjugated_identity(self):
        dom = make_domain(2, math.pi, 16)
        u0 = random_field(dom, seed=11, amplitude=0.5)
        g = single_mode_field(dom, [1, 1], amplitude=0.3)
        prof = periodic_forcing(g, period=0.5, delta=0.5)
        path = sample_path(16, -1.0, 2.0, 1e-3)
        res = []
        for dt in (1e-3, 5e-4):
            cfg = SolverConfig(dt=dt, t_start=0.0, t_end=1.0)
            traj = solve("conjugated", u0, cfg, params_with_eps(0.5), prof, path=path)
            res.append(energy_identity_residual(traj).max())
        assert res[0] <= 2e-5
        # second-order decay once the path grid is resolved by the step
        assert res[0] / res[1] >= 3.0

    def test_stratonovich_unsupported(self):
        dom = make_domain(2, math.pi, 8)
        path = sample_path(17, -1.0, 1.0, 0.01)
        cfg = SolverConfig(dt=0.01, scheme="heun_stratonovich", t_start=0.0, t_end=0.05)
        traj = solve("stratonovich", zero_field(dom), cfg, params_with_eps(0.3),
                     zero_forcing(), path=path)
        with pytest.raises(ValueError, match="missing-ledger"):
            energy_identity_residual(traj)


class TestContinuityGap:
    def _pair(self, dom, params, path=None, eps=0.0, dt=2e-3, T=0.5, seed=20):
        cfg = SolverConfig(dt=dt, t_start=0.0, t_end=T, record_stride=10)
        u1 = random_field(dom, seed=seed, amplitude=0.4)
        u2 = random_field(dom, seed=seed + 1, amplitude=0.4)
        system = "conjugated" if path is not None else "deterministic"
        t1 = solve(system, u1, cfg, params, zero_forcing(), path=path)
        t2 = solve(system, u2, cfg, params, zero_forcing(), path=path)
        return t1, t2

    def test_identical_data_zero_gap(self):
        dom = make_domain(2, math.pi, 16)
        cfg = SolverConfig(dt=2e-3, t_start=0.0, t_end=0.2)
        u = random_field(dom, seed=21, amplitude=0.4)
        t1 = solve("deterministic", u, cfg, PARAMS_2D, zero_forcing())
        t2 = solve("deterministic", u.copy(), cfg, PARAMS_2D, zero_forcing())
        rep = continuity_gap(t1, t2, PARAMS_2D, c_l4=1.0)
        assert np.all(rep.gap_sq == 0.0)

    def test_2d_envelope(self):
        dom = make_domain(2, math.pi, 16)
        c_l4 = empirical_constants(dom, n_samples=16, seed=1)["c_l4"]
        t1, t2 = self._pair(dom, PARAMS_2D)
        rep = continuity_gap(t1, t2, PARAMS_2D, c_l4=c_l4)
        assert rep.case == "2d-gronwall"
        assert np.all(rep.gap_sq <= rep.envelope * (1 + 1e-6) + 1e-12)

    def test_3d_critical_monotone(self):
        dom = make_domain(3, math.pi, 8)
        params = PhysicalParameters(3, 1.0, 1.0, 0.6, 3.0)
        t1, t2 = self._pair(dom, params, seed=22)
        rep = continuity_gap(t1, t2, params)
        assert rep.case == "3d-critical"
        assert np.all(rep.gap_sq <= rep.gap_sq[0] * (1 + 1e-6))

    def test_3d_supercritical_envelope(self):
        dom = make_domain(3, math.pi, 8)
        params = PhysicalParameters(3, 1.0, 1.0, 1.0, 5.0)
        t1, t2 = self._pair(dom, params, seed=23)
        rep = continuity_gap(t1, t2, params)
        eta = 1.0 / (8.0 * params.beta * params.mu**2)
        expect = rep.gap_sq[0] * np.exp(2.0 * eta * (rep.times - rep.times[0]))
        assert np.allclose(rep.envelope, expect, rtol=1e-12)
        assert np.all(rep.gap_sq <= rep.envelope * (1 + 1e-6))

    def test_mismatch_detected(self):
        dom = make_domain(2, math.pi, 16)
        cfg1 = SolverConfig(dt=2e-3, t_start=0.0, t_end=0.2)
        cfg2 = SolverConfig(dt=1e-3, t_start=0.0, t_end=0.2)
        u = random_field(dom, seed=24, amplitude=0.3)
        t1 = solve("deterministic", u, cfg1, PARAMS_2D, zero_forcing())
        t2 = solve("deterministic", u, cfg2, PARAMS_2D, zero_forcing())
        with pytest.raises(MismatchedTrajectoriesError):
            continuity_gap(t1, t2, PARAMS_2D, c_l4=1.0)


class TestPerturbationEnvelope:
    def test_2d_gap_below_envelope(self):
        dom = make_domain(2, math.pi, 16)
        consts = empirical_constants(dom, n_samples=16, seed=2)
        g = single_mode_field(dom, [1, 1], amplitude=0.3)
        prof = periodic_forcing(g, period=0.5, delta=0.5)
        path = sample_path(30, -2.0, 2.0, 1e-3)
        u0 = random_field(dom, seed=31, amplitude=0.5)
        cfg = SolverConfig(dt=1e-3, t_start=0.0, t_end=0.5, record_stride=25)
        det = solve("deterministic", u0, cfg, PARAMS_2D, prof)
        conj = solve("conjugated", u0, cfg, params_with_eps(0.5), prof, path=path)
        rep = perturbation_envelope(det, conj, params_with_eps(0.5),
                                    c_l4=consts["c_l4"], c_b=consts["c_b"])
        assert np.all(rep.gap_sq <= rep.envelope)

    def test_gap_shrinks_with_intensity(self):
        dom = make_domain(2, math.pi, 16)
        path = sample_path(32, -2.0, 2.0, 2e-3)
        u0 = random_field(dom, seed=33, amplitude=0.5)
        cfg = SolverConfig(dt=2e-3, t_start=0.0, t_end=0.5, record_stride=10**9)
        det = solve("deterministic", u0, cfg, PARAMS_2D, zero_forcing())
        ends = []
        for eps in (0.5, 0.25, 0.125):
            conj = solve("conjugated", u0, cfg, params_with_eps(eps), zero_forcing(), path=path)
            gap = norms(SpectralVelocityField(
                dom, conj.states[-1].coeffs - det.states[-1].coeffs)).h_norm_sq
            ends.append(gap)
        assert ends[0] > ends[1] > ends[2]


class TestUniformEstimates:
    def test_pullback_triple(self):
        dom = make_domain(2, math.pi, 16)
        g = single_mode_field(dom, [0, 1], amplitude=0.4)
        prof = constant_forcing(g, delta=0.5)
        eps, tau, age = 0.5, 0.0, 6.0
        omega = sample_path(34, -70.0, 2.0, 2e-3)
        shifted = shift_path(omega, -tau)
        u0 = random_field(dom, seed=35, amplitude=1.0)
        cfg = SolverConfig(dt=2e-3, t_start=tau - age, t_end=tau)
        traj = solve("conjugated", u0, cfg, params_with_eps(eps), prof, path=shifted)
        past = weighted_forcing_integral(prof, tau - age, PARAMS_2D.alpha, "vprime",
                                         path=shifted, epsilon=eps)
        checks = uniform_estimates_check(traj, tau, past.value)
        assert checks["precondition"]
        for key in ("h", "grad", "damp"):
            lhs, rhs = checks[key]
            assert np.all(lhs <= rhs * (1 + 1e-6) + 1e-9), key


class TestTrajectoryReconstruction:
    def test_reconstruct_undoes_conjugation(self):
        dom = make_domain(2, math.pi, 16)
        u0 = random_field(dom, seed=40, amplitude=0.5)
        path = sample_path(41, -1.0, 1.0, 2e-3)
        eps = 0.6
        cfg = SolverConfig(dt=2e-3, t_start=0.0, t_end=0.3, record_stride=50)
        traj = solve("conjugated", u0, cfg, params_with_eps(eps), zero_forcing(), path=path)
        for i, t in enumerate(traj.times):
            z = math.exp(-eps * path.value(t))
            expect = traj.states[i].coeffs / z
            assert np.array_equal(traj.reconstruct_u(i).coeffs, expect)

    def test_deterministic_reconstruction_is_identity(self):
        dom = make_domain(2, math.pi, 16)
        u0 = random_field(dom, seed=42, amplitude=0.5)
        cfg = SolverConfig(dt=2e-3, t_start=0.0, t_end=0.1, record_stride=50)
        traj = solve("deterministic", u0, cfg, PARAMS_2D, zero_forcing())
        assert np.array_equal(traj.reconstruct_u(-1).coeffs, traj.states[-1].coeffs)

    def test_public_conjugated_step(self):
        from cbflab.integrators import step_conjugated

        dom = make_domain(2, math.pi, 16)
        u0 = random_field(dom, seed=43, amplitude=0.4)
        path = sample_path(44, -1.0, 1.0, 1e-3)
        proc = ConjugationProcess(path, 0.5)
        v1, rhs = step_conjugated(u0, 0.0, 1e-3, params_with_eps(0.5), zero_forcing(), proc)
        v2, _ = step_conjugated(v1, 1e-3, 1e-3, params_with_eps(0.5), zero_forcing(), proc,
                                prev_rhs=rhs)
        assert norms(v2).h_norm_sq < norms(u0).h_norm_sq

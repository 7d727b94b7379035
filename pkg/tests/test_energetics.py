import dataclasses
import math

import numpy as np
import pytest

from oscillon import coefficients as co
from oscillon import dynamics as dy
from oscillon import energetics as en
from oscillon import field as fd
from oscillon import potential as pt


def rstate(seed, profile, potential, level=5.0, n=32, t=0.0):
    rng = dy.philox_rng(seed, 0, 0)
    return dy.random_state(rng, 1, n, t, profile, potential, level)


class TestEnergy:
    def test_velocity_only(self, constant_profile, phi4_spec):
        v = fd.random_field(np.random.default_rng(0), 1, 16)
        z = fd.SpectralState(fd.zeros(1, 16), v, 0.0)
        got = en.energy(z, 0.0, 0.0, constant_profile, phi4_spec)
        assert got == pytest.approx(fd.h_norm(v, 0.0) ** 2, rel=1e-12)

    def test_velocity_scaling_quadratic(self, constant_profile, phi4_spec):
        v = fd.random_field(np.random.default_rng(1), 1, 16)
        z1 = fd.SpectralState(fd.zeros(1, 16), v, 0.0)
        z2 = fd.SpectralState(fd.zeros(1, 16), v * 2.0, 0.0)
        e1 = en.energy(z1, 0.0, 0.0, constant_profile, phi4_spec)
        e2 = en.energy(z2, 0.0, 0.0, constant_profile, phi4_spec)
        assert e2 == pytest.approx(4.0 * e1, rel=1e-12)

    def test_sine_state_frozen_value(self, constant_profile, phi4_spec):
        # plain a*sin(pi x): mu|u|_1^2 = a^2 pi^2/2, (2/q)||u||_4^4 = 3a^4/16,
        # |u|^2 = a^2/2 (independent quadrature oracle froze these)
        a = 0.7
        u = fd.unit_mode(1, 32, 1, a / np.sqrt(2))
        z = fd.SpectralState(u, fd.zeros(1, 32), 0.0)
        expect = a**2 * np.pi**2 / 2 + 3 * a**4 / 16 + a**2 / 2
        got = en.energy(z, 0.0, 0.0, constant_profile, phi4_spec)
        assert got == pytest.approx(expect, rel=1e-12)

    def test_higher_order_energy_uses_shifted_norms(self, constant_profile,
                                                    phi4_spec):
        u = fd.unit_mode(1, 16, 2, 0.3)
        v = fd.unit_mode(1, 16, 1, 0.5)
        z = fd.SpectralState(u, v, 0.0)
        lam2 = np.pi**2 * 4
        lam1 = np.pi**2
        uq = fd.lq_norm(u, 4) ** 4
        expect = lam2**2 * 0.09 + 0.5 * uq + lam2 * 0.09 + lam1 * 0.25
        got = en.energy(z, 0.0, 1.0, constant_profile, phi4_spec)
        assert got == pytest.approx(expect, rel=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_energy_norm_equivalence(self, seed, constant_profile, phi4_spec):
        # two-sided comparison between the energy and the square-sum norm
        # (lower direction carries the (q/2)^(2/q) factor of the q-term)
        z = rstate(seed, constant_profile, phi4_spec,
                   level=float(np.random.default_rng(seed).uniform(0.1, 30)))
        q = phi4_spec.q
        e = en.energy(z, 0.0, 0.0, constant_profile, phi4_spec)
        nrm2 = en.state_norm(z, 0.0, 0.0, constant_profile, q) ** 2
        assert e <= nrm2 + nrm2 ** (q / 2) + 1e-9
        assert nrm2 <= e + (q / 2) ** (2 / q) * e ** (2 / q) + 1e-9


class TestLambdaFunctional:
    def test_eps_zero_reduces_to_core(self, constant_profile, phi4_spec):
        z = rstate(1, constant_profile, phi4_spec)
        lam, _ = en.lambda_functional(z, 0.0, 0.0, constant_profile, phi4_spec)
        mu = 1.0
        expect = (mu * fd.h_norm(z.u, 1.0) ** 2 + fd.h_norm(z.v, 0.0) ** 2
                  + 2 * pt.potential_energy(phi4_spec, z.u))
        assert lam == pytest.approx(expect, rel=1e-12)

    def test_zero_state(self, constant_profile, phi4_spec):
        z = fd.zero_state(1, 16)
        lam, lam_star = en.lambda_functional(z, 0.0, 0.1, constant_profile,
                                             phi4_spec)
        assert lam == 0.0 and lam_star == 0.0

    @pytest.mark.parametrize("seed", range(25))
    def test_sandwich_bounds(self, seed, constant_profile, phi4_spec,
                             phi4_constants):
        # c1*E - 2*b1 <= L <= c2*E with eps at its cap
        rng = np.random.default_rng(seed)
        level = float(rng.uniform(0.01, 50.0))
        z = rstate(seed + 100, constant_profile, phi4_spec, level=level)
        eps = min(0.25, phi4_constants.b0 / 2.0)
        lam, _ = en.lambda_functional(z, 0.0, eps, constant_profile, phi4_spec)
        e = en.energy(z, 0.0, 0.0, constant_profile, phi4_spec)
        assert lam >= phi4_constants.c1 * e - 2 * phi4_constants.b1 - 1e-9
        assert lam <= phi4_constants.c2 * e + 1e-9


class TestDissipativeCheck:
    def test_passes_on_constant_scenario(self, constant_profile, phi4_spec,
                                         phi4_constants):
        spec = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=32)
        z = rstate(2, constant_profile, phi4_spec, level=10.0)
        res = dy.evolve(z, 0.0, 10.0, spec)
        rep = en.check_dissipative(res.trace, phi4_constants, constant_profile)
        assert rep.passed

    def test_zero_trajectory_trivially_passes(self, constant_profile,
                                              phi4_spec, phi4_constants):
        spec = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=16)
        res = dy.evolve(fd.zero_state(1, 16), 0.0, 2.0, spec)
        rep = en.check_dissipative(res.trace, phi4_constants, constant_profile)
        assert rep.passed

    def test_antidamping_fails(self, phi4_spec, phi4_constants):
        # flipping the sign of the damping injects energy: the check must fail
        anti = co.CoefficientProfile(
            omega=lambda t: -np.ones_like(np.asarray(t, dtype=float)),
            omega_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
            mu=lambda t: np.ones_like(np.asarray(t, dtype=float)),
            mu_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
            W=1.0, label="antidamped")
        spec = dy.EvolutionSpec(profile=anti, potential=phi4_spec, n=32)
        z = rstate(3, anti, phi4_spec, level=10.0)
        res = dy.evolve(z, 0.0, 10.0, spec)
        rep = en.check_dissipative(res.trace, phi4_constants, anti)
        assert not rep.passed
        assert "violated" in rep.detail


class TestEnergyBalance:
    def test_core_balance_along_trajectory(self, constant_profile, phi4_spec):
        # d/dt[core] + 2 omega |v|^2 - mu' |u|_1^2 = 0 in integrated form:
        # core(t) + 2*damping_integral(t) stays constant (mu' = 0 here) up to
        # the trapezoidal accumulation of the damping integral, which is
        # second order in dt; verify both the level and the convergence rate
        spec = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=32)
        z = rstate(4, constant_profile, phi4_spec, level=8.0)

        def deviation(spec_):
            res = dy.evolve(z, 0.0, 5.0, spec_)
            combo = res.trace.column("lambda") \
                + 2 * res.trace.column("damping_integral")
            return np.abs(combo - combo[0]).max() / abs(combo[0])

        dev = deviation(spec)
        assert dev < 1e-3
        fine = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=32, dt=dy.resolve_timestep(spec, 0, 5) / 8)
        assert deviation(fine) < dev / 30.0


class TestContinuousDependence:
    def test_identical_data(self, small_spec):
        z = rstate(5, small_spec.profile, small_spec.potential)
        pr = dy.evolve_pair(z, z, 0.0, 1.0, small_spec)
        rep = en.check_continuous_dependence(pr, q1=1.0)
        assert rep.passed

    def test_perturbation_envelope_and_linearity(self, small_spec):
        z = rstate(6, small_spec.profile, small_spec.potential)
        pert = fd.unit_mode(1, 32, 3, 1e-6)
        z2 = fd.SpectralState(z.u + pert, z.v, 0.0)
        z3 = fd.SpectralState(z.u + pert * 0.5, z.v, 0.0)
        pr = dy.evolve_pair(z, z2, 0.0, 4.0, small_spec)
        q1 = max(0.1, 1.5 * en.calibrate_dependence_rate([pr], small_spec.profile))
        pr_fresh = dy.evolve_pair(z, z3, 0.0, 4.0, small_spec)
        rep = en.check_continuous_dependence(pr_fresh, q1)
        assert rep.passed
        ratio = math.sqrt(pr_fresh.e_diff[-1] / pr.e_diff[-1])
        assert ratio == pytest.approx(0.5, abs=0.05)


class TestIntegrability:
    def test_zero_data(self, small_spec):
        res = dy.evolve(fd.zero_state(1, 32), 0.0, 10.0, small_spec)
        rep = en.check_integrability(res.trace, (0.0, 10.0), theta=0.0)
        assert rep.passed
        assert rep.constants_used["c"] == 0.0


class TestGronwall:
    def setup_method(self):
        self.t = np.linspace(0.0, 10.0, 2001)
        self.zero = np.zeros_like(self.t)

    def test_pure_decay(self):
        eps = 0.3
        phi = 3.0 * np.exp(-2 * eps * self.t)
        rep = en.gronwall_check(self.t, phi, self.zero, self.zero, eps,
                                F=0.1, G=1.0, beta=0.5)
        assert rep.passed
        assert rep.constants_used["Gamma_num"] == pytest.approx(1.0, abs=1e-9)
        assert rep.constants_used["Theta_num"] == 0.0

    def test_constant_forcing_saturates(self):
        eps, F = 0.3, 0.4
        phi = 3.0 * np.exp(-2 * eps * self.t) + F / (2 * eps) \
            * (1 - np.exp(-2 * eps * self.t))
        rep = en.gronwall_check(self.t, phi, np.full_like(self.t, F),
                                self.zero, eps, F=1.05 * F, G=1.0, beta=0.5)
        assert rep.passed
        assert rep.constants_used["Theta_num"] == pytest.approx(F / (2 * eps),
                                                                rel=0.01)

    def test_sublinear_g_term(self):
        eps = 0.3
        g = 0.2 / np.sqrt(self.t + 0.25)
        from scipy.integrate import cumulative_trapezoid
        G = 1.2 * float(np.trapezoid(g, self.t)) / (1 + 10**0.5)
        w = 2 * eps * self.t - np.concatenate([[0.0],
                                               cumulative_trapezoid(g, self.t)])
        phi = 0.95 * 3.0 * np.exp(-w)
        rep = en.gronwall_check(self.t, phi, self.zero, g, eps, F=0.01, G=G,
                                beta=0.5)
        assert rep.passed

    def test_hypothesis_violation_reported_separately(self):
        eps = 0.3
        phi = 3.0 * np.exp(-2 * eps * self.t)
        rep = en.gronwall_check(self.t, phi, np.full_like(self.t, 10.0),
                                self.zero, eps, F=0.5, G=1.0, beta=0.5)
        assert not rep.passed
        assert "hypotheses" in rep.detail


class TestHigherOrderFunctionals:
    def test_zero_remainder(self, constant_profile, phi4_spec):
        z = fd.zero_state(1, 16)
        u = rstate(7, constant_profile, phi4_spec, level=2.0, n=16)
        L1, L2, L3, ell = en.lambda3_functional(
            z, 0.0, 0.0, constant_profile, phi4_spec, u, u, eps=0.01)
        # with n = 0 and u = p the coupling pairs against zero
        assert L1 == 0.0 and L2 == 0.0 and L3 == 0.0
        assert ell == pytest.approx(0.25)

    def test_eta_exponent_rules(self):
        assert en.eta_exponent(0.0, 3.0) == pytest.approx(0.25)
        assert en.eta_exponent(0.9, 3.0) == pytest.approx(0.1)
        assert en.eta_exponent(0.0, 3.9) == pytest.approx(0.05)
        with pytest.raises(ValueError):
            en.eta_exponent(1.5, 3.0)

    def test_lambda3_sandwich_along_trajectory(self, small_spec,
                                               constant_profile, phi4_spec):
        # lower/upper control of L1 by the higher norms with a fitted offset
        rng = dy.philox_rng(8, 0, 0)
        z = dy.random_state(rng, 1, 32, 0.0, constant_profile, phi4_spec, 10.0)
        res = dy.evolve_decomposed(z, 0.0, 4.0, small_spec, sigma=0.0)
        tr = res.traces["n"]
        L1 = tr.column("lambda1")
        hi_u = tr.column("norm_u_higher") ** 2
        hi_v = tr.column("norm_v_higher") ** 2
        gap_low = 0.5 * hi_u + hi_v - L1
        gap_high = L1 - (2.0 * hi_u + hi_v)
        c_low = max(0.0, float(gap_low.max()))
        c_high = max(0.0, float(gap_high.max()))
        # offsets exist and are moderate at this energy level
        assert c_low < 50.0 and c_high < 50.0

    def test_lambda3_differential_inequality_integrated(self, small_spec):
        prof, pot = small_spec.profile, small_spec.potential
        rng = dy.philox_rng(9, 0, 0)
        z = dy.random_state(rng, 1, 32, 0.0, prof, pot, 10.0)
        res = dy.evolve_decomposed(z, 0.0, 6.0, small_spec, sigma=0.0)
        tr_n, tr_u, tr_p = res.traces["n"], res.traces["u"], res.traces["p"]
        times = tr_n.times
        eps = co.decay_rate(prof, times, 0.25)
        mu = np.asarray(prof.mu(times), dtype=float)
        du = tr_u.column("norm_v_0")
        dp = tr_p.column("norm_v_0")
        p1 = mu * tr_p.column("norm_u_1") ** 2
        factor_g = (1 + 1 / mu**4) * (du + dp + p1)
        factor_f = (1 + 1 / mu**6) * (1 + du + p1)
        c = en.fit_lambda3_constant(times, tr_n.column("lambda3"), factor_g,
                                    factor_f, eps)
        assert np.isfinite(c)
        # fitted on one trajectory, must transfer to a fresh one with margin
        z2 = dy.random_state(dy.philox_rng(10, 0, 0), 1, 32, 0.0, prof, pot, 10.0)
        res2 = dy.evolve_decomposed(z2, 0.0, 6.0, small_spec, sigma=0.0)
        tr_n2, tr_u2, tr_p2 = res2.traces["n"], res2.traces["u"], res2.traces["p"]
        mu2 = np.asarray(prof.mu(tr_n2.times), dtype=float)
        fg2 = (1 + 1 / mu2**4) * (tr_u2.column("norm_v_0")
                                  + tr_p2.column("norm_v_0")
                                  + mu2 * tr_p2.column("norm_u_1") ** 2)
        ff2 = (1 + 1 / mu2**6) * (1 + tr_u2.column("norm_v_0")
                                  + mu2 * tr_p2.column("norm_u_1") ** 2)
        c2 = en.fit_lambda3_constant(tr_n2.times, tr_n2.column("lambda3"),
                                     fg2, ff2, co.decay_rate(prof, tr_n2.times, 0.25))
        assert c2 <= 1.5 * c + 1e-6


class TestPsiFunctionals:
    def test_recorded_along_p_trajectory(self, constant_profile, phi4_spec):
        spec = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=16, variant="p_system")
        rng = dy.philox_rng(11, 0, 0)
        z = dy.random_state(rng, 1, 16, 0.0, constant_profile, phi4_spec, 5.0)
        P1, P2, P3 = en.psi_functionals(z, 0.0, 0.0, constant_profile,
                                        phi4_spec, eps=0.01)
        # P1 dominates the sigma-order norms up to the coupling term
        assert P3 == pytest.approx(P1 + 2 * 0.01 * P2, rel=1e-12)
        assert np.isfinite(P1) and np.isfinite(P2)


class TestTraceCsv:
    def test_roundtrip(self, small_spec, tmp_path):
        z = rstate(12, small_spec.profile, small_spec.potential)
        res = dy.evolve(z, 0.0, 1.0, small_spec)
        path = tmp_path / "trace.csv"
        res.trace.to_csv(path)
        back = en.EnergyTrace.from_csv(path)
        assert np.array_equal(back.times, res.trace.times)
        for name, col in res.trace.columns.items():
            assert np.array_equal(back.column(name), col), name

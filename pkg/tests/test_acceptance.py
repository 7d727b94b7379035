"""Acceptance suite: one test per top-level criterion, each printing a
PASS/FAIL line.  Tolerances are pinned here and nowhere else."""

import math
import time

import numpy as np
import pytest

from oscillon import attractor as at
from oscillon import coefficients as co
from oscillon import dynamics as dy
from oscillon import energetics as en
from oscillon import field as fd
from oscillon import fixture as fx
from oscillon import potential as pt


def _report(name: str, ok: bool, detail: str = ""):
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def lead_constants(phi4_spec):
    return pt.compute_constants(pt.shifted_lead(phi4_spec), W=1.0)


class TestConservativeLimit:
    def test_undamped_energy_drift(self, undamped_profile, phi4_spec):
        t0 = time.monotonic()
        spec = dy.EvolutionSpec(profile=undamped_profile, potential=phi4_spec,
                                n=64, dim=1, dt=1e-3, variant="full")
        z0 = fd.SpectralState(fd.unit_mode(1, 64, 1, 0.8), fd.zeros(1, 64), 0.0)
        res = dy.evolve(z0, 0.0, 10.0, spec)
        lam = res.trace.column("lambda")
        drift = float(np.abs(lam - lam[0]).max() / abs(lam[0]))
        elapsed = time.monotonic() - t0
        _report("conservative-limit", drift <= 1e-6 and elapsed < 10.0,
                f"drift={drift:.3g}, {elapsed:.1f}s")


class TestIntegratorOrder:
    def test_dt_halving_order(self, undamped_profile, phi4_spec):
        t0 = time.monotonic()
        w = math.pi
        T = 1.3
        errs = []
        for dt in (0.04, 0.02, 0.01):
            spec = dy.EvolutionSpec(profile=undamped_profile,
                                    potential=phi4_spec, n=2, dt=dt,
                                    variant="linear_test")
            z0 = fd.SpectralState(fd.unit_mode(1, 2, 1), fd.zeros(1, 2), 0.0)
            res = dy.evolve(z0, 0.0, T, spec, collect_trace=False)
            du = float(res.state.u.coeffs[0]) - math.cos(w * T)
            dv = float(res.state.v.coeffs[0]) + w * math.sin(w * T)
            errs.append(math.hypot(du, dv / w))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        elapsed = time.monotonic() - t0
        ok = bool(np.all(np.abs(orders - 4.0) <= 0.3)) and elapsed < 10.0
        _report("integrator-order", ok,
                f"orders={[round(float(o), 2) for o in orders]}, {elapsed:.1f}s")


class TestDissipativeEstimate:
    SCENARIOS = [("constant", {}, (0.0, 20.0)),
                 ("exponential_expansion", {"H": 0.5}, (0.0, 20.0)),
                 ("vanishing_damping", {}, (0.0, 20.0)),
                 ("oscillating_mu", {}, (-20.0, 0.0))]

    def test_envelope_80_runs(self, phi4_spec):
        t0 = time.monotonic()
        failures = []
        worst = np.inf
        for name, kw, (s, t) in self.SCENARIOS:
            profile = co.scenario(name, **kw)
            constants = pt.compute_constants(phi4_spec, W=profile.W)
            spec = dy.EvolutionSpec(profile=profile, potential=phi4_spec,
                                    n=64, dim=1)
            for j in range(20):
                rng = dy.philox_rng(100, hash(name) % 1000, j)
                z = dy.random_state(rng, 1, 64, s, profile, phi4_spec, 10.0)
                res = dy.evolve(z, s, t, spec)
                rep = en.check_dissipative(res.trace, constants, profile,
                                           slack=0.05)
                worst = min(worst, rep.margin)
                if not rep.passed:
                    failures.append((name, j, rep.margin))
        elapsed = time.monotonic() - t0
        _report("dissipative-estimate",
                not failures and elapsed < 300.0,
                f"80 runs, min margin={worst:.3g}, {elapsed:.0f}s")


class TestAbsorberEnteringTime:
    def test_trajectories_enter_by_t0(self, constant_profile, phi4_spec,
                                      phi4_constants):
        t0c = time.monotonic()
        R = 10.0
        target = 0.0
        start = at.entering_time(target, R, phi4_constants, constant_profile)
        level = at.absorber_radius(phi4_constants) * 1.05
        spec = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=32, dim=1)
        worst = 0.0
        for j in range(20):
            rng = dy.philox_rng(200, 0, j)
            z = dy.random_state(rng, 1, 32, start, constant_profile,
                                phi4_spec, R * float(rng.uniform(0.2, 1.0)))
            res = dy.evolve(z, start, target, spec, collect_trace=False)
            worst = max(worst, en.energy(res.state, target, 0.0,
                                         constant_profile, phi4_spec))
        elapsed = time.monotonic() - t0c
        _report("absorber-entering-time",
                worst <= level and elapsed < 60.0,
                f"start={start:.1f}, worst E={worst:.3g} <= {level:.3g}, "
                f"{elapsed:.0f}s")


class TestDecompositionIdentity:
    def test_identity_along_10_trajectories(self, constant_profile, phi4_spec,
                                            phi4_constants):
        spec = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=32, dim=1)
        level = at.absorber_radius(phi4_constants)
        worst = 0.0
        for j in range(10):
            rng = dy.philox_rng(300, 0, j)
            z = dy.random_state(rng, 1, 32, 0.0, constant_profile, phi4_spec,
                                level * float(rng.uniform(0.2, 1.0)))
            res = dy.evolve_decomposed(z, 0.0, 5.0, spec)
            worst = max(worst, res.identity_rel_err)
        _report("decomposition-identity", worst <= 1e-9,
                f"max rel err={worst:.3g}")


class TestPDecay:
    def test_envelope_20_trajectories(self, constant_profile, phi4_spec,
                                      phi4_constants, lead_constants):
        t0c = time.monotonic()
        radius = at.absorber_radius(phi4_constants)
        c1t = lead_constants.c1
        spec = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=32, dim=1)

        def p_trace(stream, j):
            rng = dy.philox_rng(400, stream, j)
            z = dy.random_state(rng, 1, 32, 0.0, constant_profile, phi4_spec,
                                radius * float(rng.uniform(0.25, 1.0)))
            return dy.evolve_decomposed(z, 0.0, 10.0, spec).traces["p"]

        # calibrate the envelope prefactor on a separate stream
        K2 = 0.0
        for j in range(6):
            tr = p_trace(1, j)
            eps = co.decay_rate(constant_profile, tr.times, c1t)
            K2 = max(K2, float((tr.column("E_X") * np.exp(eps * tr.times)).max())
                     / radius)
        K2 *= 1.5

        margins = []
        for j in range(20):
            tr = p_trace(2, j)
            rep = en.check_p_decay(tr, 0.0, K2, radius, constant_profile, c1t)
            margins.append(rep.margin)
        elapsed = time.monotonic() - t0c
        _report("p-decay", all(m >= -0.05 for m in margins),
                f"K2={K2:.3g}, min margin={min(margins):.3g}, {elapsed:.0f}s")


class TestIntegrability:
    def test_uniform_bound_for_decreasing_speed(self, constant_profile,
                                                phi4_spec):
        ok = True
        details = []
        for name, kw in (("constant", {}), ("exponential_expansion",
                                            {"H": 0.5})):
            profile = co.scenario(name, **kw)
            spec = dy.EvolutionSpec(profile=profile, potential=phi4_spec,
                                    n=32, dim=1)
            rng = dy.philox_rng(500, 0, 0)
            z = dy.random_state(rng, 1, 32, 0.0, profile, phi4_spec, 10.0)
            res = dy.evolve(z, 0.0, 40.0, spec)
            rep = en.check_integrability(res.trace, (0.0, 40.0), theta=0.0)
            ok = ok and rep.passed
            details.append(f"{name}: theta_hat="
                           f"{rep.constants_used['theta_measured']:.3g}")
        _report("integrability-decreasing", ok, "; ".join(details))

    def test_sublinear_growth_for_oscillating_speed(self, phi4_spec):
        profile = co.scenario("oscillating_mu")
        theta = (1 + profile.meta["growth_theta"]) / 2
        spec = dy.EvolutionSpec(profile=profile, potential=phi4_spec, n=32,
                                dim=1)
        rng = dy.philox_rng(501, 0, 0)
        z = dy.random_state(rng, 1, 32, -45.0, profile, phi4_spec, 10.0)
        res = dy.evolve(z, -45.0, 15.0, spec)
        rep = en.check_integrability(res.trace, (-45.0, 15.0), theta=theta)
        _report("integrability-oscillating", rep.passed,
                f"theta_hat={rep.constants_used['theta_measured']:.3g} "
                f"<= {theta + 0.1:.3g}")


class TestPullbackConvergence:
    def test_scalar_fixture_closed_form(self):
        worst = 0.0
        for s in (-2.0, -4.0, -8.0):
            got = fx.pullback_semidistance(0.0, s)
            worst = max(worst, abs(got - math.exp(s)))
        _report("pullback-fixture", worst <= 1e-10, f"max err={worst:.2g}")

    def test_receding_clouds_monotone(self, constant_profile, phi4_spec):
        t0c = time.monotonic()
        spec = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=32, dim=1)
        t = 0.0
        clouds = [at.pullback_cloud(t, [s], 16, 10.0, spec, seed=600 + i)
                  for i, s in enumerate((t - 2.0, t - 4.0, t - 8.0))]
        d1 = at.hausdorff_semidist(clouds[0], clouds[1], spec)
        d2 = at.hausdorff_semidist(clouds[1], clouds[2], spec)
        elapsed = time.monotonic() - t0c
        _report("pullback-convergence", d2 <= d1 * 1.1 + 1e-12,
                f"d(C1,C2)={d1:.3g} >= d(C2,C3)={d2:.3g} (10% floor), "
                f"{elapsed:.0f}s")


class TestBoxCountingSanity:
    def test_known_dimensions(self, small_spec):
        t0c = time.monotonic()
        prof, pot = small_spec.profile, small_spec.potential
        rng = dy.philox_rng(700, 0, 0)
        e1 = dy.random_state(rng, 1, 32, 0.0, prof, pot, 1.0)
        e2 = dy.random_state(rng, 1, 32, 0.0, prof, pot, 1.0)

        xs = np.random.default_rng(1).uniform(0, 1, 1000)
        segment = at.PointCloud(0.0, [e1.scaled(float(x)) for x in xs])
        fit_seg = at.box_dimension(segment, small_spec,
                                   at.default_ladder(segment, small_spec))

        g = np.linspace(0, 1, 32)
        plane = at.PointCloud(0.0, [
            fd.SpectralState(e1.u * (0.5 * x) + e2.u * (0.5 * y),
                             e1.v * (0.5 * x) + e2.v * (0.5 * y), 0.0)
            for x in g for y in g])
        fit_pl = at.box_dimension(plane, small_spec,
                                  at.default_ladder(plane, small_spec))

        single = at.PointCloud(0.0, [e1])
        fit_pt = at.box_dimension(single, small_spec,
                                  np.geomspace(1.0, 0.01, 6))
        elapsed = time.monotonic() - t0c
        ok = (abs(fit_seg.slope - 1.0) <= 0.15 and
              abs(fit_pl.slope - 2.0) <= 0.2 and
              fit_pt.slope == 0.0 and elapsed < 30.0)
        _report("box-counting-sanity", ok,
                f"segment={fit_seg.slope:.2f}, plane={fit_pl.slope:.2f}, "
                f"point={fit_pt.slope:.2f}, {elapsed:.0f}s")


class TestSqueezing:
    def test_decay_envelope_and_quarter_contraction(self, constant_profile,
                                                    phi4_spec, phi4_constants):
        t0c = time.monotonic()
        spec = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=32, dim=1)
        section = at.kernel_section(0.0, 6.0, 25, spec, phi4_constants,
                                    seed=800)
        result = at.squeezing_check(section, 6.0, spec, phi4_constants,
                                    n_pairs=50, seed=801)
        elapsed = time.monotonic() - t0c
        ok = (result.report_decay.passed and result.t_star_quarter is not None
              and result.contraction_at_t_star < 0.25)
        _report("squeezing-sp1", ok,
                f"C={result.C_decay:.3g}, t*={result.t_star_quarter}, "
                f"contraction={result.contraction_at_t_star:.3g}, "
                f"{elapsed:.0f}s")

    def test_smoothing_envelope(self, constant_profile, phi4_spec,
                                phi4_constants):
        spec = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=32, dim=1)
        section = at.kernel_section(0.0, 6.0, 12, spec, phi4_constants,
                                    seed=802)
        result = at.squeezing_check(section, 4.0, spec, phi4_constants,
                                    n_pairs=12, seed=803)
        _report("squeezing-sp2", result.report_smoothing.passed,
                f"F={result.F_envelope:.3g}, margin="
                f"{result.report_smoothing.margin:.3g}")


class TestAssumptionCheckers:
    def test_three_exact_verdicts(self, phi4_spec):
        ones = lambda t: np.ones_like(np.asarray(t, dtype=float))
        zeros = lambda t: np.zeros_like(np.asarray(t, dtype=float))

        expanding = co.scenario("exponential_expansion", H=0.5)
        m1 = co.check_m1(expanding, (-10.0, 10.0), c1=0.25)
        m2 = co.check_m2(expanding, (-10.0, 10.0))
        m3 = co.check_m3(expanding, 10.0)
        ok_a = (m1.passed and m2.passed and m3.passed
                and m2.C == 0.0 and m2.theta == 0.0)

        inverse_peak = co.scenario(
            "custom", omega=ones, omega_prime=zeros,
            mu=lambda t: 1.0 / (1.0 + np.asarray(t, dtype=float) ** 2),
            mu_prime=lambda t: -2.0 * np.asarray(t, dtype=float)
            / (1.0 + np.asarray(t, dtype=float) ** 2) ** 2, W=1.0)
        ok_b = not co.check_m3(inverse_peak, 0.0).passed

        runaway = co.scenario(
            "custom", omega=ones, omega_prime=zeros,
            mu=lambda t: np.exp(3.0 * np.asarray(t, dtype=float)),
            mu_prime=lambda t: 3.0 * np.exp(3.0 * np.asarray(t, dtype=float)),
            W=1.0,
            alpha=lambda t: np.full_like(np.asarray(t, dtype=float), 1 / 32))
        ok_c = not co.check_m1(runaway, (-5.0, 5.0), c1=1.0).passed

        _report("assumption-checkers", ok_a and ok_b and ok_c,
                f"expanding pass={ok_a}, inverse-square fails M3={ok_b}, "
                f"exponential growth fails M1={ok_c}")


class TestSmoke3D:
    def test_3d_run_with_dissipative_check(self, constant_profile, phi4_spec,
                                           phi4_constants):
        t0c = time.monotonic()
        spec = dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                                n=16, dim=3)
        rng = dy.philox_rng(900, 0, 0)
        z = dy.random_state(rng, 3, 16, 0.0, constant_profile, phi4_spec, 10.0)
        res = dy.evolve(z, 0.0, 2.0, spec)
        rep = en.check_dissipative(res.trace, phi4_constants, constant_profile,
                                   slack=0.05)
        elapsed = time.monotonic() - t0c
        _report("3d-smoke", rep.passed and elapsed < 300.0,
                f"margin={rep.margin:.3g}, {elapsed:.0f}s")

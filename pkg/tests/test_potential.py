import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscillon import field as fd
from oscillon import potential as pt


class TestPhi4:
    def test_growth_constants_certified(self, phi4_spec):
        assert phi4_spec.q == 4.0
        assert (phi4_spec.a0, phi4_spec.a1, phi4_spec.a2, phi4_spec.a3) \
            == (3.0, 1.0, 3.0, 0.0)
        assert pt.check_h1(phi4_spec).passed

    def test_force_is_potential_gradient(self, phi4_spec):
        y = np.linspace(-8, 8, 4001)
        h = 1e-6
        num = (phi4_spec.V(y + h) - phi4_spec.V(y - h)) / (2 * h)
        scale = np.abs(phi4_spec.phi(y)).max()
        assert np.abs(num - phi4_spec.phi(y)).max() / scale < 1e-6

    def test_split_consistency(self, phi4_spec):
        y = np.linspace(-10, 10, 2001)
        gap = phi4_spec.phi_lead(y) + phi4_spec.psi_rest(y) - phi4_spec.phi(y)
        assert np.abs(gap).max() < 1e-12

    def test_split_growth_bounds(self, phi4_spec):
        y = np.linspace(-10, 10, 2001)
        assert np.all(phi4_spec.phi_lead_prime(y) >= phi4_spec.a0_tilde * y**2 - 1e-12)
        assert np.all(np.abs(phi4_spec.phi_lead_second(y)) <= 6 * (1 + np.abs(y)))
        gamma = phi4_spec.gamma
        assert np.all(np.abs(phi4_spec.psi_rest_prime(y))
                      <= phi4_spec.c_tilde * (1 + np.abs(y) ** (gamma - 2)))

    def test_vanishes_at_origin(self, phi4_spec):
        assert phi4_spec.phi(np.array(0.0)) == 0.0
        assert phi4_spec.V(np.array(0.0)) == 0.0


class TestH1Check:
    def test_linear_force_with_quartic_claim_fails(self):
        bad = dataclasses.replace(pt.quadratic(), q=4.0)
        rep = pt.check_h1(bad)
        assert not rep.passed and rep.witness_y is not None

    def test_zero_force_fails_lower_bound(self):
        z = lambda y: np.zeros_like(np.asarray(y, dtype=float))
        bad = pt.PotentialSpec("zero", z, z, z, z, a0=1.0, a1=0.0, a2=1.0,
                               a3=0.0, q=4.0)
        rep = pt.check_h1(bad)
        assert not rep.passed and "lower" in rep.detail

    def test_sublinear_needs_margin(self):
        with pytest.raises(ValueError, match="a0 > a1"):
            dataclasses.replace(pt.quadratic(), a1=2.0)


class TestConstants:
    def test_offset_closed_form(self, phi4_spec):
        assert pt.lower_offset(phi4_spec) == pytest.approx(1 / 12)

    def test_zero_offsets_when_a1_zero(self):
        cst = pt.compute_constants(pt.quadratic(), W=1.0)
        assert cst.c0 == 0.0 and cst.b1 == 0.0 and cst.K1 == 0.0

    def test_lead_potential_constants(self, phi4_spec):
        lead = pt.shifted_lead(phi4_spec)
        assert pt.check_h1(lead).passed
        cst = pt.compute_constants(lead, W=1.0)
        assert cst.b1 == 0.0 and cst.K1 == 0.0
        assert cst.b0 == pytest.approx(0.25, abs=0.13)
        assert cst.c1 == pytest.approx(0.5, abs=0.26)

    def test_c1_formula(self, phi4_constants):
        assert phi4_constants.c1 == pytest.approx(
            min(4.0 * phi4_constants.b0, 1.0) / 2.0)

    def test_k_constants(self, phi4_constants):
        c = phi4_constants
        assert c.K0 == pytest.approx(c.c2 / c.c1)
        assert c.K1 == pytest.approx(8 * (c.c0 + c.b1) / c.c1)
        assert c.K1 > 0  # a1 = 1 for the double well

    def test_k1_monotone_in_offsets(self, phi4_constants):
        c = phi4_constants
        bumped = dataclasses.replace(c, c0=c.c0 + 1.0)
        assert 8 * (bumped.c0 + bumped.b1) / bumped.c1 > c.K1

    def test_envelope_certified(self, phi4_spec, phi4_constants):
        # b-constants must actually bound V between the envelope curves
        y = np.linspace(-30, 30, 10001)
        V = phi4_spec.V(y)
        lower = phi4_constants.b0 * (np.abs(y) ** 4 + y**2) - phi4_constants.b1
        upper = phi4_constants.b2 * (np.abs(y) ** 4 + y**2)
        assert np.all(V >= lower - 1e-9)
        assert np.all(V <= upper + 1e-9)


class TestPotentialEnergy:
    def test_zero_field(self, phi4_spec):
        assert pt.potential_energy(phi4_spec, fd.zeros(1, 16)) == 0.0

    def test_sine_profile_value(self, phi4_spec):
        # integral of V(sin(pi x)) = (1/4)(3/8) - (1/2)(1/2) = -5/32
        u = fd.unit_mode(1, 16, 1, 1 / np.sqrt(2))
        assert pt.potential_energy(phi4_spec, u) == pytest.approx(-5 / 32, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_envelope_on_random_fields(self, phi4_spec, phi4_constants, seed):
        rng = np.random.default_rng(seed)
        u = fd.random_field(rng, 1, 24) * float(rng.uniform(0.1, 3.0))
        val = pt.potential_energy(phi4_spec, u)
        uq = fd.lq_norm(u, 4) ** 4
        u2 = fd.h_norm(u, 0.0) ** 2
        assert val >= phi4_constants.b0 * (uq + u2) - phi4_constants.b1 - 1e-9
        assert val <= phi4_constants.b2 * (uq + u2) + 1e-9


class TestPolynomial:
    def test_double_well_coefficients(self):
        spec = pt.polynomial([0.0, -1.0, 0.0, 1.0])
        assert spec.q == 4.0
        assert pt.check_h1(spec).passed
        y = np.linspace(-4, 4, 101)
        assert np.allclose(spec.phi(y), y**3 - y)

    def test_rejects_nonvanishing_force_at_origin(self):
        with pytest.raises(ValueError):
            pt.polynomial([1.0, 1.0])

    def test_rejects_wrong_sign_leading_term(self):
        with pytest.raises(ValueError):
            pt.polynomial([0.0, 1.0, 0.0, -1.0])

    def test_named_lookup(self):
        assert pt.named_potential("phi4").label == "phi4"
        assert pt.named_potential("quadratic").q == 2.0
        with pytest.raises(ValueError):
            pt.named_potential("cosine")

"""Nonlinear potentials with certified polynomial growth bounds.

A potential spec carries ``V``, its derivative ``phi = V'`` (the force entering
the wave equation), second/third derivatives, the two-sided growth constants
``a0..a3`` with exponent ``q in [2,4]``, and, in the critical case ``q = 4``,
a splitting ``phi = phi_lead + psi_rest`` into a coercive leading part and a
lower-order remainder.  From these the constants driving every energy
estimate (``b0..b2, c0, c1, c2, K0, K1``) are derived and certified
numerically rather than trusted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import field as fd

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PotentialSpec:
    label: str
    V: Fn
    phi: Fn
    phi_prime: Fn
    phi_second: Fn
    a0: float
    a1: float
    a2: float
    a3: float
    q: float
    # critical-case splitting phi = phi_lead + psi_rest (None below q=4)
    phi_lead: Optional[Fn] = None
    phi_lead_prime: Optional[Fn] = None
    phi_lead_second: Optional[Fn] = None
    psi_rest: Optional[Fn] = None
    psi_rest_prime: Optional[Fn] = None
    a0_tilde: float | None = None
    gamma: float | None = None
    c_tilde: float | None = None

    def __post_init__(self):
        if not (2.0 <= self.q <= 4.0):
            raise ValueError("growth exponent q must lie in [2, 4]")
        if self.a0 <= 0 or self.a2 <= 0 or self.a1 < 0 or self.a3 < 0:
            raise ValueError("need a0, a2 > 0 and a1, a3 >= 0")
        if self.q == 2.0 and self.a0 <= self.a1:
            raise ValueError("sublinear case q=2 requires a0 > a1")
        if self.gamma is not None and not (2.0 < self.gamma < 4.0):
            raise ValueError("gamma must lie in (2, 4)")

    @property
    def has_split(self) -> bool:
        return self.phi_lead is not None


@dataclass(frozen=True)
class PotentialConstants:
    """Constants extracted from the growth bounds; see ``compute_constants``."""

    b0: float
    b1: float
    b2: float
    c0: float
    c1: float
    c2: float
    K0: float
    K1: float
    W: float
    domain_volume: float

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("b0", "b1", "b2", "c0", "c1", "c2", "K0", "K1", "W",
                 "domain_volume")}


@dataclass
class GrowthCheck:
    passed: bool
    witness_y: float | None = None
    witness_gap: float | None = None
    detail: str = ""

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"


# ---------------------------------------------------------------------------
# Built-in potentials
# ---------------------------------------------------------------------------

def phi4(gamma: float = 3.0) -> PotentialSpec:
    """Double-well quartic: force ``y^3 - y``, split into ``y^3`` and ``-y``."""
    return PotentialSpec(
        label="phi4",
        V=lambda y: 0.25 * y**4 - 0.5 * y**2,
        phi=lambda y: y**3 - y,
        phi_prime=lambda y: 3.0 * y**2 - 1.0,
        phi_second=lambda y: 6.0 * y,
        a0=3.0, a1=1.0, a2=3.0, a3=0.0, q=4.0,
        phi_lead=lambda y: y**3,
        phi_lead_prime=lambda y: 3.0 * y**2,
        phi_lead_second=lambda y: 6.0 * y,
        psi_rest=lambda y: -y,
        psi_rest_prime=lambda y: -np.ones_like(np.asarray(y, dtype=float)),
        a0_tilde=3.0, gamma=gamma, c_tilde=1.0,
    )


def quadratic() -> PotentialSpec:
    """Linear force ``phi(y) = y`` (sublinear case ``q = 2``)."""
    one = lambda y: np.ones_like(np.asarray(y, dtype=float))
    zero = lambda y: np.zeros_like(np.asarray(y, dtype=float))
    return PotentialSpec(
        label="quadratic",
        V=lambda y: 0.5 * y**2,
        phi=lambda y: np.asarray(y, dtype=float),
        phi_prime=one, phi_second=zero,
        a0=1.0, a1=0.0, a2=1.0, a3=0.0, q=2.0,
    )


def shifted_lead(spec: PotentialSpec) -> PotentialSpec:
    """Potential of the decaying component system: force ``2y + phi_lead(y)``.

    Its growth bounds hold with vanishing lower offset, and the resulting
    potential dominates ``y^2 + a0_tilde/12 * y^4``, so all derived offsets
    (``c0, b1, K1``) are zero.
    """
    if not spec.has_split:
        raise ValueError("potential has no leading/remainder splitting")
    lead, lead_p, lead_pp = spec.phi_lead, spec.phi_lead_prime, spec.phi_lead_second
    a0t = spec.a0_tilde
    return PotentialSpec(
        label=f"{spec.label}-lead",
        V=lambda y: np.asarray(y, dtype=float) ** 2 + _lead_antideriv(spec, y),
        phi=lambda y: 2.0 * np.asarray(y, dtype=float) + lead(y),
        phi_prime=lambda y: 2.0 + lead_p(y),
        phi_second=lead_pp,
        a0=a0t, a1=0.0, a2=spec.a2 + 2.0, a3=spec.a3 + 2.0, q=4.0,
    )


def _lead_antideriv(spec: PotentialSpec, y):
    """Antiderivative of the leading force part, vanishing at 0.

    Built-in leads are pure cubics ``c y^3``; general leads fall back to
    series quadrature on a fixed fine grid.
    """
    y = np.asarray(y, dtype=float)
    c = float(spec.phi_lead(np.array(1.0)))  # cubic lead: phi_lead(1) = c
    probe = spec.phi_lead(np.array([0.5, 2.0]))
    if np.allclose(probe, c * np.array([0.5, 2.0]) ** 3, rtol=1e-12, atol=1e-12):
        return 0.25 * c * y**4
    # non-cubic lead: Simpson quadrature of phi_lead from 0 to y
    out = np.empty_like(y)
    flat = y.ravel()
    for i, yi in enumerate(flat):
        s = np.linspace(0.0, yi, 201)
        out.ravel()[i] = np.trapz(spec.phi_lead(s), s)
    return out


def polynomial(phi_coeffs: list[float], gamma: float = 3.0,
               y_range: float = 50.0) -> PotentialSpec:
    """Potential from ascending force coefficients ``phi(y) = sum c_k y^k``.

    The constant term must vanish; degree at most 3 with positive leading
    coefficient.  Growth constants are fitted on ``[-y_range, y_range]`` and
    certified by ``check_h1``.
    """
    c = np.asarray(phi_coeffs, dtype=float)
    if c.size == 0 or c[0] != 0.0:
        raise ValueError("force must vanish at 0 (first coefficient 0)")
    if c.size > 4:
        raise ValueError("force degree above cubic is outside the supported range")
    deg = int(np.max(np.nonzero(c)[0])) if np.any(c) else 0
    if deg == 0:
        raise ValueError("zero force is not a dissipative potential")
    if c[deg] <= 0:
        raise ValueError("leading force coefficient must be positive")
    if deg == 2:
        raise ValueError("even-degree leading term is not coercive")

    poly = np.polynomial.Polynomial(c)
    dpoly = poly.deriv()
    d2poly = dpoly.deriv()
    Vpoly = poly.integ(lbnd=0.0)
    q = float(deg + 1)

    # fit growth constants: a0 from the leading coefficient, offsets from a
    # dense scan (closed-form extrema would do, the scan is simpler)
    y = np.linspace(-y_range, y_range, 200001)
    dp = dpoly(y)
    if deg == 3:
        a0 = 1.5 * c[3]
        a2 = 4.5 * c[3]
    else:  # deg == 1, q == 2
        a0 = c[1]
        a2 = c[1]
    a1 = float(max(0.0, np.max(a0 * np.abs(y) ** (q - 2.0) - dp)))
    a3 = float(max(0.0, np.max(dp - a2 * np.abs(y) ** (q - 2.0))))

    kwargs = {}
    if q == 4.0:
        lead_c = float(c[3])
        rest = np.polynomial.Polynomial(np.array([0.0, c[1], c[2] if c.size > 2 else 0.0]))
        kwargs = dict(
            phi_lead=lambda z: lead_c * np.asarray(z, dtype=float) ** 3,
            phi_lead_prime=lambda z: 3.0 * lead_c * np.asarray(z, dtype=float) ** 2,
            phi_lead_second=lambda z: 6.0 * lead_c * np.asarray(z, dtype=float),
            psi_rest=lambda z: rest(np.asarray(z, dtype=float)),
            psi_rest_prime=lambda z: rest.deriv()(np.asarray(z, dtype=float)),
            a0_tilde=3.0 * lead_c, gamma=gamma,
            c_tilde=float(max(1.0, np.max(np.abs(rest.deriv()(y))
                                          / (1.0 + np.abs(y) ** (gamma - 2.0))))),
        )
    spec = PotentialSpec(
        label="polynomial", V=lambda z: Vpoly(np.asarray(z, dtype=float)),
        phi=lambda z: poly(np.asarray(z, dtype=float)),
        phi_prime=lambda z: dpoly(np.asarray(z, dtype=float)),
        phi_second=lambda z: d2poly(np.asarray(z, dtype=float)),
        a0=float(a0), a1=a1, a2=float(a2), a3=a3, q=q, **kwargs)
    chk = check_h1(spec, (-y_range, y_range))
    if not chk.passed:
        raise ValueError(f"fitted growth constants fail certification: {chk.detail}")
    return spec


def named_potential(name: str, **params) -> PotentialSpec:
    if name == "phi4":
        return phi4(gamma=float(params.get("gamma", 3.0)))
    if name == "quadratic":
        return quadratic()
    if name == "custom":
        return polynomial(params["phi_coeffs"], gamma=float(params.get("gamma", 3.0)))
    raise ValueError(f"unknown potential {name!r}; valid: phi4, quadratic, custom")


# ---------------------------------------------------------------------------
# Certification and derived constants
# ---------------------------------------------------------------------------

def lower_offset(spec: PotentialSpec) -> float:
    """Closed-form ``c0 = max_y [a1/2 y^2 - a0/q |y|^q]`` (0 when a1 = 0)."""
    a0, a1, q = spec.a0, spec.a1, spec.q
    if a1 == 0.0:
        return 0.0
    if q == 2.0:
        return 0.0  # a0 > a1 makes the expression nonpositive
    ystar = (a1 / a0) ** (1.0 / (q - 2.0))
    return float(0.5 * a1 * ystar**2 - (a0 / q) * ystar**q)


def check_h1(spec: PotentialSpec, y_range: tuple[float, float] = (-10.0, 10.0),
             grid: int = 20001, rel_tol: float = 1e-8) -> GrowthCheck:
    """Verify the two-sided derivative bounds and their integrated forms."""
    if grid < 2:
        raise ValueError("grid must be >= 2")
    y = np.linspace(y_range[0], y_range[1], grid)
    ay = np.abs(y) ** (spec.q - 2.0)
    dp = spec.phi_prime(y)
    scale = np.maximum(np.abs(dp), 1.0)
    checks = [
        ("lower derivative bound", (spec.a0 * ay - spec.a1) - dp),
        ("upper derivative bound", dp - (spec.a2 * ay + spec.a3)),
    ]
    qq = spec.q * (spec.q - 1.0)
    V = spec.V(y)
    aq = np.abs(y) ** spec.q
    checks.append(("integrated lower bound",
                   (spec.a0 / qq) * aq - 0.5 * spec.a1 * y**2 - V))
    checks.append(("integrated upper bound",
                   V - (spec.a2 / qq) * aq - 0.5 * spec.a3 * y**2))
    c0 = lower_offset(spec)
    yphi = y * spec.phi(y)
    checks.append(("force-potential lower bound",
                   V + (spec.a0 / spec.q) * aq - 0.5 * spec.a1 * y**2 - yphi))
    checks.append(("offset bound", (V - c0) -
                   (V + (spec.a0 / spec.q) * aq - 0.5 * spec.a1 * y**2)))
    for name, gap in checks:
        rel = gap / scale
        if rel.max() > rel_tol:
            i = int(np.argmax(rel))
            return GrowthCheck(False, witness_y=float(y[i]),
                               witness_gap=float(gap[i]), detail=name)
    return GrowthCheck(True)


def _certify_b0_direct(spec: PotentialSpec, y_range: float = 100.0) -> float | None:
    """Largest dyadic ``b0`` with ``V(y) >= b0 (|y|^q + y^2)`` on a dense grid."""
    y = np.linspace(-y_range, y_range, 400001)
    envelope = np.abs(y) ** spec.q + y**2
    V = spec.V(y)
    b0 = min(spec.a0 / (spec.q * (spec.q - 1.0)), 1.0) / 2.0
    for _ in range(40):
        if np.all(V >= b0 * envelope - 1e-12):
            return b0
        b0 /= 2.0
    return None


def compute_constants(spec: PotentialSpec, W: float, domain_volume: float = 1.0,
                      rng: np.random.Generator | None = None,
                      oracle_states: int = 400) -> PotentialConstants:
    """Derive the energy-sandwich constants from the growth bounds.

    ``b0, b1, b2`` certify the potential-energy envelope; ``c1`` follows its
    closed form from ``b0``; ``c2`` comes from a randomized maximization of
    the damped-energy functional against the energy (inflated 1.2x); the
    decay constants are ``K0 = c2/c1`` and ``K1 = 8(c0+b1)/c1``.
    """
    chk = check_h1(spec)
    if not chk.passed:
        raise ValueError(f"potential fails its growth certification: {chk.detail}")
    a0, a1, q = spec.a0, spec.a1, spec.q
    A = a0 / (q * (q - 1.0))
    A2 = spec.a2 / (q * (q - 1.0))
    c0 = lower_offset(spec)

    if q == 2.0:
        b0 = (a0 - a1) / 4.0
        b1 = 0.0
    elif a1 == 0.0:
        direct = _certify_b0_direct(spec)
        if direct is not None:
            b0, b1 = direct, 0.0
        else:  # no quadratic floor; absorb y^2 into the q-th power instead
            b0 = min(A, 1.0) / 2.0
            b1 = _young_offset(A, a1, b0, q) * domain_volume
    else:
        b0 = min(A, 1.0) / 2.0
        b1 = _young_offset(A, a1, b0, q) * domain_volume
    b2 = max(A2, 0.5 * spec.a3, 1e-12)

    c1 = min(q * b0, 1.0) / 2.0
    eps = min(0.25, b0 / 2.0)
    c2 = _c2_oracle(spec, W, eps, rng=rng, n_states=oracle_states)
    K0 = c2 / c1
    K1 = 8.0 * (c0 + b1) / c1
    return PotentialConstants(b0=b0, b1=b1, b2=b2, c0=c0, c1=c1, c2=c2,
                              K0=K0, K1=K1, W=W, domain_volume=domain_volume)


def _young_offset(A: float, a1: float, b0: float, q: float) -> float:
    """Smallest ``beta`` with ``(b0 + a1/2) y^2 <= (A - b0)|y|^q + beta``."""
    lin = b0 + 0.5 * a1
    curv = A - b0
    if curv <= 0:
        raise ValueError("b0 must stay below the integrated growth constant")
    ystar = (2.0 * lin / (q * curv)) ** (1.0 / (q - 2.0))
    return float(lin * ystar**2 - curv * ystar**q)


def _c2_oracle(spec: PotentialSpec, W: float, eps: float,
               rng: np.random.Generator | None, n_states: int) -> float:
    """Randomized upper envelope for the damped functional over the energy.

    The ratio is maximized at vanishing propagation speed (both functionals
    share the gradient term), so states are sampled with that term dropped,
    over a wide range of amplitudes; pure-velocity and large-amplitude states
    are included explicitly.
    """
    rng = np.random.default_rng(12345) if rng is None else rng
    n = 32
    best = 1.0
    amps = np.geomspace(1e-3, 1e3, 13)
    for i in range(n_states):
        u = fd.random_field(rng, 1, n)
        v = fd.random_field(rng, 1, n)
        a = amps[i % amps.size]
        kind = i % 3
        if kind == 1:
            u = u * 0.0  # pure velocity
        elif kind == 2:
            v = v * 0.0  # pure position
        u = u * a
        v = v * a
        uq = fd.lq_norm(u, spec.q) ** spec.q
        u2 = fd.h_norm(u, 0.0) ** 2
        v2 = fd.h_norm(v, 0.0) ** 2
        pot = potential_energy(spec, u)
        lam = v2 + 2.0 * pot + 2.0 * eps * (W * u2 + 2.0 * fd.inner(v, u))
        en = (2.0 / spec.q) * uq + u2 + v2
        if en > 0:
            best = max(best, lam / en)
    return 1.2 * best


def potential_energy(spec: PotentialSpec, u: fd.SpectralField,
                     pad: float = fd.DEALIAS_PAD) -> float:
    """Integral of ``V(u(x))`` over the box by collocation-grid quadrature."""
    vals = fd.to_grid(u, fd.pad_size(u.n, pad))
    return fd.grid_quadrature(spec.V(vals))

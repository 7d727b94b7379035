"""Energy functionals instrumented along trajectories, and the inequality
checks that turn the a-priori estimates into pass/fail diagnostics.

Conventions.  The phase-space energy at order ``ell`` is

    E(u, v; t) = mu(t) |u|_{1+ell}^2 + (2/q) ||u||_q^q + |u|_ell^2 + |v|_ell^2

and the reference norm is implemented in its square-sum form
``(mu |u|_{1+ell}^2 + ||u||_q^2 + |v|_ell^2)^(1/2)``, equivalent to the
sum-of-terms norm within a factor sqrt(3).  Inequality checks carry a relative
slack (default 5%) so that discretization error cannot produce false failures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import field as fd
from .coefficients import CoefficientProfile, decay_rate
from .potential import PotentialSpec, potential_energy

TRACE_SCHEMA = 1
DEFAULT_SLACK = 0.05

CANONICAL_COLUMNS = ("E_X", "E_X1", "norm_u_1", "norm_v_0", "norm_u_Lq",
                     "lambda", "lambda3")


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------

def energy(z: fd.SpectralState, t: float, ell: float,
           profile: CoefficientProfile, potential: PotentialSpec,
           pad: float = fd.DEALIAS_PAD) -> float:
    """Phase-space energy at order ``ell``."""
    mu = float(profile.mu(t))
    uq = fd.lq_norm(z.u, potential.q, pad) ** potential.q
    return (mu * fd.h_norm(z.u, 1.0 + ell) ** 2
            + (2.0 / potential.q) * uq
            + fd.h_norm(z.u, ell) ** 2
            + fd.h_norm(z.v, ell) ** 2)


def state_norm(z: fd.SpectralState, t: float, ell: float,
               profile: CoefficientProfile, q: float,
               pad: float = fd.DEALIAS_PAD) -> float:
    """Square-sum phase-space norm ``(mu |u|_{1+ell}^2 + ||u||_q^2 + |v|_ell^2)^(1/2)``."""
    mu = float(profile.mu(t))
    return math.sqrt(mu * fd.h_norm(z.u, 1.0 + ell) ** 2
                     + fd.lq_norm(z.u, q, pad) ** 2
                     + fd.h_norm(z.v, ell) ** 2)


def lambda_functional(z: fd.SpectralState, t: float, eps: float,
                      profile: CoefficientProfile, potential: PotentialSpec,
                      pad: float = fd.DEALIAS_PAD) -> tuple[float, float]:
    """Damped energy functional and its dissipation companion.

    With ``eps = 0`` the first value is the conserved quantity of the
    undamped, frozen-speed problem.
    """
    mu = float(profile.mu(t))
    mup = float(profile.mu_prime(t))
    om = float(profile.omega(t))
    omp = float(profile.omega_prime(t))
    u1 = fd.h_norm(z.u, 1.0) ** 2
    u0 = fd.h_norm(z.u, 0.0) ** 2
    v0 = fd.h_norm(z.v, 0.0) ** 2
    uv = fd.inner(z.v, z.u)
    pot = potential_energy(potential, z.u, pad)
    lam = mu * u1 + v0 + 2.0 * pot + 2.0 * eps * (om * u0 + 2.0 * uv)
    lam_star = ((2.0 * eps * mu - mup) * u1
                + (om - 6.0 * eps) * v0
                + (-2.0 * eps * omp - 4.0 * eps**2 * om) * u0
                - 4.0 * eps**2 * uv)
    return lam, lam_star


def core_energy(z: fd.SpectralState, t: float, profile: CoefficientProfile,
                potential: PotentialSpec, pad: float = fd.DEALIAS_PAD) -> float:
    """The conserved-limit functional ``mu |u|_1^2 + |v|^2 + 2 V(u)``."""
    return lambda_functional(z, t, 0.0, profile, potential, pad)[0]


def eta_exponent(sigma: float, gamma: float) -> float:
    """Regularity gain ``min(1/4, 2 - gamma/2, 1 - sigma)`` at level sigma."""
    if not 0.0 <= sigma <= 1.0:
        raise ValueError("sigma must lie in [0, 1]")
    return min(0.25, 2.0 - gamma / 2.0, 1.0 - sigma)


def lambda3_functional(n_state: fd.SpectralState, t: float, sigma: float,
                       profile: CoefficientProfile, potential: PotentialSpec,
                       u_state: fd.SpectralState, p_state: fd.SpectralState,
                       eps: float, pad: float = fd.DEALIAS_PAD
                       ) -> tuple[float, float, float, float]:
    """Higher-order functionals of the compact remainder at level sigma+eta.

    Returns ``(L1, L2, L3, ell)`` where ``L3 = L1 + 2*eps*L2`` and the
    coupling term pairs the remainder force against ``A^ell n``.
    """
    gamma = potential.gamma if potential.gamma is not None else 3.0
    ell = sigma + eta_exponent(sigma, gamma)
    mu = float(profile.mu(t))
    om = float(profile.omega(t))
    lead = potential.phi_lead if potential.has_split else potential.phi

    m = fd.pad_size(n_state.u.n, pad)
    gu = fd.coeffs_to_grid(u_state.u.coeffs, u_state.u.dim, m)
    gp = fd.coeffs_to_grid(p_state.u.coeffs, p_state.u.dim, m)
    force = potential.phi(gu) - lead(gp) - gp
    fhat = fd.grid_to_coeffs(force, n_state.u.n)
    lam = fd.laplacian_spectrum(n_state.u.dim, n_state.u.n)
    coupling = float((lam**ell * fhat * n_state.u.coeffs).sum())

    L1 = (mu * fd.h_norm(n_state.u, 1.0 + ell) ** 2
          + fd.h_norm(n_state.v, ell) ** 2 + 2.0 * coupling)
    L2 = om * fd.h_norm(n_state.u, ell) ** 2 + 2.0 * fd.inner(n_state.u, n_state.v, ell)
    return L1, L2, L1 + 2.0 * eps * L2, ell


def psi_functionals(p_state: fd.SpectralState, t: float, sigma: float,
                    profile: CoefficientProfile, potential: PotentialSpec,
                    eps: float, pad: float = fd.DEALIAS_PAD
                    ) -> tuple[float, float, float]:
    """Higher-order functionals of the decaying component at level sigma."""
    mu = float(profile.mu(t))
    om = float(profile.omega(t))
    lead = potential.phi_lead if potential.has_split else potential.phi
    m = fd.pad_size(p_state.u.n, pad)
    gp = fd.coeffs_to_grid(p_state.u.coeffs, p_state.u.dim, m)
    fhat = fd.grid_to_coeffs(lead(gp), p_state.u.n)
    lam = fd.laplacian_spectrum(p_state.u.dim, p_state.u.n)
    coupling = float((lam**sigma * fhat * p_state.u.coeffs).sum())
    P1 = (mu * fd.h_norm(p_state.u, 1.0 + sigma) ** 2
          + fd.h_norm(p_state.v, sigma) ** 2
          + fd.h_norm(p_state.u, sigma) ** 2 + 2.0 * coupling)
    P2 = om * fd.h_norm(p_state.u, sigma) ** 2 + 2.0 * fd.inner(p_state.u, p_state.v, sigma)
    return P1, P2, P1 + 2.0 * eps * P2


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

@dataclass
class EnergyTrace:
    """Sampled time series of the instrumented functionals."""

    times: np.ndarray
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        for name, col in self.columns.items():
            if len(col) != len(self.times):
                raise ValueError(f"column {name} length mismatch")

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def to_csv(self, path) -> None:
        names = [c for c in CANONICAL_COLUMNS if c in self.columns]
        names += sorted(c for c in self.columns if c not in CANONICAL_COLUMNS)
        with open(path, "w") as fh:
            fh.write(",".join(["t"] + names) + "\n")
            data = np.column_stack([self.times] + [self.columns[c] for c in names])
            for row in data:
                fh.write(",".join("%.17g" % x for x in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "EnergyTrace":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        cols = {name: data[:, i] for i, name in enumerate(header)}
        times = cols.pop("t")
        return cls(times=times, columns=cols)


class TraceRecorder:
    """Incremental trace builder fed by the integrator's observer."""

    def __init__(self, spec, eps_lambda: float = 0.0,
                 eps_fn: Optional[Callable[[float], float]] = None,
                 sigma: float | None = None, want_psi: bool = False):
        self.spec = spec
        self.eps_lambda = eps_lambda
        self.eps_fn = eps_fn
        self.sigma = sigma
        self.want_psi = want_psi
        self.times: list[float] = []
        self.cols: dict[str, list[float]] = {}

    def _put(self, name: str, value: float):
        self.cols.setdefault(name, []).append(float(value))

    def push(self, t: float, ucoeffs: np.ndarray, vcoeffs: np.ndarray,
             damping_total: float | None,
             u_coeffs: np.ndarray | None = None,
             p_coeffs: np.ndarray | None = None) -> None:
        spec = self.spec
        dim, n = spec.dim, spec.n
        profile, pot = spec.profile, spec.potential
        u = fd.SpectralField(dim, n, ucoeffs)
        v = fd.SpectralField(dim, n, vcoeffs)
        z = fd.SpectralState(u, v, t)
        mu = float(profile.mu(t))
        om = float(profile.omega(t))
        lam_arr = fd.laplacian_spectrum(dim, n)

        m = fd.pad_size(n, spec.pad)
        grid = fd.coeffs_to_grid(ucoeffs, dim, m)
        uq = fd.grid_quadrature(np.abs(grid) ** pot.q)
        potval = fd.grid_quadrature(pot.V(grid))
        u1sq = float((lam_arr * ucoeffs**2).sum())
        u2sq = float((lam_arr**2 * ucoeffs**2).sum())
        u0sq = float((ucoeffs**2).sum())
        v0sq = float((vcoeffs**2).sum())
        v1sq = float((lam_arr * vcoeffs**2).sum())
        uv = float((ucoeffs * vcoeffs).sum())

        eps = self.eps_fn(t) if self.eps_fn is not None else self.eps_lambda
        lam_val = mu * u1sq + v0sq + 2.0 * potval + 2.0 * eps * (om * u0sq + 2.0 * uv)
        mup = float(profile.mu_prime(t))
        omp = float(profile.omega_prime(t))
        lam_star = ((2.0 * eps * mu - mup) * u1sq + (om - 6.0 * eps) * v0sq
                    + (-2.0 * eps * omp - 4.0 * eps**2 * om) * u0sq
                    - 4.0 * eps**2 * uv)

        self.times.append(float(t))
        self._put("E_X", mu * u1sq + (2.0 / pot.q) * uq + u0sq + v0sq)
        self._put("E_X1", mu * u2sq + (2.0 / pot.q) * uq + u1sq + v1sq)
        self._put("norm_u_1", math.sqrt(u1sq))
        self._put("norm_v_0", math.sqrt(v0sq))
        self._put("norm_u_Lq", uq ** (1.0 / pot.q))
        self._put("lambda", lam_val)
        self._put("lambda_star", lam_star)
        self._put("potential_integral", potval)
        if damping_total is not None:
            self._put("damping_integral", damping_total)
        if self.sigma is not None and u_coeffs is not None and p_coeffs is not None:
            ustate = fd.SpectralState(fd.SpectralField(dim, n, u_coeffs),
                                      fd.SpectralField(dim, n, np.zeros_like(u_coeffs)), t)
            pstate = fd.SpectralState(fd.SpectralField(dim, n, p_coeffs),
                                      fd.SpectralField(dim, n, np.zeros_like(p_coeffs)), t)
            L1, L2, L3, ell = lambda3_functional(z, t, self.sigma, profile, pot,
                                                 ustate, pstate, eps, spec.pad)
            self._put("lambda1", L1)
            self._put("lambda2", L2)
            self._put("lambda3", L3)
            self._put("norm_u_higher", math.sqrt(float((lam_arr**(1.0 + ell)
                                                        * ucoeffs**2).sum())))
            self._put("norm_v_higher", math.sqrt(float((lam_arr**ell
                                                        * vcoeffs**2).sum())))
        if self.want_psi:
            P1, P2, P3 = psi_functionals(z, t, self.sigma or 0.0, profile, pot, eps,
                                         spec.pad)
            self._put("psi1", P1)
            self._put("psi2", P2)
            self._put("psi3", P3)

    def build(self) -> EnergyTrace:
        return EnergyTrace(times=np.asarray(self.times),
                           columns={k: np.asarray(v) for k, v in self.cols.items()})


# ---------------------------------------------------------------------------
# Estimate checks
# ---------------------------------------------------------------------------

@dataclass
class EstimateReport:
    estimate: str
    passed: bool
    margin: float
    constants_used: dict = dc_field(default_factory=dict)
    detail: str = ""

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_json_dict(self) -> dict:
        return {"estimate": self.estimate, "verdict": self.verdict,
                "margin": self.margin, "constants_used": self.constants_used,
                "detail": self.detail}


def _envelope_margin(measured: np.ndarray, bound: np.ndarray) -> tuple[float, int]:
    """Min over samples of (bound - measured)/bound and its argmin."""
    rel = (bound - measured) / np.maximum(np.abs(bound), 1e-300)
    i = int(np.argmin(rel))
    return float(rel[i]), i


def check_dissipative(trace: EnergyTrace, constants, profile: CoefficientProfile,
                      slack: float = DEFAULT_SLACK) -> EstimateReport:
    """Exponential-decay-plus-offset envelope on the base energy."""
    t = trace.times
    e = trace.column("E_X")
    eps = decay_rate(profile, t, constants.c1)
    bound = constants.K0 * e[0] * np.exp(-eps * (t - t[0])) + constants.K1
    margin, i = _envelope_margin(e, bound)
    passed = margin >= -slack
    return EstimateReport(
        estimate="dissipative", passed=bool(passed), margin=margin,
        constants_used={"K0": constants.K0, "K1": constants.K1, "c1": constants.c1},
        detail="" if passed else f"violated at t={t[i]:.6g}: "
                                 f"E={e[i]:.6g} > bound={bound[i]:.6g}")


def inv_mu_integral(profile: CoefficientProfile, s: float, times: np.ndarray,
                    resolution: int = 8193) -> np.ndarray:
    """Cumulative integral of ``1/mu`` from s to each requested time."""
    tt = np.linspace(s, float(times[-1]), resolution)
    inv = 1.0 / np.asarray(profile.mu(tt), dtype=float)
    cum = np.concatenate([[0.0], cumulative_trapezoid(inv, tt)])
    return np.interp(times, tt, cum)


def calibrate_dependence_rate(pair_results, profile: CoefficientProfile) -> float:
    """Largest observed growth rate of the energy of a solution difference,
    normalized by elapsed time plus the integral of 1/mu."""
    worst = 0.0
    for pr in pair_results:
        t = pr.times
        e = pr.e_diff
        base = e[0]
        if base <= 0:
            continue
        denom = (t - t[0]) + pr.inv_mu
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = np.log(np.maximum(e, 1e-300) / base) / np.maximum(denom, 1e-12)
        rate[0] = 0.0
        worst = max(worst, float(np.nanmax(rate)))
    return worst


def check_continuous_dependence(pair_result, q1: float,
                                slack: float = DEFAULT_SLACK) -> EstimateReport:
    """Difference-energy growth against the calibrated exponential envelope."""
    t = pair_result.times
    e = pair_result.e_diff
    base = e[0]
    if base == 0.0:
        passed = bool(np.all(e <= 1e-300 + 0.0 * e) or np.all(e < 1e-250))
        return EstimateReport("continuous_dependence", passed,
                              margin=1.0 if passed else -1.0,
                              constants_used={"Q1": q1},
                              detail="identical data" if passed else
                              "zero initial separation grew")
    bound = base * np.exp(q1 * ((t - t[0]) + pair_result.inv_mu)) * (1.0 + slack)
    margin, i = _envelope_margin(e, bound)
    passed = margin >= -slack
    return EstimateReport("continuous_dependence", bool(passed), margin,
                          constants_used={"Q1": q1},
                          detail="" if passed else f"violated at t={t[i]:.6g}")


def window_maxima(times: np.ndarray, cumulative: np.ndarray,
                  lengths: np.ndarray) -> np.ndarray:
    """Worst increment of a cumulative quantity over sliding windows of the
    given lengths (computed on the sample grid)."""
    out = np.empty(lengths.size)
    for j, L in enumerate(lengths):
        shifted = np.interp(times + L, times, cumulative)
        valid = times <= times[-1] - L + 1e-12
        if not np.any(valid):
            out[j] = cumulative[-1] - cumulative[0]
        else:
            out[j] = float((shifted - cumulative)[valid].max())
    return out


def check_integrability(trace: EnergyTrace, window: tuple[float, float],
                        theta: float, n_lengths: int = 10,
                        exponent_slack: float = 0.1) -> EstimateReport:
    """Sublinear-growth check of the damping integral over sliding windows.

    Fits the growth exponent of the worst-case window integral against the
    window length and compares with ``theta + exponent_slack``; also reports
    the fitted prefactor.
    """
    t1, t2 = window
    mask = (trace.times >= t1 - 1e-12) & (trace.times <= t2 + 1e-12)
    if mask.sum() < 8:
        raise ValueError("trace does not cover the requested window")
    t = trace.times[mask]
    cum = trace.column("damping_integral")[mask]
    span = t[-1] - t[0]
    lengths = np.geomspace(max(span / 32.0, 1.0), span, n_lengths)
    worst = window_maxima(t, cum, lengths)
    if worst.max() <= 1e-12:
        return EstimateReport("integrability", True, 1.0,
                              constants_used={"c": 0.0, "theta_measured": 0.0,
                                              "theta": theta},
                              detail="damping integral identically zero")
    floor = max(1e-12, 1e-4 * worst.max())
    msk = worst > floor
    if msk.sum() < 2:
        measured = 0.0
    else:
        measured = float(np.polyfit(np.log(lengths[msk]), np.log(worst[msk]), 1)[0])
        measured = max(0.0, measured)
    c_fit = float((worst / (1.0 + lengths**min(theta, 0.999))).max())
    passed = measured <= theta + exponent_slack
    return EstimateReport(
        "integrability", bool(passed),
        margin=float(theta + exponent_slack - measured),
        constants_used={"c": c_fit, "theta_measured": measured, "theta": theta},
        detail="" if passed else
        f"window growth exponent {measured:.3g} exceeds {theta + exponent_slack:.3g}")


def check_p_decay(trace: EnergyTrace, s: float, K2: float, radius: float,
                  profile: CoefficientProfile, c1_tilde: float,
                  slack: float = DEFAULT_SLACK) -> EstimateReport:
    """Exponential-decay envelope for the decaying-component energy."""
    t = trace.times
    e = trace.column("E_X")
    eps = decay_rate(profile, t, c1_tilde)
    bound = K2 * radius * np.exp(-eps * (t - s))
    margin, i = _envelope_margin(e, bound)
    passed = margin >= -slack
    return EstimateReport("p_decay", bool(passed), margin,
                          constants_used={"K2": K2, "radius": radius,
                                          "c1_tilde": c1_tilde},
                          detail="" if passed else f"violated at t={t[i]:.6g}")


def gronwall_check(times: np.ndarray, phi: np.ndarray, f: np.ndarray,
                   g: np.ndarray, eps: float, F: float, G: float, beta: float,
                   slack: float = DEFAULT_SLACK) -> EstimateReport:
    """Comparison-solution check of the decay-with-forcing differential bound.

    Verifies the integral hypotheses on ``f`` and ``g`` first, then integrates
    the comparison problem ``Phi' = (g - 2 eps) Phi + f`` exactly (integrating
    factor with trapezoidal quadrature) and requires the measured ``phi`` to
    stay below it.  The reported decay prefactor and saturation offset come
    from the homogeneous/particular parts of the comparison solution.
    """
    times = np.asarray(times, dtype=float)
    phi = np.asarray(phi, dtype=float)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if not (times.shape == phi.shape == f.shape == g.shape):
        raise ValueError("traces must share one sample grid")
    if eps <= 0:
        raise ValueError("eps must be positive")
    t0 = times[-1]

    cum_f = np.concatenate([[0.0], cumulative_trapezoid(f, times)])
    cum_g = np.concatenate([[0.0], cumulative_trapezoid(g, times)])
    # hypothesis: unit-window integral of f bounded by F
    upper = np.interp(np.minimum(times + 1.0, t0), times, cum_f)
    f_worst = float((upper - cum_f).max())
    # hypothesis: two-time integral of g obeys the sublinear envelope
    idx = np.linspace(0, times.size - 1, min(times.size, 160)).astype(int)
    g_ok = True
    g_worst = -np.inf
    for a in idx:
        spans = times[idx[idx >= a]] - times[a]
        vals = cum_g[idx[idx >= a]] - cum_g[a]
        bound = G * (1.0 + spans**beta)
        gap = vals - bound
        g_worst = max(g_worst, float(gap.max()))
        if gap.max() > slack * max(G, 1.0):
            g_ok = False
    hyp_ok = f_worst <= F * (1.0 + slack) and g_ok
    if not hyp_ok:
        return EstimateReport(
            "gronwall", False, margin=-1.0,
            constants_used={"F": F, "G": G, "beta": beta, "eps": eps},
            detail=f"hypotheses violated (f window max {f_worst:.4g} vs {F:.4g}, "
                   f"g envelope excess {g_worst:.4g})")

    w = 2.0 * eps * (times - times[0]) - cum_g
    ew = np.exp(w)
    hom = phi[0] * np.exp(-w)
    part_core = np.concatenate([[0.0], cumulative_trapezoid(f * ew, times)])
    part = np.exp(-w) * part_core
    comparison = hom + part

    gamma_num = float(np.max(np.exp(-w + eps * (times - times[0]))))
    theta_num = float(np.max(part)) if part.size else 0.0
    scale = np.maximum(comparison, 1e-300)
    margin = float(((comparison - phi) / scale).min())
    passed = margin >= -slack
    return EstimateReport(
        "gronwall", bool(passed), margin,
        constants_used={"F": F, "G": G, "beta": beta, "eps": eps,
                        "Gamma_num": gamma_num, "Theta_num": theta_num},
        detail="" if passed else "measured trace exceeds comparison solution")


def fit_lambda3_constant(times: np.ndarray, lambda3: np.ndarray,
                         factor_g: np.ndarray, factor_f: np.ndarray,
                         eps: np.ndarray) -> float:
    """Smallest prefactor making the integrated higher-order differential
    inequality hold over every sampled interval.

    The inequality integrated over ``[t_i, t_j]`` reads
    ``L(t_j) - L(t_i) + int 2 eps L <= c * int (factor_g * L + factor_f)``.
    """
    times = np.asarray(times, dtype=float)
    cum_damped = np.concatenate([[0.0], cumulative_trapezoid(2.0 * eps * lambda3, times)])
    base = factor_g * np.maximum(lambda3, 0.0) + factor_f
    cum_base = np.concatenate([[0.0], cumulative_trapezoid(base, times)])
    idx = np.linspace(0, times.size - 1, min(times.size, 240)).astype(int)
    c_needed = 0.0
    for a in idx:
        js = idx[idx > a]
        lhs = lambda3[js] - lambda3[a] + (cum_damped[js] - cum_damped[a])
        rhs = cum_base[js] - cum_base[a]
        pos = lhs > 0
        if np.any(pos):
            c_needed = max(c_needed, float(np.max(lhs[pos] / np.maximum(rhs[pos], 1e-300))))
    return c_needed

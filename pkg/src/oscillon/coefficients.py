"""Time-dependent coefficient profiles and window-based checks of the
structural growth assumptions they must satisfy.

A profile bundles the damping ``omega`` (positive, nonincreasing, bounded by
``W``) and the squared propagation speed ``mu`` (positive), both as closed-form
callables with analytically supplied derivatives, plus an optional growth-rate
certificate ``alpha`` with ``mu' <= 2*alpha*mu``.  Checks are grid-based over
finite windows: a pass is a certificate only up to sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import expit

DEFAULT_GRID = 4096
DEFAULT_REL_TOL = 1e-8
DEFAULT_LOOKBACK = 50.0


@dataclass(frozen=True)
class CoefficientProfile:
    """Damping/speed pair with derivatives and growth-rate certificate."""

    omega: Callable[[np.ndarray], np.ndarray]
    omega_prime: Callable[[np.ndarray], np.ndarray]
    mu: Callable[[np.ndarray], np.ndarray]
    mu_prime: Callable[[np.ndarray], np.ndarray]
    W: float
    alpha: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = "custom"
    meta: dict = dc_field(default_factory=dict)


@dataclass
class AssumptionReport:
    """Outcome of one grid-based assumption check over a window."""

    assumption: str
    window: tuple[float, float]
    passed: bool
    witness_t: float | None = None
    witness_gap: float | None = None
    C: float | None = None
    theta: float | None = None
    nu_check: float | None = None
    detail: str = ""

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_json_dict(self) -> dict:
        return {
            "assumption": self.assumption,
            "window": list(self.window),
            "verdict": self.verdict,
            "witness_t": self.witness_t,
            "witness_gap": self.witness_gap,
            "C": self.C,
            "theta": self.theta,
            "nu_check": self.nu_check,
            "detail": self.detail,
        }


def decay_rate(profile: CoefficientProfile, t, c1: float):
    """Damping-controlled decay rate ``min(1, omega(t), c1/(1+W)) / 16``.

    ``c1`` is the potential-dependent constant from the energy sandwich;
    the rate inherits the monotonicity of ``omega``.
    """
    if c1 <= 0:
        raise ValueError("c1 must be positive")
    t = np.asarray(t, dtype=float)
    om = np.asarray(profile.omega(t), dtype=float)
    cap = c1 / (1.0 + profile.W)
    out = np.minimum(1.0, np.minimum(om, cap)) / 16.0
    return float(out) if out.ndim == 0 else out


def validate_profile(profile: CoefficientProfile, window: tuple[float, float],
                     grid_size: int = DEFAULT_GRID, rel_tol: float = DEFAULT_REL_TOL) -> None:
    """Raise if the profile violates its shape invariants on the sampled window."""
    t = np.linspace(window[0], window[1], grid_size)
    om = np.asarray(profile.omega(t), dtype=float)
    mu = np.asarray(profile.mu(t), dtype=float)
    scale = max(abs(om).max(), 1.0)
    if np.any(om <= 0):
        raise ValueError(f"omega must be strictly positive on {window}")
    if np.any(np.diff(om) > rel_tol * scale):
        i = int(np.argmax(np.diff(om)))
        raise ValueError(f"omega increases near t={t[i]:.6g}")
    if np.any(om > profile.W * (1 + rel_tol) + rel_tol):
        raise ValueError("omega exceeds its declared supremum W")
    if np.any(mu <= 0):
        raise ValueError(f"mu must be strictly positive on {window}")


def check_m1(profile: CoefficientProfile, window: tuple[float, float],
             grid_size: int = DEFAULT_GRID, c1: float = 1.0,
             rel_tol: float = DEFAULT_REL_TOL) -> AssumptionReport:
    """Check ``mu' <= 2*alpha*mu`` and ``sup_{s<=t} alpha(s) <= decay rate(t)``.

    With no declared ``alpha`` the rate is taken identically zero and the
    check reduces to ``mu' <= 0``.
    """
    t1, t2 = window
    if not t1 < t2:
        raise ValueError("window must satisfy t1 < t2")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    t = np.linspace(t1, t2, grid_size)
    mu = np.asarray(profile.mu(t), dtype=float)
    if np.any(mu <= 0):
        i = int(np.argmin(mu))
        raise ValueError(f"mu nonpositive at t={t[i]:.6g}")
    mup = np.asarray(profile.mu_prime(t), dtype=float)
    if profile.alpha is None:
        al = np.zeros_like(t)
    else:
        al = np.asarray(profile.alpha(t), dtype=float) * np.ones_like(t)

    scale = np.maximum(np.abs(mup), np.abs(mu))
    gap_growth = (mup - 2.0 * al * mu) / np.maximum(scale, 1e-300)
    eps = decay_rate(profile, t, c1)
    running_sup = np.maximum.accumulate(al)
    gap_rate = running_sup - eps

    worst = max(gap_growth.max(), gap_rate.max())
    passed = gap_growth.max() <= rel_tol and gap_rate.max() <= rel_tol
    if gap_growth.max() >= gap_rate.max():
        i = int(np.argmax(gap_growth))
        witness_gap = float(gap_growth[i])
        which = "mu' > 2*alpha*mu"
    else:
        i = int(np.argmax(gap_rate))
        witness_gap = float(gap_rate[i])
        which = "sup alpha > decay rate"
    return AssumptionReport(
        assumption="M1", window=window, passed=bool(passed),
        witness_t=None if passed else float(t[i]),
        witness_gap=None if passed else witness_gap,
        detail="" if passed else which,
    )


def positive_variation(profile: CoefficientProfile, t1: float, t2: float,
                       grid_size: int = DEFAULT_GRID) -> float:
    """Quadrature of ``max(mu', 0)/mu`` over ``[t1, t2]``."""
    t = np.linspace(t1, t2, grid_size)
    r = np.maximum(np.asarray(profile.mu_prime(t), dtype=float), 0.0) \
        / np.asarray(profile.mu(t), dtype=float)
    return float(np.trapezoid(r, t))


def check_m2(profile: CoefficientProfile, window: tuple[float, float],
             grid_size: int = DEFAULT_GRID, n_lengths: int = 12,
             abs_tol: float = 1e-12) -> AssumptionReport:
    """Fit a sublinear growth law for the positive log-variation of ``mu``.

    Computes ``I(t1,t2) = int (mu')_+/mu`` over many sub-windows, then the
    smallest ``(C, theta)`` with ``I <= C (1 + L^theta)``; ``theta`` comes
    from least squares on log-increments of the worst-case ``I`` per length.
    """
    t1, t2 = window
    if not t1 < t2:
        raise ValueError("window must satisfy t1 < t2")
    fine = max(grid_size, 4096)
    t = np.linspace(t1, t2, fine)
    mu = np.asarray(profile.mu(t), dtype=float)
    if np.any(mu <= 0):
        i = int(np.argmin(mu))
        raise ValueError(f"mu nonpositive at t={t[i]:.6g}")
    r = np.maximum(np.asarray(profile.mu_prime(t), dtype=float), 0.0) / mu
    cum = np.concatenate([[0.0], cumulative_trapezoid(r, t)])

    span = t2 - t1
    lengths = np.unique(np.geomspace(span / 64.0, span, n_lengths))
    dt = t[1] - t[0]
    worst = np.empty(lengths.size)
    for j, L in enumerate(lengths):
        k = max(1, int(round(L / dt)))
        if k >= fine:
            worst[j] = cum[-1]
        else:
            worst[j] = (cum[k:] - cum[:-k]).max()
    if worst.max() <= abs_tol:
        return AssumptionReport("M2", window, True, C=0.0, theta=0.0,
                                detail="positive variation identically zero")

    mask = worst > max(abs_tol, 1e-6 * worst.max())
    if mask.sum() < 2:
        theta = 0.0
        resid = 0.0
    else:
        x = np.log(lengths[mask])
        y = np.log(worst[mask])
        # least squares on log-increments, ignoring the saturated small-L part
        half = max(2, mask.sum() // 2)
        slope = np.polyfit(x[-half:], y[-half:], 1)[0]
        theta = float(np.clip(slope, 0.0, None))
        fit = np.polyval(np.polyfit(x[-half:], y[-half:], 1), x[-half:])
        resid = float(np.abs(y[-half:] - fit).max())
    C = float((worst / (1.0 + lengths**min(theta, 0.999))).max())
    passed = theta < 0.999 and resid < 0.5
    return AssumptionReport(
        "M2", window, bool(passed), C=C, theta=theta,
        witness_t=None, witness_gap=None,
        detail=f"fit residual {resid:.3g}" if not passed else "",
    )


def check_m3(profile: CoefficientProfile, t: float,
             lookback: float = DEFAULT_LOOKBACK,
             grid_size: int = DEFAULT_GRID) -> AssumptionReport:
    """Estimate ``sup 1/mu`` over the past ray, with a divergence heuristic.

    The supremum over ``(-inf, t]`` is approximated on ``[t-lookback, t]``;
    if widening the window from half to full lookback still grows the
    supremum, the tail is flagged as divergent and the check fails.
    """
    if lookback <= 0:
        raise ValueError("lookback must be positive")
    s = np.linspace(t - lookback, t, grid_size)
    mu = np.asarray(profile.mu(s), dtype=float)
    if np.any(mu <= 0):
        i = int(np.argmin(mu))
        raise ValueError(f"mu nonpositive at t={s[i]:.6g}")
    nu = 1.0 / mu
    half = nu[s >= t - lookback / 2.0]
    nu_full = float(nu.max())
    nu_half = float(half.max())
    diverging = nu_full > nu_half * (1.0 + 1e-6)
    i = int(np.argmax(nu))
    return AssumptionReport(
        "M3", (t - lookback, t), passed=not diverging,
        nu_check=nu_full,
        witness_t=None if not diverging else float(s[i]),
        witness_gap=None if not diverging else nu_full - nu_half,
        detail="sup of 1/mu still growing at lookback edge" if diverging else "",
    )


# ---------------------------------------------------------------------------
# Scenario constructors
# ---------------------------------------------------------------------------

def expanding_universe(a: Callable, a_prime: Callable, label: str = "expanding",
                       window: tuple[float, float] = (-50.0, 50.0),
                       grid_size: int = DEFAULT_GRID,
                       W: float | None = None) -> CoefficientProfile:
    """Profile induced by an expansion rate ``a(t)``: ``mu = 1/a^2``,
    ``omega = a'/a``.  Requires ``a > 0`` and ``a' > 0`` on the window."""
    t = np.linspace(window[0], window[1], grid_size)
    av = np.asarray(a(t), dtype=float)
    apv = np.asarray(a_prime(t), dtype=float)
    if np.any(av <= 0):
        raise ValueError("expansion rate a must be positive")
    if np.any(apv <= 0):
        i = int(np.argmin(apv))
        raise ValueError(f"a' must be positive (violated near t={t[i]:.6g})")
    omega = lambda s: a_prime(s) / a(s)
    if W is None:
        W = float((apv / av).max())
    profile = CoefficientProfile(
        omega=omega,
        # omega' is only sampled for diagnostics; central differences on the
        # closed form avoid requiring a''
        omega_prime=lambda s, h=1e-5: (np.asarray(a_prime(s + h) / a(s + h))
                                       - np.asarray(a_prime(s - h) / a(s - h))) / (2 * h),
        mu=lambda s: 1.0 / np.asarray(a(s), dtype=float) ** 2,
        mu_prime=lambda s: -2.0 * np.asarray(a_prime(s), dtype=float)
        / np.asarray(a(s), dtype=float) ** 3,
        W=W, alpha=None, label=label,
    )
    validate_profile(profile, window, grid_size)
    return profile


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _smoothstep_prime(x: np.ndarray) -> np.ndarray:
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 6.0 * x * (1.0 - x), 0.0)


def scenario(name: str, **params) -> CoefficientProfile:
    """Build a named coefficient scenario.

    Names: ``constant``, ``exponential_expansion``, ``reheating``,
    ``vanishing_damping``, ``oscillating_mu``, ``custom``.
    """
    if name == "constant":
        W = float(params.get("W", 1.0))
        mu0 = float(params.get("mu0", 1.0))
        if W <= 0 or mu0 <= 0:
            raise ValueError("constant scenario needs W > 0 and mu0 > 0")
        return CoefficientProfile(
            omega=lambda t: W * np.ones_like(np.asarray(t, dtype=float)),
            omega_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
            mu=lambda t: mu0 * np.ones_like(np.asarray(t, dtype=float)),
            mu_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
            W=W, alpha=None, label="constant",
            meta={"W": W, "mu0": mu0},
        )

    if name == "exponential_expansion":
        H = float(params.get("H", 0.5))
        if H <= 0:
            raise ValueError("exponential_expansion needs H > 0")
        prof = expanding_universe(
            a=lambda t: np.exp(H * np.asarray(t, dtype=float)),
            a_prime=lambda t: H * np.exp(H * np.asarray(t, dtype=float)),
            label="exponential_expansion", W=H,
            window=params.get("window", (-50.0, 50.0)),
        )
        prof.meta.update({"H": H})
        return prof

    if name == "reheating":
        # expansion e^(t+2) for t <= 0 switching to exp(2 sqrt(t+1)) after,
        # so the damping is 1 up to t=0 and 1/sqrt(t+1) beyond
        def a(t):
            t = np.asarray(t, dtype=float)
            return np.where(t <= 0, np.exp(np.minimum(t, 0.0) + 2.0),
                            np.exp(2.0 * np.sqrt(np.maximum(t, 0.0) + 1.0)))

        def a_prime(t):
            t = np.asarray(t, dtype=float)
            return np.where(t <= 0, np.exp(np.minimum(t, 0.0) + 2.0),
                            np.exp(2.0 * np.sqrt(np.maximum(t, 0.0) + 1.0))
                            / np.sqrt(np.maximum(t, 0.0) + 1.0))

        prof = expanding_universe(a, a_prime, label="reheating", W=1.0,
                                  window=params.get("window", (-50.0, 50.0)))
        return prof

    if name == "vanishing_damping":
        W = float(params.get("W", 1.0))
        mu0 = float(params.get("mu0", 1.0))
        window = params.get("window", (-50.0, 50.0))
        c1_ref = float(params.get("c1_ref", 0.25))
        if W <= 0 or mu0 <= 0:
            raise ValueError("vanishing_damping needs W > 0 and mu0 > 0")
        omega = lambda t: W * expit(-np.asarray(t, dtype=float))
        omega_prime = lambda t: -W * expit(-np.asarray(t, dtype=float)) \
            * expit(np.asarray(t, dtype=float))
        prof_tmp = CoefficientProfile(omega, omega_prime,
                                      lambda t: mu0 * np.ones_like(np.asarray(t, dtype=float)),
                                      lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                                      W=W, label="vanishing_damping")
        # growth-rate certificate c*min(1, e^-t) with c fitted to the window:
        # the constant must sit below the decay rate everywhere sampled
        tgrid = np.linspace(window[0], window[1], DEFAULT_GRID)
        c = 0.999 * float(np.min(decay_rate(prof_tmp, tgrid, c1_ref)))

        def alpha(t, c=c):
            # min(1, e^-t), written to avoid overflow for very negative t
            t = np.asarray(t, dtype=float)
            return c * np.where(t <= 0, 1.0, np.exp(-np.maximum(t, 0.0)))
        return CoefficientProfile(omega, omega_prime,
                                  prof_tmp.mu, prof_tmp.mu_prime, W=W,
                                  alpha=alpha, label="vanishing_damping",
                                  meta={"W": W, "mu0": mu0, "alpha_c": c,
                                        "window": tuple(window)})

    if name == "oscillating_mu":
        return _oscillating_mu(**params)

    if name == "custom":
        required = ("omega", "omega_prime", "mu", "mu_prime", "W")
        missing = [k for k in required if k not in params]
        if missing:
            raise ValueError(f"custom scenario missing {missing}")
        return CoefficientProfile(
            omega=params["omega"], omega_prime=params["omega_prime"],
            mu=params["mu"], mu_prime=params["mu_prime"],
            W=float(params["W"]), alpha=params.get("alpha"),
            label=params.get("label", "custom"),
        )

    raise ValueError(
        f"unknown scenario {name!r}; valid names: constant, "
        "exponential_expansion, reheating, vanishing_damping, "
        "oscillating_mu, custom"
    )


def _oscillating_mu(W: float = 1.0, mu0: float = 1.0, T1: float = 4.0,
                    growth_theta: float = 0.5, delta: float = 0.01,
                    gap: float = 2.0, right: float = 18.0,
                    n_intervals: int = 24, rate_cap: float = 0.005,
                    summable: bool = True) -> CoefficientProfile:
    """Constant damping with ``mu`` rising on a receding family of intervals.

    Interval ``i`` has length ``T_i = T1 * i^2`` (so ``sum 1/T_i`` converges to
    ``pi^2/(6*T1)``) and log-increment ``delta * T_i^growth_theta``; between
    bumps ``mu`` relaxes back to ``mu0`` over ``gap`` time units.  The
    certificate ``alpha`` is the constant ``rate_cap``, which bounds
    ``mu'/(2 mu)`` by construction.
    """
    if W <= 0 or mu0 <= 0 or T1 <= 0 or delta <= 0 or gap <= 0:
        raise ValueError("oscillating_mu needs positive W, mu0, T1, delta, gap")
    if not 0.0 <= growth_theta < 1.0:
        raise ValueError("growth_theta must lie in [0, 1)")
    if not summable:
        raise ValueError("interval lengths with non-summable reciprocals "
                         "are outside the supported construction")
    max_up = 1.5 * delta * T1 ** (growth_theta - 1.0)
    if max_up > 2.0 * rate_cap * (1 + 1e-12):
        raise ValueError(
            f"log-slope {max_up:.3g} exceeds 2*rate_cap={2 * rate_cap:.3g}; "
            "reduce delta or increase T1/rate_cap"
        )
    idx = np.arange(1, n_intervals + 1)
    T = T1 * idx.astype(float) ** 2
    increments = delta * T**growth_theta
    b = np.empty(n_intervals)
    a = np.empty(n_intervals)
    b[0] = right
    a[0] = b[0] - T[0]
    for i in range(1, n_intervals):
        b[i] = a[i - 1] - gap
        a[i] = b[i] - T[i]

    # tent supports (a_i, b_i + gap) are disjoint, so at most one contributes
    # at any time; locate it by bisection instead of summing all tents
    a_asc, b_asc = a[::-1].copy(), b[::-1].copy()
    inc_asc = increments[::-1].copy()

    def log_bumps(t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(a_asc, t, side="right") - 1
        ic = np.clip(idx, 0, a_asc.size - 1)
        ai, bi, d = a_asc[ic], b_asc[ic], inc_asc[ic]
        val = d * (_smoothstep((t - ai) / (bi - ai))
                   - _smoothstep((t - bi) / gap))
        return np.where(idx >= 0, val, 0.0)

    def log_bumps_prime(t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(a_asc, t, side="right") - 1
        ic = np.clip(idx, 0, a_asc.size - 1)
        ai, bi, d = a_asc[ic], b_asc[ic], inc_asc[ic]
        val = d * (_smoothstep_prime((t - ai) / (bi - ai)) / (bi - ai)
                   - _smoothstep_prime((t - bi) / gap) / gap)
        return np.where(idx >= 0, val, 0.0)

    mu = lambda t: mu0 * np.exp(log_bumps(t))
    mu_prime = lambda t: mu0 * np.exp(log_bumps(t)) * log_bumps_prime(t)
    B = float(np.pi**2 / (6.0 * T1))
    return CoefficientProfile(
        omega=lambda t: W * np.ones_like(np.asarray(t, dtype=float)),
        omega_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        mu=mu, mu_prime=mu_prime, W=W,
        alpha=lambda t: rate_cap * np.ones_like(np.asarray(t, dtype=float)),
        label="oscillating_mu",
        meta={"W": W, "mu0": mu0, "T1": T1, "growth_theta": growth_theta,
              "delta": delta, "gap": gap, "right": right,
              "n_intervals": n_intervals, "rate_cap": rate_cap,
              "B": B, "intervals": list(zip(a.tolist(), b.tolist()))},
    )

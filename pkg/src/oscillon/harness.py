"""Experiment orchestration: build objects from a configuration, run the
requested experiment, and persist traces (CSV), reports (JSON), clouds
(JSON-lines) and a manifest.

Exit codes: 0 all checks pass, 1 an estimate check failed, 2 configuration
error, 3 numerical instability.  Reports are byte-identical across runs for a
fixed seed; wall-clock metadata lives only in the manifest.
"""

from __future__ import annotations

import json
import math
import os
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import attractor as at
from . import coefficients as co
from . import dynamics as dy
from . import energetics as en
from . import field as fd
from . import potential as pt
from .config import EXPERIMENTS, ConfigError, ExperimentConfig

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_UNSTABLE = 0, 1, 2, 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_profile(cfg: ExperimentConfig) -> co.CoefficientProfile:
    name = cfg.get_str("scenario.name", "constant")
    params = {k: v for k, v in cfg.section("scenario").items() if k != "name"}
    try:
        return co.scenario(name, **params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"scenario: {exc}") from exc


def build_potential(cfg: ExperimentConfig) -> pt.PotentialSpec:
    name = cfg.get_str("potential.name", "phi4")
    params = {k: v for k, v in cfg.section("potential").items() if k != "name"}
    try:
        return pt.named_potential(name, **params)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"potential: {exc}") from exc


def build_spec(cfg: ExperimentConfig, profile, potential) -> dy.EvolutionSpec:
    dt = cfg.get("time.dt")
    if dt is not None and (isinstance(dt, bool) or not isinstance(dt, (int, float))):
        raise ConfigError("time.dt must be a number")
    return dy.EvolutionSpec(
        profile=profile, potential=potential,
        dim=cfg.get_int("grid.dim", 1), n=cfg.get_int("grid.n", 64),
        dt=None if dt is None else float(dt),
        cfl_margin=cfg.get_float("time.cfl_margin", 0.5),
        sample_target=cfg.get_int("trace.samples", 2000),
    )


def derive_constants(cfg: ExperimentConfig, potential, profile) -> pt.PotentialConstants:
    return pt.compute_constants(potential, W=profile.W,
                                domain_volume=1.0)


def lead_c1(potential: pt.PotentialSpec, W: float) -> float:
    """Energy-sandwich constant for the decaying-component problem."""
    if potential.has_split:
        lead = pt.shifted_lead(potential)
        return pt.compute_constants(lead, W=W).c1
    return pt.compute_constants(potential, W=W).c1


# ---------------------------------------------------------------------------
# State / cloud persistence
# ---------------------------------------------------------------------------

def save_state(path, state: fd.SpectralState) -> None:
    np.savez(path, dim=state.u.dim, n=state.u.n, t=state.t,
             u=state.u.coeffs, v=state.v.coeffs)


def load_state(path) -> fd.SpectralState:
    data = np.load(path)
    dim, n = int(data["dim"]), int(data["n"])
    return fd.SpectralState(fd.SpectralField(dim, n, data["u"]),
                            fd.SpectralField(dim, n, data["v"]),
                            float(data["t"]))


def save_cloud(path, cloud: at.PointCloud) -> None:
    with open(path, "w") as fh:
        for z, prov in zip(cloud.states, cloud.provenance or
                           [{}] * len(cloud.states)):
            rec = {"t": z.t, "dim": z.u.dim, "n": z.u.n,
                   "u": z.u.coeffs.ravel().tolist(),
                   "v": z.v.coeffs.ravel().tolist(),
                   "provenance": prov}
            fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")


def load_cloud(path) -> at.PointCloud:
    states, prov = [], []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            dim, n = rec["dim"], rec["n"]
            shape = (n,) * dim
            states.append(fd.SpectralState(
                fd.SpectralField(dim, n, np.asarray(rec["u"]).reshape(shape)),
                fd.SpectralField(dim, n, np.asarray(rec["v"]).reshape(shape)),
                rec["t"]))
            prov.append(rec.get("provenance", {}))
    if not states:
        raise ValueError(f"empty cloud file {path}")
    return at.PointCloud(t=states[0].t, states=states, provenance=prov)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _exp_simulate(cfg, out, seed):
    profile = build_profile(cfg)
    potential = build_potential(cfg)
    spec = build_spec(cfg, profile, potential)
    constants = derive_constants(cfg, potential, profile)
    s = cfg.get_float("time.s", 0.0)
    t = cfg.get_float("time.t", 20.0)
    count = cfg.get_int("data.count", 1)
    energy = cfg.get_float("data.energy", 10.0)
    slack = cfg.get_float("tolerance.slack", en.DEFAULT_SLACK)
    dy.resolve_timestep(spec, s, t)  # validates CFL before any stepping

    estimates = []
    artifacts = []
    final_energy = []
    for j in range(count):
        rng = dy.philox_rng(seed, 0, j)
        z = dy.random_state(rng, spec.dim, spec.n, s, profile, potential, energy)
        res = dy.evolve(z, s, t, spec)
        name = "trace.csv" if count == 1 else f"trace_{j:03d}.csv"
        res.trace.to_csv(out / name)
        artifacts.append(name)
        final_energy.append(float(res.trace.column("E_X")[-1]))
        estimates.append(en.check_dissipative(res.trace, constants, profile,
                                              slack=slack))
    report = {
        "schema_version": SCHEMA_VERSION, "experiment": "simulate",
        "seed": seed,
        "estimates": [r.to_json_dict() for r in estimates],
        "scalars": {"min_margin": min(r.margin for r in estimates),
                    "final_energy": final_energy,
                    "K0": constants.K0, "K1": constants.K1,
                    "c1": constants.c1},
    }
    code = EXIT_OK if all(r.passed for r in estimates) else EXIT_CHECK_FAILED
    return code, report, artifacts


def _exp_decompose(cfg, out, seed):
    profile = build_profile(cfg)
    potential = build_potential(cfg)
    spec = build_spec(cfg, profile, potential)
    constants = derive_constants(cfg, potential, profile)
    radius = at.absorber_radius(constants)
    s = cfg.get_float("time.s", 0.0)
    t = cfg.get_float("time.t", 10.0)
    count = cfg.get_int("data.count", 10)
    energy = cfg.get_float("data.energy", radius)
    sigma = cfg.get_float("decompose.sigma", 0.0)
    slack = cfg.get_float("tolerance.slack", en.DEFAULT_SLACK)
    c1t = lead_c1(potential, profile.W)
    dy.resolve_timestep(spec, s, t)

    n_cal = max(1, count // 2)
    results = []
    for j in range(count):
        rng = dy.philox_rng(seed, 1, j)
        z = dy.random_state(rng, spec.dim, spec.n, s, profile, potential, energy)
        results.append(dy.evolve_decomposed(z, s, t, spec, sigma=sigma))

    eps = co.decay_rate(profile, results[0].traces["p"].times, c1t)
    K2 = 0.0
    for r in results[:n_cal]:
        tr = r.traces["p"]
        ratio = tr.column("E_X") * np.exp(eps * (tr.times - s)) / radius
        K2 = max(K2, float(ratio.max()))
    K2 *= 1.0 + 2.0 * slack

    estimates = []
    identity = []
    for j, r in enumerate(results):
        identity.append(r.identity_rel_err)
        estimates.append(en.check_p_decay(r.traces["p"], s, K2, radius,
                                          profile, c1t, slack=slack))
    artifacts = []
    for comp in ("u", "p", "n"):
        name = f"trace_{comp}.csv"
        results[0].traces[comp].to_csv(out / name)
        artifacts.append(name)
    passed = all(rr.passed for rr in estimates) and max(identity) <= 1e-9
    report = {
        "schema_version": SCHEMA_VERSION, "experiment": "decompose",
        "seed": seed,
        "estimates": [r.to_json_dict() for r in estimates],
        "scalars": {"K2": K2, "radius": radius, "c1_tilde": c1t,
                    "identity_max_rel_err": max(identity),
                    "min_margin": min(r.margin for r in estimates)},
    }
    return (EXIT_OK if passed else EXIT_CHECK_FAILED), report, artifacts


def _exp_pullback(cfg, out, seed):
    profile = build_profile(cfg)
    potential = build_potential(cfg)
    spec = build_spec(cfg, profile, potential)
    t = cfg.get_float("time.t", 0.0)
    starts = [float(x) for x in cfg.get_list("pullback.starts", [t - 2.0, t - 4.0, t - 8.0])]
    per_start = cfg.get_int("pullback.per_start", 16)
    energy = cfg.get_float("data.energy", 10.0)
    noise_floor = cfg.get_float("pullback.noise_floor", 0.1)
    dy.resolve_timestep(spec, min(starts), t)

    clouds = [at.pullback_cloud(t, [sn], per_start, energy, spec,
                                seed=seed + 1000 * i)
              for i, sn in enumerate(starts)]
    dists = [at.hausdorff_semidist(clouds[i], clouds[i + 1], spec)
             for i in range(len(clouds) - 1)]
    monotone = all(dists[i + 1] <= dists[i] * (1.0 + noise_floor) + 1e-12
                   for i in range(len(dists) - 1))
    artifacts = []
    for i, c in enumerate(clouds):
        name = f"cloud_{i}.jsonl"
        save_cloud(out / name, c)
        artifacts.append(name)
    report = {
        "schema_version": SCHEMA_VERSION, "experiment": "pullback",
        "seed": seed,
        "scalars": {"starts": starts, "semidistances": dists,
                    "monotone": bool(monotone)},
        "estimates": [{"estimate": "pullback_monotone",
                       "verdict": "pass" if monotone else "fail",
                       "margin": 0.0, "constants_used": {},
                       "detail": ""}],
    }
    return (EXIT_OK if monotone else EXIT_CHECK_FAILED), report, artifacts


def _exp_dimension(cfg, out, seed):
    profile = build_profile(cfg)
    potential = build_potential(cfg)
    spec = build_spec(cfg, profile, potential)
    constants = derive_constants(cfg, potential, profile)
    t = cfg.get_float("time.t", 0.0)
    depth = cfg.get_float("section.depth", 8.0)
    size = cfg.get_int("section.size", 64)
    levels = cfg.get_int("dimension.levels", 8)
    dy.resolve_timestep(spec, t - depth, t)

    section = at.kernel_section(t, depth, size, spec, constants, seed=seed)
    eps_hi = cfg.get("dimension.eps_hi")
    eps_lo = cfg.get("dimension.eps_lo")
    if eps_hi is not None and eps_lo is not None:
        ladder = np.geomspace(float(eps_hi), float(eps_lo), levels)
    else:
        ladder = at.default_ladder(section, spec, levels=levels)
    fit = at.box_dimension(section, spec, ladder)
    save_cloud(out / "section.jsonl", section)
    write_json(out / "dimension.json", fit.to_json_dict())
    report = {
        "schema_version": SCHEMA_VERSION, "experiment": "dimension",
        "seed": seed,
        "scalars": {"slope": fit.slope, "r2": fit.r2,
                    "degenerate": fit.degenerate, "depth": depth,
                    "size": size},
        "estimates": [{"estimate": "dimension_fit",
                       "verdict": "fail" if fit.degenerate else "pass",
                       "margin": fit.r2 - 0.8, "constants_used": {},
                       "detail": "fit quality below 0.8" if fit.degenerate else ""}],
    }
    code = EXIT_CHECK_FAILED if fit.degenerate else EXIT_OK
    return code, report, ["section.jsonl", "dimension.json"]


def _exp_squeeze(cfg, out, seed):
    profile = build_profile(cfg)
    potential = build_potential(cfg)
    spec = build_spec(cfg, profile, potential)
    constants = derive_constants(cfg, potential, profile)
    t0 = cfg.get_float("time.t", 0.0)
    depth = cfg.get_float("section.depth", 8.0)
    size = cfg.get_int("section.size", 24)
    t_star = cfg.get_float("squeeze.t_star", 6.0)
    pairs = cfg.get_int("squeeze.pairs", 25)
    slack = cfg.get_float("tolerance.slack", en.DEFAULT_SLACK)
    dy.resolve_timestep(spec, t0 - depth, t0 + t_star)

    section = at.kernel_section(t0, depth, size, spec, constants, seed=seed)
    result = at.squeezing_check(section, t_star, spec, constants,
                                n_pairs=pairs, seed=seed + 1, slack=slack)
    report = {
        "schema_version": SCHEMA_VERSION, "experiment": "squeeze",
        "seed": seed,
        "estimates": [result.report_decay.to_json_dict(),
                      result.report_smoothing.to_json_dict()],
        "scalars": {"C": result.C_decay, "F": result.F_envelope,
                    "eps_hat": result.eps_hat,
                    "t_star_quarter": result.t_star_quarter,
                    "contraction_at_t_star": result.contraction_at_t_star},
    }
    return (EXIT_OK if result.passed else EXIT_CHECK_FAILED), report, []


def _exp_check_assumptions(cfg, out, seed):
    profile = build_profile(cfg)
    potential = build_potential(cfg)
    constants = derive_constants(cfg, potential, profile)
    window = [float(x) for x in cfg.get_list("assumptions.window", [-20.0, 20.0])]
    if len(window) != 2:
        raise ConfigError("assumptions.window must be 't1,t2'")
    lookback = cfg.get_float("assumptions.lookback", co.DEFAULT_LOOKBACK)
    c1 = cfg.get_float("assumptions.c1", constants.c1)
    grid = cfg.get_int("assumptions.grid", co.DEFAULT_GRID)

    reports = [
        co.check_m1(profile, (window[0], window[1]), grid_size=grid, c1=c1),
        co.check_m2(profile, (window[0], window[1]), grid_size=grid),
        co.check_m3(profile, window[1], lookback=lookback, grid_size=grid),
    ]
    write_json(out / "assumptions.json", [r.to_json_dict() for r in reports])
    report = {
        "schema_version": SCHEMA_VERSION, "experiment": "check-assumptions",
        "seed": seed,
        "scalars": {"window": window, "c1": c1,
                    "verdicts": {r.assumption: r.verdict for r in reports}},
        "estimates": [dict(estimate=f"assumption_{r.assumption}",
                           verdict=r.verdict, margin=0.0,
                           constants_used={}, detail=r.detail)
                      for r in reports],
    }
    code = EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED
    return code, report, ["assumptions.json"]


def _exp_constants(cfg, out, seed):
    profile = build_profile(cfg)
    potential = build_potential(cfg)
    constants = derive_constants(cfg, potential, profile)
    write_json(out / "constants.json", constants.to_json_dict())
    report = {
        "schema_version": SCHEMA_VERSION, "experiment": "constants",
        "seed": seed, "scalars": constants.to_json_dict(), "estimates": [],
    }
    return EXIT_OK, report, ["constants.json"]


def _exp_convergence(cfg, out, seed):
    profile = build_profile(cfg)
    potential = build_potential(cfg)
    n = cfg.get_int("grid.n", 16)
    dim = cfg.get_int("grid.dim", 1)
    # generic final time: at full periods the leading phase error cancels in
    # the position component and the measured order inflates
    T = cfg.get_float("time.t", 1.3)
    levels = cfg.get_int("convergence.levels", 3)
    dt0 = cfg.get("convergence.dt0")

    # undamped single-mode test problem with frozen speed: exact cosine
    mu0 = float(profile.mu(0.0))
    base = co.CoefficientProfile(
        omega=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        omega_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        mu=lambda t: mu0 * np.ones_like(np.asarray(t, dtype=float)),
        mu_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        W=0.0, label="order-study")
    lam1 = float(fd.laplacian_spectrum(dim, n)[(0,) * dim])
    w = math.sqrt(mu0 * lam1)
    z0 = fd.SpectralState(fd.unit_mode(dim, n, 1), fd.zeros(dim, n), 0.0)
    if dt0 is None:
        dt0 = min(0.05 / w, cfg.get_float("time.cfl_margin", 0.5)
                  / (math.sqrt(mu0) * math.pi * n * math.sqrt(dim)))
    dts = [float(dt0) / 2**k for k in range(levels)]
    errs = []
    for dtk in dts:
        spec = dy.EvolutionSpec(profile=base, potential=potential, dim=dim,
                                n=n, dt=dtk, variant="linear_test")
        res = dy.evolve(z0, 0.0, T, spec, collect_trace=False)
        du = float(res.state.u.coeffs[(0,) * dim]) - math.cos(w * T)
        dv = float(res.state.v.coeffs[(0,) * dim]) + w * math.sin(w * T)
        errs.append(math.hypot(du, dv / w))
    orders = [float(np.log2(errs[k] / errs[k + 1])) for k in range(len(errs) - 1)]
    ok = all(abs(o - 4.0) <= 0.3 for o in orders)
    report = {
        "schema_version": SCHEMA_VERSION, "experiment": "convergence",
        "seed": seed,
        "scalars": {"dts": dts, "errors": errs, "orders": orders},
        "estimates": [{"estimate": "integrator_order",
                       "verdict": "pass" if ok else "fail",
                       "margin": 0.3 - max(abs(o - 4.0) for o in orders),
                       "constants_used": {}, "detail": ""}],
    }
    return (EXIT_OK if ok else EXIT_CHECK_FAILED), report, []


_RUNNERS = {
    "simulate": _exp_simulate,
    "decompose": _exp_decompose,
    "pullback": _exp_pullback,
    "dimension": _exp_dimension,
    "squeeze": _exp_squeeze,
    "check-assumptions": _exp_check_assumptions,
    "constants": _exp_constants,
    "convergence": _exp_convergence,
}


def run(cfg: ExperimentConfig, out_dir, seed: int | None = None) -> int:
    """Run the configured experiment, writing artifacts under ``out_dir``."""
    experiment = cfg.get_str("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; "
                          f"valid: {', '.join(EXPERIMENTS)}")
    seed = cfg.get_int("seed", 0) if seed is None else int(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment,
        "config": cfg.dumps(),
        "config_sha256": cfg.sha256(),
        "package_version": __version__,
        "seed": seed,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "finished_at": None,
        "wall_seconds": None,
        "artifacts": [],
        "exit_code": None,
    }
    write_json(out / "manifest.json", manifest)
    begin = time.monotonic()
    try:
        code, report, artifacts = _RUNNERS[experiment](cfg, out, seed)
    except dy.CflViolation as exc:
        manifest.update(exit_code=EXIT_CONFIG, finished_at=_now(),
                        wall_seconds=time.monotonic() - begin,
                        error=str(exc))
        write_json(out / "manifest.json", manifest)
        raise ConfigError(str(exc)) from exc
    except dy.IntegrationUnstable as exc:
        manifest.update(exit_code=EXIT_UNSTABLE, finished_at=_now(),
                        wall_seconds=time.monotonic() - begin,
                        error=str(exc))
        write_json(out / "manifest.json", manifest)
        return EXIT_UNSTABLE
    write_json(out / "report.json", report)
    artifacts = list(artifacts) + ["report.json"]
    manifest.update(exit_code=code, finished_at=_now(),
                    wall_seconds=time.monotonic() - begin,
                    artifacts=sorted(artifacts))
    write_json(out / "manifest.json", manifest)
    return code


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


# ---------------------------------------------------------------------------
# Regression comparison
# ---------------------------------------------------------------------------

def _numeric_diff(a, b, path, tol, out):
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            if k not in a:
                out["added"].append(f"{path}.{k}")
            elif k not in b:
                out["removed"].append(f"{path}.{k}")
            else:
                _numeric_diff(a[k], b[k], f"{path}.{k}", tol, out)
        return
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            out["structural"].append(f"{path}: length {len(a)} vs {len(b)}")
            return
        for i, (x, y) in enumerate(zip(a, b)):
            _numeric_diff(x, y, f"{path}[{i}]", tol, out)
        return
    if isinstance(a, (int, float)) and isinstance(b, (int, float)) \
            and not isinstance(a, bool) and not isinstance(b, bool):
        scale = max(abs(a), abs(b), 1e-300)
        rel = abs(a - b) / scale
        if rel > tol:
            out["drift"][path] = {"a": a, "b": b, "rel": rel}
        return
    if a != b:
        out["structural"].append(f"{path}: {a!r} vs {b!r}")


def compare(manifest_a, manifest_b, rel_tol: float = 1e-9) -> dict:
    """Diff the scalar outcomes of two runs of the same experiment type."""
    with open(manifest_a) as fh:
        ma = json.load(fh)
    with open(manifest_b) as fh:
        mb = json.load(fh)
    if ma["experiment"] != mb["experiment"]:
        raise ConfigError(f"experiment types differ: "
                          f"{ma['experiment']} vs {mb['experiment']}")
    out = {"structural": [], "drift": {}, "added": [], "removed": []}
    ca = ExperimentConfig.parse(ma["config"]).values
    cb = ExperimentConfig.parse(mb["config"]).values
    for k in sorted(set(ca) | set(cb)):
        if ca.get(k) != cb.get(k):
            out["structural"].append(
                f"config.{k}: {ca.get(k)!r} vs {cb.get(k)!r}")
    ra = Path(manifest_a).parent / "report.json"
    rb = Path(manifest_b).parent / "report.json"
    with open(ra) as fh:
        rep_a = json.load(fh)
    with open(rb) as fh:
        rep_b = json.load(fh)
    _numeric_diff(rep_a.get("scalars", {}), rep_b.get("scalars", {}),
                  "scalars", rel_tol, out)
    _numeric_diff(rep_a.get("estimates", []), rep_b.get("estimates", []),
                  "estimates", rel_tol, out)
    out["identical"] = not (out["structural"] or out["drift"]
                            or out["added"] or out["removed"])
    return out

"""Self-verification suites: geometry, energy, palm, temperedness, dlr.

Each suite is a list of numerical cross-checks between independent routes to
the same quantity, reported as z-scores.  Reports are pure functions of the
master seed and the spec, with no timestamps, so two runs with the same seed
produce byte-identical JSON.
"""

from __future__ import annotations

import math
from itertools import islice

import numpy as np

from .energy import BoundaryCondition, area_energy, kbody_expansion, exclusive_volume
from .estimators import (
    energy_density_curve,
    palm_energy_identity_check,
    temperedness_tail_stats,
)
from .geometry import (
    Ball,
    ball_volume,
    critical_ratio,
    k_intersection_volume,
    pair_intersection_volume,
    union_volume,
)
from .model import Configuration, MarkLaw, ModelParams, Window
from .sampling import (
    dlr_consistency_check,
    fkg_temperedness_check,
    gibbs_mcmc,
    rejection_sample_gibbs,
)
from .specfile import ExperimentSpec, derive_seeds, spec_from_dict

SUITES = ("geometry", "energy", "palm", "temperedness", "dlr")

__all__ = ["SUITES", "run_suite", "run_verification"]


def _check(name: str, value: float, reference: float, stderr: float,
           n_sigma: float = 4.0, atol: float = 1e-9, one_sided: bool = False) -> dict:
    """Z-score record; one_sided accepts value <= reference + slack.

    z is null when the routes are exact (stderr 0) yet disagree; the ok flag
    is decided by the slack rule alone, so exact one-sided passes count.
    """
    diff = value - reference
    slack = n_sigma * stderr + atol
    ok = (diff <= slack) if one_sided else (abs(diff) <= slack)
    if stderr > 0:
        z: float | None = diff / stderr
    else:
        z = 0.0 if abs(diff) <= atol else None
    return {"name": name, "value": float(value), "reference": float(reference),
            "stderr": float(stderr), "z": z if z is None else float(z), "ok": bool(ok)}


def _flag(name: str, ok: bool, value: float = 1.0, reference: float = 1.0) -> dict:
    return {"name": name, "value": float(value), "reference": float(reference),
            "stderr": 0.0, "z": 0.0 if ok else None, "ok": bool(ok)}


def _rng(seed_seq) -> np.random.Generator:
    return np.random.default_rng(seed_seq)


# ---- geometry ---------------------------------------------------------------


def _suite_geometry(spec: ExperimentSpec, master: int) -> list[dict]:
    seeds = derive_seeds(master, "verify/geometry", 4)
    quad = spec.quad
    checks = []

    # two overlapping balls: MC union against inclusion-exclusion with the
    # closed-form lens volume
    rng = _rng(seeds[0])
    for d, dist in ((2, 0.7), (3, 0.9)):
        b1 = Ball((0.0,) * d, 0.6)
        b2 = Ball((dist,) + (0.0,) * (d - 1), 0.5)
        est = union_volume(d, [b1, b2], quad=quad, rng=rng)
        ref = (ball_volume(d, 0.6) + ball_volume(d, 0.5)
               - pair_intersection_volume(d, b1, b2))
        checks.append(_check(f"pair_union_inclusion_exclusion_d{d}",
                             est.value, ref, est.stderr))

    # d = 1 unions are merged intervals, exact; reference by direct sweep
    segs = [(-0.4, 0.3), (0.1, 0.9), (1.2, 1.5)]
    est = union_volume(1, [Ball((0.5 * (a + b),), 0.5 * (b - a)) for a, b in segs])
    ref = (0.9 - (-0.4)) + (1.5 - 1.2)
    checks.append(_check("interval_union_exact_1d", est.value, ref, est.stderr))

    # triple overlap recovered two ways: k-wise MC vs union + pair closed forms
    rng = _rng(seeds[1])
    pts = [(0.0, 0.0), (0.55, 0.0), (0.27, 0.5)]
    balls = [Ball(p, 0.45) for p in pts]
    tri = k_intersection_volume(2, balls, quad=quad, rng=rng)
    uni = union_volume(2, balls, quad=quad, rng=_rng(seeds[2]))
    pair_sum = sum(pair_intersection_volume(2, balls[i], balls[j])
                   for i in range(3) for j in range(i + 1, 3))
    ref = uni.value - 3.0 * ball_volume(2, 0.45) + pair_sum
    se = math.hypot(tri.stderr, uni.stderr)
    checks.append(_check("triple_intersection_two_routes", tri.value, ref, se))

    # wrapped pair volume equals the euclidean sum over the 3^d image grid
    torus = Window.cube(2.0, 2, torus=True)
    b1 = Ball((0.9, 0.0), 0.4)
    b2 = Ball((-0.9, 0.1), 0.35)
    wrapped = pair_intersection_volume(2, b1, b2, torus=torus)
    ref = 0.0
    for sx in (-2.0, 0.0, 2.0):
        for sy in (-2.0, 0.0, 2.0):
            img = Ball((b2.center[0] + sx, b2.center[1] + sy), b2.radius)
            ref += pair_intersection_volume(2, b1, img)
    checks.append(_check("torus_pair_volume_images", wrapped, ref, 0.0))
    return checks


# ---- energy -----------------------------------------------------------------


def _feasible_config(params: ModelParams, window: Window, rng,
                     want: int = 0, tries: int = 60) -> Configuration:
    cfg, _ = rejection_sample_gibbs(params, window, BoundaryCondition.free(), rng)
    for _ in range(tries):
        if cfg.n >= want:
            break
        alt, _ = rejection_sample_gibbs(params, window, BoundaryCondition.free(), rng)
        if alt.n > cfg.n:
            cfg = alt
    return cfg


def _overlap_chain(params: ModelParams, window: Window, rng, k: int = 3) -> Configuration:
    """Hardcore-feasible points on a line whose enlarged balls overlap in pairs.

    Gap r between consecutive hard spheres sits strictly inside (0, 2r), which
    keeps every adjacent enlarged pair intersecting; the disjoint-union
    shortcut cannot fire, so two-route checks stay two routes.
    """
    radii = np.sort(params.mark_law.sample(rng, k))[::-1]
    xs = [0.0]
    for i in range(1, k):
        xs.append(xs[-1] + radii[i - 1] + radii[i] + params.r)
    pos = np.zeros((k, params.d))
    pos[:, 0] = np.asarray(xs) - 0.5 * xs[-1]
    if np.any(~window.contains(pos)):
        raise ValueError("window too small for the overlap chain")
    return Configuration(pos, radii, d=params.d)


def _suite_energy(spec: ExperimentSpec, master: int) -> list[dict]:
    seeds = derive_seeds(master, "verify/energy", 6)
    params = spec.params
    window = spec.window
    quad = spec.quad
    free = BoundaryCondition.free()
    checks = []

    # covering-count union quadrature vs full inclusion-exclusion; the forced
    # method and the overlapping chain keep the two routes independent
    cfg = _overlap_chain(params, window, _rng(seeds[0]))
    direct = area_energy(cfg, window, free, params, quad=quad, rng=_rng(seeds[1]),
                         method="quadrature")
    terms = kbody_expansion(cfg, params, quad=quad, rng=_rng(seeds[2]))
    total = sum(t.value for _, t in terms)
    se = math.hypot(direct.stderr, *[t.stderr for _, t in terms])
    checks.append(_check("union_vs_kbody_expansion", direct.value, total, se,
                         atol=1e-7))

    # union volume is sandwiched between the largest ball and the sum of balls
    ok_lo, ok_hi = True, True
    rng = _rng(seeds[3])
    for _ in range(5):
        c = _feasible_config(params, window, rng)
        if c.n == 0:
            continue
        a = area_energy(c, window, free, params, quad=quad, rng=rng)
        enlarged = c.radii + params.r
        lo = float(max(ball_volume(params.d, rho) for rho in enlarged))
        hi = float(sum(ball_volume(params.d, rho) for rho in enlarged))
        slack = 4.0 * a.stderr + 1e-9
        ok_lo = ok_lo and a.value >= lo - slack
        ok_hi = ok_hi and a.value <= hi + slack
    checks.append(_flag("union_lower_bound_largest_ball", ok_lo))
    checks.append(_flag("union_upper_bound_ball_sum", ok_hi))

    # the marginal volume of one insertion never exceeds its own ball
    rng = _rng(seeds[4])
    cfg = _feasible_config(params, window, rng)
    lo = np.asarray(window.lo, dtype=float)
    ok = True
    for _ in range(6):
        x = lo + rng.random(params.d) * window.side
        R = params.mark_law.sample(rng, 1)[0]
        ex = exclusive_volume(cfg, window, free, params, x, float(R),
                              quad=quad, rng=rng)
        own = ball_volume(params.d, float(R) + params.r)
        slack = 4.0 * ex.stderr + 1e-9
        ok = ok and (-slack <= ex.value <= own + slack)
    checks.append(_flag("insertion_volume_bounds", ok))

    # truncated expansion agrees with quadrature in its exactness regime; an
    # atomic law keeps the minimum radius positive regardless of the spec law
    r_star = max(0.5 * params.mark_law.sup_radius, 0.15)
    ratio = 1.0 if params.d == 1 else critical_ratio(params.d)
    p2 = ModelParams(d=params.d, z=params.z, beta=params.beta,
                     r=0.9 * ratio * r_star, mark_law=MarkLaw.dirac(r_star))
    rng = _rng(seeds[5])
    cfg = _overlap_chain(p2, window, rng)
    a_q = area_energy(cfg, window, free, p2, quad=quad, rng=rng, method="quadrature")
    a_t = area_energy(cfg, window, free, p2, quad=quad, rng=rng, method="truncated")
    se = math.hypot(a_q.stderr, a_t.stderr)
    checks.append(_check("truncated_vs_quadrature_area", a_t.value, a_q.value, se,
                         atol=1e-7))
    return checks


# ---- palm -------------------------------------------------------------------


def _suite_palm(spec: ExperimentSpec, master: int) -> list[dict]:
    seeds = derive_seeds(master, "verify/palm", 3)
    params = spec.params
    quad = spec.quad
    checks = []

    # per-point summands over a torus state rebuild the total area energy; one
    # sampled state and one chain with forced enlarged overlaps
    torus = Window.cube(spec.window.side, params.d, torus=True)
    rng = _rng(seeds[0])
    sampled, _ = rejection_sample_gibbs(params, torus, BoundaryCondition.periodic(),
                                        rng, quad=quad)
    for tag, cfg in (("sampled", sampled), ("chain", _overlap_chain(params, torus, rng))):
        rep = palm_energy_identity_check(cfg, torus, params, quad=quad,
                                         rng=_rng(seeds[1]))
        checks.append(_check(f"xwise_sum_identity_{tag}_n{rep['n_points']}",
                             rep["rhs"].value, rep["lhs"].value, rep["stderr"],
                             atol=1e-7))

    # stationary energy density: direct volume average vs the box-weighted
    # per-point estimator on the same chain snapshots
    n0 = max(2, int(round(spec.window.side)))
    curve = energy_density_curve(params, BoundaryCondition.periodic(), [n0],
                                 chains=2, seed=derive_seeds(master, "verify/palm-curve", 1)[0],
                                 snapshots_per_chain=spec.snapshots,
                                 sampler=spec.sampler, quad=quad)
    row = curve["rows"][0]
    checks.append(_check("energy_density_direct_vs_palm",
                         row["palm"].value, row["direct"].value,
                         row["diff"].stderr))
    return checks


# ---- temperedness -----------------------------------------------------------


def _suite_temperedness(spec: ExperimentSpec, master: int) -> list[dict]:
    params = spec.params
    checks = []

    # spread-out surrogate when the law is atomic, so tail events are
    # nontrivial; the cutoff must clear the envelope thresholds in play
    law = params.mark_law
    if not law.has_density:
        base = max(law.sup_radius, 0.3)
        law = MarkLaw.truncated_weibull_like(scale=base, shape=0.8,
                                             cutoff=8.0 * base, delta=1.0)
    p = ModelParams(d=params.d, z=params.z, beta=params.beta, r=params.r,
                    mark_law=law)
    stats = temperedness_tail_stats(
        p, n_list=[1, 2], n_samples=spec.n_samples,
        seed=derive_seeds(master, "verify/temperedness", 1)[0], m_factors=(1, 2))
    for row in stats["rows"]:
        name = f"tail_prob_N{row['N']}_M{row['M']}"
        checks.append(_check(name, row["empirical"], row["analytic"],
                             row["null_stderr"], n_sigma=3.0, atol=1e-12,
                             one_sided=True))

    # decreasing envelope events keep at least Poisson mass under the gibbs law
    side = max(2, int(round(spec.window.side)))
    win = Window.cube(float(side), params.d)
    fkg = fkg_temperedness_check(
        p, win, K_values=[1, 2], n_snapshots=max(80, spec.snapshots),
        sampler=spec.sampler, quad=spec.quad,
        rng=_rng(derive_seeds(master, "verify/fkg", 1)[0]))
    for row in fkg["rows"]:
        checks.append(_check(f"fkg_envelope_K{row['K']}", row["poisson"],
                             row["gibbs"], row["stderr"], n_sigma=3.0,
                             atol=1e-9, one_sided=True))
    return checks


# ---- dlr --------------------------------------------------------------------


def _suite_dlr(spec: ExperimentSpec, master: int) -> list[dict]:
    params = spec.params
    side = spec.window.side
    window = Window.cube(side, params.d)
    sub = Window.cube(side / 2.0, params.d)
    rep = dlr_consistency_check(
        params, window, sub, n_snapshots=max(100, spec.snapshots),
        sampler=spec.sampler, quad=spec.quad,
        rng=_rng(derive_seeds(master, "verify/dlr", 1)[0]))
    checks = []
    for key in ("count", "mark_mass", "energy"):
        row = rep[key]
        checks.append(_check(f"dlr_resample_{key}", row["mean_diff"], 0.0,
                             row["stderr"], atol=1e-9))
    return checks


# ---- driver -----------------------------------------------------------------


_SUITE_FNS = {
    "geometry": _suite_geometry,
    "energy": _suite_energy,
    "palm": _suite_palm,
    "temperedness": _suite_temperedness,
    "dlr": _suite_dlr,
}


def run_suite(name: str, spec: ExperimentSpec, master: int) -> list[dict]:
    if name not in _SUITE_FNS:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES} or 'all'")
    return _SUITE_FNS[name](spec, master)


def run_verification(suite: str, spec: ExperimentSpec | None = None,
                     master: int = 0) -> dict:
    """Run one suite (or "all") and assemble the machine-readable report."""
    spec = spec if spec is not None else spec_from_dict({})
    names = list(SUITES) if suite == "all" else [suite]
    suites = []
    all_ok = True
    n_checks = 0
    n_failed = 0
    for name in names:
        checks = run_suite(name, spec, master)
        ok = all(c["ok"] for c in checks)
        all_ok = all_ok and ok
        n_checks += len(checks)
        n_failed += sum(not c["ok"] for c in checks)
        suites.append({"suite": name, "ok": ok, "checks": checks})
    return {"suite": suite, "master_seed": int(master), "ok": all_ok,
            "n_checks": n_checks, "n_failed": n_failed, "suites": suites,
            "spec_hash": spec.spec_hash()}

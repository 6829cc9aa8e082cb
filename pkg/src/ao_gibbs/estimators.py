"""Finite-volume pressure, energy-density, and tail estimators.

The limit statements behind these quantities live at infinite window scale;
everything here reports finite-n numbers with explicit errors so the limits
can be examined as trends rather than asserted.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from itertools import islice

import numpy as np

from .energy import (
    BoundaryCondition,
    area_energy,
    conditional_energy,
    hardcore_violated,
    xwise_palm_summand,
)
from .geometry import Ball, QuadratureSpec, ball_volume, critical_ratio, k_intersection_volume, pair_intersection_volume
from .model import Configuration, Estimate, MarkLaw, ModelParams, Window, periodize
from .sampling import (
    DELTA_QUAD,
    SamplerParams,
    batch_means_stderr,
    boundary_envelope_ok,
    epsilon_exponent,
    gibbs_mcmc,
    poisson_tempered_prob,
    sample_poisson,
    tempered_event_ok,
)

__all__ = [
    "PressureEstimate",
    "partition_direct",
    "pressure_thermo_integration",
    "pressure_bc_comparison",
    "palm_energy_identity_check",
    "finite_volume_palm_summand",
    "energy_density_curve",
    "temperedness_tail_stats",
    "poisson_relative_entropy",
    "discontinuity_demo",
]


@dataclass(frozen=True)
class PressureEstimate:
    """log Z per unit volume on one window, with the method that produced it."""

    n: float
    bc_kind: str
    log_z_over_volume: Estimate
    method: str

    def __post_init__(self) -> None:
        if self.method not in ("direct", "thermo_integration"):
            raise ValueError(f"unknown method {self.method!r}")


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


# ---- pressure ----------------------------------------------------------------


def partition_direct(
    params: ModelParams,
    window: Window,
    bc: BoundaryCondition,
    n_samples: int,
    seed,
    quad: QuadratureSpec | None = None,
) -> PressureEstimate:
    """Naive grand-canonical estimate of log Z over the window volume.

    Z is the Poisson mean of exp(-beta H); hardcore-violating draws count
    zero.  The log transform carries the delta-method stderr.  An all-zero
    sample falls back to the rule-of-three bound (capped below by the hard
    bound Z >= exp(-z |window|)) with infinite stderr.
    """
    rng = np.random.default_rng(_seed_sequence(seed))
    quad = quad or DELTA_QUAD
    vol = window.volume()
    if params.z * vol > 50.0:
        warnings.warn(
            f"z|window| = {params.z * vol:.1f}: the direct estimator variance "
            "is exponentially poor here; prefer thermodynamic integration",
            RuntimeWarning,
        )
    vals = np.zeros(n_samples)
    for i in range(n_samples):
        cfg = sample_poisson(params, window, rng)
        e = conditional_energy(cfg, window, bc, params, quad=quad, rng=rng)
        if e.finite:
            # quadrature noise in the exponent biases each term by about
            # beta^2 sigma^2 / 2, far below the sampling error at defaults
            vals[i] = math.exp(-params.beta * e.value)
    z_hat = float(vals.mean())
    if z_hat == 0.0:
        value = max(-params.z, math.log(3.0 / n_samples) / vol)
        est = Estimate(value, math.inf, n_samples)
    else:
        se = float(vals.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else math.inf
        est = Estimate(math.log(z_hat) / vol, se / (z_hat * vol), n_samples)
    return PressureEstimate(float(window.side), bc.kind, est, "direct")


def default_beta_grid(beta: float, beta_0: float = 1e-3, n_points: int = 14):
    """Anchor to target: geometric through the small-beta decades, then linear.

    A pure geometric grid leaves its widest trapezoid panel at the top end,
    exactly where the integrand still moves; splitting the grid keeps the
    panel width bounded on both ends.
    """
    if beta <= beta_0:
        return [float(beta)]
    knee = beta / 8.0
    if knee <= beta_0:
        grid = np.linspace(beta_0, beta, n_points)
    else:
        n_geom = n_points // 2
        grid = np.concatenate([
            np.geomspace(beta_0, knee, n_geom, endpoint=False),
            np.linspace(knee, beta, n_points - n_geom),
        ])
    grid[-1] = beta
    return [float(b) for b in grid]


def pressure_thermo_integration(
    params: ModelParams,
    window: Window,
    bc: BoundaryCondition,
    beta_grid=None,
    chains: int = 2,
    seed=0,
    *,
    anchor_samples: int = 20_000,
    snapshots_per_chain: int = 200,
    sampler: SamplerParams | None = None,
    quad: QuadratureSpec | None = None,
) -> PressureEstimate:
    """log Z via the energy identity d(log Z)/dbeta = -E[H].

    The anchor at beta_0 comes from the direct estimator: the hardcore
    backbone is unchanged by beta, and at beta_0 = 1e-3 the area reweighting
    is negligible, so the anchor is essentially the hardcore-only model.
    From there the mean area energy of independent per-beta chains is
    integrated with the trapezoid rule; the grid must end at params.beta.
    """
    grid = list(beta_grid) if beta_grid is not None else default_beta_grid(params.beta)
    if not grid or grid[0] <= 0.0 or any(b2 <= b1 for b1, b2 in zip(grid, grid[1:])):
        raise ValueError("beta grid must be strictly ascending and positive")
    if abs(grid[-1] - params.beta) > 1e-12 * max(1.0, params.beta):
        raise ValueError(
            f"beta grid must end at params.beta={params.beta}, got {grid[-1]}"
        )
    quad = quad or DELTA_QUAD
    vol = window.volume()
    children = _seed_sequence(seed).spawn(1 + len(grid) * chains)

    anchor = partition_direct(
        replace(params, beta=grid[0]), window, bc, anchor_samples, children[0], quad
    )
    if len(grid) == 1:
        return PressureEstimate(
            float(window.side), bc.kind, anchor.log_z_over_volume, "thermo_integration"
        )

    means = np.zeros(len(grid))
    ses = np.zeros(len(grid))
    drawn = anchor.log_z_over_volume.n_samples
    for j, beta in enumerate(grid):
        chain_means = []
        chain_vars = []
        for c in range(chains):
            rng = np.random.default_rng(children[1 + j * chains + c])
            chain = gibbs_mcmc(
                replace(params, beta=beta), window, bc,
                sampler=sampler, quad=quad, rng=rng,
            )
            xs = [state.area for state in islice(chain, snapshots_per_chain)]
            chain_means.append(float(np.mean(xs)))
            chain_vars.append(batch_means_stderr(xs) ** 2)
            drawn += len(xs)
        means[j] = float(np.mean(chain_means))
        ses[j] = math.sqrt(sum(chain_vars)) / chains

    g = np.asarray(grid)
    weights = np.zeros(len(g))
    weights[0] = (g[1] - g[0]) / 2.0
    weights[-1] = (g[-1] - g[-2]) / 2.0
    weights[1:-1] = (g[2:] - g[:-2]) / 2.0
    integral = float(np.dot(weights, means))
    integral_var = float(np.dot(weights ** 2, ses ** 2))

    base = anchor.log_z_over_volume
    value = base.value - integral / vol
    stderr = math.hypot(base.stderr, math.sqrt(integral_var) / vol)
    return PressureEstimate(
        float(window.side), bc.kind, Estimate(value, stderr, drawn), "thermo_integration"
    )


def _tempered_tiling(
    params: ModelParams,
    side: float,
    seed,
    sampler: SamplerParams | None,
    quad: QuadratureSpec,
) -> Configuration:
    """Outer boundary points: a converged periodic snapshot tiled past the box."""
    torus = Window.cube(side, params.d, torus=True)
    rng = np.random.default_rng(seed)
    chain = gibbs_mcmc(params, torus, BoundaryCondition.periodic(),
                       sampler=sampler, quad=quad, rng=rng)
    snapshot = next(iter(chain)).config
    if snapshot.n == 0:
        return Configuration(d=params.d, reach=params.r)
    band = 2.0 * params.r + float(snapshot.radii.max())
    images = periodize(snapshot, torus).materialize(extra=band)
    box = Window.cube(side, params.d)
    outside = ~box.contains(images.positions)
    outer = Configuration(images.positions[outside], images.radii[outside],
                          d=params.d, reach=params.r)
    if not boundary_envelope_ok(outer, box, params):
        raise RuntimeError("periodic tiling violated the tempered envelope")
    return outer


def pressure_bc_comparison(
    params: ModelParams,
    n_list,
    seed,
    *,
    direct_threshold: float = 6.0,
    direct_samples: int = 40_000,
    beta_grid=None,
    chains: int = 2,
    snapshots_per_chain: int = 200,
    anchor_samples: int = 20_000,
    sampler: SamplerParams | None = None,
    quad: QuadratureSpec | None = None,
) -> dict:
    """Free / periodic / fixed-boundary pressure on a ladder of windows.

    Per window the method is automatic: direct estimation while z|window|
    stays below the threshold, thermodynamic integration beyond it.  The
    fixed boundary is a converged periodic snapshot tiled outside the box,
    tempered by construction and checked against the envelope.  Returns the
    per-window estimates, the pairwise gaps, and the gap trend.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be ascending")
    quad = quad or DELTA_QUAD
    children = _seed_sequence(seed).spawn(4 * len(n_list))

    def estimate(win: Window, bc: BoundaryCondition, child) -> PressureEstimate:
        if params.z * win.volume() <= direct_threshold:
            return partition_direct(params, win, bc, direct_samples, child, quad)
        return pressure_thermo_integration(
            params, win, bc, beta_grid, chains, child,
            anchor_samples=anchor_samples,
            snapshots_per_chain=snapshots_per_chain,
            sampler=sampler, quad=quad,
        )

    rows = []
    for i, n in enumerate(n_list):
        zeta_child, free_child, per_child, fixed_child = children[4 * i: 4 * i + 4]
        box = Window.cube(float(n), params.d)
        torus = Window.cube(float(n), params.d, torus=True)
        outer = _tempered_tiling(params, float(n), zeta_child, sampler, quad)

        free = estimate(box, BoundaryCondition.free(), free_child)
        per = estimate(torus, BoundaryCondition.periodic(), per_child)
        fixed = estimate(box, BoundaryCondition.fixed(outer), fixed_child)

        def gap(a: PressureEstimate, b: PressureEstimate) -> Estimate:
            ea, eb = a.log_z_over_volume, b.log_z_over_volume
            return Estimate(ea.value - eb.value, math.hypot(ea.stderr, eb.stderr),
                            ea.n_samples + eb.n_samples)

        rows.append({
            "n": n,
            "free": free,
            "periodic": per,
            "fixed": fixed,
            "per_minus_free": gap(per, free),
            "fixed_minus_free": gap(fixed, free),
        })

    nonincreasing = True
    for prev, cur in zip(rows, rows[1:]):
        a, b = prev["per_minus_free"], cur["per_minus_free"]
        slack = math.hypot(a.stderr, b.stderr)
        if abs(b.value) > abs(a.value) + slack:
            nonincreasing = False
    return {"rows": rows, "gap_abs_nonincreasing_1sigma": nonincreasing}


# ---- Palm / energy-density identities ----------------------------------------


def palm_energy_identity_check(
    config: Configuration,
    window: Window,
    params: ModelParams,
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
    n_sigma: float = 3.0,
) -> dict:
    """Periodic energy versus the sum of one-point shares on the torus.

    Both sides integrate the same indicator field, but through different
    estimators: the union quadrature on the left, the cover-count-weighted
    per-point quadrature on the right.  Agreement is asserted within the
    combined error plus a small floor for the exact-arithmetic dimensions.
    """
    bc = BoundaryCondition.periodic()
    if hardcore_violated(config, window, bc, params):
        raise ValueError("configuration violates the hardcore constraint on the torus")
    quad = quad or DELTA_QUAD
    rng = rng if rng is not None else np.random.default_rng(0)

    lhs = area_energy(config, window, bc, params, quad=quad, rng=rng, method="quadrature")
    total = 0.0
    var = 0.0
    drawn = 1
    for row in range(config.n):
        part = xwise_palm_summand(config, row, window, bc, params, quad=quad, rng=rng)
        total += part.value
        var += part.stderr ** 2
        drawn += part.n_samples
    rhs = Estimate(total, math.sqrt(var), drawn)

    diff = lhs.value - rhs.value
    stderr = math.hypot(lhs.stderr, rhs.stderr)
    floor = 1e-9 * max(1.0, abs(lhs.value))
    z = diff / stderr if stderr > 0.0 else (0.0 if abs(diff) <= floor else math.inf)
    return {
        "n_points": config.n,
        "lhs": lhs,
        "rhs": rhs,
        "diff": diff,
        "stderr": stderr,
        "z": z,
        "ok": abs(diff) <= n_sigma * stderr + floor,
    }


def finite_volume_palm_summand(
    config: Configuration,
    row: int,
    window: Window,
    params: ModelParams,
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
) -> Estimate:
    """One-point share of the mean free-boundary energy of the box.

    Inclusion-exclusion over periodized neighbor subsets, each order-k term
    carrying weight 1/k times the box-overlap fraction
    prod_a max(0, side - (max shift - min shift)) / side^d of the relative
    neighbor positions.  Truncated after the three-body order, which is
    exact only while r stays below the critical ratio times the smallest
    radius; larger enlargements are rejected.
    """
    if not (0 <= row < config.n):
        raise IndexError(f"row {row} out of range for n={config.n}")
    d = params.d
    ratio = 1.0 if d == 1 else critical_ratio(d)
    r_min = float(config.radii.min())
    if params.r > ratio * r_min + 1e-12:
        raise ValueError(
            "four-body terms need not vanish at this enlargement; "
            f"r={params.r} exceeds {ratio:.6f} * R_min={r_min}"
        )
    side = window.side
    torus = Window(window.center, window.side, torus=True)
    x = config.positions[row]
    R_x = float(config.radii[row])
    rho_x = R_x + params.r

    images = periodize(config, torus).materialize(extra=2.0 * params.r + float(config.radii.max()))
    pos, rad = images.positions, images.radii
    own = np.all(pos == x, axis=1) & (rad == R_x)
    pos, rad = pos[~own], rad[~own]
    rho = rad + params.r
    dist = np.linalg.norm(pos - x, axis=1)
    near = dist < rho_x + rho
    pos, rho = pos[near], rho[near]

    value = ball_volume(d, rho_x)
    var = 0.0
    drawn = 1
    for j in range(len(pos)):
        overlap = pair_intersection_volume(
            d, Ball(tuple(x), rho_x), Ball(tuple(pos[j]), float(rho[j]))
        )
        u = pos[j] - x
        w = 1.0
        for a in range(d):
            w *= max(0.0, side - abs(float(u[a]))) / side
        value -= 0.5 * overlap * w

    for j in range(len(pos)):
        for k in range(j + 1, len(pos)):
            if float(np.linalg.norm(pos[j] - pos[k])) >= float(rho[j] + rho[k]):
                continue
            balls = [
                Ball(tuple(x), rho_x),
                Ball(tuple(pos[j]), float(rho[j])),
                Ball(tuple(pos[k]), float(rho[k])),
            ]
            est = k_intersection_volume(d, balls, quad=quad, rng=rng)
            if est.value == 0.0:
                continue
            u, v = pos[j] - x, pos[k] - x
            w = 1.0
            for a in range(d):
                span = max(0.0, float(u[a]), float(v[a])) - min(0.0, float(u[a]), float(v[a]))
                w *= max(0.0, side - span) / side
            value += est.value * w / 3.0
            var += (est.stderr * w / 3.0) ** 2
            drawn += est.n_samples
    return Estimate(value, math.sqrt(var), drawn)


def energy_density_curve(
    params: ModelParams,
    bc: BoundaryCondition,
    n_list,
    chains: int,
    seed,
    *,
    snapshots_per_chain: int = 120,
    sampler: SamplerParams | None = None,
    quad: QuadratureSpec | None = None,
) -> dict:
    """Mean free-boundary energy per unit volume on a ladder of windows.

    The direct column averages the free-boundary energy of each snapshot;
    under a periodic chain the Palm column re-estimates the same mean from
    the box-weighted one-point shares, and the paired difference carries a
    z-score.  Non-periodic chains are not stationary, so the Palm column is
    omitted for them.  The plateau trend is reported, never asserted.
    """
    quad = quad or DELTA_QUAD
    n_list = list(n_list)
    children = _seed_sequence(seed).spawn(chains * len(n_list))
    palm_applicable = bc.kind == BoundaryCondition.PERIODIC
    free = BoundaryCondition.free()

    rows = []
    for i, n in enumerate(n_list):
        win = Window.cube(float(n), params.d, torus=palm_applicable)
        box = Window.cube(float(n), params.d)
        vol = box.volume()
        chain_direct: list[list[float]] = []
        chain_palm: list[list[float]] = []
        for c in range(chains):
            rng = np.random.default_rng(children[i * chains + c])
            chain = gibbs_mcmc(params, win, bc, sampler=sampler, quad=quad, rng=rng)
            direct_vals = []
            palm_vals = []
            for state in islice(chain, snapshots_per_chain):
                cfg = state.config
                direct = area_energy(cfg, box, free, params, quad=quad, rng=rng)
                direct_vals.append(direct.value / vol)
                if palm_applicable:
                    total = 0.0
                    for rowi in range(cfg.n):
                        total += finite_volume_palm_summand(
                            cfg, rowi, box, params, quad=quad, rng=rng
                        ).value
                    palm_vals.append(total / vol)
            chain_direct.append(direct_vals)
            chain_palm.append(palm_vals)

        def pooled(per_chain: list[list[float]]) -> Estimate:
            ms = [float(np.mean(xs)) for xs in per_chain]
            vs = [batch_means_stderr(xs) ** 2 for xs in per_chain]
            return Estimate(float(np.mean(ms)), math.sqrt(sum(vs)) / len(ms),
                            sum(len(xs) for xs in per_chain))

        row = {"n": n, "direct": pooled(chain_direct), "palm": None, "diff": None, "z": None}
        if palm_applicable:
            diffs = [[a - b for a, b in zip(dxs, pxs)]
                     for dxs, pxs in zip(chain_direct, chain_palm)]
            row["palm"] = pooled(chain_palm)
            d_est = pooled(diffs)
            row["diff"] = d_est
            row["z"] = d_est.value / d_est.stderr if d_est.stderr > 0 else 0.0
        rows.append(row)
    return {"rows": rows}


# ---- temperedness and entropy -------------------------------------------------


def temperedness_tail_stats(
    params: ModelParams,
    n_list,
    n_samples: int,
    seed,
    m_factors=(1, 2),
    gamma: float | None = None,
) -> dict:
    """Envelope-violation frequency under Poisson sampling, next to the
    closed-form probability and the decay scale exp(-|box_N|^(1+gamma))."""
    eps = epsilon_exponent(params, gamma)
    gamma_val = gamma if gamma is not None else params.mark_law.delta / (2.0 * params.d)
    pairs = [(int(N), int(f * N)) for N in n_list for f in m_factors]
    children = _seed_sequence(seed).spawn(len(pairs))

    rows = []
    for (N, M), child in zip(pairs, children):
        rng = np.random.default_rng(child)
        win = Window.cube(float(M), params.d)
        hits = 0
        for _ in range(n_samples):
            cfg = sample_poisson(params, win, rng)
            if not tempered_event_ok(cfg, N, M, eps):
                hits += 1
        empirical = hits / n_samples
        analytic = 1.0 - poisson_tempered_prob(params, N, M, eps)
        null_se = math.sqrt(max(analytic * (1.0 - analytic), 1e-300) / n_samples)
        scale = math.exp(-float(N ** params.d) ** (1.0 + gamma_val))
        rows.append({
            "N": N,
            "M": M,
            "empirical": empirical,
            "analytic": analytic,
            "stderr": math.sqrt(empirical * (1.0 - empirical) / n_samples),
            "null_stderr": null_se,
            "n_samples": n_samples,
            "bound_scale": scale,
            "ratio_to_bound": analytic / scale if scale > 0.0 else math.inf,
        })
    return {"eps": eps, "gamma": gamma_val, "rows": rows}


def poisson_relative_entropy(z_p: float, z_q: float, volume: float) -> float:
    """Relative entropy of two homogeneous Poisson laws on a common window."""
    if z_p <= 0.0 or z_q <= 0.0:
        raise ValueError("activities must be positive")
    if volume < 0.0:
        raise ValueError("volume must be nonnegative")
    return volume * (z_q - z_p + z_p * math.log(z_p / z_q))


# ---- the discontinuity construction -------------------------------------------


def discontinuity_demo(
    S: float,
    n_list,
    *,
    d: int = 1,
    r: float = 0.25,
    seed: int = 0,
    quad: QuadratureSpec | None = None,
) -> dict:
    """Finite vs infinite per-volume energy of the two lattice configurations.

    The good lattice has spacing 2S and radius S; touching counts as overlap
    here, so the radius is backed off by a relative 1e-9 to stay admissible.
    The bad lattice at scale n has spacing 2n and radius 2n, so any two
    neighbors overlap and the energy is an infinite veto.  Only adjacent
    enlarged balls of the good lattice may meet (hence S >= r), keeping the
    exact and quadrature routes cheap.
    """
    if S < r:
        raise ValueError("need S >= r so only adjacent lattice balls' enlargements meet")
    radius = S * (1.0 - 1e-9)
    params = ModelParams(d=d, z=1.0, beta=1.0, r=r, mark_law=MarkLaw.dirac(radius))
    free = BoundaryCondition.free()
    rng = np.random.default_rng(seed)
    quad = quad or DELTA_QUAD

    rows = []
    for n in n_list:
        win = Window.cube(float(n), d)
        ks = np.arange(math.ceil(-n / (4.0 * S)) - 1, math.floor(n / (4.0 * S)) + 2)
        axes = [2.0 * S * ks] * d
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        grid = grid[win.contains(grid)]
        cfg = Configuration(grid, np.full(len(grid), radius), d=d, reach=r)
        if hardcore_violated(cfg, win, free, params):
            raise RuntimeError("good lattice unexpectedly violates the hardcore")
        area = area_energy(cfg, win, free, params, quad=quad, rng=rng)

        bad_pos = np.zeros((2, d))
        bad_pos[1, 0] = 2.0 * n
        bad_win = Window.cube(4.0 * n + 2.0, d)
        bad_cfg = Configuration(bad_pos, np.full(2, 2.0 * float(n)), d=d, reach=r)
        bad_violated = hardcore_violated(bad_cfg, bad_win, free, params)

        rows.append({
            "n": n,
            "good_count": cfg.n,
            "good_density": area.value / win.volume(),
            "good_density_stderr": area.stderr / win.volume(),
            "bad_violated": bad_violated,
            "bad_energy": math.inf,
        })
    return {"S": S, "d": d, "r": r, "rows": rows}

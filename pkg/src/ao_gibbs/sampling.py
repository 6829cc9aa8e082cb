"""Samplers for the grand-canonical hardcore depletion model.

Two routes to the same law: a birth-death-translate-resize Metropolis chain
whose cached energy is re-derived from scratch at a fixed cadence (the audit
raises if the incremental bookkeeping ever drifts), and exact rejection from
the Poisson reference, which is affordable at small activity times volume and
serves as the ground truth in consistency checks.

Also hosts the temperedness envelope machinery: the admissible-radius profile
g(n) = n^(1 - eps) over nested centered boxes, the event "no point in the
M-box exceeds its envelope", and its closed-form Poisson probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import islice
from typing import Iterator

import numpy as np
from numpy.typing import NDArray

from .energy import (
    BoundaryCondition,
    area_energy,
    conditional_energy,
    exclusive_volume,
    hardcore_ok_insert,
    hardcore_violated,
)
from .geometry import QuadratureSpec
from .model import Configuration, ModelParams, Window

Array = NDArray[np.float64]

__all__ = [
    "MoveMix",
    "SamplerParams",
    "ChainState",
    "sample_poisson",
    "gibbs_mcmc",
    "rejection_sample_gibbs",
    "batch_means_stderr",
    "epsilon_exponent",
    "envelope_radius",
    "smallest_box_scale",
    "window_cover_scale",
    "tempered_event_ok",
    "poisson_tempered_prob",
    "boundary_envelope_ok",
    "dlr_consistency_check",
    "fkg_temperedness_check",
]

# delta evaluations run once per proposal, so keep their budget modest; the
# audit recompute catches any systematic drift
DELTA_QUAD = QuadratureSpec(
    points_per_unit_volume=128.0, target_rel_error=2e-3, max_doublings=3, min_points=24
)


@dataclass(frozen=True)
class MoveMix:
    """Proposal probabilities; births and deaths must be proposed equally."""

    p_birth: float = 0.35
    p_death: float = 0.35
    p_translate: float = 0.2
    p_resize: float = 0.1

    def __post_init__(self) -> None:
        probs = (self.p_birth, self.p_death, self.p_translate, self.p_resize)
        if min(probs) < 0.0:
            raise ValueError("move probabilities must be >= 0")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"move probabilities must sum to 1, got {sum(probs)}")
        if abs(self.p_birth - self.p_death) > 1e-12:
            raise ValueError("birth and death must be proposed with equal probability")


@dataclass(frozen=True)
class SamplerParams:
    burn_in_sweeps: int = 1000
    thin_sweeps: int = 10
    mix: MoveMix = field(default_factory=MoveMix)
    translate_halfwidth: float | None = None  # default: window side / 8
    audit_every: int = 200

    def __post_init__(self) -> None:
        if self.burn_in_sweeps < 0 or self.thin_sweeps < 1 or self.audit_every < 1:
            raise ValueError("burn_in >= 0, thin >= 1, audit_every >= 1 required")


@dataclass(frozen=True)
class ChainState:
    """A thinned snapshot: configuration copy plus the cached area energy."""

    config: Configuration
    area: float
    area_sigma: float
    sweeps: int
    accepted: dict
    proposed: dict


def sample_poisson(
    params: ModelParams, window: Window, rng: np.random.Generator
) -> Configuration:
    """The marked Poisson reference on the window at activity z."""
    n = int(rng.poisson(params.z * window.volume()))
    pos = rng.uniform(window.lo, window.hi, size=(n, params.d))
    rad = params.mark_law.sample(rng, n)
    return Configuration(pos, rad, d=params.d, reach=params.r,
                         cell_floor=window.side / 16.0)


def gibbs_mcmc(
    params: ModelParams,
    window: Window,
    bc: BoundaryCondition,
    sampler: SamplerParams | None = None,
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
) -> Iterator[ChainState]:
    """Metropolis chain for the finite-volume law; yields thinned snapshots.

    Starts from the empty configuration (always feasible) and runs a fixed
    max(1, ceil(z |window|)) proposals per sweep, the equilibrium particle
    scale.  The count must not depend on the current state: each proposal
    is an invariant kernel, but sweep boundaries placed by a state-dependent
    sweep length would length-bias the thinned snapshots by 1/length (states
    with more points would be observed proportionally less often).  Yields
    after burn-in every ``thin_sweeps``.  The area energy is updated
    incrementally from single-ball exclusive volumes and re-derived at the
    audit cadence; a drift beyond the combined quadrature noise raises
    RuntimeError rather than returning biased samples.
    """
    sampler = sampler or SamplerParams()
    quad = quad or DELTA_QUAD
    rng = rng if rng is not None else np.random.default_rng(0)
    mix = sampler.mix
    cut_birth = mix.p_birth
    cut_death = cut_birth + mix.p_death
    cut_move = cut_death + mix.p_translate
    half = sampler.translate_halfwidth
    if half is None:
        half = window.side / 8.0
    z_vol = params.z * window.volume()
    beta = params.beta

    config = Configuration(d=params.d, reach=params.r, cell_floor=window.side / 16.0)
    area = 0.0
    drift_var = 0.0
    accepted = {"birth": 0, "death": 0, "translate": 0, "resize": 0}
    proposed = {"birth": 0, "death": 0, "translate": 0, "resize": 0}
    sweeps = 0

    sweep_len = max(1, math.ceil(z_vol))
    while True:
        for _ in range(sweep_len):
            u = rng.random()
            if u < cut_birth:
                proposed["birth"] += 1
                x = rng.uniform(window.lo, window.hi)
                R = float(params.mark_law.sample(rng, 1)[0])
                if not hardcore_ok_insert(config, window, bc, params, x, R):
                    continue
                delta = exclusive_volume(config, window, bc, params, x, R,
                                         quad=quad, rng=rng)
                acc = min(1.0, z_vol / (config.n + 1) * math.exp(-beta * delta.value))
                if rng.random() < acc:
                    config.add(x, R)
                    area += delta.value
                    drift_var += delta.stderr ** 2
                    accepted["birth"] += 1
            elif u < cut_death:
                proposed["death"] += 1
                if config.n == 0:
                    continue
                row = int(rng.integers(config.n))
                delta = exclusive_volume(
                    config, window, bc, params, config.positions[row],
                    float(config.radii[row]), exclude_row=row, quad=quad, rng=rng,
                )
                acc = min(1.0, config.n / z_vol * math.exp(beta * delta.value))
                if rng.random() < acc:
                    config.remove(row)
                    area -= delta.value
                    drift_var += delta.stderr ** 2
                    accepted["death"] += 1
            elif u < cut_move:
                proposed["translate"] += 1
                if config.n == 0:
                    continue
                row = int(rng.integers(config.n))
                x_old = config.positions[row].copy()
                R = float(config.radii[row])
                x_new = x_old + rng.uniform(-half, half, params.d)
                if bc.kind == BoundaryCondition.PERIODIC:
                    x_new = window.wrap(x_new)
                elif not window.contains(x_new):
                    continue
                if not hardcore_ok_insert(config, window, bc, params, x_new, R,
                                          exclude_row=row):
                    continue
                d_new = exclusive_volume(config, window, bc, params, x_new, R,
                                         exclude_row=row, quad=quad, rng=rng)
                d_old = exclusive_volume(config, window, bc, params, x_old, R,
                                         exclude_row=row, quad=quad, rng=rng)
                if rng.random() < math.exp(-beta * (d_new.value - d_old.value)):
                    config.remove(row)
                    config.add(x_new, R)
                    area += d_new.value - d_old.value
                    drift_var += d_new.stderr ** 2 + d_old.stderr ** 2
                    accepted["translate"] += 1
            else:
                proposed["resize"] += 1
                if config.n == 0:
                    continue
                row = int(rng.integers(config.n))
                x = config.positions[row].copy()
                R_new = float(params.mark_law.sample(rng, 1)[0])
                if not hardcore_ok_insert(config, window, bc, params, x, R_new,
                                          exclude_row=row):
                    continue
                d_new = exclusive_volume(config, window, bc, params, x, R_new,
                                         exclude_row=row, quad=quad, rng=rng)
                d_old = exclusive_volume(config, window, bc, params, x,
                                         float(config.radii[row]), exclude_row=row,
                                         quad=quad, rng=rng)
                if rng.random() < math.exp(-beta * (d_new.value - d_old.value)):
                    config.remove(row)
                    config.add(x, R_new)
                    area += d_new.value - d_old.value
                    drift_var += d_new.stderr ** 2 + d_old.stderr ** 2
                    accepted["resize"] += 1
        sweeps += 1

        if sweeps % sampler.audit_every == 0:
            if hardcore_violated(config, window, bc, params):
                raise RuntimeError("sampler invariant broken: hardcore pair present")
            full = area_energy(config, window, bc, params, quad=quad, rng=rng)
            tol = 6.0 * math.sqrt(drift_var + full.stderr ** 2) + 1e-7 * max(
                1.0, abs(full.value)
            )
            if abs(area - full.value) > tol:
                raise RuntimeError(
                    f"cached area drifted: cached {area}, recomputed {full.value}, "
                    f"tolerance {tol}"
                )
            area = full.value
            drift_var = full.stderr ** 2

        if sweeps >= sampler.burn_in_sweeps and (
            (sweeps - sampler.burn_in_sweeps) % sampler.thin_sweeps == 0
        ):
            yield ChainState(config.copy(), area, math.sqrt(drift_var), sweeps,
                             dict(accepted), dict(proposed))


def rejection_sample_gibbs(
    params: ModelParams,
    window: Window,
    bc: BoundaryCondition,
    rng: np.random.Generator,
    quad: QuadratureSpec | None = None,
    max_tries: int = 1_000_000,
) -> tuple[Configuration, int]:
    """Exact draw from the finite-volume law by thinning the Poisson reference.

    The energy is nonnegative, so accepting a Poisson draw with probability
    exp(-beta H) reproduces the law exactly; the acceptance rate equals the
    normalizing constant.  Returns the draw and the number of tries.
    """
    quad = quad or DELTA_QUAD
    for tries in range(1, max_tries + 1):
        cfg = sample_poisson(params, window, rng)
        if hardcore_violated(cfg, window, bc, params):
            continue
        a = area_energy(cfg, window, bc, params, quad=quad, rng=rng)
        if rng.random() < math.exp(-params.beta * a.value):
            return cfg, tries
    raise RuntimeError(f"no acceptance in {max_tries} tries; activity too large?")


def batch_means_stderr(xs, n_batches: int = 20) -> float:
    """Autocorrelation-robust standard error of the mean of a chain trace."""
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    if n < 2:
        return math.inf
    b = max(1, n // n_batches)
    k = n // b
    means = xs[: k * b].reshape(k, b).mean(axis=1)
    if k < 2:
        return float(np.std(xs, ddof=1) / math.sqrt(n))
    return float(np.std(means, ddof=1) / math.sqrt(k))


# ---- temperedness envelopes ----


def epsilon_exponent(params: ModelParams, gamma: float | None = None) -> float:
    """Envelope exponent: g(n) = n^(1 - eps) with eps = (1 - gamma d / delta)
    * delta / (d + delta); gamma defaults to delta / (2d), giving eps =
    delta / (2 (d + delta))."""
    delta = params.mark_law.delta
    d = params.d
    if gamma is None:
        gamma = delta / (2.0 * d)
    if not 0.0 < gamma < delta / d:
        raise ValueError(f"gamma must lie in (0, delta/d) = (0, {delta / d}), got {gamma}")
    eps = (1.0 - gamma * d / delta) * delta / (d + delta)
    return eps


def envelope_radius(n: int, eps: float) -> float:
    """Largest admissible radius at box scale n."""
    if n < 1:
        raise ValueError(f"box scale must be >= 1, got {n}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return float(n) ** (1.0 - eps)


def smallest_box_scale(x) -> int:
    """Smallest integer n >= 1 with x inside the centered half-open n-box."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = 1
    for xi in x:
        if xi >= 0.0:
            n = max(n, int(math.floor(2.0 * xi)) + 1)
        else:
            n = max(n, int(math.ceil(-2.0 * xi)))
    return n


def window_cover_scale(window: Window) -> int:
    """Smallest integer n with the window inside the centered n-box."""
    n = 1
    for lo_a, hi_a in zip(window.lo, window.hi):
        if hi_a > 0.0:
            n = max(n, int(math.ceil(2.0 * hi_a)))
        if lo_a < 0.0:
            n = max(n, int(math.ceil(-2.0 * lo_a)))
    return n


def tempered_event_ok(config: Configuration, N: int, M: int, eps: float) -> bool:
    """No point inside the M-box exceeds its envelope radius.

    A point at box scale m <= M is admissible when R <= g(max(N, m)); points
    outside the M-box are unconstrained.
    """
    if N < 1 or M < N:
        raise ValueError("need 1 <= N <= M")
    for i in range(config.n):
        m = smallest_box_scale(config.positions[i])
        if m > M:
            continue
        if config.radii[i] > envelope_radius(max(N, m), eps):
            return False
    return True


def poisson_tempered_prob(params: ModelParams, N: int, M: int, eps: float) -> float:
    """Closed-form Poisson probability of the envelope event.

    Thinning: offending points form a Poisson process whose mean is z times
    the tail mass per nested shell, so the event probability is the void
    probability exp(-z sum over shells |shell| P(R > g(scale))).
    """
    if N < 1 or M < N:
        raise ValueError("need 1 <= N <= M")
    law = params.mark_law
    d = params.d
    mass = float(N ** d) * float(law.tail_prob(envelope_radius(N, eps)))
    for n in range(N + 1, M + 1):
        shell = float(n ** d - (n - 1) ** d)
        mass += shell * float(law.tail_prob(envelope_radius(n, eps)))
    return math.exp(-params.z * mass)


def boundary_envelope_ok(
    outer: Configuration, window: Window, params: ModelParams,
    gamma: float | None = None,
) -> bool:
    """Is a fixed boundary configuration inside the admissible envelope?

    Every outer point must obey the radius profile at its own box scale,
    anchored at the scale covering the window.
    """
    eps = epsilon_exponent(params, gamma)
    n0 = window_cover_scale(window)
    for i in range(outer.n):
        p = outer.positions[i]
        if window.contains(p):
            continue
        m = smallest_box_scale(p)
        if outer.radii[i] > envelope_radius(max(n0, m), eps):
            return False
    return True


# ---- distributional consistency checks ----


def dlr_consistency_check(
    params: ModelParams,
    window: Window,
    sub_window: Window,
    n_snapshots: int,
    sampler: SamplerParams | None = None,
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
) -> dict:
    """Resampling the sub-window given its complement must not move statistics.

    For each chain snapshot the sub-window part is replaced by an exact draw
    conditioned on the rest; paired differences of point count, mark mass
    sum R^d, and conditional energy then have mean zero under consistency.
    Returns per-statistic mean difference, batch-means stderr, and z-score.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    quad = quad or DELTA_QUAD
    bc_free = BoundaryCondition.free()
    diffs: dict[str, list[float]] = {"count": [], "mark_mass": [], "energy": []}
    tries_total = 0
    chain = gibbs_mcmc(params, window, bc_free, sampler=sampler, quad=quad, rng=rng)
    for state in islice(chain, n_snapshots):
        cfg = state.config
        inside = sub_window.contains(cfg.positions) if cfg.n else np.zeros(0, dtype=bool)
        part = Configuration(cfg.positions[inside], cfg.radii[inside], d=params.d)
        rest = Configuration(cfg.positions[~inside], cfg.radii[~inside], d=params.d)
        bc_fixed = BoundaryCondition.fixed(rest)
        redraw, tries = rejection_sample_gibbs(params, sub_window, bc_fixed, rng, quad=quad)
        tries_total += tries

        def stats(c: Configuration) -> tuple[float, float, float]:
            mark = float(np.sum(c.radii ** params.d)) if c.n else 0.0
            e = conditional_energy(c, sub_window, bc_fixed, params, quad=quad, rng=rng)
            return float(c.n), mark, e.value

        a = stats(part)
        b = stats(redraw)
        for key, va, vb in zip(("count", "mark_mass", "energy"), a, b):
            diffs[key].append(va - vb)

    report: dict = {"n_snapshots": n_snapshots, "mean_tries": tries_total / n_snapshots}
    worst = 0.0
    for key, xs in diffs.items():
        mean = float(np.mean(xs))
        se = batch_means_stderr(xs)
        z = mean / se if se > 0 else math.inf if mean else 0.0
        worst = max(worst, abs(z))
        report[key] = {"mean_diff": mean, "stderr": se, "z": z}
    report["max_abs_z"] = worst
    return report


def fkg_temperedness_check(
    params: ModelParams,
    window: Window,
    K_values,
    n_snapshots: int,
    gamma: float | None = None,
    sampler: SamplerParams | None = None,
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
) -> dict:
    """Envelope events are at least as likely under the interacting law.

    The envelope event is decreasing (adding points can only break it) and
    the energy is attractive in the stochastic-domination sense, so the
    finite-volume law gives it no less mass than the Poisson reference.
    Returns one row per K with the chain frequency, its stderr, and the
    closed-form Poisson probability over the window shells.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    eps = epsilon_exponent(params, gamma)
    n0 = window_cover_scale(window)
    if abs(window.volume() - float(n0 ** params.d)) > 1e-9 or any(window.center):
        raise ValueError("check needs a centered window of integer side")

    def window_event(config: Configuration, K: int) -> bool:
        # envelope restricted to the window: threshold g(max(K, m(x)))
        for i in range(config.n):
            m = smallest_box_scale(config.positions[i])
            if config.radii[i] > envelope_radius(max(K, m), eps):
                return False
        return True

    def window_prob(K: int) -> float:
        law = params.mark_law
        d = params.d
        mass = 0.0
        for n in range(1, n0 + 1):
            shell = float(n ** d - (n - 1) ** d)
            mass += shell * float(law.tail_prob(envelope_radius(max(K, n), eps)))
        return math.exp(-params.z * mass)

    chain = gibbs_mcmc(params, window, BoundaryCondition.free(), sampler=sampler,
                       quad=quad, rng=rng)
    ks = list(K_values)
    hits: dict[int, list[float]] = {k: [] for k in ks}
    for state in islice(chain, n_snapshots):
        for k in ks:
            hits[k].append(1.0 if window_event(state.config, k) else 0.0)

    rows = []
    for k in ks:
        xs = hits[k]
        freq = float(np.mean(xs))
        se = batch_means_stderr(xs)
        ref = window_prob(k)
        rows.append({"K": k, "gibbs": freq, "stderr": se, "poisson": ref,
                     "margin_sigmas": (freq - ref) / se if se > 0 else math.inf})
    return {"eps": eps, "window_scale": n0, "rows": rows,
            "min_margin": min(r["margin_sigmas"] for r in rows)}

"""Marked point configurations, boxes, and mark distributions.

Domain types shared by every other module: points carry a position in R^d
plus a radius mark, configurations are finite simple marked point sets backed
by a uniform-grid spatial index, and windows are axis-aligned (optionally
toroidal) half-open boxes, the centered cube of side n being [-n/2, n/2)^d.

Notes
-----
- Positions and radii are plain float64 throughout; simplicity of a
  configuration is enforced by exact coordinate equality, which is the right
  notion for continuous samplers (collisions are measure zero) and keeps
  save/load round-trips exact.
- Configuration rows are stored densely and removal swaps the last row in,
  so row order is not stable across deletions.  All consumers treat rows as
  an unordered set with transient integer handles.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]

__all__ = [
    "MarkLaw",
    "MarkedPoint",
    "ModelParams",
    "Window",
    "Estimate",
    "Configuration",
    "count",
    "restrict",
    "concatenate",
    "shift",
    "periodize",
    "PeriodicView",
]


# ---- scalar value types -----------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    """A scalar with a 1-sigma Monte Carlo error and a sample count."""

    value: float
    stderr: float
    n_samples: int = 1

    def __post_init__(self) -> None:
        if not self.stderr >= 0.0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")

    @classmethod
    def exact(cls, value: float) -> "Estimate":
        return cls(float(value), 0.0, 1)


@dataclass(frozen=True)
class MarkedPoint:
    """A center in R^d plus a nonnegative radius mark."""

    x: tuple[float, ...]
    R: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in self.x):
            raise ValueError("position coordinates must be finite")
        if not (math.isfinite(self.R) and self.R >= 0.0):
            raise ValueError(f"radius mark must be finite and >= 0, got {self.R}")


# ---- mark laws ----------------------------------------------------------------


@dataclass(frozen=True)
class MarkLaw:
    """Distribution of the radius mark with a certified integrability margin.

    ``delta`` records the exponent for which exp(R^(d+delta)) is integrable
    under the law.  Every supported law has bounded support, so any positive
    value is admissible; the field exists because the temperedness envelope
    g(n) = n^(1-eps) is derived from it.
    """

    kind: str
    params: tuple[float, ...]
    delta: float = 1.0

    DIRAC = "dirac"
    UNIFORM = "uniform"
    TRUNCATED_WEIBULL = "truncated_weibull_like"

    def __post_init__(self) -> None:
        if self.delta <= 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        p = self.params
        if self.kind == self.DIRAC:
            if len(p) != 1 or p[0] < 0.0:
                raise ValueError(f"dirac law needs one radius >= 0, got {p}")
        elif self.kind == self.UNIFORM:
            if len(p) != 2 or not (0.0 <= p[0] < p[1]):
                raise ValueError(f"uniform law needs 0 <= a < b, got {p}")
        elif self.kind == self.TRUNCATED_WEIBULL:
            if len(p) != 3 or min(p) <= 0.0:
                raise ValueError(f"truncated law needs scale, shape, cutoff > 0, got {p}")
        else:
            raise ValueError(f"unknown mark law kind {self.kind!r}")

    @classmethod
    def dirac(cls, R0: float, delta: float = 1.0) -> "MarkLaw":
        return cls(cls.DIRAC, (float(R0),), delta)

    @classmethod
    def uniform(cls, a: float, b: float, delta: float = 1.0) -> "MarkLaw":
        return cls(cls.UNIFORM, (float(a), float(b)), delta)

    @classmethod
    def truncated_weibull_like(
        cls, scale: float, shape: float, cutoff: float, delta: float = 1.0
    ) -> "MarkLaw":
        return cls(cls.TRUNCATED_WEIBULL, (float(scale), float(shape), float(cutoff)), delta)

    @property
    def sup_radius(self) -> float:
        """Essential supremum of the law (all supported laws are bounded)."""
        if self.kind == self.DIRAC:
            return self.params[0]
        if self.kind == self.UNIFORM:
            return self.params[1]
        return self.params[2]

    @property
    def has_density(self) -> bool:
        return self.kind != self.DIRAC

    def sample(self, rng: np.random.Generator, size: int) -> Array:
        if self.kind == self.DIRAC:
            return np.full(size, self.params[0], dtype=float)
        if self.kind == self.UNIFORM:
            a, b = self.params
            return rng.uniform(a, b, size)
        scale, shape, cutoff = self.params
        # inverse-CDF of the Weibull law conditioned on [0, cutoff]
        mass = -math.expm1(-((cutoff / scale) ** shape))
        u = rng.random(size)
        return scale * (-np.log1p(-u * mass)) ** (1.0 / shape)

    def tail_prob(self, t):
        """P(R > t); vectorized over t."""
        t = np.asarray(t, dtype=float)
        if self.kind == self.DIRAC:
            out = np.where(t < self.params[0], 1.0, 0.0)
        elif self.kind == self.UNIFORM:
            a, b = self.params
            out = np.clip((b - t) / (b - a), 0.0, 1.0)
        else:
            scale, shape, cutoff = self.params
            top = math.exp(-((cutoff / scale) ** shape))
            mass = 1.0 - top
            tn = np.clip(t, 0.0, cutoff)
            out = (np.exp(-((tn / scale) ** shape)) - top) / mass
            out = np.where(t < 0.0, 1.0, np.where(t >= cutoff, 0.0, out))
        return out if out.ndim else float(out)

    def pdf(self, t):
        """Lebesgue density; rejected for the atomic law."""
        if self.kind == self.DIRAC:
            raise ValueError("dirac mark law has no Lebesgue density")
        t = np.asarray(t, dtype=float)
        if self.kind == self.UNIFORM:
            a, b = self.params
            out = np.where((t >= a) & (t <= b), 1.0 / (b - a), 0.0)
        else:
            scale, shape, cutoff = self.params
            mass = -math.expm1(-((cutoff / scale) ** shape))
            base = (shape / scale) * (t / scale) ** (shape - 1.0) * np.exp(
                -((t / scale) ** shape)
            )
            out = np.where((t >= 0.0) & (t <= cutoff), base / mass, 0.0)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ModelParams:
    """Activity z, inverse temperature beta, enlargement radius r, dimension d."""

    d: int
    z: float
    beta: float
    r: float
    mark_law: MarkLaw

    def __post_init__(self) -> None:
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        for name in ("z", "beta", "r"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")


# ---- windows ------------------------------------------------------------------


@dataclass(frozen=True)
class Window:
    """Axis-aligned half-open box [lo, hi)^d, optionally identified as a torus."""

    center: tuple[float, ...]
    side: float
    torus: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.side) and self.side > 0.0):
            raise ValueError(f"side must be finite and > 0, got {self.side}")

    @classmethod
    def cube(cls, side: float, d: int, torus: bool = False) -> "Window":
        """The centered box [-side/2, side/2)^d."""
        return cls((0.0,) * d, float(side), torus)

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def lo(self) -> Array:
        return np.asarray(self.center, dtype=float) - 0.5 * self.side

    @property
    def hi(self) -> Array:
        return np.asarray(self.center, dtype=float) + 0.5 * self.side

    def volume(self) -> float:
        return self.side ** self.d

    def contains(self, points: Array) -> NDArray[np.bool_]:
        """Half-open membership; accepts (d,) or (m, d)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.all((pts >= self.lo) & (pts < self.hi), axis=1)
        return ok if np.asarray(points).ndim > 1 else bool(ok[0])

    def wrap(self, points: Array) -> Array:
        """Map positions into [lo, hi) by periodic identification."""
        pts = np.asarray(points, dtype=float)
        return self.lo + np.mod(pts - self.lo, self.side)

    def delta(self, a: Array, b: Array) -> Array:
        """Displacement b - a, reduced to the minimal image when toroidal."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.torus:
            d = d - self.side * np.round(d / self.side)
        return d

    def distance(self, a: Array, b: Array) -> float:
        return float(np.linalg.norm(self.delta(a, b)))

    def box_distance(self, points: Array) -> Array:
        """Euclidean distance from each point to the closed box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        gap = np.maximum(np.maximum(self.lo - pts, pts - self.hi), 0.0)
        return np.linalg.norm(gap, axis=1)


# ---- configurations -------------------------------------------------------------


class Configuration:
    """Finite simple set of marked points with a uniform-grid spatial index.

    The index maps integer cell keys floor(x / cell) to row lists and answers
    conservative ball queries: candidates within the covering cube of the query
    ball, a superset of the true neighbor set for any radius.  The cell side is
    max(2 * (r_max + reach), cell_floor) and is rebuilt whenever r_max grows,
    so hardcore-range queries stay one cell ring wide; ``reach`` is the
    interaction enlargement (the polymer radius for the depletion model) and
    ``cell_floor`` is typically window_side / 64.
    """

    __slots__ = ("d", "reach", "cell_floor", "_pos", "_rad", "_n", "_cell", "_cells", "_r_max")

    def __init__(
        self,
        positions=None,
        radii=None,
        d: int | None = None,
        reach: float = 0.0,
        cell_floor: float = 0.0,
    ) -> None:
        if positions is None:
            positions = np.empty((0, d if d is not None else 1))
        pos = np.atleast_2d(np.asarray(positions, dtype=float))
        if pos.size == 0:
            pos = pos.reshape(0, d if d is not None else pos.shape[-1] or 1)
        rad = np.asarray(radii if radii is not None else np.zeros(len(pos)), dtype=float)
        if len(rad) != len(pos):
            raise ValueError("positions and radii length mismatch")
        if np.any(rad < 0.0) or not np.all(np.isfinite(rad)) or not np.all(np.isfinite(pos)):
            raise ValueError("marks must be finite and >= 0, positions finite")
        if d is not None and pos.shape[1] != d:
            raise ValueError(f"expected dimension {d}, got {pos.shape[1]}")
        self.d = int(pos.shape[1])
        self.reach = float(reach)
        self.cell_floor = float(cell_floor)
        n = len(pos)
        cap = max(8, n)
        self._pos = np.empty((cap, self.d), dtype=float)
        self._rad = np.empty(cap, dtype=float)
        self._pos[:n] = pos
        self._rad[:n] = rad
        self._n = n
        self._r_max = float(rad.max()) if n else 0.0
        self._rebuild()
        if len({tuple(p) for p in pos}) != n:
            raise ValueError("duplicate positions violate simplicity")

    # -- factory / conversion --

    @classmethod
    def from_points(cls, points, d: int, reach: float = 0.0, cell_floor: float = 0.0):
        pts = list(points)
        pos = [p.x for p in pts]
        rad = [p.R for p in pts]
        return cls(pos, rad, d=d, reach=reach, cell_floor=cell_floor)

    def points(self):
        for i in range(self._n):
            yield MarkedPoint(tuple(self._pos[i]), float(self._rad[i]))

    def copy(self) -> "Configuration":
        return Configuration(
            self.positions.copy(), self.radii.copy(), d=self.d,
            reach=self.reach, cell_floor=self.cell_floor,
        )

    # -- views --

    @property
    def positions(self) -> Array:
        return self._pos[: self._n]

    @property
    def radii(self) -> Array:
        return self._rad[: self._n]

    @property
    def n(self) -> int:
        return self._n

    @property
    def r_max(self) -> float:
        return self._r_max

    def __len__(self) -> int:
        return self._n

    def __repr__(self) -> str:
        return f"Configuration(n={self._n}, d={self.d}, r_max={self._r_max:g})"

    # -- grid index --

    def _cell_side(self) -> float:
        return max(2.0 * (self._r_max + self.reach), self.cell_floor, 1.0e-9)

    def _key(self, x: Array) -> tuple[int, ...]:
        return tuple(int(v) for v in np.floor(np.asarray(x) / self._cell))

    def _rebuild(self) -> None:
        self._cell = self._cell_side()
        self._cells: dict[tuple[int, ...], list[int]] = {}
        for i in range(self._n):
            self._cells.setdefault(self._key(self._pos[i]), []).append(i)

    def candidates(self, x: Array, s: float) -> list[int]:
        """Rows in every cell meeting the cube of half-width s around x.

        A superset of all rows within Euclidean distance s of x.
        """
        x = np.asarray(x, dtype=float)
        lo = np.floor((x - s) / self._cell).astype(int)
        hi = np.floor((x + s) / self._cell).astype(int)
        out: list[int] = []
        for key in itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi))):
            out.extend(self._cells.get(key, ()))
        out.sort()
        return out

    def near(self, x: Array, s: float) -> NDArray[np.intp]:
        """Rows with |p - x| <= s (exact, after the index pre-filter)."""
        cand = self.candidates(x, s)
        if not cand:
            return np.empty(0, dtype=np.intp)
        idx = np.asarray(cand, dtype=np.intp)
        d = self._pos[idx] - np.asarray(x, dtype=float)
        keep = np.einsum("ij,ij->i", d, d) <= s * s
        return idx[keep]

    # -- mutation --

    def add(self, x: Array, R: float) -> int:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"expected position of shape ({self.d},)")
        if not (math.isfinite(R) and R >= 0.0) or not np.all(np.isfinite(x)):
            raise ValueError("marks must be finite and >= 0, positions finite")
        for i in self._cells.get(self._key(x), ()):
            if np.array_equal(self._pos[i], x):
                raise ValueError("duplicate position violates simplicity")
        if self._n == len(self._rad):
            cap = 2 * len(self._rad)
            self._pos = np.resize(self._pos, (cap, self.d))
            self._rad = np.resize(self._rad, cap)
        i = self._n
        self._pos[i] = x
        self._rad[i] = R
        self._n += 1
        if R > self._r_max:
            self._r_max = float(R)
            if 2.0 * (self._r_max + self.reach) > self._cell:
                self._rebuild()
                return i
        self._cells.setdefault(self._key(x), []).append(i)
        return i

    def remove(self, row: int) -> None:
        if not (0 <= row < self._n):
            raise IndexError(f"row {row} out of range for n={self._n}")
        gone_r = self._rad[row]
        self._cells[self._key(self._pos[row])].remove(row)
        last = self._n - 1
        if row != last:
            cell = self._cells[self._key(self._pos[last])]
            cell.remove(last)
            self._pos[row] = self._pos[last]
            self._rad[row] = self._rad[last]
            cell.append(row)
            cell.sort()
        self._n -= 1
        if gone_r == self._r_max:
            self._r_max = float(self._rad[: self._n].max()) if self._n else 0.0


# ---- operations on configurations ------------------------------------------------


def count(config: Configuration, window: Window, mark_range=(0.0, math.inf), weight: str = "one") -> float:
    """Weighted count over points in the window with mark in [lo, hi).

    ``weight`` is "one" for a plain count or "psi" for 1 + R^d.
    """
    if weight not in ("one", "psi"):
        raise ValueError(f"weight must be 'one' or 'psi', got {weight!r}")
    if config.n == 0:
        return 0.0
    lo, hi = mark_range
    keep = window.contains(config.positions) & (config.radii >= lo) & (config.radii < hi)
    if weight == "one":
        return float(np.count_nonzero(keep))
    return float(np.sum(1.0 + config.radii[keep] ** config.d))


def restrict(config: Configuration, window: Window) -> Configuration:
    """Points of the configuration with position in the window."""
    keep = window.contains(config.positions) if config.n else np.zeros(0, dtype=bool)
    return Configuration(
        config.positions[keep], config.radii[keep], d=config.d,
        reach=config.reach, cell_floor=config.cell_floor,
    )


def concatenate(inner: Configuration, window: Window, outer: Configuration) -> Configuration:
    """Inner restricted to the window joined with outer restricted to its complement."""
    if inner.d != outer.d:
        raise ValueError("dimension mismatch")
    keep_in = window.contains(inner.positions) if inner.n else np.zeros(0, dtype=bool)
    keep_out = ~window.contains(outer.positions) if outer.n else np.zeros(0, dtype=bool)
    pos = np.concatenate([inner.positions[keep_in], outer.positions[keep_out]])
    rad = np.concatenate([inner.radii[keep_in], outer.radii[keep_out]])
    return Configuration(pos, rad, d=inner.d, reach=inner.reach, cell_floor=inner.cell_floor)


def shift(config: Configuration, x: Array) -> Configuration:
    """Translate so that x becomes the origin: positions p -> p - x."""
    x = np.asarray(x, dtype=float)
    return Configuration(
        config.positions - x, config.radii.copy(), d=config.d,
        reach=config.reach, cell_floor=config.cell_floor,
    )


class PeriodicView:
    """A configuration inside a box read with torus identification.

    Materializing with reach ``extra`` tiles the base configuration by integer
    multiples of the side and keeps every image whose ball of radius R + extra
    meets the box, which covers all wrap interactions of that range.
    """

    def __init__(self, base: Configuration, window: Window) -> None:
        if base.n and not np.all(window.contains(base.positions)):
            raise ValueError("periodize requires all points inside the window")
        self.base = base
        self.window = Window(window.center, window.side, torus=True)

    def distance(self, a: Array, b: Array) -> float:
        return self.window.distance(a, b)

    def materialize(self, extra: float) -> Configuration:
        """All tiling images whose (R + extra)-ball meets the closed box."""
        w = self.window
        out_pos: list[Array] = []
        out_rad: list[float] = []
        lo, hi = w.lo, w.hi
        for i in range(self.base.n):
            p = self.base.positions[i]
            R = float(self.base.radii[i])
            pad = R + extra
            axes = []
            for a in range(w.d):
                k_lo = math.ceil((lo[a] - pad - p[a]) / w.side)
                k_hi = math.floor((hi[a] + pad - p[a]) / w.side)
                axes.append(range(k_lo, k_hi + 1))
            for ks in itertools.product(*axes):
                q = p + w.side * np.asarray(ks, dtype=float)
                # per-axis ranges give bbox overlap; corner images need the
                # euclidean check too
                if w.box_distance(q)[0] <= pad:
                    out_pos.append(q)
                    out_rad.append(R)
        if not out_pos:
            return Configuration(d=self.base.d, reach=self.base.reach,
                                 cell_floor=self.base.cell_floor)
        return Configuration(np.asarray(out_pos), np.asarray(out_rad), d=self.base.d,
                             reach=self.base.reach, cell_floor=self.base.cell_floor)


def periodize(config: Configuration, window: Window) -> PeriodicView:
    """Torus view of a configuration contained in the window."""
    return PeriodicView(config, window)

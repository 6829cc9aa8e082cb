"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np

from ao_gibbs.model import Configuration, Window


def close_to_oracle(est, oracle, n_sigma=5.0, rel=2e-3, abs_slack=1e-9):
    """Quadrature estimate compatible with an oracle value."""
    assert abs(est.value - oracle) <= n_sigma * est.stderr + rel * abs(oracle) + abs_slack, (
        f"estimate {est.value} +- {est.stderr} vs oracle {oracle}"
    )


def place_hardcore(
    rng: np.random.Generator,
    window: Window,
    n_target: int,
    radii,
    gap: float = 0.0,
    torus: bool = False,
    max_tries: int = 4000,
) -> Configuration:
    """Sequential rejection placement of a hardcore-feasible configuration.

    ``radii`` is either a sequence indexed by placement order or a callable
    drawing one radius from the rng.  ``gap`` adds a separation margin beyond
    the touching distance.  Returns however many points fit.
    """
    pos: list[np.ndarray] = []
    rad: list[float] = []
    tries = 0
    while len(pos) < n_target and tries < max_tries:
        tries += 1
        x = rng.uniform(window.lo, window.hi)
        R = float(radii(rng) if callable(radii) else radii[len(pos)])
        ok = True
        for p, q in zip(pos, rad):
            delta = x - p
            if torus:
                delta = delta - window.side * np.round(delta / window.side)
            if float(np.linalg.norm(delta)) <= R + q + gap:
                ok = False
                break
        if ok:
            pos.append(x)
            rad.append(R)
    return Configuration(
        np.asarray(pos).reshape(len(pos), window.d), np.asarray(rad), d=window.d
    )

"""Seeded initial-data samplers with per-particle random streams.

Every particle owns a counter-based stream (Philox keyed by the run seed and
the particle index through seed-sequence spawning), so the first N particles
of a run are identical for every ensemble size: growing N refines the sample
instead of redrawing it.  That nesting is what makes the mean-field Cauchy
experiment a low-variance coupled comparison.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import truncnorm

from .errors import BadRange, ValidationError
from .model import FirstOrderEnsemble, SecondOrderEnsemble

__all__ = ["InitSpec", "sample_initial", "RNG_FAMILY"]

SAMPLERS = ("uniform_box", "gaussian_truncated", "two_cluster", "file")
MODES = ("second_order", "first_order")

# Pinned generator family, echoed into experiment metadata.
RNG_FAMILY = "philox4x64 + seedsequence spawn key = particle index"


@dataclass(frozen=True)
class InitSpec:
    """Sampler choice, compact ranges, size, and seed for one ensemble.

    ``v_range`` is read as the velocity range for second-order sampling and
    as the natural-velocity range for first-order sampling.  Compact ranges
    are required: the supports stay bounded, which every quantitative bound
    in the experiments assumes.
    """

    sampler: str = "uniform_box"
    x_range: tuple = (-1.0, 1.0)
    v_range: tuple = (-1.0, 1.0)
    n: int = 64
    seed: int = 0
    zero_mean: bool = True
    path: Optional[str] = None  # file sampler only

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValidationError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        for name, rng in (("x_range", self.x_range), ("v_range", self.v_range)):
            lo, hi = float(rng[0]), float(rng[1])
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
                raise BadRange(f"{name} must be a bounded interval, got {rng!r}")
            object.__setattr__(self, name, (lo, hi))
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if self.sampler == "file" and not self.path:
            raise ValidationError("the file sampler needs a path")


def _particle_uniforms(seed: int, n: int, draws: int = 2) -> np.ndarray:
    """draws uniforms per particle, one independent stream per index."""
    u = np.empty((n, draws))
    for i in range(n):
        stream = np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        u[i] = np.random.Generator(stream).random(draws)
    return u


def _scale(u: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return lo + (hi - lo) * u


def _truncated_normal(u: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        raise BadRange("gaussian_truncated needs a range of positive width")
    center = 0.5 * (lo + hi)
    sd = (hi - lo) / 4.0
    a, b = (lo - center) / sd, (hi - center) / sd
    # inverse-CDF transform keeps the per-particle streams deterministic
    return truncnorm.ppf(u, a, b, loc=center, scale=sd)


def _read_file(path: str):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValidationError(f"no samples in {path}")
    names = rows[0].keys()
    vcol = "v" if "v" in names else "omega" if "omega" in names else None
    if "x" not in names or vcol is None:
        raise ValidationError(f"{path} must have columns x and v (or omega)")
    x = np.array([float(r["x"]) for r in rows])
    v = np.array([float(r[vcol]) for r in rows])
    return x, v


def sample_initial(spec: InitSpec, mode: str = "second_order"):
    """Draw a seeded ensemble; deterministic given (spec, mode).

    With ``zero_mean`` the empirical means of both coordinates are
    subtracted, realizing the mean-zero normalization the stability and
    flocking bounds assume.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    if spec.sampler == "file":
        x, v = _read_file(spec.path)
    else:
        u = _particle_uniforms(spec.seed, spec.n)
        if spec.sampler == "uniform_box":
            x = _scale(u[:, 0], *spec.x_range)
            v = _scale(u[:, 1], *spec.v_range)
        elif spec.sampler == "gaussian_truncated":
            x = _truncated_normal(u[:, 0], *spec.x_range)
            v = _truncated_normal(u[:, 1], *spec.v_range)
        else:  # two_cluster: even indices left/slow, odd indices right/fast
            side = np.arange(spec.n) % 2
            x_lo, x_hi = spec.x_range
            v_lo, v_hi = spec.v_range
            x_mid = 0.5 * (x_lo + x_hi)
            v_mid = 0.5 * (v_lo + v_hi)
            x = np.where(side == 0, _scale(u[:, 0], x_lo, x_mid), _scale(u[:, 0], x_mid, x_hi))
            v = np.where(side == 0, _scale(u[:, 1], v_lo, v_mid), _scale(u[:, 1], v_mid, v_hi))
    if spec.zero_mean:
        x = x - x.mean()
        v = v - v.mean()
    if mode == "second_order":
        return SecondOrderEnsemble(x, v)
    return FirstOrderEnsemble(x, v)

"""Distances between configurations, discrete measures, and level fields.

Four families:

* modulated lp distances between index-matched configurations, centered so
  that uniform translations and the mean drift drop out;
* exact 1-d p-Wasserstein between weighted atomic measures via the common
  refinement of their quantile functions;
* exact phase-space p-Wasserstein between equal-size point clouds by optimal
  assignment (Hungarian for p < inf, bottleneck matching for p = inf);
* the modified transport distance between pseudo-inverse level fields sharing
  a velocity grid (an lp norm in the mass coordinates).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import (
    DimensionMismatch,
    GridMismatch,
    NotNormalized,
    SizeCapExceeded,
    ValidationError,
)
from .model import FirstOrderEnsemble, SecondOrderEnsemble

__all__ = [
    "DiscreteMeasure1D",
    "PhasePoints",
    "mean_power_norm",
    "modulated_lp_distance",
    "natural_velocity_mismatch",
    "wasserstein_1d",
    "wasserstein_phase",
    "modified_wasserstein",
]

ASSIGNMENT_CAP = 512


@dataclass(frozen=True)
class DiscreteMeasure1D:
    """Weighted point masses on the line; weights sum to one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        wts = np.asarray(self.weights, dtype=np.float64)
        if pts.ndim != 1 or pts.size < 1 or pts.shape != wts.shape:
            raise DimensionMismatch("points and weights must be equal-length 1-d vectors")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(wts))):
            raise ValidationError("points and weights must be finite")
        if np.any(wts <= 0):
            raise ValidationError("weights must be positive")
        if abs(wts.sum() - 1.0) > 1e-12:
            raise NotNormalized(f"weights sum to {wts.sum()!r}, expected 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @classmethod
    def from_points(cls, points) -> "DiscreteMeasure1D":
        pts = np.asarray(points, dtype=np.float64)
        return cls(pts, np.full(pts.size, 1.0 / pts.size))

    @property
    def n(self) -> int:
        return self.points.size


@dataclass(frozen=True)
class PhasePoints:
    """Uniformly weighted points in (x, v) or (x, omega) phase space."""

    points: np.ndarray  # shape (N, 2)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ValidationError("points must have shape (N, 2) with N >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("points must be finite")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_second_order(cls, state: SecondOrderEnsemble) -> "PhasePoints":
        return cls(np.column_stack([state.positions, state.velocities]))

    @classmethod
    def from_first_order(cls, state: FirstOrderEnsemble) -> "PhasePoints":
        return cls(np.column_stack([state.positions, state.natural_velocities]))

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _check_order(p) -> float:
    p = float(p)
    if not p >= 1.0:
        raise ValidationError(f"order p must satisfy p >= 1, got {p!r}")
    return p


def mean_power_norm(values, p) -> float:
    """((1/N) sum |d_i|^p)^(1/p), the max for p = inf."""
    p = _check_order(p)
    d = np.abs(np.asarray(values, dtype=np.float64))
    if np.isinf(p):
        return float(d.max())
    return float(np.mean(d**p) ** (1.0 / p))


def modulated_lp_distance(a: FirstOrderEnsemble, b: FirstOrderEnsemble, p=2) -> float:
    """Centered lp distance between two index-matched configurations.

    Each configuration is centered by its own mean position before comparing.
    Along the first-order flow the mean moves exactly with the mean natural
    velocity, so this equals the textbook modulation by initial center plus
    drift while never needing the initial data.  Pure translations (and equal
    mean drifts) are invisible to it.
    """
    if a.n != b.n:
        raise DimensionMismatch("modulated distance needs equal ensemble sizes")
    da = a.positions - a.positions.mean()
    db = b.positions - b.positions.mean()
    return mean_power_norm(da - db, p)


def natural_velocity_mismatch(omega_a, omega_b, p=2) -> float:
    """Centered lp mismatch of two natural-velocity vectors.

    Zero iff the vectors agree up to an additive constant; this is the
    forcing size in the stability bound for paired first-order flows.
    """
    wa = np.asarray(omega_a, dtype=np.float64)
    wb = np.asarray(omega_b, dtype=np.float64)
    if wa.shape != wb.shape or wa.ndim != 1:
        raise DimensionMismatch("natural-velocity vectors must be equal-length")
    return mean_power_norm((wa - wa.mean()) - (wb - wb.mean()), p)


def _quantiles_on(cum: np.ndarray, points: np.ndarray, qs: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cum, qs, side="left")
    return points[np.minimum(idx, points.size - 1)]


def wasserstein_1d(mu: DiscreteMeasure1D, nu: DiscreteMeasure1D, p=1) -> float:
    """Exact p-Wasserstein distance on the line via quantile functions.

    Builds the common refinement of the two cumulative-weight breakpoint
    sets, integrates |Q_mu - Q_nu|^p against the refined mass intervals, and
    takes the p-th root; for p = inf, the essential sup of |Q_mu - Q_nu|.
    O((m+n) log(m+n)); for equal-size uniform weights this reduces to
    sorted-coordinate matching.
    """
    p = _check_order(p)
    iu = np.argsort(mu.points, kind="stable")
    iv = np.argsort(nu.points, kind="stable")
    xu, wu = mu.points[iu], mu.weights[iu]
    xv, wv = nu.points[iv], nu.weights[iv]
    cu = np.cumsum(wu)
    cv = np.cumsum(wv)
    qs = np.sort(np.concatenate([cu, cv]))
    deltas = np.diff(qs, prepend=0.0)
    gap = np.abs(_quantiles_on(cu, xu, qs) - _quantiles_on(cv, xv, qs))
    if np.isinf(p):
        live = deltas > 0
        return float(gap[live].max()) if live.any() else 0.0
    return float((deltas * gap**p).sum() ** (1.0 / p))


def _bottleneck_value(costs: np.ndarray) -> float:
    # smallest threshold whose admissible-edge graph has a perfect matching
    values = np.unique(costs)
    lo, hi = 0, values.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        match = maximum_bipartite_matching(csr_matrix(costs <= values[mid]), perm_type="column")
        if (match == -1).any():
            lo = mid + 1
        else:
            hi = mid
    return float(values[lo])


def wasserstein_phase(a: PhasePoints, b: PhasePoints, p=2, assignment_cap: int = ASSIGNMENT_CAP) -> float:
    """Exact p-Wasserstein distance between equal-size uniform point clouds.

    Costs are Euclidean phase-space distances |z_i - z_j|.  For p < inf the
    optimal coupling is an optimal assignment (O(N^3) Hungarian); for p = inf
    it is a bottleneck assignment found by binary search over cost thresholds
    with a bipartite-matching feasibility test.
    """
    p = _check_order(p)
    if a.n != b.n:
        raise DimensionMismatch("phase-space distance needs equal point counts")
    if a.n > assignment_cap:
        raise SizeCapExceeded(f"N = {a.n} exceeds the exact-assignment cap {assignment_cap}")
    diff = a.points[:, None, :] - b.points[None, :, :]
    costs = np.sqrt((diff**2).sum(axis=2))
    if np.isinf(p):
        return _bottleneck_value(costs)
    powered = costs**p
    rows, cols = linear_sum_assignment(powered)
    return float((powered[rows, cols].sum() / a.n) ** (1.0 / p))


def modified_wasserstein(f, g, p=2) -> float:
    """Modified transport distance between two pseudo-inverse level fields.

    The fields must share the velocity grid (nodes, weights, level counts);
    the distance is then the double L^p norm of chi_f - chi_g in the mass
    coordinates: (sum_levels mass |chi_f - chi_g|^p)^(1/p), nested sups for
    p = inf.  On a single velocity node this coincides with the 1-d
    Wasserstein distance of the two slice measures.
    """
    p = _check_order(p)
    if (
        not np.array_equal(f.omega_nodes, g.omega_nodes)
        or not np.array_equal(f.omega_weights, g.omega_weights)
        or not np.array_equal(f.eta_counts, g.eta_counts)
    ):
        raise GridMismatch("fields must share omega nodes, weights, and level counts")
    gap = np.abs(f.level_positions() - g.level_positions())
    if np.isinf(p):
        return float(gap.max())
    mass = f.level_masses()
    return float((mass * gap**p).sum() ** (1.0 / p))

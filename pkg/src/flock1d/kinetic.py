"""Pseudo-inverse discretization of the limiting continuity equation.

The continuum limit of the first-order dynamics transports a phase density
f(x, omega, t) by the field omega - (Psi * rho)(x), with rho the spatial
marginal.  Writing chi(eta, omega, t) for the pseudo-inverse of the
cumulative distribution in x at fixed omega turns this into the
integro-differential equation

    d/dt chi(eta, omega) = omega + integral Psi(chi(eta*, omega*) - chi(eta, omega)) d eta* d omega*,

whose discretization here is a mass-level (particle) method: the omega
marginal is frozen into weighted nodes (it is conserved exactly by the
dynamics), each node carries equal-mass quantile levels in eta, and every
(eta, omega) cell is a weighted particle.  A field with one level per
particle therefore evolves exactly like the first-order particle system,
which is the module's strongest test oracle.

Sign convention used everywhere: the drift is omega - (Psi * rho)(x) with
(Psi * rho)(x) = sum_m mass_m Psi(x - chi_m), which by oddness of Psi equals
omega + sum_m mass_m Psi(chi_m - x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from . import _fast
from .errors import (
    DegenerateSupport,
    MonotonicityViolation,
    NumericalBlowup,
    NotNormalized,
    ValidationError,
)
from .kernels import CommunicationKernel
from .metrics import DiscreteMeasure1D, PhasePoints
from .model import FirstOrderEnsemble, velocities_from_natural
from .simulate import IntegratorSpec

__all__ = [
    "PseudoInverseField",
    "EnergyReport",
    "discretize_initial",
    "field_from_ensemble",
    "pseudoinverse_rhs",
    "evolve_kinetic",
    "kinetic_states_at",
    "reconstruct_density",
    "energy_report",
    "gamma_pushforward",
    "write_field_csv",
    "write_energy_csv",
]


@dataclass(frozen=True)
class PseudoInverseField:
    """Discretized pseudo-inverse chi over a weighted velocity grid.

    ``chi[m]`` holds the (nondecreasing) positions of the equal-mass levels
    of node m; level (m, k) carries mass ``omega_weights[m] / len(chi[m])``.
    The grid (nodes, weights, level counts) is immutable under evolution --
    the velocity marginal is conserved exactly.
    """

    omega_nodes: np.ndarray
    omega_weights: np.ndarray
    chi: tuple

    def __post_init__(self):
        nodes = np.asarray(self.omega_nodes, dtype=np.float64)
        weights = np.asarray(self.omega_weights, dtype=np.float64)
        if nodes.ndim != 1 or nodes.size < 1 or nodes.shape != weights.shape:
            raise ValidationError("omega nodes and weights must be equal-length 1-d vectors")
        if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(weights))):
            raise ValidationError("omega grid must be finite")
        if np.any(weights <= 0):
            raise ValidationError("omega weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise NotNormalized(f"omega weights sum to {weights.sum()!r}, expected 1")
        slices = tuple(np.asarray(c, dtype=np.float64) for c in self.chi)
        if len(slices) != nodes.size:
            raise ValidationError("chi must hold one level vector per omega node")
        for m, levels in enumerate(slices):
            if levels.ndim != 1 or levels.size < 1:
                raise ValidationError(f"chi[{m}] must be a nonempty 1-d vector")
            if not np.all(np.isfinite(levels)):
                raise ValidationError(f"chi[{m}] must be finite")
            if np.any(np.diff(levels) < 0):
                raise ValidationError(f"chi[{m}] must be nondecreasing (quantile levels)")
        object.__setattr__(self, "omega_nodes", nodes)
        object.__setattr__(self, "omega_weights", weights)
        object.__setattr__(self, "chi", slices)

    @property
    def n_nodes(self) -> int:
        return self.omega_nodes.size

    @property
    def eta_counts(self) -> np.ndarray:
        return np.array([c.size for c in self.chi], dtype=np.int64)

    @property
    def n_levels(self) -> int:
        return int(sum(c.size for c in self.chi))

    def slice_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.eta_counts)]).astype(np.int64)

    def level_positions(self) -> np.ndarray:
        return np.concatenate(self.chi)

    def level_omegas(self) -> np.ndarray:
        return np.repeat(self.omega_nodes, self.eta_counts)

    def level_masses(self) -> np.ndarray:
        return np.repeat(self.omega_weights / self.eta_counts, self.eta_counts)

    def with_levels(self, flat: np.ndarray) -> "PseudoInverseField":
        """Same grid, new level positions (given flat, in slice order)."""
        offsets = self.slice_offsets()
        parts = tuple(flat[offsets[m] : offsets[m + 1]] for m in range(self.n_nodes))
        return PseudoInverseField(self.omega_nodes, self.omega_weights, parts)

    def x_support_diameter(self) -> float:
        flat = self.level_positions()
        return float(flat.max() - flat.min())


def _empirical_quantiles(samples: np.ndarray, n_eta: int) -> np.ndarray:
    srt = np.sort(np.asarray(samples, dtype=np.float64))
    u = (np.arange(n_eta) + 0.5) / n_eta
    idx = np.minimum((u * srt.size).astype(int), srt.size - 1)
    return srt[idx]


def discretize_initial(
    h: Union[Callable, tuple],
    x_profile: Union[Callable, Sequence],
    n_omega: int = 32,
    n_eta: int = 32,
    omega_range=None,
) -> PseudoInverseField:
    """Build a level field from a velocity marginal and conditional profiles.

    Parameters
    ----------
    h : callable or (nodes, weights) pair
        Velocity marginal.  A callable density needs ``omega_range`` and is
        sampled at ``n_omega`` midpoint nodes with midpoint-rule weights;
        an explicit pair is used as given.  Weights are normalized to one.
    x_profile : callable or sequence of sample arrays
        Either a conditional quantile function ``x_profile(u, omega)`` with
        u in (0, 1), or one sample array per node whose empirical quantiles
        seed the levels.  With exactly ``n_eta`` samples per node the levels
        are the sorted samples themselves.
    n_eta : int
        Equal-mass levels per node, seeded at masses (k + 1/2) / n_eta.
    """
    if callable(h):
        if omega_range is None:
            raise ValidationError("a density h requires omega_range")
        lo, hi = float(omega_range[0]), float(omega_range[1])
        if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
            raise ValidationError("omega_range must be a bounded interval")
        if n_omega < 1:
            raise ValidationError("n_omega must be >= 1")
        width = (hi - lo) / n_omega
        nodes = lo + (np.arange(n_omega) + 0.5) * width
        weights = np.asarray([float(h(w)) for w in nodes]) * width
    else:
        nodes = np.asarray(h[0], dtype=np.float64)
        weights = np.asarray(h[1], dtype=np.float64)
    if not np.all(np.isfinite(weights)) or np.any(weights < 0) or weights.sum() <= 0:
        raise DegenerateSupport("velocity marginal has no usable mass")
    keep = weights > 0
    nodes, weights = nodes[keep], weights[keep]
    weights = weights / weights.sum()

    if n_eta < 1:
        raise ValidationError("n_eta must be >= 1")
    u = (np.arange(n_eta) + 0.5) / n_eta
    chi = []
    for m, node in enumerate(nodes):
        if callable(x_profile):
            vals = np.asarray(x_profile(u, node), dtype=np.float64)
            if vals.shape != u.shape:
                vals = np.asarray([float(x_profile(uk, node)) for uk in u])
        else:
            vals = _empirical_quantiles(x_profile[m], n_eta)
        if np.any(np.diff(vals) < 0):
            raise ValidationError(f"x profile at omega node {m} is not monotone in the mass variable")
        chi.append(vals)
    return PseudoInverseField(nodes, weights, tuple(chi))


def field_from_ensemble(state: FirstOrderEnsemble) -> PseudoInverseField:
    """One level per particle with uniform masses; reproduces the empirical measure."""
    n = state.n
    return PseudoInverseField(
        state.natural_velocities,
        np.full(n, 1.0 / n),
        tuple(np.array([x]) for x in state.positions),
    )


def pseudoinverse_rhs(field: PseudoInverseField, kernel: CommunicationKernel):
    """Level drifts d chi_l = omega_l + sum_m mass_m Psi(chi_m - chi_l).

    Returned ragged (one array per omega node), mirroring ``field.chi``.
    The self term vanishes since Psi(0) = 0.
    """
    chi = field.level_positions()
    drift = field.level_omegas() + kernel.antiderivative(chi[None, :] - chi[:, None]) @ field.level_masses()
    offsets = field.slice_offsets()
    return [drift[offsets[m] : offsets[m + 1]] for m in range(field.n_nodes)]


def _mono_tol(chi_flat: np.ndarray) -> float:
    return 1e-10 * max(1.0, float(np.abs(chi_flat).max()))


def _raise_for_status(status: int, bad_step: int, dt: float):
    if status == _fast.MONOTONE_BROKEN:
        raise MonotonicityViolation(
            f"level ordering within a velocity slice broke at t = {bad_step * dt:.6g}; "
            "refine the step size or the level grid"
        )
    if status == _fast.NON_FINITE:
        raise NumericalBlowup(f"levels became non-finite at t = {bad_step * dt:.6g}")


def evolve_kinetic(
    field: PseudoInverseField,
    kernel: CommunicationKernel,
    spec: IntegratorSpec,
    record_every: int = 1,
):
    """Method-of-lines RK4 evolution of all levels.

    The omega grid never changes (the velocity marginal is conserved
    exactly); slice monotonicity is asserted after every step and its
    violation is fatal, since within-slice crossing contradicts the
    contractive structure and signals a stepping error.  Returns a list of
    (time, field, EnergyReport) triples at the recorded times.
    """
    if record_every < 1:
        raise ValidationError("record_every must be >= 1")
    if spec.t_end == 0.0:
        return [(0.0, field, energy_report(field, kernel, 0.0))]
    chi0 = field.level_positions()
    n_steps = max(1, int(math.ceil(spec.t_end / spec.dt - 1e-9)))
    dt = spec.t_end / n_steps
    times, chis, n_rec, status, bad_step = _fast.rk4_levels(
        chi0,
        field.level_omegas(),
        field.level_masses(),
        field.slice_offsets(),
        kernel.beta,
        dt,
        n_steps,
        record_every,
        _mono_tol(chi0),
    )
    _raise_for_status(status, bad_step, dt)
    out = []
    for k in range(n_rec):
        snap = field.with_levels(chis[k])
        out.append((float(times[k]), snap, energy_report(snap, kernel, float(times[k]))))
    return out


def kinetic_states_at(field: PseudoInverseField, kernel: CommunicationKernel, times, dt: float):
    """Fields at the requested times (segment-wise RK4, exact landing)."""
    ts = np.asarray(times, dtype=np.float64)
    if ts.size and (np.any(np.diff(ts) <= 0) or ts[0] < 0):
        raise ValidationError("times must be nonnegative and strictly increasing")
    omega_lv = field.level_omegas()
    mass = field.level_masses()
    offsets = field.slice_offsets()
    chi = field.level_positions().copy()
    tol = _mono_tol(chi)
    out = []
    t_prev = 0.0
    for t in ts:
        seg = t - t_prev
        if seg > 0:
            n_steps = max(1, int(math.ceil(seg / dt - 1e-9)))
            _, chis, n_rec, status, bad = _fast.rk4_levels(
                chi, omega_lv, mass, offsets, kernel.beta, seg / n_steps, n_steps, n_steps, tol
            )
            _raise_for_status(status, bad, seg / n_steps)
            chi = chis[n_rec - 1].copy()
        out.append(field.with_levels(chi))
        t_prev = t
    return out


def reconstruct_density(field: PseudoInverseField) -> DiscreteMeasure1D:
    """Spatial marginal: point masses at every level position."""
    return DiscreteMeasure1D(field.level_positions(), field.level_masses())


@dataclass(frozen=True)
class EnergyReport:
    """Velocity-field energy, its dissipation rate, and the free energy."""

    kinetic_energy: float  # (1/2) sum mass (omega - Psi*rho)^2, always >= 0
    dissipation: float  # >= 0 up to roundoff; energy satisfies dE/dt = -D
    free_energy: float  # (1/2) sum mass mass K(dx) - sum mass omega chi
    time: float


def energy_report(field: PseudoInverseField, kernel: CommunicationKernel, time: float = 0.0) -> EnergyReport:
    """Evaluate the three functionals by mass-weighted double sums.

    The dissipation is computed in the manifestly nonnegative symmetric form
    (1/2) sum_{l != m} mass_l mass_m psi(chi_l - chi_m) (xi_l - xi_m)^2 with
    xi = omega - Psi*rho, which is the self-term-free rearrangement of the
    two-integral form and makes dE/dt = -D an exact identity of the level
    system.
    """
    chi = field.level_positions()
    mass = field.level_masses()
    omega = field.level_omegas()
    gaps = chi[:, None] - chi[None, :]
    conv = kernel.antiderivative(gaps) @ mass  # (Psi*rho)(chi_l)
    xi = omega - conv
    energy = 0.5 * float(mass @ xi**2)

    xi_gap_sq = (xi[:, None] - xi[None, :]) ** 2
    psi_pairs = kernel.psi(gaps)
    with np.errstate(invalid="ignore"):
        terms = psi_pairs * xi_gap_sq
    terms[xi_gap_sq == 0.0] = 0.0  # 0 * inf at coincident equal-drift levels
    dissipation = 0.5 * float(mass @ terms @ mass)

    free = 0.5 * float(mass @ kernel.potential(gaps) @ mass) - float(mass @ (omega * chi))
    return EnergyReport(energy, dissipation, free, time)


def gamma_pushforward(obj, kernel: CommunicationKernel) -> PhasePoints:
    """Map (x, omega) mass points to (x, v) with v = omega - (Psi * rho)(x).

    For an ensemble this is exactly the natural-velocity inverse transform;
    for a field every level becomes a phase point carrying its mass (levels
    of one node share omega).
    """
    if isinstance(obj, FirstOrderEnsemble):
        v = velocities_from_natural(obj.positions, obj.natural_velocities, kernel)
        return PhasePoints(np.column_stack([obj.positions, v]))
    chi = obj.level_positions()
    conv = kernel.antiderivative(chi[:, None] - chi[None, :]) @ obj.level_masses()
    return PhasePoints(np.column_stack([chi, obj.level_omegas() - conv]))


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_field_csv(field: PseudoInverseField, path) -> None:
    """One row per level: ``omega_index,omega,weight,level,chi``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("omega_index,omega,weight,level,chi\n")
        for m in range(field.n_nodes):
            w = field.omega_nodes[m]
            wt = field.omega_weights[m]
            for k, x in enumerate(field.chi[m]):
                fh.write(f"{m},{_fmt(w)},{_fmt(wt)},{k},{_fmt(x)}\n")


def write_energy_csv(reports, path) -> None:
    """Energy history: ``t,E,D,F``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,E,D,F\n")
        for rep in reports:
            fh.write(
                f"{_fmt(rep.time)},{_fmt(rep.kinetic_energy)},{_fmt(rep.dissipation)},{_fmt(rep.free_energy)}\n"
            )

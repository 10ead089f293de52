"""Particle ensembles and right-hand sides of the alignment dynamics.

Second-order form (N agents on the line):

    dx_i/dt = v_i,
    dv_i/dt = (1/N) sum_{j != i} psi(x_j - x_i) (v_j - v_i),

with the singular weight psi from :mod:`flock1d.kernels`.  The equivalent
first-order form replaces the velocities by the conserved natural velocities

    omega_i = v_i - (1/N) sum_j Psi(x_j - x_i),
    dx_i/dt = omega_i + (1/N) sum_j Psi(x_j - x_i),

where Psi is the bounded antiderivative of psi, so the drift stays continuous
even through position coincidences.  Everything here is a pure function from
state to derivative; no in-place mutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollisionError, DimensionMismatch, ValidationError
from .kernels import CommunicationKernel

__all__ = [
    "SecondOrderEnsemble",
    "FirstOrderEnsemble",
    "mean_interaction",
    "second_order_rhs",
    "first_order_rhs",
    "natural_velocities",
    "velocities_from_natural",
    "to_first_order",
    "to_second_order",
]


def _finite_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValidationError(f"{name} must be a nonempty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must contain only finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SecondOrderEnsemble:
    """Positions and velocities of N agents."""

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", _finite_vector(self.positions, "positions"))
        object.__setattr__(self, "velocities", _finite_vector(self.velocities, "velocities"))
        if self.positions.size != self.velocities.size:
            raise ValidationError("positions and velocities must have equal length")

    @property
    def n(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class FirstOrderEnsemble:
    """Positions and conserved natural velocities of N agents."""

    positions: np.ndarray
    natural_velocities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", _finite_vector(self.positions, "positions"))
        object.__setattr__(
            self, "natural_velocities", _finite_vector(self.natural_velocities, "natural_velocities")
        )
        if self.positions.size != self.natural_velocities.size:
            raise ValidationError("positions and natural_velocities must have equal length")

    @property
    def n(self) -> int:
        return self.positions.size


def mean_interaction(positions, kernel: CommunicationKernel) -> np.ndarray:
    """(1/N) sum_j Psi(x_j - x_i) for every i.

    The full sum is taken; the i = j term is Psi(0) = 0.  Summation order is
    fixed (ascending j), so results are deterministic.
    """
    x = np.asarray(positions, dtype=np.float64)
    gaps = x[None, :] - x[:, None]
    return kernel.antiderivative(gaps).sum(axis=1) / x.size


def second_order_rhs(state: SecondOrderEnsemble, kernel: CommunicationKernel):
    """Time derivative (dx, dv) of the second-order system.

    The diagonal (self) term is defined as exactly 0 -- the unique continuous
    extension, since the velocity difference vanishes there.

    Raises
    ------
    CollisionError
        If two distinct agents occupy the same position, where psi diverges.
    """
    x = state.positions
    v = state.velocities
    n = state.n
    if n == 1:
        return v.copy(), np.zeros(1)
    gaps = x[None, :] - x[:, None]
    off_diag = ~np.eye(n, dtype=bool)
    if np.any(gaps[off_diag] == 0.0):
        raise CollisionError("coincident positions: the communication weight is singular")
    weights = kernel.psi(gaps)
    np.fill_diagonal(weights, 0.0)
    dv = (weights * (v[None, :] - v[:, None])).sum(axis=1) / n
    return v.copy(), dv


def first_order_rhs(state: FirstOrderEnsemble, kernel: CommunicationKernel) -> np.ndarray:
    """Drift omega_i + (1/N) sum_j Psi(x_j - x_i) of the first-order system."""
    return state.natural_velocities + mean_interaction(state.positions, kernel)


def natural_velocities(positions, velocities, kernel: CommunicationKernel) -> np.ndarray:
    """omega_i = v_i - (1/N) sum_j Psi(x_j - x_i).

    Exact inverse of :func:`velocities_from_natural` at fixed positions; the
    mean is preserved (the interaction sum averages to zero by oddness).
    """
    x = np.asarray(positions, dtype=np.float64)
    v = np.asarray(velocities, dtype=np.float64)
    if x.shape != v.shape:
        raise DimensionMismatch("positions and velocities must have equal length")
    return v - mean_interaction(x, kernel)


def velocities_from_natural(positions, naturals, kernel: CommunicationKernel) -> np.ndarray:
    """v_i = omega_i + (1/N) sum_j Psi(x_j - x_i)."""
    x = np.asarray(positions, dtype=np.float64)
    w = np.asarray(naturals, dtype=np.float64)
    if x.shape != w.shape:
        raise DimensionMismatch("positions and natural_velocities must have equal length")
    return w + mean_interaction(x, kernel)


def to_first_order(state: SecondOrderEnsemble, kernel: CommunicationKernel) -> FirstOrderEnsemble:
    """Change of variables (x, v) -> (x, omega)."""
    return FirstOrderEnsemble(
        state.positions, natural_velocities(state.positions, state.velocities, kernel)
    )


def to_second_order(state: FirstOrderEnsemble, kernel: CommunicationKernel) -> SecondOrderEnsemble:
    """Change of variables (x, omega) -> (x, v)."""
    return SecondOrderEnsemble(
        state.positions, velocities_from_natural(state.positions, state.natural_velocities, kernel)
    )

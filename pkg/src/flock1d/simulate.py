"""Time integration of the particle systems, diagnostics, and trajectories.

The first-order system has a bounded, continuous drift and is integrated with
fixed-step RK4; this is also the canonical route for second-order runs (change
variables to natural velocities, integrate, map back), which stays globally
defined even through position coincidences.  The direct second-order
integrator faces the singular weight head on: adaptive Dormand-Prince 5(4)
with step rejection, plus a pairwise-gap guard that halves the step near
contact and stops with a COLLISION_STOP event when halving is exhausted.
Post-collision dynamics are undefined for the singular weight, so stopping
(rather than regularizing) is deliberate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _fast
from .errors import CollisionError, NumericalBlowup, ValidationError
from .kernels import CommunicationKernel
from .model import (
    FirstOrderEnsemble,
    SecondOrderEnsemble,
    first_order_rhs,
    natural_velocities,
    velocities_from_natural,
)

__all__ = [
    "IntegratorSpec",
    "Trajectory",
    "EnsembleDiagnostics",
    "integrate_first_order",
    "integrate_second_order_direct",
    "integrate_via_reformulation",
    "first_order_positions_at",
    "diagnostics",
    "detect_equilibrium",
    "write_trajectory_csv",
    "write_events_csv",
]

COLLISION_STOP = "COLLISION_STOP"
STEP_REJECTED = "STEP_REJECTED"

SCHEMES = ("rk4_fixed", "rk45_adaptive")


@dataclass(frozen=True)
class IntegratorSpec:
    """Stepping policy for a single run.

    ``dt`` is the fixed step of RK4 (and the initial trial step of the
    adaptive scheme); ``collision_gap`` is the smallest admissible pairwise
    gap for the direct singular integrator.
    """

    scheme: str = "rk4_fixed"
    dt: float = 1e-3
    t_end: float = 10.0
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    collision_gap: float = 1e-7
    max_step_halvings: int = 40

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValidationError("dt must be positive")
        if not (np.isfinite(self.t_end) and self.t_end >= 0):
            raise ValidationError("t_end must be nonnegative")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValidationError("tolerances must be positive")
        if self.collision_gap < 0:
            raise ValidationError("collision_gap must be nonnegative")
        if self.max_step_halvings < 1:
            raise ValidationError("max_step_halvings must be at least 1")


Snapshot = Union[FirstOrderEnsemble, SecondOrderEnsemble]


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped snapshots of one run plus integration events."""

    times: np.ndarray
    snapshots: tuple
    events: tuple
    kind: str  # "first_order" | "second_order"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        object.__setattr__(self, "events", tuple(self.events))
        if len(self.snapshots) != t.size:
            raise ValidationError("times and snapshots must have equal length")
        if t.size and np.any(np.diff(t) <= 0):
            raise ValidationError("times must be strictly increasing")

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    def positions(self) -> np.ndarray:
        """Recorded positions as an array of shape (n_times, N)."""
        return np.stack([s.positions for s in self.snapshots])

    def velocities(self) -> np.ndarray:
        """Recorded velocities (second-order) or natural velocities."""
        if self.kind == "second_order":
            return np.stack([s.velocities for s in self.snapshots])
        return np.stack([s.natural_velocities for s in self.snapshots])


def _step_count(t_end: float, dt: float) -> int:
    return max(1, int(math.ceil(t_end / dt - 1e-9)))


def integrate_first_order(
    init: FirstOrderEnsemble,
    kernel: CommunicationKernel,
    spec: IntegratorSpec,
    record_every: int = 1,
) -> Trajectory:
    """Integrate dx_i/dt = omega_i + (1/N) sum_j Psi(x_j - x_i) to t_end.

    Fixed-step RK4 with the step adjusted so the horizon is hit exactly.
    Natural velocities are constant along the flow; the final time equals
    ``spec.t_end``.  The drift is continuous, so no collision events occur.
    """
    if record_every < 1:
        raise ValidationError("record_every must be >= 1")
    if spec.t_end == 0.0:
        return Trajectory(np.zeros(1), (init,), (), "first_order")
    n_steps = _step_count(spec.t_end, spec.dt)
    dt = spec.t_end / n_steps
    times, xs, n_rec, status, bad_step = _fast.rk4_first_order(
        init.positions, init.natural_velocities, kernel.beta, dt, n_steps, record_every
    )
    if status == _fast.NON_FINITE:
        raise NumericalBlowup(f"state became non-finite at t = {bad_step * dt:.6g}")
    omega = init.natural_velocities
    snaps = tuple(FirstOrderEnsemble(xs[k], omega) for k in range(n_rec))
    return Trajectory(times[:n_rec], snaps, (), "first_order")


def first_order_positions_at(
    init: FirstOrderEnsemble,
    kernel: CommunicationKernel,
    times,
    dt: float,
) -> np.ndarray:
    """Positions of the first-order flow at the requested times.

    Integrates segment by segment with RK4, shrinking the step within each
    segment so every requested time is hit exactly.  Returns an array of
    shape (len(times), N).
    """
    ts = np.asarray(times, dtype=np.float64)
    if ts.size and (np.any(np.diff(ts) <= 0) or ts[0] < 0):
        raise ValidationError("times must be nonnegative and strictly increasing")
    out = np.empty((ts.size, init.n))
    x = init.positions.copy()
    omega = init.natural_velocities
    t_prev = 0.0
    for k, t in enumerate(ts):
        seg = t - t_prev
        if seg > 0:
            n_steps = _step_count(seg, dt)
            _, xs, n_rec, status, bad = _fast.rk4_first_order(
                x, omega, kernel.beta, seg / n_steps, n_steps, n_steps
            )
            if status == _fast.NON_FINITE:
                raise NumericalBlowup("state became non-finite")
            x = xs[n_rec - 1].copy()
        out[k] = x
        t_prev = t
    return out


def _min_gap(x: np.ndarray) -> float:
    if x.size < 2:
        return math.inf
    return float(np.min(np.diff(np.sort(x))))


def integrate_second_order_direct(
    init: SecondOrderEnsemble,
    kernel: CommunicationKernel,
    spec: IntegratorSpec,
    record_every: int = 1,
    checkpoints: Optional[np.ndarray] = None,
) -> Trajectory:
    """Adaptive integration of the singular second-order system.

    Error control follows Dormand-Prince 5(4); a step whose stages or
    proposal bring some pairwise gap at or below ``spec.collision_gap`` is
    halved up to ``spec.max_step_halvings`` times, after which a
    COLLISION_STOP event is recorded with the last valid state and the run
    ends early.  When ``checkpoints`` is given, steps land exactly on those
    times and only they are recorded.

    Raises CollisionError if the initial state already violates the gap.
    """
    if record_every < 1:
        raise ValidationError("record_every must be >= 1")
    if init.n >= 2 and _min_gap(init.positions) <= spec.collision_gap:
        raise CollisionError("initial pairwise gap at or below collision_gap")

    cps = None
    if checkpoints is not None:
        cps = np.asarray(checkpoints, dtype=np.float64)
        if cps.size and (np.any(np.diff(cps) <= 0) or cps[0] < 0 or cps[-1] > spec.t_end):
            raise ValidationError("checkpoints must be increasing within [0, t_end]")

    n = init.n
    y = np.concatenate([init.positions, init.velocities])
    beta = kernel.beta
    t = 0.0
    h = min(spec.dt, spec.t_end) if spec.t_end > 0 else spec.dt
    times = [0.0]
    states = [y.copy()]
    events = []
    cp_idx = 0
    if cps is not None and cps.size and cps[0] == 0.0:
        cp_idx = 1
    accepted = 0
    h_floor = 1e-14 * max(1.0, spec.t_end)
    # gap-triggered halvings accumulate across consecutive steps (a collision
    # approach otherwise creeps forward in ever-smaller accepted steps); the
    # budget resets whenever a step completes without touching the guard
    halvings_run = 0

    def _record(tt, yy):
        times.append(tt)
        states.append(yy.copy())

    while t < spec.t_end - 1e-14 * max(1.0, spec.t_end):
        target = spec.t_end if cps is None or cp_idx >= cps.size else cps[cp_idx]
        h_exec = min(h, target - t)
        gap_halved = False
        while True:
            if h_exec < h_floor:
                raise NumericalBlowup("step size underflow in adaptive integration")
            y_new, err, gap = _fast.dopri_step(y, beta, h_exec, spec.abs_tol, spec.rel_tol)
            if gap <= spec.collision_gap:
                gap_halved = True
                halvings_run += 1
                if halvings_run > spec.max_step_halvings:
                    events.append((t, COLLISION_STOP))
                    if times[-1] != t:
                        _record(t, y)
                    return _wrap_second_order(times, states, events)
                h_exec *= 0.5
                continue
            if not err <= 1.0:  # NaN counts as a rejection
                events.append((t, STEP_REJECTED))
                h_exec *= 0.5 if not np.isfinite(err) else min(0.9, max(0.2, 0.9 * err ** -0.2))
                continue
            break
        if not gap_halved:
            halvings_run = 0
        if not np.all(np.isfinite(y_new)):
            raise NumericalBlowup(f"state became non-finite at t = {t:.6g}")
        t += h_exec
        y = y_new
        accepted += 1
        grow = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        h = h_exec * grow
        if cps is not None:
            if cp_idx < cps.size and abs(t - cps[cp_idx]) <= 1e-12 * max(1.0, abs(cps[cp_idx])):
                t = float(cps[cp_idx])
                _record(t, y)
                cp_idx += 1
        elif accepted % record_every == 0:
            _record(t, y)
    if times[-1] != t and (cps is None or not cps.size or t > cps[-1] + 1e-12):
        _record(t, y)
    return _wrap_second_order(times, states, events)


def _wrap_second_order(times, states, events) -> Trajectory:
    n = states[0].size // 2
    snaps = tuple(SecondOrderEnsemble(s[:n], s[n:]) for s in states)
    return Trajectory(np.asarray(times), snaps, tuple(events), "second_order")


def integrate_via_reformulation(
    init: SecondOrderEnsemble,
    kernel: CommunicationKernel,
    spec: IntegratorSpec,
    record_every: int = 1,
) -> Trajectory:
    """Canonical second-order integration through the first-order form.

    Computes the natural velocities once, runs the first-order flow, and maps
    every snapshot back.  Globally defined even through position
    coincidences of distinct agents, since the interaction primitive is
    continuous.
    """
    omega = natural_velocities(init.positions, init.velocities, kernel)
    traj = integrate_first_order(FirstOrderEnsemble(init.positions, omega), kernel, spec, record_every)
    snaps = tuple(
        SecondOrderEnsemble(s.positions, velocities_from_natural(s.positions, omega, kernel))
        for s in traj.snapshots
    )
    return Trajectory(traj.times, snaps, traj.events, "second_order")


@dataclass(frozen=True)
class EnsembleDiagnostics:
    """Diameters, fluctuation norm, and the flocking constant of a snapshot."""

    position_diameter: float
    velocity_diameter: float
    natural_velocity_diameter: float
    lp_velocity_norm: float
    flocking_constant_C0: float


def lp_fluctuation(values, p) -> float:
    """((1/N) sum |v_i - mean|^p)^(1/p); the sup norm about the mean for p = inf."""
    v = np.asarray(values, dtype=np.float64)
    dev = np.abs(v - v.mean())
    if np.isinf(p):
        return float(dev.max())
    return float(np.mean(dev**p) ** (1.0 / p))


def diagnostics(snapshot: Snapshot, kernel: CommunicationKernel, p=2) -> EnsembleDiagnostics:
    """Diameters and norms of one snapshot.

    The flocking constant max{D_x, Psi^-1(D_omega)} bounds the position
    diameter for all later times when the snapshot is initial data, and
    psi(C0) is the guaranteed velocity-alignment rate.
    """
    x = snapshot.positions
    if isinstance(snapshot, SecondOrderEnsemble):
        v = snapshot.velocities
        omega = natural_velocities(x, v, kernel)
    else:
        omega = snapshot.natural_velocities
        v = velocities_from_natural(x, omega, kernel)
    d_x = float(np.ptp(x))
    d_v = float(np.ptp(v))
    d_w = float(np.ptp(omega))
    c0 = max(d_x, float(kernel.antiderivative_inv(d_w)))
    return EnsembleDiagnostics(d_x, d_v, d_w, lp_fluctuation(v, p), c0)


def detect_equilibrium(traj: Trajectory, kernel: CommunicationKernel, tol: float = 1e-8):
    """Final comoving-frame configuration and whether the flow has settled.

    The comoving frame subtracts the initial center of mass plus the mean
    drift; equilibria only exist modulo that uniform translation.  Returns
    (X_inf, converged) with converged true iff the comoving drift magnitude
    is below ``tol`` at the final time.
    """
    first = traj.snapshots[0]
    last = traj.final
    if traj.kind == "second_order":
        omega = natural_velocities(last.positions, last.velocities, kernel)
    else:
        omega = last.natural_velocities
    omega_c = float(omega.mean())
    center = float(first.positions.mean()) + omega_c * float(traj.times[-1])
    x_inf = last.positions - center
    drift = first_order_rhs(FirstOrderEnsemble(x_inf, omega - omega_c), kernel)
    return x_inf, bool(np.max(np.abs(drift)) < tol)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per agent per recorded time: ``t,id,x,v`` or ``t,id,x,omega``."""
    value = "v" if traj.kind == "second_order" else "omega"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"t,id,x,{value}\n")
        for t, snap in zip(traj.times, traj.snapshots):
            vals = snap.velocities if traj.kind == "second_order" else snap.natural_velocities
            for i in range(snap.n):
                fh.write(f"{_fmt(t)},{i},{_fmt(snap.positions[i])},{_fmt(vals[i])}\n")


def write_events_csv(traj: Trajectory, path) -> None:
    """Sidecar event log: ``t,kind``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,kind\n")
        for t, kind in traj.events:
            fh.write(f"{_fmt(t)},{kind}\n")

"""Quick self-verification battery behind the ``verify`` CLI command.

Scaled-down versions of the quantitative checks the test suite runs at full
size: closed-form equilibria, cross-validation of the two second-order
integration routes, the stability/contraction/flocking bounds with their
stated slacks, the exact discrete energy laws, and the exhaustive
optimal-transport oracles.  Every check is deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import Flock1dError
from .experiments import (
    contraction_experiment,
    fit_exponential_rate,
    sample_times,
    stability_experiment,
)
from .kernels import CommunicationKernel
from .kinetic import (
    discretize_initial,
    evolve_kinetic,
    field_from_ensemble,
    reconstruct_density,
)
from .metrics import DiscreteMeasure1D, PhasePoints, wasserstein_1d, wasserstein_phase
from .model import FirstOrderEnsemble, natural_velocities, velocities_from_natural
from .sampling import InitSpec, sample_initial
from .simulate import (
    IntegratorSpec,
    diagnostics,
    first_order_positions_at,
    integrate_first_order,
    integrate_second_order_direct,
    lp_fluctuation,
)

__all__ = ["CheckResult", "run_battery"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: float
    threshold: float
    direction: str  # "max" (observed <= threshold) or "min" (observed >= threshold)

    def line(self) -> str:
        cmp = "<=" if self.direction == "max" else ">="
        return (
            f"{'PASS' if self.passed else 'FAIL'} {self.name}: "
            f"observed {self.observed:.3e} {cmp} threshold {self.threshold:.3e}"
        )


def _result(name, observed, threshold, direction="max") -> CheckResult:
    ok = observed <= threshold if direction == "max" else observed >= threshold
    return CheckResult(name, bool(ok), float(observed), float(threshold), direction)


def _two_body_gap() -> CheckResult:
    kernel = CommunicationKernel(0.5)
    init = FirstOrderEnsemble([-1.0, 1.0], [-1.0, 1.0])
    spec = IntegratorSpec(dt=1e-3, t_end=30.0)
    traj = integrate_first_order(init, kernel, spec, record_every=10**6)
    gap = float(traj.final.positions[1] - traj.final.positions[0])
    # steady two-body gap solves Psi(gap) = omega diameter: gap = 1 here
    return _result("two_body_equilibrium_gap", abs(gap - 1.0), 1e-6)


def sup_gap_direct_vs_reformulated(ens, kernel, spec, times) -> float:
    """Sup-norm disagreement of the direct and reformulated routes at ``times``."""
    omega = natural_velocities(ens.positions, ens.velocities, kernel)
    xs = first_order_positions_at(FirstOrderEnsemble(ens.positions, omega), kernel, times, spec.dt)
    direct = integrate_second_order_direct(ens, kernel, spec, checkpoints=times)
    if len(direct.snapshots) != len(times) + 1 or direct.events:
        raise Flock1dError("direct route stopped early; pick a non-colliding instance")
    worst = 0.0
    for k, t in enumerate(times):
        snap = direct.snapshots[k + 1]
        v_ref = velocities_from_natural(xs[k], omega, kernel)
        worst = max(
            worst,
            float(np.max(np.abs(snap.positions - xs[k]))),
            float(np.max(np.abs(snap.velocities - v_ref))),
        )
    return worst


def _reformulation_agreement() -> CheckResult:
    kernel = CommunicationKernel(0.5)
    spec = IntegratorSpec(scheme="rk45_adaptive", dt=1e-3, t_end=5.0)
    times = np.linspace(0.0, 5.0, 26)[1:]
    worst = 0.0
    for seed in (0, 1, 2):
        ens = sample_initial(
            InitSpec(n=8, x_range=(-4.0, 4.0), v_range=(-0.2, 0.2), seed=seed), "second_order"
        )
        worst = max(worst, sup_gap_direct_vs_reformulated(ens, kernel, spec, times))
    return _result("reformulation_agreement", worst, max(100 * spec.abs_tol, 1e-6))


def _stability_bound() -> CheckResult:
    kernel = CommunicationKernel(0.5)
    spec = IntegratorSpec(dt=0.05, t_end=10.0)
    worst = 0.0
    for seed_a, seed_b in ((0, 1), (2, 3), (4, 5)):
        table = stability_experiment(
            InitSpec(n=32, seed=seed_a),
            InitSpec(n=32, seed=seed_b),
            kernel,
            p=2,
            spec=spec,
            mode="first_order",
        )
        ratio = table.column("distance") / table.column("bound")
        worst = max(worst, float(np.nanmax(ratio)))
    return _result("stability_bound", worst, 1.02)


def _same_omega_contraction() -> CheckResult:
    kernel = CommunicationKernel(0.5)
    spec = IntegratorSpec(dt=0.02, t_end=8.0)
    a = sample_initial(InitSpec(n=32, seed=0), "first_order")
    b_pos = sample_initial(InitSpec(n=32, seed=7), "first_order").positions
    b = FirstOrderEnsemble(b_pos, a.natural_velocities)
    table = stability_experiment(a, b, kernel, p=2, spec=spec, times=np.linspace(0.0, 8.0, 33))
    rate, _, _ = fit_exponential_rate(table.column("t"), table.column("distance"), 0.5)
    return _result("same_omega_contraction_rate", rate / table.metadata["rate"], 0.95, "min")


def _flocking_rate() -> CheckResult:
    kernel = CommunicationKernel(0.5)
    ens = sample_initial(InitSpec(n=16, seed=3, v_range=(-0.5, 0.5)), "second_order")
    c0 = diagnostics(ens, kernel).flocking_constant_C0
    omega = natural_velocities(ens.positions, ens.velocities, kernel)
    times = sample_times(10.0, 33)
    xs = first_order_positions_at(FirstOrderEnsemble(ens.positions, omega), kernel, times, 0.01)
    norms = np.array(
        [lp_fluctuation(velocities_from_natural(xs[k], omega, kernel), 2) for k in range(times.size)]
    )
    envelope = norms[0] * np.exp(-kernel.psi(c0) * times)
    return _result("flocking_rate", float(np.max(norms[1:] / envelope[1:])), 1.05)


def _interaction_difference_bound() -> CheckResult:
    kernel = CommunicationKernel(0.5)
    rng = np.random.default_rng(2024)
    xj, xi, yj, yi = rng.uniform(-10, 10, size=(4, 10_000))
    lhs = np.abs(kernel.antiderivative(xj - xi) - kernel.antiderivative(yj - yi))
    rhs = 2.0 * (np.abs(kernel.antiderivative(xj - yj)) + np.abs(kernel.antiderivative(xi - yi)))
    rel = (lhs - rhs) / np.maximum(rhs, 1e-300)
    return _result("interaction_difference_bound", float(rel.max()), 1e-12)


def _kinetic_particle_match() -> CheckResult:
    kernel = CommunicationKernel(0.5)
    ens = sample_initial(InitSpec(n=16, seed=5), "first_order")
    spec = IntegratorSpec(dt=1e-3, t_end=5.0)
    traj = integrate_first_order(ens, kernel, spec, record_every=500)
    records = evolve_kinetic(field_from_ensemble(ens), kernel, spec, record_every=500)
    worst = 0.0
    for (t, fld, _), snap in zip(records, traj.snapshots):
        worst = max(worst, float(np.max(np.abs(fld.level_positions() - snap.positions))))
    return _result("kinetic_particle_match", worst, 1e-10)


def _demo_field(seed: int, n_omega: int = 6, n_eta: int = 6):
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-1.0, 1.0, n_omega)
    scales = rng.uniform(0.5, 1.5, n_omega)
    nodes = -1.0 + (np.arange(n_omega) + 0.5) * (2.0 / n_omega)

    def quantile(u, omega):
        m = int(np.round((omega + 1.0) / (2.0 / n_omega) - 0.5))
        return offsets[m] + scales[m] * u

    return discretize_initial(
        lambda w: 0.5, quantile, n_omega=n_omega, n_eta=n_eta, omega_range=(-1.0, 1.0)
    )


def _kinetic_energy_checks():
    kernel = CommunicationKernel(0.5)
    field = _demo_field(0, 8, 8)
    spec = IntegratorSpec(dt=0.01, t_end=5.0)
    records = evolve_kinetic(field, kernel, spec, record_every=50)
    energies = np.array([rep.kinetic_energy for _, _, rep in records])
    scale = max(1.0, energies[0])
    slack = 10.0 * (spec.dt**2 + 1.0 / 8 + 1.0 / 8) * scale
    mass_err = max(
        abs(float(reconstruct_density(fld).weights.sum()) - 1.0) for _, fld, _ in records
    )
    frozen = all(
        np.array_equal(fld.omega_nodes, field.omega_nodes)
        and np.array_equal(fld.omega_weights, field.omega_weights)
        for _, fld, _ in records
    )
    min_d = min(rep.dissipation for _, _, rep in records)
    return [
        _result("kinetic_energy_monotone", float(np.max(np.diff(energies), initial=0.0)), slack),
        _result("kinetic_dissipation_sign", -min_d, 1e-9),
        _result("kinetic_mass_conservation", mass_err, 1e-12),
        _result("kinetic_marginal_frozen", 0.0 if frozen else 1.0, 0.5),
    ]


def _kinetic_contraction() -> CheckResult:
    kernel = CommunicationKernel(0.5)
    spec = IntegratorSpec(dt=0.01, t_end=4.0)
    worst = 0.0
    for seed_a, seed_b in ((0, 1), (2, 3)):
        table = contraction_experiment(_demo_field(seed_a), _demo_field(seed_b), kernel, 2, spec)
        live = table.column("bound") > 0
        worst = max(worst, float(np.max(table.column("distance")[live] / table.column("bound")[live])))
    return _result("kinetic_contraction_bound", worst, 1.02)


def _transport_oracles() -> CheckResult:
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 6))
        pts_a = rng.uniform(-2, 2, (n, 2))
        pts_b = rng.uniform(-2, 2, (n, 2))
        costs = np.sqrt(((pts_a[:, None, :] - pts_b[None, :, :]) ** 2).sum(axis=2))
        for p in (1, 2, np.inf):
            got = wasserstein_phase(PhasePoints(pts_a), PhasePoints(pts_b), p)
            if np.isinf(p):
                best = min(
                    max(costs[i, perm[i]] for i in range(n))
                    for perm in itertools.permutations(range(n))
                )
            else:
                best = min(
                    (sum(costs[i, perm[i]] ** p for i in range(n)) / n) ** (1.0 / p)
                    for perm in itertools.permutations(range(n))
                )
            worst = max(worst, abs(got - best))
        flat_a = np.column_stack([pts_a[:, 0], np.zeros(n)])
        flat_b = np.column_stack([pts_b[:, 0], np.zeros(n)])
        d1 = wasserstein_1d(
            DiscreteMeasure1D.from_points(pts_a[:, 0]), DiscreteMeasure1D.from_points(pts_b[:, 0]), 2
        )
        d2 = wasserstein_phase(PhasePoints(flat_a), PhasePoints(flat_b), 2)
        worst = max(worst, abs(d1 - d2))
    return _result("transport_oracles", worst, 1e-12)


def run_battery(threads: int = 1):
    """Run every check; returns the list of CheckResults."""
    del threads  # each check is already fast; kept for interface stability
    results = [
        _two_body_gap(),
        _reformulation_agreement(),
        _stability_bound(),
        _same_omega_contraction(),
        _flocking_rate(),
        _interaction_difference_bound(),
        _kinetic_particle_match(),
    ]
    results.extend(_kinetic_energy_checks())
    results.append(_kinetic_contraction())
    results.append(_transport_oracles())
    return results

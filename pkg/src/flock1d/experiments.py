"""Headline experiments: stability, mean-field Cauchy trend, contraction.

Each experiment integrates seeded initial data, evaluates a distance along
the flow together with the corresponding quantitative bound, and returns a
:class:`ResultTable` (named columns plus a metadata echo).  Tolerance slack
on inequalities lives in the callers (tests, verify command); the tables
report raw values.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, GridMismatch, NonPositiveValues, ValidationError
from .kernels import CommunicationKernel
from .kinetic import PseudoInverseField, kinetic_states_at
from .metrics import (
    PhasePoints,
    mean_power_norm,
    modified_wasserstein,
    modulated_lp_distance,
    natural_velocity_mismatch,
    wasserstein_phase,
)
from .model import (
    FirstOrderEnsemble,
    SecondOrderEnsemble,
    natural_velocities,
    velocities_from_natural,
)
from .sampling import RNG_FAMILY, InitSpec, sample_initial
from .simulate import IntegratorSpec, first_order_positions_at

__all__ = [
    "ResultTable",
    "sample_times",
    "fit_exponential_rate",
    "stability_experiment",
    "meanfield_sweep",
    "contraction_experiment",
    "run_parallel",
]

_RATE_CAP = 1e15  # stands in for psi(0) = inf when both supports are points


@dataclass
class ResultTable:
    """Named equal-length columns plus a metadata/config echo."""

    columns: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = {k: np.asarray(v) for k, v in self.columns.items()}
        lengths = {v.size for v in cols.values()}
        if len(lengths) > 1:
            raise ValidationError(f"columns must share one length, got {lengths}")
        self.columns = cols
        meta = dict(self.metadata)
        meta.setdefault("rng_family", RNG_FAMILY)
        meta.setdefault("run_id", _run_id(meta))
        self.metadata = meta

    def __len__(self):
        return next(iter(self.columns.values())).size if self.columns else 0

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def to_csv(self, path) -> None:
        """Write the columns as CSV and the metadata as a JSON sidecar."""
        names = list(self.columns)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(names) + "\n")
            for k in range(len(self)):
                fh.write(",".join(_cell(self.columns[n][k]) for n in names) + "\n")
        sidecar = str(path)
        sidecar = sidecar[: -len(".csv")] + ".meta.json" if sidecar.endswith(".csv") else sidecar + ".meta.json"
        with open(sidecar, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(self.metadata), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _cell(value) -> str:
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    return f"{float(value):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _run_id(meta: dict) -> str:
    blob = json.dumps(_jsonable(meta), sort_keys=True, default=str).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def sample_times(t_end: float, n: int = 64, decades: float = 2.0) -> np.ndarray:
    """0 followed by n-1 log-spaced times up to t_end (``decades`` wide)."""
    if t_end < 0:
        raise ValidationError("t_end must be nonnegative")
    if t_end == 0 or n <= 1:
        return np.zeros(1) if t_end == 0 else np.array([t_end])
    return np.concatenate([[0.0], np.geomspace(t_end * 10.0**-decades, t_end, n - 1)])


def run_parallel(fn, args_list, threads: int = 1):
    """Map fn over argument tuples, optionally on a thread pool.

    Results keep the input order, and each call is independent, so output is
    identical for every thread count (the compiled integrators drop the GIL).
    """
    if threads and threads > 1 and len(args_list) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            return list(pool.map(lambda args: fn(*args), args_list))
    return [fn(*args) for args in args_list]


def fit_exponential_rate(times, values, tail_fraction: float = 0.5):
    """Least-squares exponential rate on the tail of a positive series.

    Fits log(value) = log(amplitude) - rate * t over the last
    ``tail_fraction`` of the samples and returns (rate, amplitude,
    r_squared).  Raises NonPositiveValues if the tail is not positive.
    """
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.shape != v.shape or t.ndim != 1 or t.size < 2:
        raise DimensionMismatch("times and values must be equal-length vectors (>= 2 samples)")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("times must be strictly increasing")
    if not 0 < tail_fraction <= 1:
        raise ValidationError("tail_fraction must lie in (0, 1]")
    k = max(2, int(np.ceil(tail_fraction * t.size)))
    tt, vv = t[-k:], v[-k:]
    if np.any(vv <= 0) or not np.all(np.isfinite(vv)):
        raise NonPositiveValues("rate fit needs positive finite values on the tail")
    logv = np.log(vv)
    slope, intercept = np.polyfit(tt, logv, 1)
    fitted = slope * tt + intercept
    ss_res = float(((logv - fitted) ** 2).sum())
    ss_tot = float(((logv - logv.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(-slope), float(np.exp(intercept)), r2


def _as_pair(state_or_spec, mode: str):
    if isinstance(state_or_spec, InitSpec):
        return sample_initial(state_or_spec, mode)
    return state_or_spec


def _first_order_view(state, kernel):
    """(positions, naturals, second_order?) regardless of input form."""
    if isinstance(state, SecondOrderEnsemble):
        return state.positions, natural_velocities(state.positions, state.velocities, kernel), True
    if isinstance(state, FirstOrderEnsemble):
        return state.positions, state.natural_velocities, False
    raise ValidationError(f"expected an ensemble or InitSpec, got {type(state)!r}")


def _decay_rate(kernel: CommunicationKernel, diameter: float) -> float:
    if diameter <= 0:
        return _RATE_CAP
    return min(float(kernel.psi(diameter)), _RATE_CAP)


def stability_experiment(
    init_a,
    init_b,
    kernel: CommunicationKernel,
    p=2,
    spec: IntegratorSpec = IntegratorSpec(),
    times=None,
    mode: str = "first_order",
) -> ResultTable:
    """Paired flows and the uniform-in-time stability bound.

    Integrates both solutions, reports the modulated lp distance X(t) next to
    the bound exp(-psi(2 D0) t) X(0) + U / psi(2 D0), where D0 majorizes both
    position diameters for all time (initial diameters and the inverse
    interaction applied to the natural-velocity diameters) and U is the
    centered natural-velocity mismatch.  For second-order input the velocity
    lp gap V(t) is reported as well, together with the fitted prefactor of
    its closed-form envelope in the metadata.

    ``init_a`` / ``init_b`` may be ensembles or InitSpecs (sampled per
    ``mode``); both must have equal N.
    """
    a = _as_pair(init_a, mode)
    b = _as_pair(init_b, mode)
    xa0, wa, second_a = _first_order_view(a, kernel)
    xb0, wb, second_b = _first_order_view(b, kernel)
    second = second_a and second_b
    if xa0.size != xb0.size:
        raise DimensionMismatch("paired runs need equal ensemble sizes")
    if times is None:
        times = sample_times(spec.t_end)
    times = np.asarray(times, dtype=np.float64)

    xs_a = first_order_positions_at(FirstOrderEnsemble(xa0, wa), kernel, times, spec.dt)
    xs_b = first_order_positions_at(FirstOrderEnsemble(xb0, wb), kernel, times, spec.dt)

    d0 = max(
        float(np.ptp(xa0)),
        float(np.ptp(xb0)),
        float(kernel.antiderivative_inv(np.ptp(wa))),
        float(kernel.antiderivative_inv(np.ptp(wb))),
    )
    rate = _decay_rate(kernel, 2.0 * d0)
    mismatch = natural_velocity_mismatch(wa, wb, p)
    dist = np.array(
        [
            modulated_lp_distance(FirstOrderEnsemble(xs_a[k], wa), FirstOrderEnsemble(xs_b[k], wb), p)
            for k in range(times.size)
        ]
    )
    bound = dist[0] * np.exp(-rate * times) + mismatch / rate

    columns = {"t": times, "distance": dist, "bound": bound}
    meta = {
        "experiment": "stability",
        "beta": kernel.beta,
        "p": p,
        "n": int(xa0.size),
        "mode": "second_order" if second else "first_order",
        "dt": spec.dt,
        "t_end": spec.t_end,
        "D0": d0,
        "rate": rate,
        "natural_velocity_mismatch": mismatch,
        "distance_initial": float(dist[0]),
    }
    if second:
        va = np.stack([velocities_from_natural(xs_a[k], wa, kernel) for k in range(times.size)])
        vb = np.stack([velocities_from_natural(xs_b[k], wb, kernel) for k in range(times.size)])
        vel_gap = np.array([mean_power_norm(va[k] - vb[k], p) for k in range(times.size)])
        columns["velocity_mismatch"] = vel_gap
        x0, v0 = float(dist[0]), float(vel_gap[0])
        unit_x = x0 + v0 + x0 ** (1.0 - kernel.beta)
        unit_v = v0 + x0 ** (1.0 - kernel.beta) + unit_x ** (1.0 - kernel.beta)
        meta["velocity_mismatch_initial"] = v0
        meta["envelope_unit_x"] = unit_x
        meta["envelope_unit_v"] = unit_v
        with np.errstate(divide="ignore", invalid="ignore"):
            cx = float(np.max(dist / unit_x)) if unit_x > 0 else 0.0
            cv = float(np.max(vel_gap / unit_v)) if unit_v > 0 else 0.0
        meta["fitted_envelope_constant"] = max(cx, cv)
    return ResultTable(columns, meta)


def _phase_tracks(base_spec: InitSpec, n: int, kernel, times, dt: float, mode: str):
    """Phase points of one nested ensemble at every sample time."""
    spec_n = replace(base_spec, n=n)
    if mode == "second_order":
        ens = sample_initial(spec_n, "second_order")
        x0, omega = ens.positions, natural_velocities(ens.positions, ens.velocities, kernel)
    else:
        ens = sample_initial(spec_n, "first_order")
        x0, omega = ens.positions, ens.natural_velocities
    xs = first_order_positions_at(FirstOrderEnsemble(x0, omega), kernel, times, dt)
    if mode == "second_order":
        return [
            np.column_stack([xs[k], velocities_from_natural(xs[k], omega, kernel)])
            for k in range(len(times))
        ]
    return [np.column_stack([xs[k], omega]) for k in range(len(times))]


def meanfield_sweep(
    base_spec: InitSpec,
    ns,
    kernel: CommunicationKernel,
    p=1,
    times=None,
    mode: str = "second_order",
    spec: IntegratorSpec = IntegratorSpec(dt=0.02, t_end=20.0),
    threads: int = 1,
) -> ResultTable:
    """Cauchy-in-N table of Wasserstein gaps between nested empirical measures.

    The N-point configurations are superset refinements drawn from one
    per-particle sampler stream, so consecutive sizes are coupled and the
    decreasing trend of sup_t W_p(mu^N_t, mu^N'_t) is the convergence signal
    itself, not sampling noise.  Each coarser cloud is replicated up to the
    finer size before the exact assignment distance (sizes must divide).
    """
    ns = [int(n) for n in ns]
    if len(ns) < 2 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValidationError("ns must be at least two strictly increasing sizes")
    for a, b in zip(ns, ns[1:]):
        if b % a != 0:
            raise ValidationError("consecutive sizes must divide for coupled replication")
    if times is None:
        times = sample_times(spec.t_end)
    times = np.asarray(times, dtype=np.float64)

    tracks = run_parallel(
        _phase_tracks, [(base_spec, n, kernel, times, spec.dt, mode) for n in ns], threads
    )
    col_a, col_b, col_t, col_d = [], [], [], []
    sups = []
    for i in range(len(ns) - 1):
        ratio = ns[i + 1] // ns[i]
        worst = 0.0
        for k in range(times.size):
            coarse = PhasePoints(np.repeat(tracks[i][k], ratio, axis=0))
            fine = PhasePoints(tracks[i + 1][k])
            d = wasserstein_phase(coarse, fine, p)
            worst = max(worst, d)
            col_a.append(ns[i])
            col_b.append(ns[i + 1])
            col_t.append(times[k])
            col_d.append(d)
        sups.append(worst)
    meta = {
        "experiment": "meanfield",
        "beta": kernel.beta,
        "p": p,
        "mode": mode,
        "ns": ns,
        "dt": spec.dt,
        "t_end": float(times[-1]),
        "seed": base_spec.seed,
        "sampler": base_spec.sampler,
        "sup_distance_per_pair": sups,
    }
    return ResultTable(
        {"n_coarse": np.array(col_a), "n_fine": np.array(col_b), "t": np.array(col_t), "distance": np.array(col_d)},
        meta,
    )


def contraction_experiment(
    field_a: PseudoInverseField,
    field_b: PseudoInverseField,
    kernel: CommunicationKernel,
    p=2,
    spec: IntegratorSpec = IntegratorSpec(dt=0.01, t_end=5.0),
    times=None,
    center_initial: bool = True,
) -> ResultTable:
    """Evolve two level fields sharing a velocity grid; report the contraction.

    Columns: t, the modified transport distance, and the contraction bound
    W(0) exp(-psi(2 D0) t).  D0 majorizes both spatial support diameters
    uniformly in time (initial diameters and the inverse interaction applied
    to the velocity-support diameter).  The bound compares mean-centered
    solutions -- a constant mean offset can never contract -- so by default
    both fields are recentered at t = 0 (their means then drift identically,
    as the grids share the velocity marginal).
    """
    if (
        not np.array_equal(field_a.omega_nodes, field_b.omega_nodes)
        or not np.array_equal(field_a.omega_weights, field_b.omega_weights)
        or not np.array_equal(field_a.eta_counts, field_b.eta_counts)
    ):
        raise GridMismatch("contraction experiment needs fields on one velocity grid")
    if center_initial:
        field_a = _centered(field_a)
        field_b = _centered(field_b)
    if times is None:
        times = sample_times(spec.t_end)
    times = np.asarray(times, dtype=np.float64)

    d0 = max(
        field_a.x_support_diameter(),
        field_b.x_support_diameter(),
        float(kernel.antiderivative_inv(np.ptp(field_a.omega_nodes))),
    )
    rate = _decay_rate(kernel, 2.0 * d0)
    snaps_a = kinetic_states_at(field_a, kernel, times, spec.dt)
    snaps_b = kinetic_states_at(field_b, kernel, times, spec.dt)
    dist = np.array([modified_wasserstein(fa, fb, p) for fa, fb in zip(snaps_a, snaps_b)])
    bound = dist[0] * np.exp(-rate * times)
    meta = {
        "experiment": "contraction",
        "beta": kernel.beta,
        "p": p,
        "n_nodes": field_a.n_nodes,
        "n_levels": field_a.n_levels,
        "dt": spec.dt,
        "t_end": float(times[-1]),
        "D0": d0,
        "rate": rate,
        "distance_initial": float(dist[0]),
        "centered": bool(center_initial),
    }
    return ResultTable({"t": times, "distance": dist, "bound": bound}, meta)


def _centered(f: PseudoInverseField) -> PseudoInverseField:
    mean = float(f.level_masses() @ f.level_positions())
    return f.with_levels(f.level_positions() - mean)

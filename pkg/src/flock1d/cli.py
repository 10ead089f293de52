"""Command-line entry point.

One config file per run (JSON; flags override file keys), one command per
invocation:

    flock1d simulate | stability | meanfield | kinetic | contract | verify

All outputs land under ``output_dir``: schema-documented CSVs, the resolved
config echo (``config.resolved``), and optional SVG line charts.  Exit codes:
0 success, 1 runtime error, 2 verification failure.  A final machine-readable
``status:`` line goes to standard error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import Flock1dError, ParseError, ValidationError
from .experiments import (
    ResultTable,
    contraction_experiment,
    meanfield_sweep,
    sample_times,
    stability_experiment,
)
from .kernels import CommunicationKernel
from .kinetic import discretize_initial, evolve_kinetic, write_energy_csv, write_field_csv
from .sampling import InitSpec, sample_initial
from .simulate import (
    IntegratorSpec,
    diagnostics,
    integrate_first_order,
    integrate_second_order_direct,
    integrate_via_reformulation,
    write_events_csv,
    write_trajectory_csv,
)
from .svgplot import line_chart
from .verify import run_battery

__all__ = ["parse_config", "run", "main", "RunConfig"]

COMMANDS = ("simulate", "stability", "meanfield", "kinetic", "contract", "verify")

DEFAULTS = {
    "beta": 0.5,
    "p": 2,
    "seed": 0,
    "n": 64,
    "mode": "second_order",
    "sampler": "uniform_box",
    "x_range": [-1.0, 1.0],
    "v_range": [-1.0, 1.0],
    "zero_mean": True,
    "init_file": None,
    "seed_b": None,  # defaults to seed + 1 for paired experiments
    "init_b": None,  # dict overriding sampler/x_range/v_range/seed/... for side B
    "scheme": "rk4_fixed",
    "dt": 1e-3,
    "t_end": 10.0,
    "abs_tol": 1e-8,
    "rel_tol": 1e-8,
    "collision_gap": 1e-7,
    "max_step_halvings": 40,
    "record_every": 100,
    "n_times": 64,
    "ns": [64, 128, 256, 512],
    "n_omega": 16,
    "n_eta": 16,
    "output_dir": "out",
    "emit_svg": False,
    "threads": 0,  # 0 = hardware count
}
_INIT_B_KEYS = {"sampler", "x_range", "v_range", "seed", "zero_mean", "init_file", "n"}


@dataclass
class RunConfig:
    """Fully resolved run description (defaults applied, invariants checked)."""

    command: str
    values: dict
    kernel: CommunicationKernel
    init_a: InitSpec
    init_b: InitSpec
    integrator: IntegratorSpec
    p: float
    threads: int
    output_dir: str
    emit_svg: bool
    times: np.ndarray = field(default=None)

    def echo(self) -> dict:
        out = dict(self.values)
        out["command"] = self.command
        return out


def _parse_p(raw):
    if isinstance(raw, str):
        if raw.strip().lower() in ("inf", "infinity"):
            return float("inf")
        raise ValidationError(f"p must be a number >= 1 or 'inf', got {raw!r}")
    p = float(raw)
    if not p >= 1:
        raise ValidationError(f"p must be a number >= 1 or 'inf', got {raw!r}")
    return p


def _load_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ParseError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid config {path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"config {path} must hold a JSON object")
    return data


def _init_spec(values: dict, overrides: dict | None = None) -> InitSpec:
    src = dict(values)
    if overrides:
        src.update(overrides)
    return InitSpec(
        sampler=src["sampler"],
        x_range=tuple(src["x_range"]),
        v_range=tuple(src["v_range"]),
        n=int(src["n"]),
        seed=int(src["seed"]),
        zero_mean=bool(src["zero_mean"]),
        path=src.get("init_file"),
    )


def parse_config(path: str | None = None, overrides: dict | None = None, command: str | None = None) -> RunConfig:
    """Merge defaults, config file, and flag overrides into a RunConfig.

    Unknown keys are rejected (ParseError); violated invariants raise
    ValidationError naming the invariant.  The file may carry a ``command``
    key; it must agree with the subcommand when both are given.
    """
    data = _load_file(path) if path else {}
    for key in data:
        if key != "command" and key not in DEFAULTS:
            raise ParseError(f"unknown config key: {key!r}")
    file_command = data.pop("command", None)
    if file_command is not None and command is not None and file_command != command:
        raise ValidationError(f"config command {file_command!r} conflicts with subcommand {command!r}")
    command = command or file_command
    if command not in COMMANDS:
        raise ValidationError(f"command must be one of {COMMANDS}, got {command!r}")

    values = dict(DEFAULTS)
    values.update(data)
    if overrides:
        for key, val in overrides.items():
            if val is None:
                continue
            if key not in DEFAULTS:
                raise ParseError(f"unknown config key: {key!r}")
            values[key] = val

    if values["mode"] not in ("second_order", "first_order"):
        raise ValidationError(f"mode must be second_order or first_order, got {values['mode']!r}")
    if int(values["record_every"]) < 1:
        raise ValidationError("record_every must be >= 1")
    if int(values["n_times"]) < 1:
        raise ValidationError("n_times must be >= 1")
    if int(values["threads"]) < 0:
        raise ValidationError("threads must be >= 0")

    kernel = CommunicationKernel(float(values["beta"]))
    init_a = _init_spec(values)
    b_overrides = {"seed": values["seed_b"] if values["seed_b"] is not None else int(values["seed"]) + 1}
    if values["init_b"] is not None:
        if not isinstance(values["init_b"], dict):
            raise ValidationError("init_b must be an object")
        for key in values["init_b"]:
            if key not in _INIT_B_KEYS:
                raise ParseError(f"unknown config key: init_b.{key!r}")
        b_overrides.update(values["init_b"])
    init_b = _init_spec(values, b_overrides)
    integrator = IntegratorSpec(
        scheme=values["scheme"],
        dt=float(values["dt"]),
        t_end=float(values["t_end"]),
        abs_tol=float(values["abs_tol"]),
        rel_tol=float(values["rel_tol"]),
        collision_gap=float(values["collision_gap"]),
        max_step_halvings=int(values["max_step_halvings"]),
    )
    threads = int(values["threads"]) or (os.cpu_count() or 1)
    return RunConfig(
        command=command,
        values=values,
        kernel=kernel,
        init_a=init_a,
        init_b=init_b,
        integrator=integrator,
        p=_parse_p(values["p"]),
        threads=threads,
        output_dir=str(values["output_dir"]),
        emit_svg=bool(values["emit_svg"]),
        times=sample_times(float(values["t_end"]), int(values["n_times"])),
    )


def _out(config: RunConfig, name: str) -> str:
    return os.path.join(config.output_dir, name)


def _cmd_simulate(config: RunConfig) -> int:
    mode = config.values["mode"]
    if mode == "first_order":
        ens = sample_initial(config.init_a, "first_order")
        traj = integrate_first_order(ens, config.kernel, config.integrator, int(config.values["record_every"]))
    else:
        ens = sample_initial(config.init_a, "second_order")
        if config.integrator.scheme == "rk45_adaptive":
            traj = integrate_second_order_direct(
                ens, config.kernel, config.integrator, int(config.values["record_every"])
            )
        else:
            traj = integrate_via_reformulation(
                ens, config.kernel, config.integrator, int(config.values["record_every"])
            )
    write_trajectory_csv(traj, _out(config, "trajectory.csv"))
    write_events_csv(traj, _out(config, "events.csv"))
    if config.emit_svg:
        diams = [diagnostics(s, config.kernel, config.p) for s in traj.snapshots]
        line_chart(
            _out(config, "simulate.svg"),
            traj.times,
            {
                "position diameter": [d.position_diameter for d in diams],
                "velocity diameter": [d.velocity_diameter for d in diams],
            },
            title="diameters along the run",
            xlabel="t",
            ylabel="diameter",
        )
    return 0


def _cmd_stability(config: RunConfig) -> int:
    table = stability_experiment(
        config.init_a,
        config.init_b,
        config.kernel,
        p=config.p,
        spec=config.integrator,
        times=config.times,
        mode=config.values["mode"],
    )
    table.metadata["config"] = config.echo()
    table.to_csv(_out(config, "stability.csv"))
    if config.emit_svg:
        line_chart(
            _out(config, "stability.svg"),
            table.column("t"),
            {"distance": table.column("distance"), "bound": table.column("bound")},
            title="paired-flow distance vs stability bound",
            xlabel="t",
            ylabel="distance",
            logy=True,
        )
    return 0


def _cmd_meanfield(config: RunConfig) -> int:
    table = meanfield_sweep(
        config.init_a,
        config.values["ns"],
        config.kernel,
        p=config.p,
        times=config.times,
        mode=config.values["mode"],
        spec=config.integrator,
        threads=config.threads,
    )
    table.metadata["config"] = config.echo()
    table.to_csv(_out(config, "meanfield.csv"))
    if config.emit_svg:
        t = table.column("t")
        d = table.column("distance")
        coarse = table.column("n_coarse")
        series = {}
        for n in sorted(set(coarse.tolist())):
            mask = coarse == n
            series[f"N {n} vs {2 * n}"] = d[mask]
        line_chart(
            _out(config, "meanfield.svg"),
            t[coarse == coarse.min()],
            series,
            title="coupled empirical-measure gaps",
            xlabel="t",
            ylabel="W_p",
            logy=True,
        )
    return 0


def _uniform_field(config: RunConfig, x_range) -> "object":
    x_lo, x_hi = float(x_range[0]), float(x_range[1])

    def quantile(u, omega):
        return x_lo + (x_hi - x_lo) * u

    return discretize_initial(
        lambda w: 1.0,
        quantile,
        n_omega=int(config.values["n_omega"]),
        n_eta=int(config.values["n_eta"]),
        omega_range=tuple(config.values["v_range"]),
    )


def _cmd_kinetic(config: RunConfig) -> int:
    field = _uniform_field(config, config.values["x_range"])
    records = evolve_kinetic(field, config.kernel, config.integrator, int(config.values["record_every"]))
    write_field_csv(records[0][1], _out(config, "field_initial.csv"))
    write_field_csv(records[-1][1], _out(config, "field_final.csv"))
    write_energy_csv([rep for _, _, rep in records], _out(config, "energy.csv"))
    if config.emit_svg:
        ts = [t for t, _, _ in records]
        line_chart(
            _out(config, "energy.svg"),
            ts,
            {
                "velocity-field energy": [rep.kinetic_energy for _, _, rep in records],
                "free energy": [rep.free_energy for _, _, rep in records],
            },
            title="energy functionals along the kinetic run",
            xlabel="t",
            ylabel="energy",
        )
    return 0


def _cmd_contract(config: RunConfig) -> int:
    field_a = _uniform_field(config, config.values["x_range"])
    if config.values["init_b"] is not None and "x_range" in config.values["init_b"]:
        b_range = config.values["init_b"]["x_range"]
    else:
        x_lo, x_hi = config.values["x_range"]
        mid, half = 0.5 * (x_lo + x_hi), 0.25 * (x_hi - x_lo)
        b_range = (mid - half, mid + half)
    field_b = _uniform_field(config, b_range)
    table = contraction_experiment(
        field_a, field_b, config.kernel, p=config.p, spec=config.integrator, times=config.times
    )
    table.metadata["config"] = config.echo()
    table.to_csv(_out(config, "contraction.csv"))
    if config.emit_svg:
        line_chart(
            _out(config, "contraction.svg"),
            table.column("t"),
            {"distance": table.column("distance"), "bound": table.column("bound")},
            title="modified transport distance vs contraction bound",
            xlabel="t",
            ylabel="distance",
            logy=True,
        )
    return 0


def _cmd_verify(config: RunConfig) -> int:
    results = run_battery(config.threads)
    with open(_out(config, "verify_report.csv"), "w", encoding="utf-8") as fh:
        fh.write("check,passed,observed,threshold\n")
        for res in results:
            fh.write(f"{res.name},{int(res.passed)},{res.observed:.17g},{res.threshold:.17g}\n")
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else 2


_HANDLERS = {
    "simulate": _cmd_simulate,
    "stability": _cmd_stability,
    "meanfield": _cmd_meanfield,
    "kinetic": _cmd_kinetic,
    "contract": _cmd_contract,
    "verify": _cmd_verify,
}


def run(config: RunConfig) -> int:
    """Dispatch a resolved config; returns the process exit code."""
    os.makedirs(config.output_dir, exist_ok=True)
    with open(_out(config, "config.resolved"), "w", encoding="utf-8") as fh:
        json.dump(config.echo(), fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return _HANDLERS[config.command](config)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flock1d",
        description="Alignment-dynamics laboratory: simulation, distances, and bound verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="|".join(COMMANDS))
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} command")
        cmd.add_argument("--config", help="JSON config file; flags override file keys")
        cmd.add_argument("--beta", type=float)
        cmd.add_argument("--p")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--seed-b", dest="seed_b", type=int)
        cmd.add_argument("--n", type=int)
        cmd.add_argument("--mode", choices=("second_order", "first_order"))
        cmd.add_argument("--sampler")
        cmd.add_argument("--x-range", dest="x_range", type=float, nargs=2)
        cmd.add_argument("--v-range", dest="v_range", type=float, nargs=2)
        cmd.add_argument("--zero-mean", dest="zero_mean", action=argparse.BooleanOptionalAction, default=None)
        cmd.add_argument("--init-file", dest="init_file")
        cmd.add_argument("--scheme", choices=("rk4_fixed", "rk45_adaptive"))
        cmd.add_argument("--dt", type=float)
        cmd.add_argument("--t-end", dest="t_end", type=float)
        cmd.add_argument("--abs-tol", dest="abs_tol", type=float)
        cmd.add_argument("--rel-tol", dest="rel_tol", type=float)
        cmd.add_argument("--collision-gap", dest="collision_gap", type=float)
        cmd.add_argument("--max-step-halvings", dest="max_step_halvings", type=int)
        cmd.add_argument("--record-every", dest="record_every", type=int)
        cmd.add_argument("--n-times", dest="n_times", type=int)
        cmd.add_argument("--ns", type=int, nargs="+")
        cmd.add_argument("--n-omega", dest="n_omega", type=int)
        cmd.add_argument("--n-eta", dest="n_eta", type=int)
        cmd.add_argument("--output-dir", dest="output_dir")
        cmd.add_argument("--emit-svg", dest="emit_svg", action=argparse.BooleanOptionalAction, default=None)
        cmd.add_argument("--threads", type=int)
    return parser


def _status(command: str, ok: bool, code: int, detail: str = "") -> None:
    payload = {"command": command, "ok": ok, "exit_code": code}
    if detail:
        payload["detail"] = detail
    print(f"status: {json.dumps(payload, sort_keys=True)}", file=sys.stderr)


def main(argv=None) -> int:
    args = vars(_build_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    try:
        config = parse_config(config_path, overrides=args, command=command)
        code = run(config)
    except Flock1dError as exc:
        _status(command, False, 1, f"{type(exc).__name__}: {exc}")
        return 1
    except OSError as exc:
        _status(command, False, 1, f"{type(exc).__name__}: {exc}")
        return 1
    _status(command, code == 0, code, "" if code == 0 else "verification failure")
    return code


if __name__ == "__main__":
    sys.exit(main())

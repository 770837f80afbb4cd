"""Command-line front end.

Every command reads an optional JSON config, lets command-line flags
override it, writes its artifacts atomically into ``--out`` and returns one
of the exit codes below.  Reports always state the tolerance they were
judged against and the norm used.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .approx import NotLipschitzError, approx_dilation
from .channels import (
    ChannelError,
    ChannelRep,
    apply,
    channel_distance,
    choi_to_kraus,
    is_cptp,
    kraus_to_choi,
)
from .demo import GOLDEN_LN2, run_demo
from .diagnostics import singularity_scan
from .dilation import DilationError, exact_dilation_curve, static_dilation, verify_dilation
from .dynamics import CurveError, CurveSource, TimeGrid, channel_at, dephasing_channel, sample_curve
from .formats import (
    CodecError,
    approx_to_dict,
    decode_channel,
    decode_matrix,
    decode_source,
    encode_channel,
    encode_matrix,
    encode_source,
    kraus_curve_to_dict,
    unitary_curve_to_dict,
    write_csv,
    write_json,
)
from .numkit import LinAlgInputError, RealignmentError, unitarity_residual

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3
EXIT_CONFIG = 4

COMMANDS = ("convert", "verify", "evolve", "dilate-exact", "dilate-approx", "singularity", "dephasing-demo")

DEFAULT_TOL = {
    "convert": 1e-9,
    "verify": 1e-9,
    "evolve": 1e-9,
    "dilate-exact": 1e-9,
    "dilate-approx": 1e-9,
    "singularity": 1e-9,
    "dephasing-demo": 1e-10,
}
DEFAULT_GRID = {
    "evolve": "0:2:21",
    "dilate-exact": "0.1:2:40",
    "singularity": "1e-6:1e-3:25:geom",
}
U64 = 2**64


class ConfigError(ValueError):
    """The job configuration is malformed or inconsistent."""


@dataclass
class JobConfig:
    command: str
    out: str = "."
    seed: int = 0
    tol: float | None = None
    grid: str | None = None
    gamma: float | None = None
    epsilon: float = 0.05
    ancilla: int | None = None
    source: dict | None = None
    channel: dict | None = None
    t: float | None = None
    t_end: float | None = None
    segments: int | None = None
    points_per_decade: int = 8
    trials: int = 8
    rho0: dict | None = None

    def validate(self) -> "JobConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.tol is None:
            self.tol = DEFAULT_TOL[self.command]
        for name in ("tol", "epsilon"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < U64:
            raise ConfigError(f"seed must be an integer in [0, 2^64), got {self.seed!r}")
        for name in ("ancilla", "segments", "points_per_decade"):
            v = getattr(self, name)
            if v is not None and (isinstance(v, bool) or not isinstance(v, int) or v <= 0):
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if isinstance(self.trials, bool) or not isinstance(self.trials, int) or self.trials < 0:
            raise ConfigError(f"trials must be a non-negative integer, got {self.trials!r}")
        for name in ("gamma", "t", "t_end"):
            v = getattr(self, name)
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v)):
                raise ConfigError(f"{name} must be a finite number, got {v!r}")
        if self.grid is not None:
            try:
                TimeGrid.parse(self.grid)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad grid {self.grid!r}: {exc}") from exc
        return self


def load_config(path) -> dict:
    """Read a JSON config object; I/O problems raise ``OSError``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    return obj


def make_config(command: str, file_values: dict, overrides: dict) -> JobConfig:
    known = {f.name for f in dataclasses.fields(JobConfig)}
    values = dict(file_values)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "command" in values and values["command"] != command:
        raise ConfigError(f"config is for {values['command']!r}, not {command!r}")
    values["command"] = command
    values.update({k: v for k, v in overrides.items() if v is not None})
    return JobConfig(**values).validate()


# -- inputs -----------------------------------------------------------------


def _source(cfg: JobConfig) -> CurveSource:
    spec = dict(cfg.source) if cfg.source else {"type": "builtin", "name": "dephasing"}
    if spec.get("type") == "builtin" and cfg.gamma is not None:
        spec["gamma"] = cfg.gamma
    return decode_source(spec)


def _channel(cfg: JobConfig) -> ChannelRep:
    if cfg.channel:
        spec = dict(cfg.channel)
        if spec.get("kind") == "builtin" and cfg.gamma is not None:
            spec["gamma"] = cfg.gamma
        return decode_channel(spec)
    gamma = 1.0 if cfg.gamma is None else cfg.gamma
    t = math.log(2.0) if cfg.t is None else cfg.t
    return dephasing_channel(gamma, t)


def _grid(cfg: JobConfig) -> TimeGrid:
    return TimeGrid.parse(cfg.grid or DEFAULT_GRID[cfg.command])


def _out(cfg: JobConfig, name: str) -> Path:
    return Path(cfg.out) / name


def _fmt(m) -> str:
    # adding 0.0 turns -0.0 into 0.0 for display
    return np.array2string(np.asarray(m) + 0.0, precision=6, suppress_small=True, max_line_width=120)


# -- commands ---------------------------------------------------------------


def cmd_convert(cfg: JobConfig) -> int:
    rep = _channel(cfg)
    choi = rep.choi
    kraus = choi_to_kraus(choi)
    back = kraus_to_choi(kraus)
    residual = float(np.linalg.norm(back.matrix - choi.matrix))
    ok = residual <= cfg.tol
    write_json(_out(cfg, "channel.json"), {
        "input": encode_channel(rep),
        "kraus": encode_channel(ChannelRep.from_kraus(kraus)),
        "choi": {"kind": "choi", "matrix": encode_matrix(choi.matrix)},
        "superop": {"kind": "superop", "matrix": encode_matrix(rep.superop)},
    })
    write_json(_out(cfg, "report.json"), {
        "command": "convert",
        "kraus_count": len(kraus),
        "roundtrip_residual": residual,
        "tolerance": cfg.tol,
        "norm": "frobenius (Choi matrix, kraus -> choi -> kraus -> choi)",
        "passed": ok,
    })
    print(f"kraus operators: {len(kraus)}")
    print(f"round-trip residual (Choi, Frobenius): {residual:.3e} (tol {cfg.tol:g})")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_verify(cfg: JobConfig) -> int:
    rep = _channel(cfg)
    cptp = is_cptp(rep)
    report = {
        "command": "verify",
        "dim": rep.dim,
        "cp_ok": cptp.cp_ok,
        "tp_ok": cptp.tp_ok,
        "min_choi_eigenvalue": cptp.min_choi_eig,
        "tp_residual": cptp.tp_residual,
        "cptp_norms": "min eigenvalue of the Choi matrix; Frobenius norm of Tr_out J - I",
        "tolerance": cfg.tol,
    }
    ok = cptp.ok
    if ok:
        dil = static_dilation(rep, cfg.ancilla)
        vr = verify_dilation(dil, rep, trials=cfg.trials, rng=np.random.default_rng(cfg.seed))
        ok = vr.max_residual <= cfg.tol and vr.unitarity_residual <= cfg.tol
        report["dilation"] = {
            "ancilla_dim": dil.ancilla_dim,
            "max_residual": vr.max_residual,
            "unitarity_residual": vr.unitarity_residual,
            "states_checked": vr.states_checked,
            "norm": vr.norm,
        }
    report["passed"] = ok
    write_json(_out(cfg, "report.json"), report)
    print(f"cp_ok={cptp.cp_ok} tp_ok={cptp.tp_ok} min_choi_eig={cptp.min_choi_eig:.3e} tp_residual={cptp.tp_residual:.3e}")
    if "dilation" in report:
        print(f"dilation residual {report['dilation']['max_residual']:.3e} (tol {cfg.tol:g})")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_evolve(cfg: JobConfig) -> int:
    src = _source(cfg)
    grid = _grid(cfg)
    n = src.dim
    if cfg.rho0:
        rho0 = decode_matrix(cfg.rho0)
        if rho0.shape != (n, n):
            raise ChannelError(f"rho0 is {rho0.shape}, expected {(n, n)}")
    else:
        rho0 = np.full((n, n), 1.0 / n, dtype=complex)
    header = ["t"]
    for a in range(n):
        for b in range(n):
            header += [f"re_{a}{b}", f"im_{a}{b}"]
    header.append("tp_residual")
    rows, worst = [], 0.0
    for t, rep in sample_curve(src, grid):
        rho = apply(rep, rho0)
        tp = rep.choi.tp_residual()
        worst = max(worst, tp)
        row = [float(t)]
        for z in rho.reshape(-1):
            row += [float(z.real), float(z.imag)]
        rows.append(row + [tp])
    write_csv(_out(cfg, "evolve.csv"), header, rows)
    print(f"{len(rows)} time points, max TP residual {worst:.3e} (tol {cfg.tol:g})")
    return EXIT_OK if worst <= cfg.tol else EXIT_NUMERICAL


def cmd_dilate_exact(cfg: JobConfig) -> int:
    src = _source(cfg)
    grid = _grid(cfg)
    kc, uc, rep = exact_dilation_curve(src, grid, cfg.ancilla, verify_tol=cfg.tol)
    write_json(_out(cfg, "kraus_curve.json"), kraus_curve_to_dict(kc))
    write_json(_out(cfg, "unitary_curve.json"), unitary_curve_to_dict(uc))
    summary = {"command": "dilate-exact", "source": encode_source(src), "grid": grid.spec()}
    summary.update(rep.summary())
    summary["per_point"] = {
        "times": [float(t) for t in rep.times],
        "reduced_residuals": rep.reduced_residuals,
        "unitarity_residuals": rep.unitarity_residuals,
        "unitary_jumps": rep.unitary_jumps,
    }
    write_json(_out(cfg, "report.json"), summary)
    print(
        f"{len(rep.times)} points, ancilla {rep.ancilla_dim}: max reduced residual "
        f"{rep.max_reduced_residual:.3e} (tol {cfg.tol:g}), max unitary jump {rep.max_unitary_jump:.4g}"
    )
    for w in rep.warnings + rep.caveats:
        print(f"note: {w}")
    return EXIT_OK if rep.passed else EXIT_NUMERICAL


def cmd_dilate_approx(cfg: JobConfig) -> int:
    src = _source(cfg)
    t_end = cfg.t_end
    if t_end is None:
        t_end = float(TimeGrid.parse(cfg.grid).points[-1]) if cfg.grid else 2.0
    apx = approx_dilation(src, t_end, cfg.epsilon, segments=cfg.segments)
    doc = approx_to_dict(apx)
    doc["source"] = encode_source(src)
    doc["unitarity_tolerance"] = cfg.tol
    write_json(_out(cfg, "approx.json"), doc)
    eval_grid = TimeGrid.parse(cfg.grid) if cfg.grid else TimeGrid.uniform(0.0, t_end, 10 * apx.segments + 1)
    rows, worst_unitarity = [], 0.0
    for t in eval_grid:
        if not apx.interval[0] <= t <= apx.interval[1]:
            raise CurveError(f"evaluation time {t} outside [0, {t_end}]")
        u = apx.unitary_at(t)
        dist = channel_distance(apx.channel_at(t), channel_at(src, t))
        ur = unitarity_residual(u)
        worst_unitarity = max(worst_unitarity, ur)
        rows.append([float(t), dist.diamond_upper, dist.diamond_lower, ur])
    write_csv(_out(cfg, "approx_eval.csv"), ["t", "diamond_upper", "diamond_lower", "unitarity_residual"], rows)
    ok = (
        apx.measured_sup_error < apx.epsilon
        and apx.measured_sup_error <= apx.certified_error
        and worst_unitarity <= cfg.tol
    )
    print(
        f"segments {apx.segments}, mesh {apx.mesh:.5g}, ancilla {apx.ancilla_dim}, "
        f"certified {apx.certified_error:.4g}, measured {apx.measured_sup_error:.4g} (epsilon {apx.epsilon:g})"
    )
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_singularity(cfg: JobConfig) -> int:
    src = _source(cfg)
    grid = _grid(cfg)
    t_min, t_max = float(grid.points[0]), float(grid.points[-1])
    rep = singularity_scan(src, t_min, t_max, cfg.points_per_decade, cfg.ancilla)
    write_csv(_out(cfg, "singularity.csv"), ["t", "h_norm"], zip(rep.times, rep.h_norms))
    doc = {"command": "singularity", "source": encode_source(src), "tolerance": cfg.tol}
    doc.update(rep.summary())
    write_json(_out(cfg, "singularity.json"), doc)
    print(f"fitted exponent {rep.fitted_exponent:.5f}, fit residual {rep.fit_residual:.3e}")
    for i, l0, ld in rep.flagged_eigenvalues:
        print(f"flagged Choi eigenvalue slot {i}: lambda(0)={l0:g}, dlambda/dt(0)~{ld:.5g}")
    return EXIT_OK if rep.dilation_passed else EXIT_NUMERICAL


def cmd_dephasing_demo(cfg: JobConfig) -> int:
    gamma = GOLDEN_LN2["gamma"] if cfg.gamma is None else cfg.gamma
    t = GOLDEN_LN2["t"] if cfg.t is None else cfg.t
    res = run_demo(gamma, t, seed=cfg.seed, trials=cfg.trials)
    print(f"pure dephasing, gamma={gamma:g}, t={t:.17g}, a=exp(-gamma t)={res['a']:.17g}")
    print("step 1: Choi matrix J")
    print(_fmt(res["choi"]))
    print("step 2: eigenvalues")
    print(_fmt(res["eigenvalues"]))
    print("        eigenvectors (columns)")
    print(_fmt(res["eigenvectors"]))
    print("step 3: Kraus operators")
    for k, op in enumerate(res["kraus"], 1):
        print(f"K{k} =")
        print(_fmt(op))
    print("step 4: isometry V (system (x) ancilla rows)")
    print(_fmt(res["isometry"]))
    print(f"        alpha={res['alpha']:.17g} beta={res['beta']:.17g}")
    print("step 5: unitary U")
    print(_fmt(res["unitary"]))
    print("step 6: recovered channel on probe state")
    print(_fmt(res["recovered"]))
    print(f"        off-diagonal factor {res['offdiag_factor']:.17g}")
    worst = max(res["diffs"].values())
    ok = worst <= cfg.tol
    for name, v in res["diffs"].items():
        print(f"diff {name:<24s} {v:.3e}")
    print(f"max diff {worst:.3e} (tol {cfg.tol:g}): {'PASS' if ok else 'FAIL'}")
    write_json(_out(cfg, "demo.json"), {
        "command": "dephasing-demo",
        "gamma": gamma,
        "t": t,
        "seed": cfg.seed,
        "a": res["a"],
        "choi": encode_matrix(res["choi"]),
        "eigenvalues": [float(x) for x in res["eigenvalues"]],
        "eigenvectors": encode_matrix(res["eigenvectors"]),
        "kraus": [encode_matrix(k) for k in res["kraus"]],
        "isometry": encode_matrix(res["isometry"]),
        "unitary": encode_matrix(res["unitary"]),
        "alpha": res["alpha"],
        "beta": res["beta"],
        "probe": encode_matrix(res["probe"]),
        "recovered": encode_matrix(res["recovered"]),
        "offdiag_factor": res["offdiag_factor"],
        "diffs": res["diffs"],
        "tolerance": cfg.tol,
        "norm": "frobenius, global phase removed for eigenvectors and Kraus operators",
        "tensor_order": "system (x) ancilla",
        "passed": ok,
    })
    return EXIT_OK if ok else EXIT_NUMERICAL


HANDLERS = {
    "convert": cmd_convert,
    "verify": cmd_verify,
    "evolve": cmd_evolve,
    "dilate-exact": cmd_dilate_exact,
    "dilate-approx": cmd_dilate_approx,
    "singularity": cmd_singularity,
    "dephasing-demo": cmd_dephasing_demo,
}


def run(cfg: JobConfig) -> int:
    """Execute a validated job and map failures onto exit codes."""
    try:
        return HANDLERS[cfg.command](cfg)
    except OSError as exc:
        print(f"error: I/O: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, KeyError, TypeError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DilationError, RealignmentError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CodecError, ChannelError, LinAlgInputError, NotLipschitzError, CurveError, ValueError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON job configuration")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--seed", type=_u64, help="RNG seed (64-bit unsigned)")
    common.add_argument("--tol", type=float, help="pass/fail tolerance")
    common.add_argument("--grid", help='time grid "t0:t1:N[:geom]"')
    common.add_argument("--gamma", type=float, help="rate of a builtin channel or curve")
    common.add_argument("--epsilon", type=float, help="target sup error for dilate-approx")
    common.add_argument("--ancilla", type=int, help="ancilla dimension")

    parser = _Parser(prog="dilation-lab", description="Stinespring dilations of quantum channel curves.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "convert": "channel -> Choi -> Kraus round trip",
        "verify": "CPTP check and static dilation residual",
        "evolve": "evolve a state along a channel curve to CSV",
        "dilate-exact": "exact dilation of a channel curve on a grid",
        "dilate-approx": "approximate dilation with a certified sup error",
        "singularity": "small-t growth of the dilation Hamiltonian",
        "dephasing-demo": "worked pure-dephasing example with golden diffs",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        k: getattr(args, k) for k in ("out", "seed", "tol", "grid", "gamma", "epsilon", "ancilla")
    }
    try:
        file_values = load_config(args.config) if args.config else {}
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = make_config(args.command, file_values, overrides)
    except (ConfigError, TypeError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())

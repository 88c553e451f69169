"""Command-line interface: presets, scenario files, simulation and comparisons.

Subcommands: ``sim``, ``master``, ``analytic``, ``compare``, ``preset-list``.
Exit codes are listed in ``EXIT_CODES``.
"""
from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import __version__
from .core import AXES, DiagnosticsError, TimeGrid
from .ensemble import DEFAULT_BINS, convergence_check, run_ensemble
from .master import (
    DissipatorMode, UnsupportedCombination, analytic_rwa_density, integrate_master,
)
from .model import Frame, NoiseModel, OUNoise, PhysicalParams, Scenario, WhiteNoise
from .sde import IntegrationError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INTEGRATION = 3
EXIT_CONVERGENCE = 4
EXIT_COMPARISON = 5
EXIT_CODES = {
    "ok": EXIT_OK, "parse": EXIT_PARSE, "integration": EXIT_INTEGRATION,
    "convergence": EXIT_CONVERGENCE, "comparison": EXIT_COMPARISON,
}

DEFAULT_DT = 1e-3
DEFAULT_SEED = 12345
FLOAT_FMT = "{:.8e}"        # 9 significant digits, locale independent

# Pass/fail thresholds for `compare`; bump the version whenever a value changes.
THRESHOLDS_VERSION = 1
COMPARE_THRESHOLDS = {
    "master-vs-analytic": {"max_abs_deviation": 1e-6},
    # ensemble mean vs rho_bb: n_se standard errors, plus a floor for samples
    # where the standard error is below double-precision resolution
    "sde-vs-master": {"n_se": 3.0, "float_floor": 1e-12},
    # a physical difference, reported against the combined envelope, never a failure
    "rwa-vs-naive": {"n_se": 3.0, "float_floor": 1e-12, "fails": False},
}


class ConfigError(ValueError):
    """Invalid scenario document; the message names the offending key."""


# --------------------------------------------------------------------------
# presets

def _white(w0, axes, delta, frame, n, t_final=60.0):
    return Scenario(PhysicalParams(delta, 0.2), Frame(frame), NoiseModel.white(w0, axes),
                    TimeGrid(t_final, DEFAULT_DT), n, DEFAULT_SEED)


def _ou(axes, delta, frame, n=1000, t_final=20.0):
    return Scenario(PhysicalParams(delta, 0.2), Frame(frame), NoiseModel.ou(1.0, 0.1, axes),
                    TimeGrid(t_final, DEFAULT_DT), n, DEFAULT_SEED)


def _det(frame):
    return Scenario(PhysicalParams(1.0, 0.2), Frame(frame), NoiseModel(), TimeGrid(60.0, DEFAULT_DT),
                    1, DEFAULT_SEED)


PRESETS = {
    "fig1a": (lambda: _white(0.1, "z", 1.0, "lab", 100), "z white noise, lab frame, on resonance"),
    "fig1b": (lambda: _white(0.1, "z", 1.0, "rwa", 100), "z white noise, rotating frame, on resonance"),
    "fig2a": (lambda: _white(0.1, "z", 1.0, "lab", 100), "terminal histogram, z white noise"),
    "fig2b": (lambda: _white(0.1, "xyz", 1.0, "lab", 100), "terminal histogram, isotropic white noise"),
    "fig3a": (lambda: _white(0.1, "xyz", 1.0, "lab", 100), "isotropic white noise, lab frame, on resonance"),
    "fig3b": (lambda: _white(0.1, "xyz", 1.0, "rwa", 100), "isotropic white noise, rotating frame"),
    "fig3c": (lambda: _white(0.1, "xyz", 1.0, "rwa-naive", 100), "isotropic white noise, naive rotating frame"),
    "fig4a": (lambda: _white(0.1, "xyz", 1.2, "lab", 100), "isotropic white noise, lab frame, off resonance"),
    "fig4b": (lambda: _white(0.1, "xyz", 1.2, "rwa", 100), "off resonance, rotating frame"),
    "fig4c": (lambda: _white(0.1, "xyz", 1.2, "rwa-naive", 100), "off resonance, naive rotating frame"),
    "fig5a": (lambda: _ou("x", 1.0, "lab"), "x OU noise (theta=1), lab frame, on resonance"),
    "fig5b": (lambda: _ou("x", 1.0, "rwa"), "x OU noise, rotating frame"),
    "fig5c": (lambda: _ou("x", 1.0, "rwa-naive"), "x OU noise, naive rotating frame"),
    "fig6a": (lambda: _ou("xyz", 1.2, "lab"), "isotropic OU noise, lab frame, off resonance"),
    "fig6b": (lambda: _ou("xyz", 1.2, "rwa"), "isotropic OU noise, rotating frame"),
    "fig6c": (lambda: _ou("xyz", 1.2, "rwa-naive"), "isotropic OU noise, naive rotating frame"),
    "det-lab": (lambda: _det("lab"), "no noise, lab frame"),
    "det-rwa": (lambda: _det("rwa"), "no noise, rotating frame"),
}


def preset(name: str) -> Scenario:
    try:
        factory, _ = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; see 'preset-list'") from None
    return factory()


# --------------------------------------------------------------------------
# scenario documents

TOP_KEYS = {"frame", "delta", "omega_drive", "rabi", "noise", "t_final", "dt", "n_realizations",
            "seed", "bins", "outputs"}
NOISE_KEYS = {"kind", "axes", "w0", "theta", "mu", "o0"}
OUTPUT_KEYS = {"csv", "hist", "paths", "manifest"}


@dataclass
class RunOptions:
    bins: int = DEFAULT_BINS
    outputs: dict = field(default_factory=dict)


def _reject_unknown(doc: dict, allowed: set, where: str):
    for key in doc:
        if key not in allowed:
            prefix = f"{where}." if where else ""
            raise ConfigError(f"{prefix}{key}: unknown key (allowed: {', '.join(sorted(allowed))})")


def _number(doc: dict, key: str, default=None, *, where="", minimum=None, strict=False):
    name = f"{where}.{key}" if where else key
    if key not in doc:
        if default is None:
            raise ConfigError(f"{name}: required")
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {val!r}")
    val = float(val)
    if not np.isfinite(val):
        raise ConfigError(f"{name}: must be finite")
    if minimum is not None and (val <= minimum if strict else val < minimum):
        raise ConfigError(f"{name}: must be {'>' if strict else '>='} {minimum}, got {val}")
    return val


def _integer(doc: dict, key: str, default=None, *, minimum=0, maximum=None):
    if key not in doc:
        if default is None:
            raise ConfigError(f"{key}: required")
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{key}: expected an integer, got {val!r}")
    if val < minimum or (maximum is not None and val > maximum):
        raise ConfigError(f"{key}: out of range, got {val}")
    return val


def _parse_noise(doc) -> NoiseModel:
    if doc is None:
        return NoiseModel()
    if not isinstance(doc, dict):
        raise ConfigError("noise: expected an object")
    _reject_unknown(doc, NOISE_KEYS, "noise")
    kind = doc.get("kind")
    if kind not in ("white", "ou"):
        raise ConfigError(f"noise.kind: expected 'white' or 'ou', got {kind!r}")
    w0 = doc.get("w0")
    if isinstance(w0, dict):
        axes = doc.get("axes", "".join(a for a in AXES if a in w0))
    else:
        axes = doc.get("axes", "xyz")
    if isinstance(axes, list) and all(isinstance(a, str) for a in axes):
        axes = "".join(axes)
    if not isinstance(axes, str) or not axes or any(a not in AXES for a in axes) or len(set(axes)) != len(axes):
        raise ConfigError(f"noise.axes: expected a subset of x, y, z, got {doc.get('axes')!r}")
    if isinstance(w0, dict):
        _reject_unknown(w0, set(axes), "noise.w0")
        vols = {a: _number(w0, a, where="noise.w0", minimum=0.0) for a in axes}
    else:
        v = _number(doc, "w0", where="noise", minimum=0.0)
        vols = {a: v for a in axes}
    if kind == "white":
        for key in ("theta", "mu", "o0"):
            if key in doc:
                raise ConfigError(f"noise.{key}: only valid for kind 'ou'")
        return NoiseModel({a: WhiteNoise(vols[a]) for a in axes})
    theta = _number(doc, "theta", where="noise", minimum=0.0, strict=True)
    mu = _number(doc, "mu", 0.0, where="noise")
    o0 = _number(doc, "o0", 0.0, where="noise")
    return NoiseModel({a: OUNoise(theta, vols[a], mu, o0) for a in axes})


def parse_scenario(document, purpose: str = "sim") -> tuple[Scenario, RunOptions]:
    """Validate a JSON scenario document (text or already-decoded object).

    ``purpose`` is the subcommand; master-equation purposes reject OU noise.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(document, dict):
        raise ConfigError("scenario document must be a JSON object")
    _reject_unknown(document, TOP_KEYS, "")
    frame = document.get("frame", "lab")
    try:
        frame = Frame.parse(frame)
    except ValueError as exc:
        raise ConfigError(f"frame: {exc}") from None
    if "omega_drive" in document and _number(document, "omega_drive") != 1.0:
        raise ConfigError("omega_drive: the drive frequency is the unit of frequency and must be 1")
    delta = _number(document, "delta", 1.0)
    rabi = _number(document, "rabi", 0.2, minimum=0.0)
    noise = _parse_noise(document.get("noise"))
    if noise.kind == "ou" and purpose in ("master", "analytic"):
        raise ConfigError("noise.kind: OU noise has no master-equation counterpart; use 'sim'")
    dt = _number(document, "dt", DEFAULT_DT, minimum=0.0, strict=True)
    t_final = _number(document, "t_final", None)
    if t_final < dt:
        raise ConfigError(f"t_final: must be >= dt ({dt}), got {t_final}")
    n = _integer(document, "n_realizations", 1, minimum=1)
    if noise.kind is not None and "seed" not in document:
        raise ConfigError("seed: required for stochastic runs")
    seed = _integer(document, "seed", 0, minimum=0, maximum=2**64 - 1)
    bins = _integer(document, "bins", DEFAULT_BINS, minimum=1)
    outputs = document.get("outputs", {})
    if not isinstance(outputs, dict):
        raise ConfigError("outputs: expected an object")
    _reject_unknown(outputs, OUTPUT_KEYS, "outputs")
    scenario = Scenario(PhysicalParams(delta, rabi), frame, noise, TimeGrid(t_final, dt), n, seed)
    return scenario, RunOptions(bins, dict(outputs))


def scenario_to_dict(s: Scenario) -> dict:
    noise = None
    if s.noise.kind is not None:
        specs = [s.noise.axes[a] for a in s.noise.active_axes]
        noise = {"kind": s.noise.kind, "axes": "".join(s.noise.active_axes),
                 "w0": {a: sp.w0 for a, sp in zip(s.noise.active_axes, specs)}}
        if s.noise.kind == "ou":
            noise.update(theta=specs[0].theta, mu=specs[0].mu, o0=specs[0].o0)
    return {"frame": Frame.parse(s.frame).value, "delta": s.params.delta, "omega_drive": 1.0,
            "rabi": s.params.rabi, "noise": noise, "t_final": s.grid.t_final, "dt": s.grid.dt,
            "n_realizations": s.n_realizations, "seed": s.seed}


# --------------------------------------------------------------------------
# output

def _fmt(x) -> str:
    return FLOAT_FMT.format(float(x))


def write_csv(path, header, columns):
    """Write equal-length numeric columns with a header row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _versions() -> dict:
    return {"twolevel": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def manifest(command: str, scenario: Scenario, **extra) -> dict:
    out = {"command": command, "scenario": scenario_to_dict(scenario), "versions": _versions(),
           "thresholds_version": THRESHOLDS_VERSION, "thresholds": COMPARE_THRESHOLDS}
    out.update(extra)
    return out


def _density_columns(times, rho):
    return [times, rho[:, 0, 0].real, rho[:, 0, 1].real, rho[:, 0, 1].imag,
            np.einsum("tij,tji->t", rho, rho).real]


DENSITY_HEADER = ["t", "rho_bb", "re_rho_ba", "im_rho_ba", "purity"]


# --------------------------------------------------------------------------
# commands

def _resolve(args, purpose: str) -> tuple[Scenario, RunOptions]:
    if args.preset and args.config:
        raise ConfigError("use either --preset or --config, not both")
    if args.preset:
        scenario, opts = preset(args.preset), RunOptions()
        if scenario.noise.kind == "ou" and purpose in ("master", "analytic"):
            raise ConfigError("noise.kind: OU noise has no master-equation counterpart; use 'sim'")
    elif args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        scenario, opts = parse_scenario(text, purpose)
    else:
        raise ConfigError("one of --preset or --config is required")
    changes = {}
    grid = scenario.grid
    if args.dt is not None or args.t_final is not None:
        try:
            grid = TimeGrid(args.t_final if args.t_final is not None else grid.t_final,
                            args.dt if args.dt is not None else grid.dt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        changes["grid"] = grid
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.n is not None:
        if args.n < 1:
            raise ConfigError("--n: must be >= 1")
        changes["n_realizations"] = args.n
    if args.frame is not None:
        changes["frame"] = Frame.parse(args.frame)
    if getattr(args, "bins", None) is not None:
        if args.bins < 1:
            raise ConfigError("--bins: must be >= 1")
        opts.bins = args.bins
    return scenario.with_(**changes), opts


def _out(args, opts: RunOptions, key: str, flag: str):
    val = getattr(args, flag, None)
    return val if val is not None else opts.outputs.get(key)


def _manifest_path(args, opts, out):
    m = getattr(args, "manifest", None) or opts.outputs.get("manifest")
    if m:
        return m
    return None if out is None else str(out) + ".manifest.json"


def cmd_sim(args) -> int:
    scenario, opts = _resolve(args, "sim")
    out = _out(args, opts, "csv", "out")
    if out is None:
        raise ConfigError("--out: required for 'sim'")
    hist_out = _out(args, opts, "hist", "hist_out")
    paths_out = _out(args, opts, "paths", "paths_out")
    stats = run_ensemble(scenario, workers=args.workers, keep_paths=paths_out is not None, bins=opts.bins)
    conv = None
    if scenario.noise.kind == "ou" or args.check_convergence:
        fine = run_ensemble(scenario, workers=args.workers, level=1, bins=opts.bins)
        conv = convergence_check(stats, fine)
    write_csv(out, ["t", "mean_pb", "std_pb"], [stats.times, stats.mean, stats.std])
    files = [str(out)]
    if hist_out:
        h = stats.histogram
        write_csv(hist_out, ["bin_lo", "bin_hi", "count"], [h.edges[:-1], h.edges[1:], h.counts])
        files.append(str(hist_out))
    if paths_out:
        header = ["t"] + [f"path_{i}" for i in range(stats.n)]
        write_csv(paths_out, header, [stats.times] + list(stats.paths))
        files.append(str(paths_out))
    mpath = _manifest_path(args, opts, out)
    _write_json(mpath, manifest(
        "sim", scenario, bins=opts.bins, outputs=files,
        convergence=None if conv is None else conv.as_dict(),
        diagnostics={"max_renormalization_correction": stats.renorm_correction},
        final={"mean_pb": float(stats.mean[-1]), "std_pb": float(stats.std[-1]),
               "stderr": float(stats.stderr[-1])}))
    if conv is not None and not conv.passed:
        print(f"convergence check failed: |mean(dt) - mean(dt/2)| = {conv.terminal_diff:.3e} "
              f"> standard error {conv.terminal_stderr:.3e}", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_master(args) -> int:
    scenario, opts = _resolve(args, "master")
    out = _out(args, opts, "csv", "out")
    if out is None:
        raise ConfigError("--out: required for 'master'")
    series = integrate_master(scenario, args.mode)
    write_csv(out, DENSITY_HEADER, _density_columns(series.times, series.rho))
    _write_json(_manifest_path(args, opts, out),
                manifest("master", scenario, mode=DissipatorMode.parse(args.mode).value, outputs=[str(out)]))
    return EXIT_OK


def _require_analytic(scenario: Scenario):
    noise = scenario.noise
    if Frame.parse(scenario.frame) is not Frame.RWA:
        raise UnsupportedCombination("analytic solution requires frame 'rwa'")
    if noise.kind is None:
        return 0.0
    if noise.kind != "white" or not noise.is_isotropic():
        raise UnsupportedCombination("analytic solution requires isotropic white noise")
    return float(noise.volatilities()[0])


def cmd_analytic(args) -> int:
    scenario, opts = _resolve(args, "analytic")
    out = _out(args, opts, "csv", "out")
    if out is None:
        raise ConfigError("--out: required for 'analytic'")
    w0 = _require_analytic(scenario)
    t = scenario.grid.times
    rho = analytic_rwa_density(t, scenario.params.detuning, scenario.params.rabi, w0)
    write_csv(out, DENSITY_HEADER, _density_columns(t, rho))
    _write_json(_manifest_path(args, opts, out), manifest("analytic", scenario, outputs=[str(out)]))
    return EXIT_OK


def compare(scenario: Scenario, pair: str, mode="static", workers: int = 1) -> dict:
    """Run one comparison and return the JSON-ready report."""
    times = scenario.grid.times
    th = COMPARE_THRESHOLDS.get(pair)
    if th is None:
        raise ConfigError(f"unknown pair {pair!r}; valid pairs: {', '.join(COMPARE_THRESHOLDS)}")
    report = {"pair": pair, "thresholds": th, "thresholds_version": THRESHOLDS_VERSION}
    if pair == "master-vs-analytic":
        w0 = _require_analytic(scenario)
        num = integrate_master(scenario, mode).rho
        ana = analytic_rwa_density(times, scenario.params.detuning, scenario.params.rabi, w0)
        dev = np.max(np.abs(num - ana), axis=(1, 2))
        j = int(np.argmax(dev))
        report.update(max_abs_deviation=float(dev[j]), at_time=float(times[j]), envelope=None,
                      passed=bool(dev[j] <= th["max_abs_deviation"]))
        return report
    if pair == "sde-vs-master" and scenario.noise.kind != "white":
        raise UnsupportedCombination(f"{pair} requires white noise")
    if scenario.noise.kind is None:
        raise UnsupportedCombination(f"{pair} requires a noise model")
    if pair == "sde-vs-master":
        stats = run_ensemble(scenario, workers=workers)
        ref = integrate_master(scenario, mode).rho_bb
        dev = np.abs(stats.mean - ref)
        env = th["n_se"] * stats.stderr + th["float_floor"]
    else:
        a = run_ensemble(scenario.with_(frame=Frame.RWA), workers=workers)
        b = run_ensemble(scenario.with_(frame=Frame.RWA_NAIVE), workers=workers)
        dev = np.abs(a.mean - b.mean)
        env = th["n_se"] * np.sqrt(a.stderr**2 + b.stderr**2) + th["float_floor"]
    j = int(np.argmax(dev))
    worst = int(np.argmax(dev - env))
    within = bool(np.all(dev <= env))
    report.update(max_abs_deviation=float(dev[j]), at_time=float(times[j]),
                  envelope=float(env[j]), within_envelope=within,
                  worst_excess=float(dev[worst] - env[worst]), worst_excess_time=float(times[worst]),
                  passed=within if th.get("fails", True) else True)
    return report


def cmd_compare(args) -> int:
    scenario, opts = _resolve(args, "compare")
    report = compare(scenario, args.pair, args.mode, args.workers)
    report["scenario"] = scenario_to_dict(scenario)
    report["versions"] = _versions()
    _write_json(args.out, report)
    return EXIT_OK if report["passed"] else EXIT_COMPARISON


def cmd_preset_list(args) -> int:
    for name, (factory, desc) in PRESETS.items():
        s = factory()
        print(f"{name:8s} {desc}  [frame={Frame.parse(s.frame).value}, delta={s.params.delta}, "
              f"T={s.grid.t_final:g}, N={s.n_realizations}]")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twolevel", description="Driven two-level system with noise.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, stochastic=True):
        src = p.add_argument_group("scenario")
        src.add_argument("--preset", help="named figure preset (see preset-list)")
        src.add_argument("--config", help="JSON scenario file")
        src.add_argument("--seed", type=int)
        src.add_argument("--n", type=int, help="number of realizations")
        src.add_argument("--dt", type=float)
        src.add_argument("--t-final", type=float)
        src.add_argument("--frame", choices=[f.value for f in Frame])
        p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
        if stochastic:
            p.add_argument("--workers", type=int, default=1, help="worker processes (output is identical)")

    p = sub.add_parser("sim", help="stochastic ensemble")
    common(p)
    p.add_argument("--out", help="CSV with t, mean_pb, std_pb")
    p.add_argument("--hist-out", help="terminal histogram CSV")
    p.add_argument("--paths-out", help="per-path CSV")
    p.add_argument("--bins", type=int)
    p.add_argument("--check-convergence", action="store_true",
                   help="also run at dt/2 (always done for OU noise)")
    p.set_defaults(func=cmd_sim)

    for name, func, helptext in (("master", cmd_master, "Lindblad master equation"),
                                 ("analytic", cmd_analytic, "closed-form rotating-frame solution")):
        p = sub.add_parser(name, help=helptext)
        common(p, stochastic=False)
        p.add_argument("--out", help="CSV with t, rho_bb, re_rho_ba, im_rho_ba, purity")
        if name == "master":
            p.add_argument("--mode", choices=[m.value for m in DissipatorMode], default="static")
        p.set_defaults(func=func)

    p = sub.add_parser("compare", help="quantified agreement between two methods")
    common(p)
    p.add_argument("--pair", required=True, choices=list(COMPARE_THRESHOLDS))
    p.add_argument("--mode", choices=[m.value for m in DissipatorMode], default="static")
    p.add_argument("--out", help="JSON report path (default: stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("preset-list", help="list figure presets")
    p.set_defaults(func=cmd_preset_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IntegrationError, DiagnosticsError) as exc:
        print(f"integration failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except (ValueError, OSError) as exc:
        # ConfigError and UnsupportedCombination are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())

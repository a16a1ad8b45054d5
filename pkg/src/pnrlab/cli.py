"""Command-line front end.

Every subcommand writes its tables plus a JSON manifest into ``--out``.
Settings resolve as flag > ``--config`` file > built-in default; the config
file may be a flat JSON object or a manifest from an earlier run.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .detector import ArrayConfig, ClickPattern
from .experiments import (
    InsufficientSamplesWarning,
    ReceiverConfig,
    ReceiverKind,
    ZeroDenominatorError,
    gn_scan,
    receiver_error_theory,
    run_discrimination,
    run_subtraction_scan,
    source_gn_theory,
)
from .export import write_manifest, write_table
from .fock import auto_cutoff, helstrom_error
from .parallel import block_rng, manifest_info
from .readout import TraceConfig, decode_trace, default_threshold, read_trace, synthesize_trace, write_trace
from .stats import SourceKind, SourceSpec

EXIT_OK, EXIT_USAGE, EXIT_DEGRADED = 0, 2, 3


class UsageError(Exception):
    pass


_SOURCE = {"source": "thermal", "mean": 6.0, "tbp": 0.05, "bandwidth": None, "pulse_width": None}
_ARRAY = {"pixels": 100, "efficiency": 1.0, "ideal": False}

DEFAULTS = {
    "stats": {**_SOURCE, **_ARRAY, "shots": 100_000},
    # saturation biases the correlator, so g^(N) counts photons unless told otherwise
    "gn": {**_SOURCE, **_ARRAY, "ideal": True, "order": 2, "shots": 100_000},
    "subtract": {**_SOURCE, **_ARRAY, "ideal": True, "nR": "0,2,4", "split": "20:80", "shots": 1_000_000},
    "discriminate": {"receiver": "all", "mean": "0.5,1,2,3,4,5", "transmission": 1.0, "delta_n": None,
                     "shots": 1_000_000},
    "helstrom": {"mean": "0.5,1,2,3,4,5", "cutoff": None},
    "trace": {"synthesize": False, "decode": False, "pattern": None, "snr": None, "file": "trace.bin",
              "pixels": 100, "threshold": None, "ripple": 0.02, "amplitude": 1.0},
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (default: $PNRLAB_SEED, else 0)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: 1)")
    p.add_argument("--out", default=None, help="output directory (default: .)")
    p.add_argument("--json", action=argparse.BooleanOptionalAction, default=None,
                   help="write tables as JSON instead of CSV (default: off)")
    p.add_argument("--config", default=None, help="JSON config file or earlier manifest (default: none)")


def _d(cmd, key):
    return f"(default: {DEFAULTS[cmd][key]})"


def _add_source(p, cmd):
    p.add_argument("--source", choices=[k.value for k in SourceKind], default=None, help=_d(cmd, "source"))
    p.add_argument("--mean", type=float, default=None, help=f"mean photon number {_d(cmd, 'mean')}")
    p.add_argument("--tbp", type=float, default=None, help=f"time-bandwidth product pi*B*tau {_d(cmd, 'tbp')}")
    p.add_argument("--bandwidth", type=float, default=None,
                   help="filter FWHM in Hz; with --pulse-width replaces --tbp (default: unset)")
    p.add_argument("--pulse-width", dest="pulse_width", type=float, default=None,
                   help="pulse width in s (default: unset)")


def _add_array(p, cmd):
    p.add_argument("--pixels", type=int, default=None, help=f"pixel count {_d(cmd, 'pixels')}")
    p.add_argument("--efficiency", type=float, default=None, help=f"per-photon efficiency {_d(cmd, 'efficiency')}")
    p.add_argument("--ideal", action=argparse.BooleanOptionalAction, default=None,
                   help=f"count photons without pixel saturation {_d(cmd, 'ideal')}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnrlab", description="Multiplexed PNR detector simulator.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="photon-number histogram vs theory")
    _add_source(p, "stats")
    _add_array(p, "stats")
    p.add_argument("--shots", type=int, default=None, help=_d("stats", "shots"))
    _add_common(p)

    p = sub.add_parser("gn", help="g^(N) for N = 2..order")
    _add_source(p, "gn")
    _add_array(p, "gn")
    p.add_argument("--order", type=int, default=None, help=f"highest order N {_d('gn', 'order')}")
    p.add_argument("--shots", type=int, default=None, help=_d("gn", "shots"))
    _add_common(p)

    p = sub.add_parser("subtract", help="photon subtraction with an R:T pixel split")
    _add_source(p, "subtract")
    _add_array(p, "subtract")
    p.add_argument("--nR", default=None, help=f"conditioned R counts, comma separated {_d('subtract', 'nR')}")
    p.add_argument("--split", default=None, help=f"R:T pixel split {_d('subtract', 'split')}")
    p.add_argument("--shots", type=int, default=None, help=_d("subtract", "shots"))
    _add_common(p)

    p = sub.add_parser("discriminate", help="thermal vs coherent receivers")
    p.add_argument("--receiver", choices=["direct", "kennedy", "gk", "all"], default=None,
                   help=_d("discriminate", "receiver"))
    p.add_argument("--mean", default=None, help=f"mean photon numbers, comma separated {_d('discriminate', 'mean')}")
    p.add_argument("--transmission", type=float, default=None, help=_d("discriminate", "transmission"))
    p.add_argument("--delta-n", dest="delta_n", type=float, default=None,
                   help="fixed GK displacement excess (default: optimised)")
    p.add_argument("--shots", type=int, default=None, help=_d("discriminate", "shots"))
    _add_common(p)

    p = sub.add_parser("helstrom", help="Helstrom bound")
    p.add_argument("--mean", default=None, help=f"mean photon numbers, comma separated {_d('helstrom', 'mean')}")
    p.add_argument("--cutoff", type=int, default=None, help="Fock cutoff (default: automatic)")
    _add_common(p)

    p = sub.add_parser("trace", help="synthesize or decode a readout trace")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--synthesize", action="store_true", default=None, help="pattern -> trace file (default: off)")
    mode.add_argument("--decode", action="store_true", default=None, help="trace file -> pattern (default: off)")
    p.add_argument("--pattern", default=None, help="0/1 string, one character per pixel (default: unset)")
    p.add_argument("--snr", type=float, default=None, help="amplitude/noise in dB (default: no noise)")
    p.add_argument("--file", "--input", "--output", dest="file", default=None,
                   help=f"trace file, .bin or .csv, relative to --out {_d('trace', 'file')}")
    p.add_argument("--pixels", type=int, default=None, help=f"slot count for CSV traces {_d('trace', 'pixels')}")
    p.add_argument("--threshold", type=float, default=None, help="decision threshold (default: amplitude/2)")
    p.add_argument("--ripple", type=float, default=None, help=f"baseline ripple coefficient {_d('trace', 'ripple')}")
    p.add_argument("--amplitude", type=float, default=None, help=_d("trace", "amplitude"))
    _add_common(p)
    return parser


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    if "config" in doc and isinstance(doc["config"], dict):
        merged = dict(doc["config"])
        if "seed" in doc and "seed" not in merged:
            merged["seed"] = doc["seed"]
        return merged
    return doc


def resolve(args: argparse.Namespace) -> dict:
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    cfg.update({"seed": None, "workers": 1, "out": ".", "json": False})
    file_cfg = _load_config(args.config)
    unknown = set(file_cfg) - set(cfg)
    if unknown:
        raise UsageError(f"unknown config keys for {cmd}: {', '.join(sorted(unknown))}")
    cfg.update(file_cfg)
    cfg.update({k: v for k, v in vars(args).items() if k in cfg and v is not None})
    if cfg["seed"] is None:
        env = os.environ.get("PNRLAB_SEED")
        try:
            cfg["seed"] = int(env) if env else 0
        except ValueError:
            raise UsageError("PNRLAB_SEED must be an integer") from None
    if cfg["workers"] < 1:
        raise UsageError("--workers must be >= 1")
    return cfg


def _floats(text, name) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    try:
        vals = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--{name} must be a comma-separated list of numbers") from None
    if not vals:
        raise UsageError(f"--{name} is empty")
    return vals


def _source(cfg) -> SourceSpec:
    mean = cfg["mean"]
    if not math.isfinite(mean) or mean < 0:
        raise UsageError("--mean must be finite and >= 0")
    if cfg["source"] == "coherent":
        return SourceSpec.coherent(mean)
    if cfg["bandwidth"] is not None or cfg["pulse_width"] is not None:
        if cfg["bandwidth"] is None or cfg["pulse_width"] is None:
            raise UsageError("--bandwidth and --pulse-width go together")
        try:
            return SourceSpec(SourceKind.THERMAL, mean, cfg["bandwidth"], cfg["pulse_width"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if not math.isfinite(cfg["tbp"]) or cfg["tbp"] <= 0:
        raise UsageError("--tbp must be finite and > 0")
    return SourceSpec.thermal(mean, cfg["tbp"])


def _array(cfg) -> ArrayConfig:
    try:
        return ArrayConfig(cfg["pixels"], cfg["efficiency"], cfg["seed"], bool(cfg["ideal"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _shots(cfg) -> int:
    if cfg["shots"] < 1:
        raise UsageError("--shots must be >= 1")
    return int(cfg["shots"])


def _source_meta(src: SourceSpec) -> dict:
    meta = {"kind": src.kind.value, "mean_n": src.mean_n}
    if src.kind is SourceKind.THERMAL:
        meta.update(tbp=src.tbp(), bandwidth_hz=src.bandwidth_hz, pulse_width_s=src.pulse_width_s)
    return meta


def cmd_stats(cfg) -> tuple[int, dict, dict]:
    from .detector import run_statistics_experiment

    src, arr, shots = _source(cfg), _array(cfg), _shots(cfg)
    res = run_statistics_experiment(src, arr, shots, cfg["workers"])
    probs = res.probabilities()
    tables = {
        "stats_histogram": (["n", "count", "probability"],
                            [[n, int(c), float(p)] for n, (c, p) in enumerate(zip(res.histogram, probs))]),
    }
    th_rows = []
    for n, p in enumerate(res.photon_pmf.probs):
        det = float(res.theory[n]) if res.theory is not None and n < res.theory.size else math.nan
        th_rows.append([n, float(p), det])
    tables["stats_theory"] = (["n", "photon_probability", "detected_probability"], th_rows)
    meta = {"source": _source_meta(src), "theory_cutoff": res.photon_pmf.cutoff,
            "theory_tail_mass": res.photon_pmf.tail_mass}
    if res.theory is not None:
        meta["total_variation"] = res.total_variation()
    return EXIT_OK, tables, meta


def cmd_gn(cfg) -> tuple[int, dict, dict]:
    order = int(cfg["order"])
    if order < 2:
        raise UsageError("--order must be at least 2: g^(1) = 1 by definition and is not estimated")
    src, arr, shots = _source(cfg), _array(cfg), _shots(cfg)
    if order > arr.pixel_count:
        raise UsageError(f"--order cannot exceed the pixel count ({arr.pixel_count})")
    orders = list(range(2, order + 1))
    code, meta = EXIT_OK, {"source": _source_meta(src)}
    try:
        results = gn_scan(src, arr, orders, shots, cfg["workers"])
        rows = [[r.order_N, r.estimate, r.std_error, r.theory] for r in results]
        meta["group_sizes"] = {str(r.order_N): list(r.group_sizes) for r in results}
    except ZeroDenominatorError as exc:
        print(f"warning: {exc}", file=sys.stderr)
        rows = [[n, math.nan, math.nan, source_gn_theory(src, n)] for n in orders]
        code = EXIT_DEGRADED
    return code, {"gn": (["N", "g_est", "std_err", "g_theory"], rows)}, meta


def _split(text) -> tuple[int, int]:
    try:
        r, t = (int(x) for x in str(text).split(":"))
    except ValueError:
        raise UsageError("--split must look like R:T, e.g. 20:80") from None
    return r, t


def cmd_subtract(cfg) -> tuple[int, dict, dict]:
    src, arr, shots = _source(cfg), _array(cfg), _shots(cfg)
    split = _split(cfg["split"])
    try:
        conditions = [int(x) for x in str(cfg["nR"]).split(",") if x.strip()]
    except ValueError:
        raise UsageError("--nR must be comma-separated integers") from None
    if not conditions or any(m < 0 for m in conditions):
        raise UsageError("--nR values must be >= 0")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", InsufficientSamplesWarning)
        try:
            results = run_subtraction_scan(src, arr, split, conditions, shots, cfg["workers"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rows, hist_rows = [], []
    for r in results:
        rows.append([r.conditioned_on_nR, r.mean_T, r.theory_mean_T, r.enhancement, r.theory_enhancement,
                     r.mean_T_std_error, r.enhancement_std_error, r.conditioned_shots])
        total = max(r.conditioned_shots, 1)
        for n, c in enumerate(r.histogram_T):
            th = float(r.theory_pmf_T.probs[n]) if n < r.theory_pmf_T.probs.size else 0.0
            hist_rows.append([r.conditioned_on_nR, n, int(c), c / total, th])
    tables = {
        "subtract": (["nR", "mean_T", "theory_mean_T", "enhancement", "theory", "mean_T_std_err",
                      "enhancement_std_err", "conditioned_shots"], rows),
        "subtract_histograms": (["nR", "n_T", "count", "probability", "theory_probability"], hist_rows),
    }
    code = EXIT_DEGRADED if any(r.insufficient for r in results) else EXIT_OK
    meta = {"source": _source_meta(src), "split": list(split), "reflect_fraction": results[0].reflect_fraction}
    return code, tables, meta


def cmd_discriminate(cfg) -> tuple[int, dict, dict]:
    means = _floats(cfg["mean"], "mean")
    if any(not math.isfinite(m) or m < 0 for m in means):
        raise UsageError("--mean values must be finite and >= 0")
    shots = _shots(cfg)
    kinds = [k.value for k in ReceiverKind] if cfg["receiver"] == "all" else [cfg["receiver"]]
    try:
        receivers = [ReceiverConfig(k, cfg["transmission"], cfg["delta_n"] if k == "gk" else None) for k in kinds]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = []
    for i, m in enumerate(means):
        bound = helstrom_error(m)
        for j, rc in enumerate(receivers):
            seed = cfg["seed"] + 1000 * i + j
            res = run_discrimination(m, rc, shots, seed, cfg["workers"])
            rows.append([m, rc.receiver.value, res.error_rate, res.theory, bound, res.std_error,
                         math.nan if res.delta_n is None else res.delta_n])
    cols = ["n_bar", "receiver", "err_emp", "err_theory", "helstrom", "std_err", "delta_n"]
    return EXIT_OK, {"discriminate": (cols, rows)}, {"helstrom_cutoffs": {str(m): auto_cutoff(m) for m in means}}


def cmd_helstrom(cfg) -> tuple[int, dict, dict]:
    means = _floats(cfg["mean"], "mean")
    rows = []
    for m in means:
        if not math.isfinite(m) or m < 0:
            raise UsageError("--mean values must be finite and >= 0")
        cutoff = cfg["cutoff"] if cfg["cutoff"] is not None else auto_cutoff(m)
        try:
            bound = helstrom_error(m, cutoff)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        rows.append([m, cutoff, bound,
                     receiver_error_theory(ReceiverConfig(ReceiverKind.DIRECT), m),
                     receiver_error_theory(ReceiverConfig(ReceiverKind.KENNEDY), m)])
    return EXIT_OK, {"helstrom": (["n_bar", "cutoff", "helstrom", "direct", "kennedy"], rows)}, {}


def cmd_trace(cfg, out_dir: Path) -> tuple[int, dict, dict]:
    if bool(cfg["synthesize"]) == bool(cfg["decode"]):
        raise UsageError("choose exactly one of --synthesize or --decode")
    try:
        tcfg = TraceConfig(amplitude=cfg["amplitude"], ripple_coeff=cfg["ripple"])
        if cfg["snr"] is not None:
            tcfg = tcfg.with_snr_db(cfg["snr"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = out_dir / cfg["file"]
    if path.suffix not in (".bin", ".csv"):
        raise UsageError("--file must end in .bin or .csv")
    meta = {"trace_file": str(path), "noise_sigma": tcfg.noise_sigma}
    if cfg["synthesize"]:
        if not cfg["pattern"]:
            raise UsageError("--synthesize needs --pattern")
        try:
            pattern = ClickPattern.from_bits(cfg["pattern"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        frame = synthesize_trace(pattern, tcfg, block_rng(cfg["seed"], 0))
        path.parent.mkdir(parents=True, exist_ok=True)
        write_trace(frame, path)
        rows = [[k, int(b)] for k, b in enumerate(pattern.fired)]
        return EXIT_OK, {"trace_pattern": (["slot", "fired"], rows)}, meta
    try:
        frame = read_trace(path, slots=cfg["pixels"])
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read trace {path}: {exc}") from None
    # the decoder only needs the noise-free shape parameters
    thr = cfg["threshold"] if cfg["threshold"] is not None else default_threshold(tcfg)
    try:
        pattern = decode_trace(frame, thr, tcfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(pattern.to_bits())
    meta["threshold"] = thr
    rows = [[k, int(b)] for k, b in enumerate(pattern.fired)]
    return EXIT_OK, {"trace_decoded": (["slot", "fired"], rows)}, meta


COMMANDS = {
    "stats": cmd_stats,
    "gn": cmd_gn,
    "subtract": cmd_subtract,
    "discriminate": cmd_discriminate,
    "helstrom": cmd_helstrom,
}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = _now()
    try:
        cfg = resolve(args)
        out_dir = Path(cfg["out"])
        if args.command == "trace":
            code, tables, meta = cmd_trace(cfg, out_dir)
        else:
            code, tables, meta = COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"pnrlab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outputs = [str(write_table(out_dir, stem, cols, rows, cfg["json"])) for stem, (cols, rows) in tables.items()]
    if "trace_file" in meta and cfg["synthesize"]:
        outputs.append(meta["trace_file"])
    manifest = {
        "command": args.command,
        "config": {k: v for k, v in cfg.items() if k not in ("out", "seed")},
        "seed": cfg["seed"],
        "version": __version__,
        "partitioning": manifest_info(),
        "numpy_version": np.__version__,
        "started": started,
        "finished": _now(),
        "outputs": outputs,
        "exit_code": code,
        "metadata": meta,
    }
    write_manifest(out_dir / f"{args.command}_manifest.json", manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())

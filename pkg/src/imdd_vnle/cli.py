"""Command-line interface: ``imdd-vnle {kernels,simulate,equalize,sweep,calibrate}``.

Link parameters come from the preset file; ``--set key=value`` overrides
individual LinkConfig fields on top of it. On failure the last line on
stderr is a JSON object ``{"error": ..., "message": ...}``; the exit code
is 1 for runtime failures and 2 for bad arguments.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import warnings

from . import bench
from .adapt import AdaptConfig, write_learning_curve
from .kernels import SCHEMES, build_kernel_set, complexity
from .linksim import PRESETS, LinkConfig, load_preset, load_waveform, load_waveform_meta, run_link, save_waveform
from .pam import Constellation, generate_prms
from .rxdsp import run_rx
from .volterra import save_taps


def _parse_overrides(items) -> dict:
    fields = {f.name: f.type for f in dataclasses.fields(LinkConfig)}
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or key not in fields:
            raise ValueError(f"bad --set {item!r}; expected key=value with key in {sorted(fields)}")
        if fields[key] in ("bool", bool):
            out[key] = value.lower() in ("1", "true", "yes", "on")
        elif fields[key] in ("int", int):
            out[key] = int(value)
        else:
            out[key] = float(value)
    return out


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v != ""]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v != ""]


class _Parser(argparse.ArgumentParser):
    """Argument errors also end with a JSON error line (exit code 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"error": "UsageError", "message": message}), file=sys.stderr)
        self.exit(2)


def _kernel_args(p, m3_default=9):
    p.add_argument("--scheme", default="full", choices=SCHEMES)
    p.add_argument("--m1", type=int, default=120)
    p.add_argument("--m2", type=int, default=6)
    p.add_argument("--m3", type=int, default=m3_default)
    p.add_argument("--d", type=int, default=None, help="tap spacing for ri_d/combined (default ceil(M3/2))")


def _kset(args):
    d = args.d
    if d is None and args.scheme in ("ri_d", "combined"):
        d = bench.half_d(args.m3)
    return build_kernel_set(args.m1, args.m2, args.m3, args.scheme, d)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_kernels(args) -> None:
    ks = _kset(args)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(ks.to_text())
    if args.list:
        sys.stdout.write(ks.to_text())
        return
    c = complexity(ks)
    _emit({"scheme": ks.scheme, "M1": ks.M1, "M2": ks.M2, "M3": ks.M3, "d": ks.d,
           "N1": c.N1, "N2": c.N2, "N3": c.N3, "mult_count": c.mult_count})


def cmd_simulate(args) -> None:
    cfg = load_preset(args.preset, **_parse_overrides(args.set))
    n = args.symbols - args.symbols % cfg.symbol_block()
    sym = generate_prms(args.seed, n, cfg.order)
    stages = {}
    wave = run_link(sym, cfg, args.seed, stages=stages)
    if args.stage != "adc":
        wave = stages[args.stage]
    meta = {"preset": args.preset, "seed": args.seed, "symbols": n, "stage": args.stage,
            "config": cfg.to_dict()}
    save_waveform(args.out, wave, meta)
    _emit({"out": args.out, "samples": len(wave), "sample_rate": wave.sample_rate, "symbols": n})


def cmd_equalize(args) -> None:
    meta = load_waveform_meta(args.wave)
    if "config" not in meta or "seed" not in meta:
        raise ValueError(f"{args.wave} has no link metadata; write it with 'imdd-vnle simulate'")
    cfg = LinkConfig.from_dict(meta["config"])
    seed = meta["seed"] if args.seed is None else args.seed
    sym = generate_prms(seed, int(meta["symbols"]), cfg.order)
    wave = load_waveform(args.wave)
    adapt = AdaptConfig(train_len=args.train, dd_len=args.dd)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run_rx(wave, _kset(args), sym, Constellation(cfg.order), cfg.symbol_rate, adapt=adapt)
    if args.taps_out:
        save_taps(args.taps_out, res.taps, _kset(args))
    if args.curve_out:
        write_learning_curve(args.curve_out, res.trace)
    r = res.report
    _emit({"symbols": r.symbols, "symbol_errors": r.symbol_errors, "bits": r.bits,
           "bit_errors": r.bit_errors, "BER": r.ber, "SER": r.ser, "N1": r.N1, "N2": r.N2,
           "N3": r.N3, "mult_count": r.mult_count, "phase": res.phase,
           "sync_offset": res.sync.offset, "polarity": res.sync.polarity})


def cmd_sweep(args) -> None:
    spec = bench.default_spec(
        args.experiment, preset=args.preset, schemes=args.scheme, m3=args.m3, d=args.d,
        seeds=_int_list(args.seed), symbols=args.symbols, out=args.out, workers=args.workers,
        **_parse_overrides(args.set),
    )
    if args.power is not None:
        spec = dataclasses.replace(spec, powers=tuple(float(p) for p in args.power.split(",")))
    rows, _, _ = bench.run_sweep(spec)
    failed = sum(1 for r in rows if r.get("error"))
    csv_path = None
    if args.out:
        csv_path = args.out if args.out.endswith(".csv") else f"{args.out}.csv"
    _emit({"experiment": spec.experiment, "rows": len(rows), "failed": failed, "csv": csv_path})


def cmd_calibrate(args) -> None:
    cal = bench.calibrate(args.preset, bias_grid=args.bias, vpp_grid=args.vpp,
                          seeds=tuple(_int_list(args.seed)), symbols=args.symbols,
                          cache_dir=args.out, force=args.force, workers=args.workers,
                          **_parse_overrides(args.set))
    _emit({"preset": args.preset, "bias": cal.bias, "vpp": cal.vpp, "ber": cal.ber,
           "cached": cal.cached, "grid_points": len(cal.grid)})


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="imdd-vnle", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("kernels", help="count or list a kernel set")
    _kernel_args(p)
    p.add_argument("--list", action="store_true", help="print the index lists")
    p.add_argument("--out", help="write the kernel set text file")
    p.set_defaults(func=cmd_kernels)

    def link_args(p):
        p.add_argument("--preset", default="pam6_90gbd_b2b", choices=sorted(PRESETS))
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a LinkConfig field")

    p = sub.add_parser("simulate", help="run the link and write a waveform file")
    link_args(p)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--symbols", type=int, default=200_000)
    p.add_argument("--stage", default="adc", choices=("drive", "mzm", "fiber", "pd", "adc"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("equalize", help="run the receiver DSP on a waveform file")
    p.add_argument("wave")
    _kernel_args(p)
    p.add_argument("--seed", type=int, default=None, help="symbol seed (default: from the file)")
    p.add_argument("--train", type=int, default=AdaptConfig.train_len)
    p.add_argument("--dd", type=int, default=AdaptConfig.dd_len)
    p.add_argument("--taps-out")
    p.add_argument("--curve-out", help="learning curve CSV")
    p.set_defaults(func=cmd_equalize)

    p = sub.add_parser("sweep", help="run an experiment sweep, write CSV and SVG")
    p.add_argument("experiment", choices=bench.EXPERIMENTS)
    link_args(p)
    p.add_argument("--scheme", action="append", choices=SCHEMES)
    p.add_argument("--m3", type=_int_list)
    p.add_argument("--d", type=int)
    p.add_argument("--seed", default="1,2,3", help="comma-separated seeds")
    p.add_argument("--symbols", type=int, default=200_000)
    p.add_argument("--power", help="comma-separated PD input powers in dBm")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output path prefix")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="grid-search MZM bias and Vpp for the full VNLE")
    link_args(p)
    p.add_argument("--seed", default="1,2,3")
    p.add_argument("--symbols", type=int, default=300_000)
    p.add_argument("--bias", type=_float_list, help="comma-separated bias grid in units of Vpi")
    p.add_argument("--vpp", type=_float_list, help="comma-separated Vpp grid in units of Vpi")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--force", action="store_true", help="ignore a cached result")
    p.add_argument("--out", help="directory of the preset file to update (default: packaged presets)")
    p.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

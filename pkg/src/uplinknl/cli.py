"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 infeasible target,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .channel import FiberSegmentProfile, characteristic_nonlinear_power, dbm2w, w2dbm
from .harness import (RECIPES, ConfigError, LinkConfig, NumericalFailure, acceptable_link_loss,
                      hpoa_for, max_acceptable_link_loss, run_experiment, sweep)
from .shaping import AmplitudeAlphabet, InfeasibleOperatingPoint, build_lut_dm

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


def _load_config(path):
    if path is None:
        return LinkConfig.from_dict({})
    if path in RECIPES:
        from .harness import load_recipe
        return LinkConfig.from_dict(load_recipe(path).get("config", {}))
    return LinkConfig.from_file(path)


def _cmd_simulate(args):
    cfg = _load_config(args.config)
    if args.power is not None:
        res = acceptable_link_loss(cfg, args.power)
        if res.loss_db is None:
            raise InfeasibleOperatingPoint(f"target GMI {cfg.target_gmi} unreachable at "
                                           f"{args.power} dBm")
        out = {"power_dbm": args.power, "acceptable_loss_db": res.loss_db,
               "record": json.loads(res.record.to_json())}
    else:
        res = max_acceptable_link_loss(cfg)
        if res.max_loss_db is None:
            raise InfeasibleOperatingPoint("target GMI unreachable at every grid power")
        out = {"max_loss_db": res.max_loss_db, "optimal_power_dbm": res.optimal_power_dbm,
               "curve": [(r.power_dbm, r.loss_db) for r in res.curve]}
    print(json.dumps(out, indent=1, sort_keys=True))


def _cmd_sweep(args):
    if args.recipe or args.experiment:
        manifest = run_experiment(args.recipe or args.experiment, args.out, args.workers)
        print(json.dumps(manifest, indent=1, sort_keys=True))
        return
    cfg = _load_config(args.config)
    if not args.axis or not args.values:
        raise ConfigError("sweep", "give --axis and --values, or --recipe")
    values = [v if args.axis == "hpoa" else float(v) for v in args.values.split(",")]
    if args.axis in ("block_length", "n"):
        values = [int(v) for v in values]
    res = sweep(cfg, args.axis, values, args.workers)
    text = res.to_json()
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "sweep.json").write_text(text)
    print(text)


def _cmd_psd(args):
    doc = {"experiment": "psd", "config": {}, "psd": {"phi_bar": args.phi_bar, "bursts": args.bursts,
                                                      "symbols": args.symbols}}
    if args.config:
        doc["config"] = json.loads(Path(args.config).read_text()).get("config", {})
    manifest = run_experiment(doc, args.out)
    print(json.dumps(manifest, indent=1, sort_keys=True))


def _cmd_shaping_table(args):
    dm = build_lut_dm(AmplitudeAlphabet.from_count(args.levels), args.N, args.k)
    if args.out:
        dm.to_csv(args.out)
    print(f"# N={dm.N} k={dm.k} rate={dm.rate:g} bits/amp max_energy={dm.max_energy} "
          f"encoder_bits={dm.encoder_memory_bits()} decoder_bits={dm.decoder_memory_bits()}")
    print("address," + ",".join(f"a{i + 1}" for i in range(dm.N)))
    for i, row in enumerate(dm.encode_table):
        print(f"{i}," + ",".join(str(int(a)) for a in row))


def _cmd_pnl(args):
    if args.length is not None:
        seg = FiberSegmentProfile.passive(args.length, args.gamma, args.alpha)
        p_nl = characteristic_nonlinear_power([seg])
        name = f"passive {args.length:g} m"
    else:
        cfg = _load_config(args.config)
        P = float(dbm2w(args.power))
        model = hpoa_for(cfg, P)
        p_nl = model.p_nl()
        name = model.name
    out = {"channel": name, "p_nl_w": p_nl, "p_nl_dbm": float(w2dbm(p_nl))}
    if args.power is not None:
        out["phi_bar"] = float(dbm2w(args.power)) / p_nl
    print(json.dumps(out, indent=1, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uplinknl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="acceptable (or maximum acceptable) link loss")
    s.add_argument("--config", help="JSON config file or recipe name")
    s.add_argument("--power", type=float, help="single launch power in dBm")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("sweep", help="sweep one axis, or run an experiment recipe")
    s.add_argument("--config")
    s.add_argument("--axis", choices=["power", "kappa", "block_length", "baud", "p_nl", "n", "hpoa"])
    s.add_argument("--values", help="comma-separated grid")
    s.add_argument("--recipe", choices=RECIPES)
    s.add_argument("--experiment", help="experiment JSON file")
    s.add_argument("--out", default="results")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=_cmd_sweep)

    s = sub.add_parser("psd", help="analytic and Monte-Carlo PSDs after SPM")
    s.add_argument("--config")
    s.add_argument("--phi-bar", type=float, default=1.1)
    s.add_argument("--bursts", type=int, default=16)
    s.add_argument("--symbols", type=int, default=4096)
    s.add_argument("--out", default="psd_out")
    s.set_defaults(func=_cmd_psd)

    s = sub.add_parser("shaping-table", help="print (and optionally save) a LUT matcher")
    s.add_argument("--levels", type=int, default=4, help="amplitude count M_a")
    s.add_argument("-N", type=int, default=4)
    s.add_argument("-k", type=int, default=5)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_shaping_table)

    s = sub.add_parser("pnl", help="characteristic nonlinear power of a channel")
    s.add_argument("--config")
    s.add_argument("--length", type=float, help="passive fiber length in m (overrides config)")
    s.add_argument("--gamma", type=float, default=1.27, help="1/(W km)")
    s.add_argument("--alpha", type=float, default=0.2, help="dB/km")
    s.add_argument("--power", type=float, default=None, help="output power in dBm (phi_bar)")
    s.set_defaults(func=_cmd_pnl)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "pnl" and args.length is None and args.power is None:
        args.power = 40.0
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleOperatingPoint as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalFailure, FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

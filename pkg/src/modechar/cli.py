"""Command-line front end: modechar <simulate|accuracy|sign|protocol|spacing|converge>.

Every campaign writes UTF-8 CSV ('.' decimal, units suffixed in column
names) and, unless --no-plot is given, a PNG figure next to it.  Exit
codes: 0 success, 2 configuration error, 3 resource guard, 4 fit failure.
Environment: MODECHAR_THREADS caps worker threads, MODECHAR_CACHE moves the
simulation cache.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import campaigns
from .chain import builtin_dataset, load_config
from .fitting import InsensitivePairError
from .hamsim import DimensionGuardError

TWO_PI = 2 * math.pi

EXIT_CONFIG = 2
EXIT_GUARD = 3
EXIT_FIT = 4


def write_csv(path: Path, rows: list) -> None:
    if not rows:
        raise ValueError("no rows to write")
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


def _emit(args, kind: str, rows: list, stem: str | None = None) -> None:
    from . import figures

    stem = stem or kind
    out = Path(args.out)
    csv_path = out / f"{stem}.csv"
    write_csv(csv_path, rows)
    print(f"wrote {csv_path} ({len(rows)} rows)")
    if not args.no_plot:
        png_path = out / f"{stem}.png"
        if figures.render(kind, rows, png_path):
            print(f"wrote {png_path}")


def _config_from(args):
    if args.config:
        return load_config(args.config)
    if args.builtin:
        return builtin_dataset(args.builtin)
    raise ValueError("one of --config or --builtin is required")


def _add_common(p):
    p.add_argument("--config", help="chain configuration JSON file")
    p.add_argument("--builtin", type=int, help="bundled dataset size (3..7)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-plot", action="store_true", help="CSV only, no PNG")
    p.add_argument("--no-cache", action="store_true", help="bypass the simulation cache")


def _parser():
    ap = argparse.ArgumentParser(
        prog="modechar",
        description="Parallel sideband simulation and mode characterization",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="time-scan populations of one substep")
    _add_common(p)
    p.add_argument("--omega0-khz", type=float, default=10.0)
    p.add_argument("--mt", type=int, default=20, help="number of timestamps")
    p.add_argument("--substep", type=int, default=1, help="assignment substep (1-based)")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--resonant", action="store_true", help="drive on resonance (default)")
    grp.add_argument("--detuning-hz", type=float, default=0.0)
    p.add_argument("--shots", type=int, help="binomial shot sampling")

    p = sub.add_parser("accuracy", help="model error versus drive amplitude")
    _add_common(p)
    p.add_argument("--omega0-khz", type=float, nargs="+", default=[2.0, 5.0, 10.0])
    p.add_argument(
        "--model",
        nargs="+",
        default=["baseline", "m1", "m2", "m3", "m4", "m5"],
        help="models to fit",
    )
    p.add_argument("--mt", type=int, default=20)
    p.add_argument(
        "--extended",
        action="store_true",
        help="allow the long-running large-chain sweeps",
    )

    p = sub.add_parser("sign", help="two-tone coupling-sign discrimination")
    _add_common(p)
    p.add_argument("--mt", type=int, default=20)

    p = sub.add_parser("protocol", help="resource plans and protocol studies")
    _add_common(p)
    p.add_argument(
        "--campaign",
        choices=["table1", "fig6a", "fig6c"],
        default="table1",
    )
    p.add_argument("--omega0-khz", type=float, default=10.0)
    p.add_argument("--shots", type=int, nargs="+", default=[1000, 10000, 100000])
    p.add_argument("--replicas", type=int, default=50)

    p = sub.add_parser("spacing", help="error versus mode-frequency spacing")
    _add_common(p)
    p.add_argument("--factors", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0])
    p.add_argument("--omega0-khz", type=float, default=10.0)

    p = sub.add_parser("converge", help="numerical convergence harness")
    _add_common(p)
    p.add_argument("--omega0-khz", type=float, default=10.0)
    p.add_argument("--mt", type=int, default=20)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except DimensionGuardError as exc:
        print(f"error (resource guard): {exc}", file=sys.stderr)
        return EXIT_GUARD
    except InsensitivePairError as exc:
        print(f"error (fit): {exc}", file=sys.stderr)
        return EXIT_FIT
    except (ValueError, OSError) as exc:
        print(f"error (configuration): {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _dispatch(args) -> int:
    cache = not args.no_cache
    if args.command == "simulate":
        config = _config_from(args)
        omega0 = TWO_PI * args.omega0_khz * 1e3
        rows = campaigns.campaign_simulate(
            config.with_rabi(omega0),
            omega0,
            m_t=args.mt,
            detuning_hz=args.detuning_hz,
            substep=args.substep,
            shots=args.shots,
            seed=args.seed,
            cache=cache,
        )
        _emit(args, "simulate", rows)
    elif args.command == "accuracy":
        config = _config_from(args)
        if config.num_ions > 5 and min(args.omega0_khz) < 5.0 and not args.extended:
            raise ValueError(
                "weak drives on chains above five ions take hours; "
                "rerun with --extended to confirm"
            )
        rows = campaigns.campaign_accuracy(
            config, args.omega0_khz, args.model, m_t=args.mt, cache=cache
        )
        _emit(args, "accuracy", rows)
        failures = [r for r in rows if r["error"]]
        if failures and len(failures) == len(rows):
            return EXIT_FIT
    elif args.command == "sign":
        config = _config_from(args) if (args.config or args.builtin) else None
        rows = campaigns.campaign_sign(config, m_t=args.mt, cache=cache)
        _emit(args, "sign", rows)
    elif args.command == "protocol":
        config = _config_from(args) if (args.config or args.builtin) else builtin_dataset(5)
        if args.campaign == "table1":
            rows, (basic, improved) = campaigns.campaign_table1(config)
            _emit(args, "table1", rows)
            out = Path(args.out)
            for plan in (basic, improved):
                path = out / f"plan_{plan.kind}.json"
                path.write_text(plan.to_json(), encoding="utf-8")
                print(f"wrote {path}")
        elif args.campaign == "fig6a":
            omega0 = TWO_PI * args.omega0_khz * 1e3
            rows = campaigns.campaign_shot_noise(
                config.with_rabi(omega0),
                omega0,
                args.shots,
                replicas=args.replicas,
                seed=args.seed,
                cache=cache,
            )
            _emit(args, "fig6a", rows)
        else:
            rows = campaigns.campaign_tradeoff(config)
            _emit(args, "fig6c", rows)
    elif args.command == "spacing":
        config = _config_from(args) if (args.config or args.builtin) else builtin_dataset(5)
        rows = campaigns.campaign_spacing(
            config, factors=args.factors, omega0_khz=args.omega0_khz, cache=cache
        )
        _emit(args, "spacing", rows)
    elif args.command == "converge":
        config = _config_from(args) if (args.config or args.builtin) else builtin_dataset(3)
        rows = campaigns.campaign_converge(
            config, omega0_khz=args.omega0_khz, m_t=args.mt
        )
        _emit(args, "converge", rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())

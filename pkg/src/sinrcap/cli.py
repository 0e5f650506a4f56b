"""``sinrcap`` command line: run experiments, verify oracles, list presets."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, config, schemas
from .concentration import (
    run_annulus_experiment,
    run_capacity_experiment,
    run_cut_experiment,
    run_interference_experiment,
)
from .geometry import ValueOutOfRange
from .verify import run_suite

SERIES_HEADERS = {
    "interference": ["trial", "node", "J", "I"],
    "cuts": ["trial", "k", "C_k", "C_k_prime", "C_k_dprime"],
    "annulus": ["trial", "node", "count"],
}
BOUNDS_HEADER = ["quantity", "eps", "empirical_freq", "theory_bound", "stderr"]

RUNNERS = {
    "interference": run_interference_experiment,
    "cut": run_cut_experiment,
    "capacity": run_capacity_experiment,
    "annulus": run_annulus_experiment,
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_csv(path: Path, header, rows):
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _digest(path: Path) -> dict:
    data = path.read_bytes()
    return {"path": path.name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}


def _series_files(name, report, cfg):
    for key, rows in (report.series or {}).items():
        if key == "capacity":
            header = ["trial", "C_sT", *(f"dest_{i + 1}" for i in range(cfg.l))]
        else:
            header = SERIES_HEADERS[key]
        yield f"{name}_series.csv", header, rows


def cmd_run(args) -> int:
    started = _now()
    try:
        doc = config.load(args.config)
        for item in args.set or []:
            config.set_value(doc, *config.parse_override(item))
        schemas.validate(doc, schemas.RUN_DOCUMENT)
        experiments, cfg = config.build(doc)
    except config.ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except schemas.jsonschema.ValidationError as err:
        where = ".".join(str(p) for p in err.absolute_path) or "document"
        print(f"error: {where}: {err.message}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    bounds = []
    for name in experiments:
        try:
            report = RUNNERS[name](cfg)
        except ValueOutOfRange as err:
            print(f"error: {name}: config.loss/config.power: {err}", file=sys.stderr)
            return 3
        except ValueError as err:
            print(f"error: {name}: {err}", file=sys.stderr)
            return 3
        body = report.to_dict()
        schemas.validate(body, schemas.REPORT)
        path = out / f"{name}_report.json"
        path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        written.append(path)
        for fname, header, rows in _series_files(name, report, cfg):
            write_csv(out / fname, header, rows)
            written.append(out / fname)
        bounds += report.bound_rows()
        if name == "capacity":
            for suffix in ("lower", "upper"):
                bounds.append((
                    f"CodingCapacity:{suffix}:eta_plus_1",
                    report.extras[f"eps_{suffix}_eta_plus_1"],
                    report.extras[f"{suffix}_freq_eta_plus_1"],
                    report.theory_lower_bound if suffix == "lower" else report.theory_upper_bound,
                    report.lower_stderr if suffix == "lower" else report.upper_stderr,
                ))
        print(f"{name}: mean={report.empirical_mean:.6g} lower={report.lower_tail_freq:.4g} upper={report.upper_tail_freq:.4g}")
    write_csv(out / "bounds.csv", BOUNDS_HEADER, bounds)
    written.append(out / "bounds.csv")

    manifest = {
        "tool": "sinrcap",
        "version": __version__,
        "base_seed": cfg.base_seed,
        "experiments": experiments,
        "config": cfg.to_dict(),
        "started": started,
        "finished": _now(),
        "files": [_digest(p) for p in written],
    }
    schemas.validate(manifest, schemas.MANIFEST)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_verify(args) -> int:
    return 0 if run_suite(args.suite) else 1


def cmd_presets(args) -> int:
    for name, p in config.PRESETS.items():
        print(f"{name:<24} {', '.join(p['experiments']):<20} {p['description']}")
    if args.show:
        print(json.dumps(config.preset(args.show), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sinrcap", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiments of a config or preset")
    run.add_argument("--config", required=True, help="JSON config file or preset name")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a (dotted) config key; VALUE is parsed as JSON")
    run.add_argument("--out", required=True, help="output directory")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run oracle checks")
    ver.add_argument("--suite", choices=["quick", "full"], default="quick")
    ver.set_defaults(func=cmd_verify)

    pre = sub.add_parser("presets", help="list builtin configurations")
    pre.add_argument("--show", metavar="NAME", help="print one preset as a config file")
    pre.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

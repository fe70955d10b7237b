"""Command-line front end (``qnet-energy``)."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .catalog import Catalog, catalog_to_dict, default_catalog_path, load_catalog
from .errors import CatalogError, QnetEnergyError, ValidationError
from .reproduce import EXHIBITS, reproduce
from .scenario import load_scenario, rows_svg, run, to_csv, to_json

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INFEASIBLE = 2
EXIT_IO = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnet-energy", description="Energy cost of quantum network protocols.")
    p.add_argument("--catalog", help="hardware catalog TOML (default: $QNET_CATALOG or the builtin catalog)")
    p.add_argument("--measured", action="store_true", help="prefer measured powers and startup energies")
    sub = p.add_subparsers(dest="command", required=True)

    cat = sub.add_parser("catalog", help="inspect the hardware catalog")
    cat_sub = cat.add_subparsers(dest="action", required=True)
    cat_sub.add_parser("list", help="list component ids")
    show = cat_sub.add_parser("show", help="show one component")
    show.add_argument("component_id")

    r = sub.add_parser("run", help="evaluate a scenario file")
    r.add_argument("scenario")
    r.add_argument("--format", choices=("csv", "json"), help="override the scenario output format")
    r.add_argument("--svg", help="also write an SVG chart of total energy")
    r.add_argument("--out", help="write the table here instead of stdout")

    rep = sub.add_parser("reproduce", help="regenerate a published table or figure")
    rep.add_argument("exhibit", choices=sorted(EXHIBITS))
    rep.add_argument("--out", default=".", help="output directory")
    return p


def _catalog(args: argparse.Namespace) -> Catalog:
    path = args.catalog or default_catalog_path()
    cat = load_catalog(path)
    return cat.with_mode("measured_preferred") if args.measured else cat


def _cmd_catalog(args: argparse.Namespace, cat: Catalog) -> int:
    if args.action == "list":
        for cid in sorted(cat.components):
            print(f"{cid}\t{cat[cid].category}\t{cat.power(cid):g} W")
        return EXIT_OK
    cat[args.component_id]
    entry = catalog_to_dict(cat)["component"][args.component_id]
    print(json.dumps({"id": args.component_id, **entry}, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_run(args: argparse.Namespace, cat: Catalog) -> int:
    sc = load_scenario(args.scenario)
    if args.measured:
        sc = replace(sc, value_mode="measured_preferred")
    rows = run(sc, cat)
    param = sc.sweep.parameter if sc.sweep else "distance_km"
    fmt = args.format or sc.output_format
    text = to_json(rows, param) if fmt == "json" else to_csv(rows, param)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    svg_path = args.svg or sc.svg
    if svg_path:
        Path(svg_path).write_text(rows_svg(rows, param, sc.protocol.family), encoding="utf-8", newline="\n")
    if not any(r.feasible for r in rows):
        print("error: no point of the sweep can reach the target", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_reproduce(args: argparse.Namespace, cat: Catalog) -> int:
    for path in reproduce(args.exhibit, args.out, cat):
        print(path)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cat = _catalog(args)
        handler = {"catalog": _cmd_catalog, "run": _cmd_run, "reproduce": _cmd_reproduce}[args.command]
        return handler(args, cat)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, CatalogError, QnetEnergyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        # unreadable catalog files surface as catalog errors caused by an OSError
        return EXIT_IO if isinstance(exc.__cause__, OSError) else EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""
Command-line entry point.

Every subcommand except ``predict`` and ``serve`` writes a report directory
``<reports>/<command>-<UTC timestamp>/`` holding JSON and CSV payloads plus a
``manifest.json`` that indexes them::

    {
      "schema": 1,
      "command": "evaluate",
      "wifiloc_version": "0.1.0",
      "seed": 42,
      "arguments": {...},          # every flag, as parsed
      "summary": {...},            # the numbers behind the printed line
      "files": [{"name": "report.json", "bytes": 1234, "sha256": "..."}, ...]
    }

The timestamp appears only in the directory name, so the same flags and seed
give byte-identical payloads and manifests.

Exit codes: 0 success, 2 usage error, 3 data error, 4 training error,
5 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .classifiers import make_classifier
from .ensemble import (
    EnsembleConfig,
    holdout_accuracy,
    load_bundle,
    localize,
    save_bundle_file,
    train_bundle,
)
from .errors import DataError, FeatureSpaceMismatch, TrainingError
from .evaluation import (
    EvalReport,
    ap_ablation,
    evaluate_repeated,
    export_report,
    subsample_curve,
)
from .fingerprints import Band, BandProfile, Fingerprint, filter_to_band
from .io import IngestReport, dataset_digest, load_dataset, load_store, parse_scan, save_store
from .synthetic import generate_synthetic, grid_config, museum_like_config

logger = logging.getLogger("wifiloc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING, EXIT_IO = 0, 2, 3, 4, 5
DEFAULT_SEED = 42
MANIFEST_SCHEMA = 1


# -- report directories -------------------------------------------------------

class ReportDir:
    def __init__(self, root, command: str):
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
        path = Path(root) / f"{command}-{stamp}"
        n = 1
        while path.exists():
            path = Path(root) / f"{command}-{stamp}-{n}"
            n += 1
        path.mkdir(parents=True)
        self.path = path
        self.command = command

    def write_json(self, name: str, obj) -> Path:
        p = self.path / name
        p.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
        return p

    def write_csv(self, name: str, header, rows) -> Path:
        p = self.path / name
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        return p

    def finish(self, args: argparse.Namespace, summary: dict) -> Path:
        files = []
        for p in sorted(self.path.iterdir()):
            if p.is_file() and p.name != "manifest.json":
                data = p.read_bytes()
                files.append({"name": p.name, "bytes": len(data),
                              "sha256": hashlib.sha256(data).hexdigest()})
        return self.write_json("manifest.json", {
            "schema": MANIFEST_SCHEMA,
            "command": self.command,
            "wifiloc_version": __version__,
            "seed": getattr(args, "seed", None),
            "arguments": _echo(args),
            "summary": summary,
            "files": files,
        })


def _echo(args: argparse.Namespace) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "verbose"):
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


# -- argument helpers ---------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _float_list(text: str) -> list[float]:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _band(text: str) -> str:
    try:
        return BandProfile.parse(text).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _ensemble_config(args) -> EnsembleConfig:
    raw = {}
    if getattr(args, "ensemble_config", None):
        try:
            raw = json.loads(Path(args.ensemble_config).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.ensemble_config}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise DataError("ensemble config must be a JSON object")
    if getattr(args, "no_clamp", False):
        raw["clamp_negative_youden"] = False
    try:
        config = EnsembleConfig.from_dict(raw)
        for alg in config.algorithms:
            make_classifier(alg, **config.hyperparameters.get(alg, {}))
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid ensemble config: {exc}") from None
    return config


def _fmt(stats) -> str:
    return f"mean={stats.mean:.4f} q25={stats.q25:.4f} q75={stats.q75:.4f}"


# -- subcommands --------------------------------------------------------------

def cmd_ingest(args) -> tuple[str, dict]:
    report = IngestReport()
    ds = load_dataset(args.input, args.format, args.registry, report)
    save_store(ds, args.out)
    rd = ReportDir(args.reports, "ingest")
    digest = dataset_digest(ds)
    summary = {"fingerprints": len(ds), "locations": len(ds.locations),
               "radios": len(ds.registry), "digest": digest, **report.as_dict()}
    rd.write_json("ingest.json", summary)
    rd.write_csv("per_location.csv", ["location", "name", "fingerprints"],
                 [[k, ds.locations[k], n] for k, n in sorted(ds.counts().items())])
    rd.finish(args, summary)
    line = (f"ingest: {len(ds.locations)} locations, {len(ds)} fingerprints, "
            f"{len(ds.registry)} radios; dropped {report.dropped_empty} scans, "
            f"{report.unknown_radio_readings} unknown-radio readings; digest {digest[:12]} "
            f"-> {args.out} (report {rd.path})")
    return line, summary


def cmd_synth(args) -> tuple[str, dict]:
    if args.layout == "museum":
        cfg = museum_like_config(seed=args.seed, **({"sigma_db": args.sigma} if args.sigma is not None else {}))
    else:
        cfg = grid_config(cells=args.cells, aps=args.aps,
                          sigma_db=6.0 if args.sigma is None else args.sigma,
                          samples=args.samples, seed=args.seed, dual_band=not args.single_band)
    ds = generate_synthetic(cfg)
    save_store(ds, args.out)
    rd = ReportDir(args.reports, "synth")
    summary = {"fingerprints": len(ds), "locations": len(ds.locations), "radios": len(ds.registry),
               "sigma_db": cfg.sigma_db, "digest": dataset_digest(ds)}
    rd.write_json("synth.json", summary)
    rd.finish(args, summary)
    return (f"synth: {len(ds.locations)} locations, {len(ds)} fingerprints, "
            f"{len(ds.registry)} radios, sigma {cfg.sigma_db:g} dB, seed {args.seed} "
            f"-> {args.out} (report {rd.path})"), summary


def cmd_train(args) -> tuple[str, dict]:
    ds = load_store(args.store)
    config = _ensemble_config(args)
    config.jobs = args.jobs
    bundle = train_bundle(ds, config, args.seed)
    save_bundle_file(bundle, args.model)
    rd = ReportDir(args.reports, "train")
    acc = {"dual": holdout_accuracy(bundle.dual, ds),
           "2.4-only": holdout_accuracy(bundle.only24, filter_to_band(ds, Band.GHZ24))}
    summary = {"test_accuracy": acc, "feature_space_sizes": {
        "dual": len(bundle.dual.feature_space), "only24": len(bundle.only24.feature_space)},
        "dataset_digest": dataset_digest(ds)}
    rd.write_json("training.json", {**summary, "config": config.to_dict(),
                                    "dual": bundle.dual.report, "2.4-only": bundle.only24.report})
    for name, meta in (("dual", bundle.dual), ("only24", bundle.only24)):
        rd.write_csv(f"youden_{name}.csv", ["algorithm", *(int(c) for c in meta.classes)],
                     [[a, *(repr(float(v)) for v in row)] for a, row in zip(meta.algorithms, meta.youden)])
    rd.finish(args, summary)
    return (f"train: seed {args.seed}, test accuracy dual={acc['dual']:.4f} "
            f"2.4-only={acc['2.4-only']:.4f} -> {args.model} (report {rd.path})"), summary


def cmd_evaluate(args) -> tuple[str, dict]:
    ds = load_store(args.store)
    config = _ensemble_config(args)
    res = evaluate_repeated(ds, args.band, config, args.repeats, args.seed, args.jobs)
    report = EvalReport.from_repeated(res, args.band, args.repeats, args.seed, config)
    rd = ReportDir(args.reports, "evaluate")
    export_report(report, "json", rd.path / "report.json")
    export_report(report, "csv", rd.path)
    mass = report.confusion.off_diagonal_mass()
    summary = {**res.stats.summary(), "band": args.band,
               "model_means": {a: s.mean for a, s in res.model_stats.items()},
               "most_confused": sorted(mass, key=lambda k: (-mass[k], k))[:3]}
    rd.finish(args, summary)
    return (f"evaluate: band {args.band}, {args.repeats} repeats, seed {args.seed}: "
            f"{_fmt(res.stats)} (report {rd.path})"), summary


def cmd_ablate(args) -> tuple[str, dict]:
    ds = load_store(args.store)
    config = _ensemble_config(args)
    points = ap_ablation(ds, args.ap_counts, config, args.repeats, args.seed, args.band,
                         args.threshold, args.jobs)
    report = EvalReport("ablate", args.band, args.repeats, args.seed, curve=points,
                        config=config.to_dict())
    rd = ReportDir(args.reports, "ablate")
    export_report(report, "json", rd.path / "report.json")
    export_report(report, "csv", rd.path)
    rd.write_csv("coverage.csv", ["aps", "location", "covering_aps"],
                 [[int(p.x), loc, n] for p in points for loc, n in p.info["covering_aps"].items()])
    summary = {"curve": {str(int(p.x)): p.stats.mean for p in points},
               "min_covering_aps": {str(int(p.x)): p.info["min_covering_aps"] for p in points}}
    rd.finish(args, summary)
    last = points[-1]
    return (f"ablate: band {args.band}, {len(points)} AP counts, seed {args.seed}; "
            f"at {int(last.x)} APs {_fmt(last.stats)}, min covering APs "
            f"{last.info['min_covering_aps']} (report {rd.path})"), summary


def cmd_subsample(args) -> tuple[str, dict]:
    ds = load_store(args.store)
    config = _ensemble_config(args)
    points = subsample_curve(ds, args.fractions, config, args.repeats, args.seed, args.band,
                             args.jobs)
    report = EvalReport("subsample", args.band, args.repeats, args.seed, curve=points,
                        config=config.to_dict())
    rd = ReportDir(args.reports, "subsample")
    export_report(report, "json", rd.path / "report.json")
    export_report(report, "csv", rd.path)
    summary = {"curve": {f"{p.x:g}": p.stats.mean for p in points}}
    rd.finish(args, summary)
    last = points[-1]
    return (f"subsample: band {args.band}, {len(points)} fractions, seed {args.seed}; "
            f"at {last.x:g} {_fmt(last.stats)} (report {rd.path})"), summary


def cmd_predict(args) -> tuple[str, dict]:
    bundle = load_bundle(args.model)
    text = sys.stdin.read() if args.input == "-" else Path(args.input).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"fingerprint is not valid JSON: {exc}") from None
    scan = parse_scan(obj)
    result = localize(bundle, Fingerprint(scan.signals, None, scan.device_id, scan.ts_ms))
    out = {"location": result.location, "name": bundle.locations.get(result.location),
           "band": result.band.value, "scores": {str(k): v for k, v in result.scores.items()}}
    return json.dumps(out, sort_keys=True), out


def cmd_serve(args) -> tuple[str, dict]:
    from .service import load_config, serve

    config = load_config(args.config, data_dir=args.data_dir, listen=args.listen, token=args.token)
    serve(config)
    return "serve: stopped", {}


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wifiloc", allow_abbrev=False,
        description="Wi-Fi fingerprint localization: ingest, train, evaluate, serve.")
    p.add_argument("--version", action="version", version=f"wifiloc {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_, func):
        sp = sub.add_parser(name, help=help_, description=help_, allow_abbrev=False)
        sp.set_defaults(func=func)
        return sp

    def reports(sp):
        sp.add_argument("--reports", type=Path, default=Path("reports"),
                        help="parent directory for the timestamped report (default: reports)")

    def seed(sp):
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help=f"random seed (default: {DEFAULT_SEED})")

    def ensemble(sp, band=True):
        sp.add_argument("--store", type=Path, required=True, help="fingerprint store directory")
        if band:
            sp.add_argument("--band", type=_band, default="dual",
                            help="feature set: dual or 2.4 (default: dual)")
            sp.add_argument("--repeats", type=_positive, default=10,
                            help="repeated random splits (default: 10)")
        sp.add_argument("--jobs", type=_positive, default=1,
                        help="parallel workers (default: 1)")
        sp.add_argument("--ensemble-config", type=Path,
                        help="JSON with algorithms, hyperparameters, clamp_negative_youden")
        sp.add_argument("--no-clamp", action="store_true",
                        help="keep negative informedness weights instead of clamping them to 0")
        seed(sp)
        reports(sp)

    sp = add("ingest", "normalize raw scans into a fingerprint store", cmd_ingest)
    sp.add_argument("--in", dest="input", type=Path, required=True, help="input file")
    sp.add_argument("--format", choices=("jsonl", "csv", "find3"), default="jsonl",
                    help="input format (default: jsonl)")
    sp.add_argument("--registry", type=Path,
                    help="radio registry CSV (mac,band[,ap]); optional when scans carry bands")
    sp.add_argument("--out", type=Path, required=True, help="store directory to write")
    reports(sp)

    sp = add("synth", "generate a synthetic fingerprint store", cmd_synth)
    sp.add_argument("--layout", choices=("grid", "museum"), default="grid",
                    help="grid of square cells or the 16-area gallery floor (default: grid)")
    sp.add_argument("--cells", type=_positive, default=4, help="grid cells (default: 4)")
    sp.add_argument("--aps", type=_positive, default=3, help="grid access points (default: 3)")
    sp.add_argument("--sigma", type=float, help="shadowing noise in dB (default: 6)")
    sp.add_argument("--samples", type=_positive, default=200,
                    help="scans per grid cell (default: 200)")
    sp.add_argument("--single-band", action="store_true", help="2.4 GHz radios only")
    sp.add_argument("--out", type=Path, required=True, help="store directory to write")
    seed(sp)
    reports(sp)

    sp = add("train", "train a localizer bundle on a store", cmd_train)
    ensemble(sp, band=False)
    sp.add_argument("--model", type=Path, required=True, help="bundle file to write (.npz)")

    sp = add("evaluate", "repeated-split accuracy of the meta-learner", cmd_evaluate)
    ensemble(sp)

    sp = add("ablate", "accuracy as the most redundant APs are removed", cmd_ablate)
    ensemble(sp)
    sp.add_argument("--ap-counts", type=_int_list, required=True,
                    help="comma-separated AP counts, e.g. 15,14,13,12,11,10")
    sp.add_argument("--threshold", type=float, default=-90.0,
                    help="visibility threshold in dBm for coverage (default: -90)")

    sp = add("subsample", "accuracy on stratified fractions of the store", cmd_subsample)
    ensemble(sp)
    sp.add_argument("--fractions", type=_float_list, required=True,
                    help="comma-separated fractions in (0, 1], e.g. 0.2,0.4,0.6")

    sp = add("predict", "localize one fingerprint JSON with a trained bundle", cmd_predict)
    sp.add_argument("--model", type=Path, required=True, help="bundle file (.npz)")
    sp.add_argument("--in", dest="input", default="-",
                    help="fingerprint JSON file, or - for standard input (default: -)")

    sp = add("serve", "run the HTTP localization service", cmd_serve)
    sp.add_argument("--config", type=Path, help="service config JSON")
    sp.add_argument("--data-dir", help="data directory (overrides config)")
    sp.add_argument("--listen", help="host:port (overrides config)")
    sp.add_argument("--token", help="bearer token (overrides config)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        line, _ = args.func(args)
    except TrainingError as exc:
        print(f"wifiloc: training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (DataError, FeatureSpaceMismatch) as exc:
        print(f"wifiloc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"wifiloc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

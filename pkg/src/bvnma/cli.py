"""Command-line interface: ``bvnma {fit,cv,simulate,compare}``.

Exit codes: 0 success, 2 usage error, 3 data validation error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .data_model import DataValidationError, read_dataset, serialize_dataset
from .models import VARIANTS, ModelSpec, SurrogateModel
from .prediction import (
    cross_validate,
    forest_csv,
    predictions_csv,
    stats_csv,
    surrogacy_report,
)
from .sampler import McmcSettings, SamplerError, run_mcmc, summarize
from .simulation import BUILTINS, ScenarioSpec, builtin_scenario, simulate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("bvnma")


class UsageError(Exception):
    pass


def atomic_write(path: str, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def with_config_header(config: dict, table: str) -> str:
    return f"# config: {json.dumps(config, sort_keys=True)}\n" + table


def read_table(path: str) -> list[dict]:
    """Read a CSV written by this tool, skipping ``#`` comment lines."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_config_header(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith("# config: "):
        raise UsageError(f"{path} has no embedded config")
    return json.loads(first[len("# config: "):])


def _settings(args) -> McmcSettings:
    return McmcSettings(n_chains=args.chains, n_warmup=args.warmup, n_samples=args.samples,
                        thin=args.thin, seed=args.seed, n_jobs=args.jobs)


def _model_spec(args) -> ModelSpec:
    spec = ModelSpec(args.model)
    if args.prior_overrides:
        try:
            with open(args.prior_overrides, encoding="utf-8") as fh:
                overrides = json.load(fh)
            spec = spec.with_overrides(overrides)
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as e:
            raise UsageError(f"invalid --prior-overrides: {e}") from None
    return spec


def _load(args):
    if not os.path.exists(args.data):
        raise UsageError(f"data file not found: {args.data}")
    return read_dataset(args.data, reference=args.reference)


def _base_config(args, dataset, spec, settings) -> dict:
    return {
        "command": args.command,
        "version": __version__,
        "data": os.path.abspath(args.data),
        "dataset_sha256": dataset.content_hash(),
        "reference": dataset.network.reference,
        "model": spec.to_dict(),
        "mcmc": {k: getattr(settings, k) for k in settings.__dataclass_fields__},
    }


def cmd_fit(args) -> int:
    dataset = _load(args)
    spec = _model_spec(args)
    settings = _settings(args)
    if spec.variant != "brma" and dataset.network.n_treatments < 3:
        log.warning("%s on a 2-treatment network is equivalent to BRMA up to priors",
                    spec.variant)
    config = _base_config(args, dataset, spec, settings)
    model = SurrogateModel(dataset, spec)
    draws = run_mcmc(model, settings)
    summary = summarize(draws)
    report = surrogacy_report(draws)
    out = args.out
    body = {"config": config, **summary.as_dict()}
    atomic_write(os.path.join(out, "summary.json"), json.dumps(body, indent=1, default=float))
    atomic_write(os.path.join(out, "draws.csv"), with_config_header(config, draws.to_csv()))
    atomic_write(os.path.join(out, "surrogacy.csv"), with_config_header(config, report.to_csv()))
    print(f"wrote {out}/summary.json, draws.csv, surrogacy.csv")
    return EXIT_OK


def _baseline_widths(path: str, dataset_hash: str) -> dict[str, float]:
    pred_path = os.path.join(path, "predictions.csv") if os.path.isdir(path) else path
    if not os.path.exists(pred_path):
        raise UsageError(f"baseline predictions not found: {pred_path}")
    cfg = read_config_header(pred_path)
    if cfg.get("dataset_sha256") != dataset_hash:
        raise UsageError(
            f"baseline run used a different dataset: {cfg.get('dataset_sha256')} vs {dataset_hash}"
        )
    rows = read_table(pred_path)
    return {r["study_id"]: float(r["upper"]) - float(r["lower"]) for r in rows}


def cmd_cv(args) -> int:
    dataset = _load(args)
    spec = _model_spec(args)
    settings = _settings(args)
    config = _base_config(args, dataset, spec, settings)
    widths = None
    if args.baseline:
        widths = _baseline_widths(args.baseline, config["dataset_sha256"])
        config["baseline"] = os.path.abspath(args.baseline)
    result = cross_validate(dataset, spec, settings, baseline=widths)
    if widths is not None:
        own = {p.study_id for p in result.predictions}
        only_model = sorted(own - set(widths))
        only_base = sorted(set(widths) - own)
        if only_model or only_base:
            msg = (f"baseline covers a different study set; only in this run: {only_model}; "
                   f"only in baseline: {only_base}")
            log.warning(msg)
            config["baseline_study_diff"] = {"only_run": only_model, "only_baseline": only_base}
    out = args.out
    atomic_write(os.path.join(out, "predictions.csv"),
                 with_config_header(config, predictions_csv(result.predictions)))
    atomic_write(os.path.join(out, "stats.csv"), with_config_header(config, stats_csv([result])))
    atomic_write(os.path.join(out, "forest.csv"),
                 with_config_header(config, forest_csv(result.predictions)))
    cvj = {"config": config, "overall": result.overall.as_dict(),
           "per_contrast": {k: v.as_dict() for k, v in result.per_contrast.items()},
           "skipped": result.skipped}
    atomic_write(os.path.join(out, "cv.json"), json.dumps(cvj, indent=1))
    print(f"wrote {out}/predictions.csv, stats.csv, forest.csv, cv.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if bool(args.builtin) == bool(args.spec):
        raise UsageError("give exactly one of --builtin or --spec")
    if args.builtin:
        try:
            spec = builtin_scenario(args.builtin, seed=args.seed)
        except ValueError as e:
            raise UsageError(str(e)) from None
    else:
        try:
            with open(args.spec, encoding="utf-8") as fh:
                spec = ScenarioSpec.from_json(fh.read()).with_seed(args.seed)
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DataValidationError(f"invalid scenario spec: {e}") from None
    dataset = simulate(spec)
    text = serialize_dataset(dataset, "csv")
    if args.out:
        atomic_write(os.path.join(args.out, "dataset.csv"), text)
        atomic_write(os.path.join(args.out, "scenario.json"), spec.to_json() + "\n")
        print(spec.to_json())
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _load_run(path: str) -> dict:
    run = {"path": path}
    summ = os.path.join(path, "summary.json")
    cvj = os.path.join(path, "cv.json")
    if os.path.exists(summ):
        with open(summ, encoding="utf-8") as fh:
            run["summary"] = json.load(fh)
    if os.path.exists(cvj):
        with open(cvj, encoding="utf-8") as fh:
            run["cv"] = json.load(fh)
        run["widths"] = {r["study_id"]: float(r["upper"]) - float(r["lower"])
                         for r in read_table(os.path.join(path, "predictions.csv"))}
    if "summary" not in run and "cv" not in run:
        raise UsageError(f"{path} holds neither summary.json nor cv.json")
    cfgs = [run[k]["config"] for k in ("summary", "cv") if k in run]
    hashes = {c["dataset_sha256"] for c in cfgs}
    if len(hashes) > 1:
        raise UsageError(f"{path}: fit and cv outputs disagree on the dataset")
    run["hash"] = hashes.pop()
    run["model"] = cfgs[0]["model"]["variant"]
    return run


def cmd_compare(args) -> int:
    if len(args.runs) < 2:
        raise UsageError("compare needs at least two run directories")
    runs = [_load_run(p) for p in args.runs]
    hashes = {r["hash"] for r in runs}
    if len(hashes) > 1:
        lines = "\n".join(f"  {r['path']}: {r['hash']}" for r in runs)
        raise DataValidationError(f"runs use different datasets:\n{lines}")
    base_idx = args.baseline_index
    if not 0 <= base_idx < len(runs):
        raise UsageError("--baseline-index out of range")
    base_w = runs[base_idx].get("widths")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "model", "dic", "pd", "dbar", "p_overlap", "mean_abs_diff",
                "width_ratio", "pi", "pct_red"])
    for r in runs:
        s = r.get("summary", {})
        row = [r["path"], r["model"], s.get("dic", ""), s.get("pd", ""), s.get("dbar", "")]
        if "cv" in r:
            o = r["cv"]["overall"]
            pct = ""
            if base_w is not None:
                common = [k for k in r["widths"] if k in base_w]
                if common:
                    pct = float(np.mean([100.0 * (base_w[k] - r["widths"][k]) / base_w[k]
                                         for k in common]))
            row += [o["p_overlap"], o["mean_abs_diff"], o["width_ratio"], o["pi_score"], pct]
        else:
            row += ["", "", "", "", ""]
        w.writerow(row)
    config = {"command": "compare", "version": __version__, "runs": args.runs,
              "baseline": args.runs[base_idx], "dataset_sha256": hashes.pop()}
    text = with_config_header(config, buf.getvalue())
    if args.out:
        atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def _add_mcmc(p, out_required=True):
    p.add_argument("--data", required=True, help="dataset CSV or JSON")
    p.add_argument("--model", required=True, choices=VARIANTS)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=10000)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1, help="processes for chains")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--reference", help="reference treatment label")
    p.add_argument("--prior-overrides", help="JSON file with ModelSpec field overrides")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bvnma", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    _add_mcmc(sub.add_parser("fit", help="fit one model and summarize the posterior"))
    p = sub.add_parser("cv", help="take-one-out cross-validation")
    _add_mcmc(p)
    p.add_argument("--baseline", help="earlier cv run (directory or predictions.csv) for %%red")
    p = sub.add_parser("simulate", help="generate a scenario dataset")
    p.add_argument("--builtin", choices=sorted(BUILTINS))
    p.add_argument("--spec", help="scenario JSON file")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", help="output directory (default: CSV to stdout)")
    p = sub.add_parser("compare", help="side-by-side table of fit/cv runs")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--baseline-index", type=int, default=0,
                   help="run used as %%red baseline (default: first)")
    p.add_argument("--out", help="write the table to this file as well")
    return ap


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "simulate": cmd_simulate, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        for name in ("chains", "warmup", "samples", "thin", "jobs"):
            if getattr(args, name, 1) < 1:
                raise UsageError(f"--{name} must be >= 1")
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataValidationError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (SamplerError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

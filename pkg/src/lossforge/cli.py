"""Command-line entry point: gen-data, run, sweep, verify, report."""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, config, data, experiments
from .errors import ConfigError, DivergenceError

log = logging.getLogger("lossforge")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_VERIFY = 0, 2, 3, 4

METRIC_FIELDS = ["mode", "seed", "std_err", "balanced_err", "group_balanced_err", "deo",
                 "worst_cell_err", "per_class_err"]
PARETO_FIELDS = ["method", "lambda", "seeds", "std_err", "deo", "balanced_err",
                 "group_balanced_err", "worst_cell_err", "frontier"]
RUN_FIELDS = ["method", "lambda", "seed", "std_err", "deo", "balanced_err",
              "group_balanced_err", "worst_cell_err"]


def _setup_logging():
    level = os.environ.get("LOSSFORGE_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def _load(args):
    return config.load(args.config) if args.config else config.from_dict({})


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(f)) for f in fields])


def _write_meta(path, cfg, command):
    meta = {
        "command": command,
        "started": dt.datetime.now(dt.timezone.utc).isoformat(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(cfg, out, seeds):
    out = Path(out)
    for seed in seeds:
        sp, test = experiments.build_data(cfg, seed)
        full = sp.union()
        tag = f"seed{seed}"
        data.save_dataset(full, out / f"train-{tag}.csv", {"config": cfg["data"], "root_seed": seed})
        data.save_dataset(test, out / f"test-{tag}.csv", {"config": cfg["data"], "root_seed": seed})
        split_idx = {"train": sp.train_index.tolist(), "val": sp.val_index.tolist(),
                     "split_fraction": sp.split_fraction}
        (out / f"split-{tag}.json").write_text(json.dumps(split_idx) + "\n")
        log.info("wrote data for seed %d to %s", seed, out)
    return EXIT_OK


def run_dir(out, cfg, seed):
    return Path(out) / f"{cfg['name']}-seed{seed}"


def cmd_run(cfg, out, seeds):
    for seed in seeds:
        rd = run_dir(out, cfg, seed)
        rd.mkdir(parents=True, exist_ok=True)
        _write_meta(rd / "meta.json", cfg, "run")
        res = experiments.run_single(cfg, seed)
        (rd / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
        (rd / "alpha.json").write_text(res["params"].dumps())
        (rd / "alpha_init.json").write_text(res["init"].dumps())
        (rd / "runlog.jsonl").write_text(res["log"].to_jsonl())
        rep = res["report"].to_json()
        _write_csv(rd / "metrics.csv", METRIC_FIELDS, [{"mode": cfg["mode"], "seed": seed, **rep}])
        print(json.dumps({"run_dir": str(rd), **rep}, sort_keys=True))
    return EXIT_OK


def cmd_sweep(cfg, out, seeds, jobs, lambdas=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_meta(out / "sweep-meta.json", cfg, "sweep")
    rows = experiments.sweep(cfg, lambdas=lambdas, seeds=seeds, jobs=jobs)
    _write_csv(out / "runs.csv", RUN_FIELDS, rows)
    avg = experiments.average_rows(rows)
    _write_csv(out / "pareto.csv", PARETO_FIELDS, avg)
    hv, ref = experiments.hypervolumes(avg)
    summary = {"hypervolume": hv, "reference": list(ref)}
    (out / "hypervolume.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_verify(which, out=None):
    from .verify import checks

    result = checks.run(which)
    text = json.dumps(result, indent=2, sort_keys=True, default=float)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / f"verify-{which}.json").write_text(text + "\n")
    print(text)
    return EXIT_OK if result["pass"] else EXIT_VERIFY


def cmd_report(out):
    """Collect every ``*/metrics.csv`` under ``out`` into ``summary.csv``."""
    out = Path(out)
    rows = []
    for path in sorted(out.glob("*/metrics.csv")):
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rows.append({"run": path.parent.name, **r})
    if not rows:
        raise ConfigError(f"no run directories with metrics.csv under {out}")
    fields = ["run"] + METRIC_FIELDS
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{r['run']:30s} std={float(r['std_err']):.4f} bal={float(r['balanced_err']):.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="lossforge", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=True):
        sp.add_argument("--config", type=str, default=None, help="YAML or JSON config")
        sp.add_argument("--out", type=str, default=None, help="output directory")
        if seeds:
            sp.add_argument("--seed", type=int, nargs="+", default=None,
                            help="root seed(s); overrides the config")
        sp.add_argument("--jobs", type=int, default=1)

    common(sub.add_parser("gen-data", help="write dataset CSV + JSON sidecars"))
    common(sub.add_parser("run", help="search + retrain, or a baseline"))
    sw = sub.add_parser("sweep", help="lambda sweep on group data; writes pareto.csv")
    common(sw)
    sw.add_argument("--lambdas", type=float, nargs="+", default=None)
    vf = sub.add_parser("verify", help="theory checks; exit 4 on failure")
    vf.add_argument("which", nargs="?", default="all",
                    choices=["lemma1", "lemma2", "neumann", "hypergrad", "theorem1", "all"])
    common(vf, seeds=False)
    common(sub.add_parser("report", help="summarize run directories"), seeds=False)
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.which, args.out)
        if args.command == "report":
            return cmd_report(args.out or "runs")
        cfg = _load(args)
        out = args.out or cfg["output"]["dir"]
        if args.command == "gen-data":
            return cmd_gen_data(cfg, out, args.seed or [cfg["data"]["seed"]])
        if args.command == "run":
            return cmd_run(cfg, out, args.seed or [cfg["data"]["seed"]])
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.seed, args.jobs, args.lambdas)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged at epoch {exc.epoch}: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""``graphids`` command line: synth, ingest, train, evaluate, score, ablate, plot.

Every command writes into a run directory. Relative ``--out`` paths are
resolved against ``$GRAPHIDS_HOME`` when it is set. On failure a single line
``graphids-error: {"command": ..., "type": ..., "message": ...}`` goes to
stderr and the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

HOME_ENV = "GRAPHIDS_HOME"
DATASET_FILE = "dataset.json"
MANIFEST_FILE = "manifest.json"
SCALER_FILE = "scaler.json"
CHECKPOINT_FILE = "checkpoint.pt"
REPORT_FILE = "report.json"

log = logging.getLogger("graphids")


class CommandError(RuntimeError):
    """A failure the user can fix (bad input, missing run files)."""


def _out_path(value: str | None, default: str) -> Path:
    p = Path(value or default)
    home = os.environ.get(HOME_ENV)
    if home and not p.is_absolute():
        p = Path(home) / p
    return p


def _read_mapping(path: str) -> dict:
    import yaml

    data = yaml.safe_load(Path(path).read_text())  # JSON is valid YAML
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise CommandError(f"{path}: expected a mapping")
    return data


def _parse_value(text: str):
    import yaml

    return yaml.safe_load(text)


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise CommandError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = _parse_value(value)
    return out


# --- run directory -----------------------------------------------------------

def _load_run(run_dir: Path):
    """Re-read a run's flow table and split exactly as ``ingest`` recorded them."""
    from graphids.ingest import SplitManifest, build_split, parse_csv

    meta_path = run_dir / DATASET_FILE
    if not meta_path.exists():
        raise CommandError(f"{run_dir}: not an ingested run directory (no {DATASET_FILE})")
    meta = json.loads(meta_path.read_text())
    table = parse_csv(meta["input"], meta["schema"], meta["timestamps"], meta["strict"])
    if len(table) != meta["stats"]["flows"]:
        raise CommandError(f"{meta['input']} changed since ingest "
                           f"({len(table)} flows, expected {meta['stats']['flows']})")
    manifest = SplitManifest.load(run_dir / MANIFEST_FILE)
    return meta, table, build_split(table, manifest)


# --- commands ----------------------------------------------------------------

def cmd_synth(args) -> None:
    from graphids.synth import SynthSpec, write_csv

    fields = _read_mapping(args.spec) if args.spec else {}
    for key in ("n_hosts", "n_flows", "anomaly_ratio", "n_features", "seed"):
        value = getattr(args, key)
        if value is not None:
            fields[key] = value
    if args.kinds:
        fields["kinds"] = tuple(args.kinds.split(","))
    try:
        spec = SynthSpec(**fields)
    except TypeError as exc:
        raise CommandError(f"bad synth spec: {exc}") from None
    out = _out_path(args.out, "synth.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    table = write_csv(spec, out)
    s = table.stats()
    print(f"wrote {out}: flows={s['flows']}, hosts={s['hosts']}, "
          f"anomaly_ratio={s['anomaly_ratio']:.4f}")


def cmd_ingest(args) -> None:
    from graphids.ingest import parse_csv, prepare_split

    timestamps = args.timestamps == "on"
    table = parse_csv(args.input, args.schema, timestamps, strict=not args.reduced)
    split = prepare_split(table, seed=args.split_seed)
    out = _out_path(args.out, "run")
    out.mkdir(parents=True, exist_ok=True)
    split.manifest.save(out / MANIFEST_FILE)
    split.scaler.save(out / SCALER_FILE)
    stats = table.stats()
    meta = {"input": str(Path(args.input).resolve()), "schema": args.schema,
            "timestamps": timestamps, "strict": not args.reduced, "split_seed": args.split_seed,
            "feature_names": list(table.feature_names), "stats": stats,
            "counts": {"train": len(split.train), "val": len(split.val), "test": len(split.test),
                       "discarded": len(split.manifest.discarded)}}
    (out / DATASET_FILE).write_text(json.dumps(meta, indent=1))
    print(f"flows={stats['flows']}, hosts={stats['hosts']}, "
          f"anomaly_ratio={stats['anomaly_ratio']:.4f}")
    c = meta["counts"]
    print(f"train={c['train']} val={c['val']} test={c['test']} discarded={c['discarded']}")


def cmd_train(args) -> None:
    from graphids.config import load_config
    from graphids.training import save_checkpoint, train

    config = load_config(args.config)
    over = _overrides(args.set)
    if over:
        try:
            config = config.override(**over)
        except TypeError as exc:
            raise CommandError(f"bad --set override: {exc}") from None
    run_dir = Path(args.data)
    _, _, split = _load_run(run_dir)
    print(f"config fingerprint={config.fingerprint()} seed={config.seed}", flush=True)
    t0 = time.perf_counter()

    def progress(row):
        if not args.quiet:
            print(f"epoch {row['epoch']:3d} loss={row['train_loss']:.6g} "
                  f"val_pr_auc={row['val_pr_auc']:.4f}", flush=True)

    result = train(config, split, progress)
    out = _out_path(args.out, str(run_dir / CHECKPOINT_FILE))
    save_checkpoint(result.checkpoint, out)
    print(f"best_epoch={result.best_epoch} val_pr_auc={result.checkpoint.val_pr_auc:.4f} "
          f"runtime_s={time.perf_counter() - t0:.1f} checkpoint={out}")


def _write_scores(path: Path, split_name: str, scored, mode: str = "w") -> None:
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh)
        if mode == "w":
            w.writerow(["split", "score", "label", "attack_type"])
        for s, y, t in zip(scored.scores, scored.labels, scored.attack_types):
            w.writerow([split_name, repr(float(s)), int(y), t])


def cmd_evaluate(args) -> None:
    from graphids.detection import report_from_scores, score_flows
    from graphids.training import load_checkpoint

    _, table, split = _load_run(Path(args.data))
    ckpt = load_checkpoint(args.checkpoint, expected_feature_dim=table.n_features)
    model = ckpt.build_model()
    val = score_flows(ckpt, split.val, model)
    test = score_flows(ckpt, split.test, model)
    report = report_from_scores(val, test, ckpt.fingerprint, ckpt.config.variant)
    out = _out_path(args.out, str(Path(args.checkpoint).parent))
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / REPORT_FILE)
    report.write_pr_csv(out / "pr_curve.csv")
    _write_scores(out / "scores.csv", "val", val)
    _write_scores(out / "scores.csv", "test", test, mode="a")
    print(f"pr_auc={report.pr_auc:.4f} macro_f1={report.macro_f1:.4f}")
    print(f"threshold={report.threshold:.6g} val_pr_auc={report.val_pr_auc:.4f} "
          f"fingerprint={report.fingerprint} report={out / REPORT_FILE}")


def cmd_score(args) -> None:
    from graphids.detection import score_flows
    from graphids.ingest import parse_csv
    from graphids.training import load_checkpoint

    ckpt = load_checkpoint(args.checkpoint)
    scaler = ckpt.feature_scaler()
    table = parse_csv(args.flows, args.schema, args.timestamps == "on", strict=not args.reduced)
    if list(table.feature_names) != list(ckpt.feature_names):
        raise CommandError("flow columns differ from the training features: "
                           f"{table.feature_names} vs {ckpt.feature_names}")
    scored = score_flows(ckpt, table.with_features(scaler.transform(table.features)))
    out = _out_path(args.out, "scores.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_scores(out, "input", scored)
    print(f"scored {len(scored)} flows -> {out}")


def cmd_ablate(args) -> None:
    import yaml

    from graphids.ablations import parse_grid, run_ablation_grid, write_grid_csv
    from graphids.config import TrainConfig, load_config

    grid_path = Path(args.grid)
    specs = parse_grid(yaml.safe_load(grid_path.read_text()) if grid_path.exists() else args.grid)
    base = load_config(args.config) if args.config else TrainConfig()
    _, _, split = _load_run(Path(args.data))

    def progress(row):
        rec = row.as_record()
        print(f"{rec['name']}: status={rec['status']} pr_auc={rec['pr_auc'] or '-'} "
              f"macro_f1={rec['macro_f1'] or '-'} runtime_s={rec['runtime_s']}"
              + (f" error={rec['error']}" if rec["error"] else ""), flush=True)

    rows = run_ablation_grid(specs, split, base, progress, workers=args.workers)
    out = _out_path(args.out, "ablation.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_grid_csv(rows, out)
    failed = [r.spec.label() for r in rows if r.status != "ok"]
    print(f"{len(rows) - len(failed)}/{len(rows)} entries ok -> {out}")
    if failed:
        raise CommandError(f"{len(failed)} grid entries failed: {', '.join(failed)}")


def plot_report(report, kind: str, scores_path: Path | None = None):
    """Build the PR-curve or score-histogram figure for ``report``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 4))
    if kind == "pr":
        ax.plot(report.pr_recall, report.pr_precision, lw=1.5,
                label=f"{report.variant} (PR-AUC {report.pr_auc:.4f})")
        ax.axhline(report.anomaly_ratio, color="grey", ls=":", lw=1, label="random")
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
    else:
        if scores_path is None or not scores_path.exists():
            plt.close(fig)
            raise CommandError(f"{scores_path}: per-flow scores not found (run evaluate first)")
        with open(scores_path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r["split"] == "test"]
        scores = np.array([float(r["score"]) for r in rows])
        names = np.array(["benign" if r["label"] == "0" else r["attack_type"] for r in rows])
        # log scale: reconstruction errors span orders of magnitude
        logs = np.log10(np.maximum(scores, 1e-12))
        bins = np.linspace(logs.min(), logs.max(), 60)
        for name in sorted(set(names.tolist())):
            ax.hist(logs[names == name], bins=bins, density=True, alpha=0.5, label=name)
        ax.axvline(np.log10(max(report.threshold, 1e-12)), color="k", ls="--", lw=1,
                   label="threshold")
        ax.set_xlabel("log10 anomaly score")
        ax.set_ylabel("density")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def cmd_plot(args) -> None:
    from graphids.detection import EvalReport

    report = EvalReport.load(args.report)
    out = _out_path(args.out, str(Path(args.report).with_name(f"{args.kind}.png")))
    out.parent.mkdir(parents=True, exist_ok=True)
    scores_path = Path(args.scores) if args.scores else Path(args.report).with_name("scores.csv")
    fig = plot_report(report, args.kind, scores_path)
    fig.savefig(out, dpi=120)
    import matplotlib.pyplot as plt

    plt.close(fig)
    print(f"wrote {out}")


# --- entry point -------------------------------------------------------------

def _error_line(command, kind: str, message: str) -> str:
    return "graphids-error: " + json.dumps({"command": command, "type": kind, "message": message})


class _Parser(argparse.ArgumentParser):
    """Usage errors (unknown flags, bad choices) also end with a parsable error line."""

    def error(self, message):
        self.print_usage(sys.stderr)
        command = self.prog.split()[1] if " " in self.prog else None
        print(_error_line(command, "UsageError", message), file=sys.stderr)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphids", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a labelled synthetic flow CSV")
    s.add_argument("--spec", help="YAML/JSON file with SynthSpec fields")
    s.add_argument("--n-hosts", dest="n_hosts", type=int)
    s.add_argument("--n-flows", dest="n_flows", type=int)
    s.add_argument("--anomaly-ratio", dest="anomaly_ratio", type=float)
    s.add_argument("--n-features", dest="n_features", type=int)
    s.add_argument("--kinds", help="comma-separated anomaly kinds")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output CSV (default synth.csv)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="parse a flow CSV, split it and fit the scaler")
    s.add_argument("--input", required=True)
    s.add_argument("--schema", choices=("v2", "v3"), default="v2")
    s.add_argument("--timestamps", choices=("on", "off"), default="off")
    s.add_argument("--reduced", action="store_true",
                   help="accept a reduced feature set (every non-address, non-label column)")
    s.add_argument("--split-seed", dest="split_seed", type=int, default=0)
    s.add_argument("--out", help="run directory (default run)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", help="train on an ingested run")
    s.add_argument("--config", required=True, help="config file or preset name")
    s.add_argument("--data", required=True, help="run directory from ingest")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
    s.add_argument("--out", help="checkpoint path (default <run>/checkpoint.pt)")
    s.add_argument("--quiet", action="store_true", help="no per-epoch lines")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="score val/test, pick the threshold, write a report")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True, help="run directory from ingest")
    s.add_argument("--out", help="report directory (default: next to the checkpoint)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("score", help="score a flow CSV with a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--flows", required=True)
    s.add_argument("--schema", choices=("v2", "v3"), default="v2")
    s.add_argument("--timestamps", choices=("on", "off"), default="off")
    s.add_argument("--reduced", action="store_true")
    s.add_argument("--out", help="output CSV (default scores.csv)")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("ablate", help="run an ablation grid")
    s.add_argument("--grid", required=True,
                   help="grid file, or a preset: mask_ratio, hops, positional, baselines")
    s.add_argument("--data", required=True, help="run directory from ingest")
    s.add_argument("--config", help="base config (default built-in)")
    s.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    s.add_argument("--out", help="results CSV (default ablation.csv)")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("plot", help="PR curve or score histogram from a report")
    s.add_argument("--report", required=True)
    s.add_argument("--kind", choices=("pr", "score-hist"), default="pr")
    s.add_argument("--scores", help="scores CSV (default: scores.csv next to the report)")
    s.add_argument("--out", help="image path (default <kind>.png next to the report)")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except KeyboardInterrupt:
        raise
    except Exception as exc:
        print(_error_line(args.command, type(exc).__name__, str(exc)), file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

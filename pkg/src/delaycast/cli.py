"""Command-line pipeline: synthesize, prune, analyze, train, evaluate, report.

One subcommand per stage; the full chain is
    synth -> preprocess -> train -> evaluate -> report
and every command writes a JSON run manifest recording the resolved
configuration, seeds, fixed design constants, paths, and wall time. Manifests
sit beside the primary output (or beside the input, name-qualified by the
command, for commands that print to stdout); they carry wall time, so they
are the one output exempt from byte-level reproducibility.

Flag resolution order: command line, then --config JSON (keys are the long
flag names; dashes or underscores both work), then DELAYCAST_SEED for seeds,
then built-in defaults. Errors exit nonzero with a single "error: ..." line.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .container import ModelFileError
from .evalreport import (
    ComponentRow,
    ModelSummary,
    compare,
    evaluate,
    export_chart_data,
    render_components,
    render_totals,
    report_bundle,
    totals_csv,
)
from .features import (
    DEFAULT_TRAIN_FRACTION,
    LabelCodebook,
    build_table,
    chronological_split,
    fit_codebook,
    load_table,
)
from .modelfile import load_model, save_model
from .neural import TrainingError
from .preprocess import (
    DEFAULT_SUM_TOLERANCE,
    IQR_MULTIPLIER,
    STAGE_NAMES,
    run_pipeline,
)
from .regressors import MODEL_KINDS, SEQUENCE_KINDS, FitOptions, train_model
from .schema import read_csv, write_csv
from .stats import (
    DEFAULT_REDUNDANCY_THRESHOLD,
    correlation_table,
    redundancy_test,
)
from .synth import SynthConfig, generate, write_labels

_REDUNDANCY_PAIRS = (("AIRLINE", "AIRLINE_DOT", "airline", "airline_dot"),
                     ("AIRLINE", "AIRLINE_CODE", "airline", "airline_code"),
                     ("AIRLINE", "DOT_CODE", "airline", "dot_code"),
                     ("ORIGIN", "ORIGIN_CITY", "origin", "origin_city"),
                     ("DEST", "DEST_CITY", "dest", "dest_city"))

_ANALYZE_FIELDS = {"CRS_DEP_TIME": "crs_dep_time", "TAXI_OUT": "taxi_out",
                   "CRS_ARR_TIME": "crs_arr_time", "TAXI_IN": "taxi_in",
                   "CRS_ELAPSED_TIME": "crs_elapsed_time",
                   "DISTANCE": "distance"}


# --- flag resolution ---------------------------------------------------------------


class Flags:
    """Command line > config file > default, with the outcome recorded."""

    def __init__(self, args):
        self._args = vars(args)
        self._config = self._load_config(self._args.get("config"))
        self.resolved = {}

    @staticmethod
    def _load_config(path):
        if path is None:
            return {}
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object of flag values")
        return data

    def get(self, name, default=None, required=False, cast=None):
        key = name.replace("-", "_")
        value = self._args.get(key)
        if value is None:
            value = self._config.get(name, self._config.get(key))
        if value is None:
            value = default
        if value is not None and cast is not None:
            value = cast(value)
        if required and value is None:
            raise ValueError(f"missing required flag --{name}")
        self.resolved[name] = value
        return value

    def seed(self):
        value = self.get("seed", cast=int)
        if value is None:
            raw = os.environ.get("DELAYCAST_SEED")
            if raw is not None:
                try:
                    value = int(raw)
                except ValueError:
                    raise ValueError(
                        f"DELAYCAST_SEED must be an integer, got {raw!r}") from None
            else:
                value = 0
            self.resolved["seed"] = value
        return value


def _problems(checks) -> None:
    """Collect every failed flag constraint into one error line."""
    bad = [msg for ok, msg in checks if not ok]
    if bad:
        raise ValueError("; ".join(bad))


def _read_records(path):
    records, diagnostics = read_csv(path)
    if diagnostics:
        print(f"note: skipped {len(diagnostics)} malformed cells/rows in {path}",
              file=sys.stderr)
    if not records:
        raise ValueError(f"no usable records in {path}")
    return records


def _write_manifest(command, anchor, *, config, seeds, decisions, inputs,
                    outputs, started, qualify=False):
    name = f"{anchor}.{command}.manifest.json" if qualify \
        else f"{anchor}.manifest.json"
    manifest = {"command": command, "config": config, "seeds": seeds,
                "decisions": decisions,
                "inputs": [str(p) for p in inputs],
                "outputs": [str(p) for p in outputs],
                "wall_time_s": round(time.perf_counter() - started, 6)}
    Path(name).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
    return name


# --- subcommands -------------------------------------------------------------------


def cmd_synth(args) -> int:
    started = time.perf_counter()
    flags = Flags(args)
    out = flags.get("out", required=True, cast=str)
    labels_path = flags.get("labels", default=f"{out}.labels.csv", cast=str)
    config = SynthConfig(
        count=flags.get("count", 1000, cast=int),
        seed=flags.seed(),
        cancelled_rate=flags.get("cancelled-rate", 0.0, cast=float),
        missing_rate=flags.get("missing-rate", 0.0, cast=float),
        mismatch_rate=flags.get("mismatch-rate", 0.0, cast=float),
        outlier_rate=flags.get("outlier-rate", 0.0, cast=float),
        flights_per_day=flags.get("flights-per-day", 8, cast=int),
        airlines=flags.get("airlines", 6, cast=int),
        airports=flags.get("airports", 10, cast=int),
    )
    result = generate(config)
    write_csv(result.records, out)
    write_labels(result.labels, labels_path)
    _write_manifest("synth", out, config=flags.resolved,
                    seeds={"seed": config.seed},
                    decisions={"iqr_multiplier": IQR_MULTIPLIER,
                               "zero_delay_rate": config.zero_delay_rate,
                               "delay_cap": config.delay_cap},
                    inputs=[], outputs=[out, labels_path], started=started)
    print(f"wrote {len(result.records)} rows to {out}; labels to {labels_path}")
    return 0


def cmd_preprocess(args) -> int:
    started = time.perf_counter()
    flags = Flags(args)
    in_path = flags.get("in", required=True, cast=str)
    out = flags.get("out", required=True, cast=str)
    report_path = flags.get("report", default=f"{out}.report.json", cast=str)
    tolerance = flags.get("sum-tolerance", DEFAULT_SUM_TOLERANCE, cast=float)
    records = _read_records(in_path)
    retained, report = run_pipeline(records, sum_tolerance=tolerance)
    write_csv(retained, out)
    Path(report_path).write_text(
        json.dumps(dataclasses.asdict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    _write_manifest("preprocess", out, config=flags.resolved, seeds={},
                    decisions={"sum_tolerance": tolerance,
                               "iqr_multiplier": IQR_MULTIPLIER,
                               "stage_order": list(STAGE_NAMES)},
                    inputs=[in_path], outputs=[out, report_path],
                    started=started)
    sys.stdout.write(report.to_text())
    return 0


def _aligned(header, rows) -> str:
    table = [tuple(header)] + [tuple(r) for r in rows]
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    out = []
    for row in table:
        cells = [row[0].ljust(widths[0])]
        cells += [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        out.append("  ".join(cells).rstrip())
    return "\n".join(out) + "\n"


def cmd_analyze(args) -> int:
    started = time.perf_counter()
    flags = Flags(args)
    in_path = flags.get("in", required=True, cast=str)
    out = flags.get("out", cast=str)
    threshold = flags.get("threshold", DEFAULT_REDUNDANCY_THRESHOLD, cast=float)
    records = _read_records(in_path)

    needed = list(_ANALYZE_FIELDS.values()) + ["arr_delay"]
    usable = [r for r in records
              if all(getattr(r, f) is not None for f in needed)]
    if not usable:
        raise ValueError("no rows carry all continuous attributes and ARR_DELAY")
    columns = {name: np.array([getattr(r, f) for r in usable], dtype=np.float64)
               for name, f in _ANALYZE_FIELDS.items()}
    target = np.array([r.arr_delay for r in usable], dtype=np.float64)

    corr = correlation_table(columns, target)
    lines = [_aligned(("Attribute", "Pearson's Correlation"),
                      [(row.attribute, f"{row.r:.4f}") for row in corr])]

    red_rows = []
    for kept, cand, kept_field, cand_field in _REDUNDANCY_PAIRS:
        kept_vals = [getattr(r, kept_field) for r in usable]
        cand_vals = [getattr(r, cand_field) for r in usable]
        if all(v == "" for v in cand_vals):
            red_rows.append((f"{kept} vs {cand}", "-", "-", "-", "no data"))
            continue
        kept_codes = np.unique(kept_vals, return_inverse=True)[1]
        cand_codes = np.unique(cand_vals, return_inverse=True)[1]
        res = redundancy_test(target, kept_codes, cand_codes,
                              kept_name=kept, candidate_name=cand,
                              threshold=threshold)
        verdict = "redundant" if res.redundant else "distinct"
        red_rows.append((f"{kept} vs {cand}", f"{res.h:.3f}", str(res.dof),
                         f"{res.p_value:.4f}", verdict))
    lines.append("\nCategorical redundancy (stratified Kruskal-Wallis, "
                 f"p > {threshold:g} means redundant)\n")
    lines.append(_aligned(("Pair", "H", "dof", "p", "verdict"), red_rows))
    if len(usable) != len(records):
        lines.append(f"\nanalyzed {len(usable)} of {len(records)} rows "
                     "(others missing needed values)\n")
    text = "".join(lines)

    sys.stdout.write(text)
    outputs = []
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
        outputs.append(out)
    _write_manifest("analyze", out if out is not None else in_path,
                    config=flags.resolved, seeds={},
                    decisions={"redundancy_threshold": threshold,
                               "attributes": list(_ANALYZE_FIELDS)},
                    inputs=[in_path], outputs=outputs, started=started,
                    qualify=out is None)
    return 0


def cmd_train(args) -> int:
    started = time.perf_counter()
    flags = Flags(args)
    in_path = flags.get("in", required=True, cast=str)
    out = flags.get("out", required=True, cast=str)
    model_kind = flags.get("model", required=True, cast=str)
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model {model_kind!r}; valid kinds: "
                         f"{', '.join(MODEL_KINDS)}")
    targets = flags.get("targets", "components", cast=str)
    if targets not in ("components", "total"):
        raise ValueError(f"unknown targets {targets!r}; valid: components, total")
    window = flags.get("window", 1, cast=int)
    seed = flags.seed()
    epochs = flags.get("epochs", 50, cast=int)
    batch = flags.get("batch", cast=int)
    fraction = flags.get("train-fraction", DEFAULT_TRAIN_FRACTION, cast=float)
    trees = flags.get("trees", 100, cast=int)
    rounds = flags.get("rounds", 100, cast=int)
    depth = flags.get("depth", cast=int)
    min_leaf = flags.get("min-leaf", cast=int)
    rate = flags.get("learning-rate", cast=float)
    patience = flags.get("patience", 5, cast=int)
    clip = flags.get("clip", cast=float)
    checkpoint = flags.get("checkpoint", cast=str)
    _problems([
        (window >= 1, f"window must be >= 1, got {window}"),
        (epochs >= 1, f"epochs must be >= 1, got {epochs}"),
        (batch is None or batch >= 1, f"batch must be >= 1, got {batch}"),
        (trees >= 1, f"trees must be >= 1, got {trees}"),
        (rounds >= 1, f"rounds must be >= 1, got {rounds}"),
        (patience >= 1, f"patience must be >= 1, got {patience}"),
        (0.0 < fraction < 1.0,
         f"train-fraction must be in (0, 1), got {fraction}"),
    ])

    records = _read_records(in_path)
    codebook = fit_codebook(records)
    table = build_table(records, codebook, targets)
    train_t, test_t = chronological_split(table, fraction)
    options = FitOptions(seed=seed, window=window, max_depth=depth,
                         min_samples_leaf=min_leaf, n_estimators=trees,
                         rounds=rounds, learning_rate=rate, epochs=epochs,
                         batch_size=batch, patience=patience,
                         clip_max_norm=clip, checkpoint_path=checkpoint)
    trained, history = train_model(train_t, model_kind, options)
    save_model(trained, out)
    _write_manifest("train", out, config=flags.resolved,
                    seeds={"seed": seed},
                    decisions={"train_fraction": fraction,
                               "split": "chronological",
                               "settings": trained.settings},
                    inputs=[in_path], outputs=[out], started=started)
    print(f"trained {model_kind} on {len(train_t)} rows "
          f"({len(test_t)} held out); saved {out}")
    if history:
        best = min(h.val_mse for h in history)
        print(f"epochs run: {len(history)}; best validation mse: {best:.6f}")
    return 0


def _load_eval_table(in_path, trained):
    if Path(f"{in_path}.meta.json").exists():
        return load_table(in_path)
    records = _read_records(in_path)
    codebook = LabelCodebook(columns=dict(trained.codebook_columns))
    return build_table(records, codebook, trained.target_mode)


def cmd_evaluate(args) -> int:
    started = time.perf_counter()
    flags = Flags(args)
    model_path = flags.get("model-file", required=True, cast=str)
    in_path = flags.get("in", required=True, cast=str)
    report_out = flags.get("report-out", default=f"{model_path}.report.json",
                           cast=str)
    part = flags.get("split", "test", cast=str)
    fraction = flags.get("train-fraction", DEFAULT_TRAIN_FRACTION, cast=float)
    if part not in ("train", "test", "all"):
        raise ValueError(f"unknown split {part!r}; valid: train, test, all")

    trained = load_model(model_path)
    table = _load_eval_table(in_path, trained)
    if part != "all":
        train_t, test_t = chronological_split(table, fraction)
        table = train_t if part == "train" else test_t
    summary, rows = evaluate(trained, table, name=trained.kind)
    bundle = report_bundle([summary],
                           {summary.name: rows} if rows else None)
    Path(report_out).write_text(
        json.dumps(bundle, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_manifest("evaluate", report_out, config=flags.resolved, seeds={},
                    decisions={"train_fraction": fraction, "split": part},
                    inputs=[model_path, in_path], outputs=[report_out],
                    started=started)
    sys.stdout.write(render_totals([summary]))
    if rows:
        sys.stdout.write("\n" + render_components(rows))
    return 0


def _read_bundle(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or "models" not in data:
        raise ValueError(f"{path} is not an evaluation report bundle")
    summaries = [ModelSummary(name=m["name"], mse=m["mse"], mae=m["mae"],
                              target_mode=m["target_mode"],
                              manifest=m.get("manifest", {}))
                 for m in data["models"]]
    components = {name: tuple(ComponentRow(r["name"], r["true_mean"],
                                           r["pred_mean"], r["mae"])
                              for r in rows)
                  for name, rows in data.get("components", {}).items()}
    return summaries, components


def cmd_report(args) -> int:
    started = time.perf_counter()
    flags = Flags(args)
    paths = flags.get("summaries", required=True)
    if isinstance(paths, str):
        paths = [paths]
    fmt = flags.get("format", "text", cast=str)
    if fmt not in ("text", "csv", "json"):
        raise ValueError(f"unknown format {fmt!r}; valid: text, csv, json")
    out = flags.get("out", cast=str)
    chart_out = flags.get("chart-out", cast=str)

    summaries, components = [], {}
    for path in paths:
        got_summaries, got_components = _read_bundle(path)
        summaries.extend(got_summaries)
        components.update(got_components)
    if not summaries:
        raise ValueError("summary files hold no models to report")

    ranked = compare(summaries)
    if fmt == "text":
        parts = [render_totals(ranked)]
        for name in (s.name for s in ranked):
            if name in components:
                parts.append(f"\n{name} per-component results\n")
                parts.append(render_components(components[name]))
        text = "".join(parts)
    elif fmt == "csv":
        text = totals_csv(ranked)
    else:
        text = json.dumps(report_bundle(ranked, components or None),
                          indent=2, sort_keys=True) + "\n"

    outputs = []
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
        outputs.append(out)
    else:
        sys.stdout.write(text)
    if chart_out is not None:
        export_chart_data(ranked, chart_out)
        outputs.append(chart_out)
    anchor = out if out is not None else (
        chart_out if chart_out is not None else paths[0])
    _write_manifest("report", anchor, config=flags.resolved, seeds={},
                    decisions={"rank_keys": ["mse", "mae", "name"]},
                    inputs=list(paths), outputs=outputs, started=started,
                    qualify=out is None and chart_out is None)
    return 0


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delaycast",
        description="Flight-delay component modeling pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, helptext, flags):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON file supplying any flag")
        for flag, kwargs in flags:
            p.add_argument(flag, **kwargs)
        p.set_defaults(func=func)
        return p

    num = {"type": int}
    dec = {"type": float}
    add("synth", cmd_synth, "generate labeled synthetic flight records", [
        ("--count", num), ("--seed", num), ("--out", {}), ("--labels", {}),
        ("--cancelled-rate", dec), ("--missing-rate", dec),
        ("--mismatch-rate", dec), ("--outlier-rate", dec),
        ("--flights-per-day", num), ("--airlines", num), ("--airports", num)])
    add("preprocess", cmd_preprocess, "run the four-stage pruning pipeline", [
        ("--in", {}), ("--out", {}), ("--report", {}), ("--sum-tolerance", dec)])
    add("analyze", cmd_analyze, "correlation and redundancy screening", [
        ("--in", {}), ("--out", {}), ("--threshold", dec)])
    add("train", cmd_train, "fit one model kind on pruned records", [
        ("--in", {}), ("--out", {}), ("--model", {}), ("--targets", {}),
        ("--window", num), ("--seed", num), ("--epochs", num), ("--batch", num),
        ("--train-fraction", dec), ("--trees", num), ("--rounds", num),
        ("--depth", num), ("--min-leaf", num), ("--learning-rate", dec),
        ("--patience", num), ("--clip", dec), ("--checkpoint", {})])
    add("evaluate", cmd_evaluate, "score a saved model on held-out rows", [
        ("--model-file", {}), ("--in", {}), ("--report-out", {}),
        ("--split", {}), ("--train-fraction", dec)])
    add("report", cmd_report, "merge and rank evaluation reports", [
        ("--summaries", {"nargs": "+"}), ("--format", {}), ("--out", {}),
        ("--chart-out", {})])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, ModelFileError, TrainingError) as exc:
        detail = str(exc) or exc.__class__.__name__
        print("error: " + " ".join(detail.split()), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands cover the full pipeline: id alignment, encrypted
preprocessing, federated training with metrics reports, single-sample
inference, the inference wire-cost bench, and report rendering.
Configuration comes from a TOML file with flag overrides; every
generated report validates against the JSON schema shipped with the
package.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, fields
from importlib import resources
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # 3.10 fallback
    import tomli as tomllib

from . import data as datamod
from .experiments import (ExperimentConfig, application_configs,
                          bench_inference, preprocess_tables,
                          run_experiment)
from .logreg import fit_sigmoid_poly, load_lr_model, save_lr_model, sigmoid
from .psi import align_samples
from .secureboost import (ActiveParty, PassiveParty, classic_infer,
                          load_lookup, load_model, psi_infer, save_lookup,
                          save_model)
from .secureboost.federated import ACTIVE as SB_ACTIVE

_CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}


def report_schema() -> dict:
    text = (resources.files("fedfhe") / "schemas" /
            "metrics_report.schema.json").read_text()
    return json.loads(text)


def validate_report(doc: dict) -> None:
    """Schema check for emitted and ingested reports."""
    import jsonschema

    jsonschema.validate(doc, report_schema())


def _build_config(config_path, **flags) -> ExperimentConfig:
    """TOML document, overridden by flags, on top of the canned
    defaults for a known dataset."""
    doc = {}
    if config_path:
        with open(config_path, "rb") as fh:
            doc = tomllib.load(fh)
    doc.update({k: v for k, v in flags.items() if v is not None})
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise click.ClickException(f"unknown config keys: {unknown}")
    name = doc.get("dataset")
    if name in datamod.REGISTRY:
        base = asdict(application_configs()[name])
        base.update(doc)
        doc = base
    try:
        return ExperimentConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise click.ClickException(f"bad configuration: {exc}")


def _out_dir(config: ExperimentConfig, out) -> Path:
    path = Path(out or config.out_dir or f"runs/{config.dataset}")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _save_model_files(sink: dict, config: ExperimentConfig,
                      out: Path) -> list:
    written = []
    if sink.get("kind") == "secureboost":
        save_model(sink["model"], out / "model.json")
        written.append(out / "model.json")
        for label, lookup in sink["lookups"].items():
            path = out / f"lookup_{label}.json"
            save_lookup(lookup, path)
            written.append(path)
    elif sink.get("kind") == "lr":
        names = None
        if not (config.woe or config.smote_amount):
            names = datamod.load_named(config.dataset,
                                       config.data_dir).feature_names
        save_lr_model(out / "model.json", sink["beta"],
                      sink["scaler_mean"], sink["scaler_std"],
                      fit_sigmoid_poly(), feature_names=names)
        written.append(out / "model.json")
    return written


@click.group()
@click.version_option(package_name="fedfhe")
def main():
    """Federated learning over leveled homomorphic encryption."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="TOML experiment configuration.")
@click.option("--dataset", help="Registry name (or CSV stem in --data-dir).")
@click.option("--model", type=click.Choice(["secureboost", "lr"]))
@click.option("--mode", type=click.Choice(["vertical", "horizontal"]))
@click.option("--repeats", type=int)
@click.option("--seed", type=int)
@click.option("--profile", type=click.Choice(["desk", "std128"]))
@click.option("--data-dir", "data_dir", type=click.Path(exists=True))
@click.option("--out", type=click.Path())
def train(config_path, out, **flags):
    """Train over seeded repeats and write the metrics report."""
    config = _build_config(config_path, **flags)
    sink: dict = {}
    try:
        report = run_experiment(config, sink)
    except (RuntimeError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    out_path = _out_dir(config, out)
    doc = report.to_dict()
    validate_report(doc)
    (out_path / "report.json").write_text(json.dumps(doc, indent=1))
    (out_path / "config.json").write_text(
        json.dumps(asdict(config), indent=1, default=str))
    _write_csv(out_path / "per_repeat.csv", ["repeat", "accuracy"],
               list(enumerate(report.per_repeat)))
    if "transcript" in sink:
        sink["transcript"].write_jsonl(out_path / "transcript.jsonl")
    _save_model_files(sink, config, out_path)
    click.echo(f"dataset={report.dataset} model={report.model} "
               f"mode={report.mode} repeats={report.repeats}")
    click.echo(f"accuracy mean={report.accuracy:.4f} "
               f"std={report.accuracy_std:.4f}")
    click.echo(f"train_time_s={report.train_time_s:.2f} "
               f"bytes_per_repeat={report.transcript['bytes']}")
    for key, val in report.extra.items():
        click.echo(f"{key}={val}")
    click.echo(f"wrote {out_path}/report.json")


@main.command()
@click.option("--dataset", required=True)
@click.option("--pad", type=int,
              help="Id universe per side; defaults to the registry pad.")
@click.option("--seed", type=int, default=0)
@click.option("--data-dir", "data_dir", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
def psi(dataset, pad, seed, data_dir, out):
    """Run id alignment and write the intersection plus transcript."""
    try:
        ds = datamod.load_named(dataset, data_dir)
        n = len(ds.y)
        if pad is None:
            info = datamod.REGISTRY.get(dataset)
            pad = (info.psi_pad if info and info.psi_pad else n)
        ids_a, ids_b = datamod.padded_id_sets(n, pad, seed=seed)
        common, transcript = align_samples(ids_a, ids_b, seed=seed)
    except (RuntimeError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    out_path = Path(out or f"runs/{dataset}-psi")
    out_path.mkdir(parents=True, exist_ok=True)
    (out_path / "intersection.txt").write_text("\n".join(common) + "\n")
    transcript.write_jsonl(out_path / "transcript.jsonl")
    summary = {"universe_per_side": pad, "intersection": len(common),
               "bytes": transcript.total_bytes,
               "rounds": transcript.rounds}
    (out_path / "psi.json").write_text(json.dumps(summary, indent=1))
    click.echo(f"intersection {len(common)} of {pad}/{pad} ids, "
               f"{transcript.total_bytes} bytes, "
               f"{transcript.rounds} rounds")
    click.echo(f"wrote {out_path}/intersection.txt")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--dataset", help="Registry name (or CSV stem in --data-dir).")
@click.option("--woe/--no-woe", default=None)
@click.option("--woe-bins", "woe_bins", type=int)
@click.option("--smote-amount", "smote_amount", type=int)
@click.option("--smote-k", "smote_k", type=int)
@click.option("--a-features", "a_features", type=int)
@click.option("--seed", type=int)
@click.option("--data-dir", "data_dir", type=click.Path(exists=True))
@click.option("--out", type=click.Path())
def preprocess(config_path, out, **flags):
    """Run the encrypted preprocessing protocols and export the party
    tables (the partner's synthetic rows stay masked in its view)."""
    config = _build_config(config_path, model="lr", standardize=False,
                           **flags)
    if not (config.woe or config.smote_amount):
        raise click.ClickException(
            "nothing to do: enable --woe or --smote-amount")
    sink: dict = {}
    try:
        Xa, Xb, patch, y, phases, extra = preprocess_tables(config, sink)
    except (RuntimeError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    out_path = _out_dir(config, out)
    ds = datamod.load_named(config.dataset, config.data_dir)
    fa = Xa.shape[1]
    names = list(ds.feature_names)
    synthetic = (np.arange(len(y)) >= len(ds.y)).astype(int)
    _write_csv(out_path / "a_block.csv", names[:fa] + ["label", "synthetic"],
               [list(row) + [int(lbl), int(s)]
                for row, lbl, s in zip(Xa, y, synthetic)])
    _write_csv(out_path / "b_block.csv", names[fa:] + ["synthetic"],
               [list(row) + [int(s)] for row, s in zip(Xb, synthetic)])
    if "woe_tables" in sink:
        doc = [{"party": party, "feature": names[j if party == "a"
                                                 else fa + j],
                "bins": spec.to_dict(), "table": table.to_dict()}
               for party, j, spec, table in sink["woe_tables"]]
        (out_path / "woe_tables.json").write_text(json.dumps(doc, indent=1))
    if "smote_result" in sink:
        sink["smote_result"].transcript.write_jsonl(
            out_path / "transcript.jsonl")
    summary = {"phases": {k: round(v, 3) for k, v in phases.items()},
               **extra}
    (out_path / "summary.json").write_text(json.dumps(summary, indent=1))
    click.echo(f"rows={len(y)} a_features={fa} b_features={Xb.shape[1]}")
    for key, val in extra.items():
        click.echo(f"{key}={val}")
    click.echo(f"wrote {out_path}/a_block.csv, b_block.csv, summary.json")


@main.command()
@click.option("--model-dir", "model_dir", type=click.Path(exists=True),
              required=True, help="Output directory of a train run.")
@click.option("--row", type=int, default=None,
              help="Sample index; defaults to scoring every row.")
@click.option("--protocol", type=click.Choice(["classic", "psi"]),
              default="classic")
@click.option("--seed", type=int, default=0)
@click.option("--data-dir", "data_dir", type=click.Path(exists=True))
@click.option("--out", type=click.Path())
def infer(model_dir, row, protocol, seed, data_dir, out):
    """Score samples with a trained model; tree models run the chosen
    federated inference protocol."""
    model_dir = Path(model_dir)
    try:
        config_doc = json.loads((model_dir / "config.json").read_text())
    except FileNotFoundError:
        raise click.ClickException(f"{model_dir} has no config.json; "
                                   "point --model-dir at a train output")
    model_doc = json.loads((model_dir / "model.json").read_text())
    dataset = config_doc["dataset"]
    ds = datamod.load_named(dataset, data_dir or config_doc.get("data_dir"))
    if "trees" in model_doc:
        _infer_trees(model_dir, config_doc, ds, row, protocol, seed, out)
    else:
        _infer_lr(model_dir, config_doc, ds, row)


def _infer_trees(model_dir, config_doc, ds, row, protocol, seed, out):
    model = load_model(model_dir / "model.json")
    active = ActiveParty(y=np.zeros(0), keys=None,
                         lookup=load_lookup(model_dir /
                                            f"lookup_{SB_ACTIVE}.json"))
    passive = PassiveParty("passive0", np.zeros((0, 0)),
                           lookup=load_lookup(model_dir /
                                              "lookup_passive0.json"))
    fa = config_doc["a_features"]
    rows = [row] if row is not None else range(len(ds.y))
    run = classic_infer if protocol == "classic" else psi_infer
    correct = 0
    transcript = None
    for i in rows:
        shards = {SB_ACTIVE: ds.X[i][:fa], "passive0": ds.X[i][fa:]}
        try:
            score, leaves, transcript = run(model, active, [passive],
                                            shards, sample_id=i, seed=seed)
        except (RuntimeError, ValueError) as exc:
            raise click.ClickException(str(exc)) from exc
        pred = int(score > 0)
        correct += int(pred == ds.y[i])
        if row is not None:
            click.echo(f"row={i} score={score:+.4f} class={pred} "
                       f"label={int(ds.y[i])} leaves={leaves}")
            click.echo(f"{protocol} inference: "
                       f"{transcript.total_bytes} bytes, "
                       f"{transcript.rounds} rounds")
    if row is None:
        click.echo(f"{protocol} inference accuracy "
                   f"{correct / len(ds.y):.4f} over {len(ds.y)} rows")
    if out and transcript is not None:
        out_path = Path(out)
        out_path.mkdir(parents=True, exist_ok=True)
        transcript.write_jsonl(out_path / "transcript.jsonl")
        click.echo(f"wrote {out_path}/transcript.jsonl")


def _infer_lr(model_dir, config_doc, ds, row):
    if config_doc.get("woe") or config_doc.get("smote_amount"):
        raise click.ClickException(
            "model was trained on preprocessed features; rebuild them "
            "with the preprocess command before scoring raw rows")
    beta, mean, std, _poly = load_lr_model(model_dir / "model.json")
    X = (ds.X - mean) / std
    rows = np.hstack([np.ones((len(X), 1)), X])
    prob = sigmoid(rows @ beta)
    if row is not None:
        click.echo(f"row={row} p={prob[row]:.4f} class={int(prob[row] > 0.5)} "
                   f"label={int(ds.y[row])}")
    else:
        acc = float(np.mean(np.where(prob > 0.5, ds.y > 0, ds.y < 1)))
        click.echo(f"accuracy {acc:.4f} over {len(ds.y)} rows")


@main.command("bench-inference")
@click.option("--trees", default="1,2,3", help="Comma-separated counts.")
@click.option("--depths", default="1,2,3,4,5", help="Comma-separated.")
@click.option("--samples", type=int, default=8)
@click.option("--seed", type=int, default=0)
@click.option("--data-dir", "data_dir", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default="runs/bench-inference")
def bench_inference_cmd(trees, depths, samples, seed, data_dir, out):
    """Byte/round accounting of the two tree-inference protocols."""
    tree_counts = tuple(int(t) for t in trees.split(","))
    depth_list = tuple(int(d) for d in depths.split(","))
    try:
        rows = bench_inference(tree_counts, depth_list, samples, seed,
                               data_dir)
    except (RuntimeError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    out_path = Path(out)
    out_path.mkdir(parents=True, exist_ok=True)
    header = list(rows[0])
    _write_csv(out_path / "bench.csv", header,
               [[r[k] for k in header] for r in rows])
    (out_path / "bench.json").write_text(json.dumps(rows, indent=1))
    click.echo(f"{'trees':>5} {'depth':>5} {'classic_bytes':>13} "
               f"{'psi_bytes':>10} {'reduction':>9}")
    for r in rows:
        click.echo(f"{r['trees']:>5} {r['depth']:>5} "
                   f"{r['classic_bytes']:>13} {r['psi_bytes']:>10} "
                   f"{r['reduction_pct']:>8.1f}%")
    click.echo(f"wrote {out_path}/bench.csv")


@main.command()
@click.argument("run_dirs", nargs=-1, required=True,
                type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default="runs/report")
def report(run_dirs, out):
    """Aggregate run outputs into a summary table and figures."""
    from . import plotting

    out_path = Path(out)
    out_path.mkdir(parents=True, exist_ok=True)
    summary_rows = []
    figures = []
    for run_dir in run_dirs:
        run_path = Path(run_dir)
        report_file = run_path / "report.json"
        if report_file.exists():
            doc = json.loads(report_file.read_text())
            try:
                validate_report(doc)
            except Exception as exc:
                raise click.ClickException(
                    f"{report_file} fails schema validation: {exc}")
            summary_rows.append([
                doc["dataset"], doc["model"], doc["mode"], doc["repeats"],
                round(doc["accuracy"], 6), round(doc["accuracy_std"], 6),
                round(doc["train_time_s"], 3), doc["transcript"]["bytes"],
                doc["transcript"]["rounds"]])
            fig = out_path / f"accuracy_{run_path.name}.png"
            plotting.render_accuracy_figure(doc, fig)
            figures.append(fig)
        bench_file = run_path / "bench.json"
        if bench_file.exists():
            rows = json.loads(bench_file.read_text())
            fig = out_path / f"inference_bytes_{run_path.name}.png"
            plotting.render_inference_figure(rows, fig)
            figures.append(fig)
        if not report_file.exists() and not bench_file.exists():
            raise click.ClickException(
                f"{run_dir} holds neither report.json nor bench.json")
    if summary_rows:
        _write_csv(out_path / "summary.csv",
                   ["dataset", "model", "mode", "repeats", "accuracy",
                    "accuracy_std", "train_time_s", "bytes_per_repeat",
                    "rounds_per_repeat"], summary_rows)
        click.echo(f"{'dataset':<14} {'model':<11} {'mode':<10} "
                   f"{'accuracy':>9} {'std':>7}")
        for r in summary_rows:
            click.echo(f"{r[0]:<14} {r[1]:<11} {r[2]:<10} "
                       f"{r[4]:>9.4f} {r[5]:>7.4f}")
        click.echo(f"wrote {out_path}/summary.csv")
    for fig in figures:
        click.echo(f"wrote {fig}")


if __name__ == "__main__":
    main()

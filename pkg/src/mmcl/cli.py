"""Command-line interface.

Subcommands: ``synth``, ``train``, ``eval``, ``ablate-modality``,
``export-embeddings``, ``class-similarity``. Every command accepts
``--config PATH`` (YAML), ``--seed N``, and ``--output DIR``; flags override
file values. Configs are validated before any compute starts, and the merged
canonical config is echoed into the output directory. All artifacts are
written atomically (temp file + rename) and listed, with sha256 content
hashes, in ``run_manifest.json``.
"""
from __future__ import annotations

import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np
import torch

from . import __version__
from .config import ExperimentConfig, apply_overrides, load_config
from .data import (
    MultiModalDataset,
    class_pixel_sets,
    generate_synthetic,
    load_manifest,
    mean_patches,
    save_dataset,
    split_holdout,
)
from .exceptions import MMCLError
from .io_utils import atomic_write_text, sha256_file
from .metrics import class_similarity, evaluate_predictions
from .model import DualEncoderModel, load_checkpoint, save_checkpoint
from .training import RECIPES, ProtocolResult, evaluate_model, run_protocol

ABLATION_REGIMES = (
    ("only_s1_no_s2", "Only S1 (S2 zeroed)"),
    ("only_s2_no_s1", "Only S2 (S1 zeroed)"),
    ("s1_avg_s2", "S1 + average S2"),
    ("s2_avg_s1", "S2 + average S1"),
    ("s1_s2_full", "S1 + S2 (reference, extension)"),
)


def _fail(message: str) -> None:
    raise click.ClickException(message)


def _reference_mode() -> None:
    """Single-threaded torch so repeated runs are bit-identical."""
    torch.set_num_threads(1)


def _load_validated(config_path, seed, output_dir, **overrides) -> ExperimentConfig:
    try:
        config = load_config(config_path)
        config = apply_overrides(
            config, seed=seed, output_dir=output_dir, **overrides
        )
        config.validate()
    except MMCLError as e:
        _fail(str(e))
    return config


def _materialize_dataset(config: ExperimentConfig) -> MultiModalDataset:
    ds = config.dataset
    if ds.synthetic is not None:
        return generate_synthetic(ds.synthetic)
    return load_manifest(ds.manifest, ds.vocabulary)


def _dataset_seed(config: ExperimentConfig) -> int:
    if config.dataset.synthetic is not None:
        return config.dataset.synthetic.seed
    return config.training.seed


class ArtifactWriter:
    """Collects written artifacts so the run manifest can hash them all."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.paths: list[Path] = []

    def write_text(self, rel: str, text: str) -> Path:
        path = self.out_dir / rel
        atomic_write_text(path, text)
        self.paths.append(path)
        return path

    def add(self, path: Path) -> None:
        self.paths.append(Path(path))

    def finish(self) -> Path:
        entries = []
        for p in sorted(set(self.paths)):
            entries.append(
                {
                    "path": str(p.relative_to(self.out_dir)),
                    "sha256": sha256_file(p),
                    "bytes": p.stat().st_size,
                }
            )
        manifest = {"artifacts": entries, "tool": f"mmcl {__version__}"}
        path = self.out_dir / "run_manifest.json"
        atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def _echo_config(writer: ArtifactWriter, config: ExperimentConfig) -> None:
    writer.write_text("config.yaml", config.canonical_yaml())


def _loss_curve_csv(entries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "term", "value"])
    for step, term, value in entries:
        w.writerow([step, term, f"{value:.8f}"])
    return buf.getvalue()


def _aggregate_per_class_csv(result: ProtocolResult) -> str:
    """Per-class metric mean/std across runs, one row per class."""
    metrics = ("precision", "recall", "f1", "hamming", "brier")
    names = list(result.runs[0].report.per_class)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["class"]
    for m in metrics:
        header += [f"{m}_mean", f"{m}_std"]
    w.writerow(header)
    for name in names:
        row = [name]
        for m in metrics:
            vals = [r.report.per_class[name][m] for r in result.runs]
            row.append(f"{np.mean(vals):.6f}")
            row.append(f"{np.std(vals, ddof=1):.6f}" if len(vals) > 1 else "")
        w.writerow(row)
    return buf.getvalue()


@click.group()
@click.version_option(version=__version__, prog_name="mmcl")
def main() -> None:
    """Multi-modal multi-label contrastive learning workbench."""


# ---------------------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
@click.option("--output", "output_dir", type=click.Path(), default=None, help="Output directory.")
def synth(config_path, seed, output_dir) -> None:
    """Generate a synthetic dataset and write manifest + patches + vocabulary."""
    config = _load_validated(config_path, seed, output_dir)
    if config.dataset.synthetic is None:
        _fail("synth needs a synthetic dataset section (config names a manifest)")
    out = Path(config.output_dir)
    writer = ArtifactWriter(out)
    dataset = generate_synthetic(config.dataset.synthetic)
    manifest_path = save_dataset(dataset, out)
    for s in dataset:
        writer.add(out / "patches" / f"{s.id}_s1.npy")
        writer.add(out / "patches" / f"{s.id}_s2.npy")
    writer.add(manifest_path)
    writer.add(out / "vocabulary.txt")
    _echo_config(writer, config)

    labels = dataset.labels_matrix()
    pixels = class_pixel_sets(dataset, pixels_per_class=1024, seed=_dataset_seed(config))
    sim = class_similarity(pixels)
    summary = {
        "size": len(dataset),
        "n_labels": dataset.n_labels,
        "label_cardinality": float(labels.sum(axis=1).mean()),
        "positives_per_class": {
            name: int(labels[:, i].sum()) for i, name in enumerate(dataset.class_names)
        },
        "mean_off_diagonal_similarity": sim.mean_off_diagonal(),
    }
    writer.write_text("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    writer.finish()
    click.echo(f"wrote {len(dataset)} samples to {out}")
    click.echo(
        f"label cardinality {summary['label_cardinality']:.3f}, "
        f"mean off-diagonal class similarity {summary['mean_off_diagonal_similarity']:.3f}"
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
@click.option("--output", "output_dir", type=click.Path(), default=None, help="Output directory.")
@click.option("--recipe", type=click.Choice(sorted(RECIPES)), default=None, help="Training configuration.")
@click.option("--label-fraction", type=float, default=None, help="Stratified labeled fraction.")
@click.option("--runs", type=int, default=None, help="Number of repeated runs to aggregate.")
@click.option("--epochs", type=int, default=None, help="Joint-training epoch count.")
def train(config_path, seed, output_dir, recipe, label_fraction, runs, epochs) -> None:
    """Train under a recipe, repeat across derived seeds, aggregate metrics."""
    _reference_mode()
    config = _load_validated(
        config_path, seed, output_dir,
        recipe=recipe, label_fraction=label_fraction, runs=runs, epochs=epochs,
    )
    out = Path(config.output_dir)
    writer = ArtifactWriter(out)
    _echo_config(writer, config)

    try:
        dataset = _materialize_dataset(config)
        train_pool, eval_data = split_holdout(
            dataset, config.dataset.eval_fraction, _dataset_seed(config)
        )
        training = replace(config.training, threshold=config.metrics.threshold)
        result = run_protocol(
            training,
            train_pool,
            eval_data,
            n_runs=config.runs,
            encoder=config.model.encoder,
            projection_dim=config.model.projection_dim,
        )
    except MMCLError as e:
        _fail(str(e))

    for i, run in enumerate(result.runs):
        rel = f"run_{i}"
        writer.write_text(f"{rel}/metrics.json", run.report.to_json())
        writer.write_text(f"{rel}/per_class.csv", run.report.per_class_csv())
        writer.write_text(f"{rel}/loss_curve.csv", _loss_curve_csv(run.loss_curve))
        info = {
            "seed": run.seed,
            "subset_hash": run.subset_hash,
            "wall_clock_sec": run.wall_clock_sec,
        }
        writer.write_text(f"{rel}/run_info.json", json.dumps(info, indent=2, sort_keys=True) + "\n")
        ckpt = out / rel / "checkpoint.mmck"
        save_checkpoint(run.model, ckpt)
        writer.add(ckpt)

    writer.write_text("aggregate_per_class.csv", _aggregate_per_class_csv(result))
    # The aggregate is the canonical machine-readable outcome; write it last
    # so an interrupted invocation never leaves a stale-looking one behind.
    writer.write_text(
        "aggregate.json",
        json.dumps(result.aggregate_dict(), indent=2, sort_keys=True) + "\n",
    )
    writer.finish()

    agg = result.aggregate
    click.echo(f"recipe {training.recipe} over {config.runs} run(s):")
    for key in ("micro_f1", "macro_f1", "hamming", "brier"):
        if key in agg:
            stats = agg[key]
            std = f" +/- {stats.std:.4f}" if stats.std is not None else ""
            click.echo(f"  {key}: {stats.mean:.4f}{std}")


@main.command("eval")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
@click.option("--output", "output_dir", type=click.Path(), default=None, help="Output directory.")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), required=True)
@click.option("--dataset", "dataset_dir", type=click.Path(), default=None,
              help="Dataset directory (manifest.jsonl + vocabulary.txt).")
@click.option("--threshold", type=float, default=None, help="Decision threshold.")
def eval_cmd(config_path, seed, output_dir, checkpoint_path, dataset_dir, threshold) -> None:
    """Evaluate a checkpoint on a dataset and write the metric report."""
    _reference_mode()
    config = _load_validated(config_path, seed, output_dir, threshold=threshold)
    out = Path(config.output_dir)
    writer = ArtifactWriter(out)
    try:
        model = load_checkpoint(checkpoint_path)
        data = _dataset_from_dir_or_config(dataset_dir, config)
        report = evaluate_model(model, data, config.metrics.threshold)
    except MMCLError as e:
        _fail(str(e))
    _echo_config(writer, config)
    writer.write_text("metrics.json", report.to_json())
    writer.write_text("per_class.csv", report.per_class_csv())
    writer.finish()
    click.echo(
        f"micro-F1 {report.micro_f1:.4f}  macro-F1 {report.macro_f1:.4f}  "
        f"hamming {report.hamming_total:.4f}  brier {report.brier_total:.4f}"
    )


def _dataset_from_dir_or_config(dataset_dir, config: ExperimentConfig) -> MultiModalDataset:
    if dataset_dir is not None:
        manifest = Path(dataset_dir) / "manifest.jsonl"
        if not manifest.exists():
            _fail(f"no manifest.jsonl under {dataset_dir}")
        return load_manifest(manifest)
    return _materialize_dataset(config)


def _ablation_probs(
    model: DualEncoderModel,
    data: MultiModalDataset,
    regime: str,
    avg_s1: np.ndarray,
    avg_s2: np.ndarray,
) -> np.ndarray:
    """Predict with one modality's patches replaced, the other left intact."""
    swapped = []
    for s in data:
        s1, s2 = s.s1, s.s2
        if regime == "only_s1_no_s2":
            s2 = np.zeros_like(s2)
        elif regime == "only_s2_no_s1":
            s1 = np.zeros_like(s1)
        elif regime == "s1_avg_s2":
            s2 = avg_s2.copy()
        elif regime == "s2_avg_s1":
            s1 = avg_s1.copy()
        elif regime != "s1_s2_full":
            raise ValueError(f"unknown regime {regime!r}")
        swapped.append((s1, s2))
    with torch.no_grad():
        model.eval()
        outs = []
        for start in range(0, len(swapped), 256):
            chunk = swapped[start : start + 256]
            x1 = torch.from_numpy(np.stack([a for a, _ in chunk]).astype(np.float32))
            x2 = torch.from_numpy(np.stack([b for _, b in chunk]).astype(np.float32))
            fused = model.fuse(model.encode(x1, "s1"), model.encode(x2, "s2"))
            outs.append(model.classify(fused).numpy())
    return np.concatenate(outs, axis=0)


@main.command("ablate-modality")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
@click.option("--output", "output_dir", type=click.Path(), default=None, help="Output directory.")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), default=None,
              help="Trained checkpoint; trains one run from the config when omitted.")
def ablate_modality(config_path, seed, output_dir, checkpoint_path) -> None:
    """Evaluate zero/mean substitution of each modality on held-out data.

    Emits one row per regime with macro and micro precision/recall/F1. The
    full S1+S2 row is an extension included for reference and marked as such.
    """
    _reference_mode()
    config = _load_validated(config_path, seed, output_dir)
    out = Path(config.output_dir)
    writer = ArtifactWriter(out)
    _echo_config(writer, config)
    try:
        dataset = _materialize_dataset(config)
        train_pool, eval_data = split_holdout(
            dataset, config.dataset.eval_fraction, _dataset_seed(config)
        )
        if checkpoint_path is not None:
            model = load_checkpoint(checkpoint_path)
        else:
            training = replace(config.training, threshold=config.metrics.threshold)
            result = run_protocol(
                training, train_pool, eval_data, n_runs=1,
                encoder=config.model.encoder, projection_dim=config.model.projection_dim,
            )
            model = result.runs[0].model
            ckpt = out / "checkpoint.mmck"
            save_checkpoint(model, ckpt)
            writer.add(ckpt)
        avg_s1, avg_s2 = mean_patches(train_pool)

        rows = []
        for regime, label in ABLATION_REGIMES:
            probs = _ablation_probs(model, eval_data, regime, avg_s1, avg_s2)
            report = evaluate_predictions(
                eval_data.labels_matrix(), probs, config.metrics.threshold,
                eval_data.class_names,
            )
            rows.append(
                {
                    "regime": regime,
                    "description": label,
                    "macro_precision": report.macro_precision,
                    "macro_recall": report.macro_recall,
                    "macro_f1": report.macro_f1,
                    "micro_precision": report.micro_precision,
                    "micro_recall": report.micro_recall,
                    "micro_f1": report.micro_f1,
                }
            )
    except MMCLError as e:
        _fail(str(e))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["macro_precision", "macro_recall", "macro_f1",
            "micro_precision", "micro_recall", "micro_f1"]
    w.writerow(["regime", "description", *cols])
    for row in rows:
        w.writerow([row["regime"], row["description"], *(f"{row[c]:.4f}" for c in cols)])
    writer.write_text("ablation.csv", buf.getvalue())
    writer.write_text(
        "ablation.json", json.dumps(rows, indent=2, sort_keys=True) + "\n"
    )
    writer.finish()
    click.echo(f"{'regime':<16} {'AP^M':>7} {'AR^M':>7} {'AF1^M':>7} {'AP^u':>7} {'AR^u':>7} {'AF1^u':>7}")
    for row in rows:
        click.echo(
            f"{row['regime']:<16} "
            + " ".join(f"{row[c]:7.4f}" for c in cols)
        )


@main.command("export-embeddings")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
@click.option("--output", "output_dir", type=click.Path(), default=None, help="Output directory.")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), required=True)
@click.option("--dataset", "dataset_dir", type=click.Path(), default=None,
              help="Dataset directory (manifest.jsonl + vocabulary.txt).")
@click.option("--space", type=click.Choice(["h", "z"]), default="h",
              help="Fused encoder features (h) or fused normalized projections (z).")
@click.option("--pca2/--no-pca2", default=False, help="Also write a 2-D PCA projection.")
def export_embeddings(config_path, seed, output_dir, checkpoint_path, dataset_dir, space, pca2) -> None:
    """Write one embedding row per sample: id, label bits, vector components."""
    _reference_mode()
    config = _load_validated(config_path, seed, output_dir)
    out = Path(config.output_dir)
    writer = ArtifactWriter(out)
    _echo_config(writer, config)
    try:
        model = load_checkpoint(checkpoint_path)
        data = _dataset_from_dir_or_config(dataset_dir, config)
        vectors = _export_vectors(model, data, space)
    except MMCLError as e:
        _fail(str(e))

    dim = vectors.shape[1]
    lines = ["\t".join(["id", "labels", *(f"v{i}" for i in range(dim))])]
    for s, vec in zip(data, vectors):
        bits = "".join(str(int(b)) for b in s.labels)
        lines.append("\t".join([s.id, bits, *(f"{v:.6f}" for v in vec)]))
    writer.write_text(f"embeddings_{space}.tsv", "\n".join(lines) + "\n")

    if pca2:
        coords = _pca2(vectors)
        lines = ["\t".join(["id", "labels", "pc1", "pc2"])]
        for s, (a, b) in zip(data, coords):
            bits = "".join(str(int(x)) for x in s.labels)
            lines.append("\t".join([s.id, bits, f"{a:.6f}", f"{b:.6f}"]))
        writer.write_text(f"embeddings_{space}_pca2.tsv", "\n".join(lines) + "\n")
    writer.finish()
    click.echo(f"exported {vectors.shape[0]} x {dim} embeddings ({space}-space)")


def _export_vectors(model: DualEncoderModel, data: MultiModalDataset, space: str) -> np.ndarray:
    outs = []
    model.eval()
    with torch.no_grad():
        for start in range(0, len(data), 256):
            idx = list(range(start, min(start + 256, len(data))))
            x1 = torch.from_numpy(np.stack([data[i].s1 for i in idx]).astype(np.float32))
            x2 = torch.from_numpy(np.stack([data[i].s2 for i in idx]).astype(np.float32))
            if space == "h":
                out = model.fuse(model.encode(x1, "s1"), model.encode(x2, "s2"))
            else:
                out = torch.cat([model.embed(x1, "s1"), model.embed(x2, "s2")], dim=1)
            outs.append(out.numpy())
    return np.concatenate(outs, axis=0)


def _pca2(vectors: np.ndarray) -> np.ndarray:
    """Deterministic 2-D PCA: SVD with a fixed sign convention."""
    centered = vectors - vectors.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2]
    for i in range(comps.shape[0]):
        j = int(np.abs(comps[i]).argmax())
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return centered @ comps.T


@main.command("class-similarity")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
@click.option("--output", "output_dir", type=click.Path(), default=None, help="Output directory.")
@click.option("--dataset", "dataset_dir", type=click.Path(), default=None,
              help="Dataset directory (manifest.jsonl + vocabulary.txt).")
@click.option("--pixels-per-class", type=int, default=2048, show_default=True)
def class_similarity_cmd(config_path, seed, output_dir, dataset_dir, pixels_per_class) -> None:
    """Compute the class-by-class spectral similarity matrix from S2 pixels."""
    config = _load_validated(config_path, seed, output_dir)
    out = Path(config.output_dir)
    writer = ArtifactWriter(out)
    _echo_config(writer, config)
    try:
        data = _dataset_from_dir_or_config(dataset_dir, config)
        pixels = class_pixel_sets(data, pixels_per_class, seed=_dataset_seed(config))
        sim = class_similarity(pixels)
    except MMCLError as e:
        _fail(str(e))
    writer.write_text("class_similarity.csv", sim.to_csv())
    writer.finish()
    a, b, value = sim.max_off_diagonal()
    click.echo(f"classes: {len(sim.classes)}; most similar pair: {a} / {b} ({value:.4f})")
    click.echo(f"mean off-diagonal similarity: {sim.mean_off_diagonal():.4f}")


if __name__ == "__main__":
    sys.exit(main())

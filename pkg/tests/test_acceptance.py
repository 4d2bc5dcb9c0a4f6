"""Package acceptance gates, one test per release criterion.

Run ``pytest tests/test_acceptance.py -v`` for one pass/fail line per
criterion. The representation-learning criteria (6-8) train real models on
the default synthetic benchmark and together take a few minutes of CPU;
everything else is sub-second property checking.
"""
import json
import math
import time

import numpy as np
import pytest
import torch
from click.testing import CliRunner

import gradcheck
import oracles
from mmcl.cli import main as cli_main
from mmcl.data import (
    SyntheticSpec,
    class_pixel_sets,
    generate_synthetic,
    split_holdout,
    stratified_indices,
)
from mmcl.losses import bce_multilabel, infonce_inter, mulsupcon, ntxent_intra
from mmcl.metrics import class_similarity, evaluate_predictions
from mmcl.training import TrainConfig, alignment_gap, run_protocol

RNG_SEED = 20260813

BENCHMARK_RECIPES = ("intra_simclr", "iai_simclr", "mosaic1")


def _norm(t: torch.Tensor) -> torch.Tensor:
    return torch.nn.functional.normalize(t, dim=1)


class TestCriterion1GradientSuite:
    def test_analytic_gradients_match_finite_differences(self):
        started = time.perf_counter()
        rng = np.random.default_rng(RNG_SEED)

        for _ in range(20):
            n, k = int(rng.integers(2, 6)), int(rng.integers(2, 7))
            tau = float(rng.uniform(0.2, 1.5))
            raw = rng.normal(size=(2 * n, k))
            err = gradcheck.check_gradient(
                lambda t: ntxent_intra(_norm(t), tau).scalar, raw
            )
            assert err <= 1e-4, f"ntxent rel err {err:.2e}"

        for _ in range(20):
            n, k = int(rng.integers(2, 7)), int(rng.integers(2, 7))
            tau = float(rng.uniform(0.2, 1.5))
            raw = rng.normal(size=(2 * n, k))
            err = gradcheck.check_gradient(
                lambda t: infonce_inter(_norm(t[:n]), _norm(t[n:]), tau).scalar, raw
            )
            assert err <= 1e-4, f"infonce rel err {err:.2e}"

        checked = 0
        while checked < 20:
            n, k = int(rng.integers(3, 8)), int(rng.integers(2, 7))
            tau = float(rng.uniform(0.2, 1.5))
            y = (rng.random((n, 4)) < 0.5).astype(np.float64)
            if (y.sum(axis=0) < 2).all():
                continue
            labels = torch.tensor(y)
            raw = rng.normal(size=(n, k))
            err = gradcheck.check_gradient(
                lambda t: mulsupcon(_norm(t), labels, tau).scalar, raw
            )
            assert err <= 1e-4, f"mulsupcon rel err {err:.2e}"
            checked += 1

        for _ in range(20):
            n, c = int(rng.integers(2, 9)), int(rng.integers(2, 7))
            y = torch.tensor((rng.random((n, c)) < 0.4).astype(np.float64))
            raw = rng.normal(size=(n, c)) * 3
            err = gradcheck.check_gradient(
                lambda t: bce_multilabel(t, y).scalar, raw
            )
            assert err <= 1e-4, f"bce rel err {err:.2e}"

        assert time.perf_counter() - started < 60.0


class TestCriterion2ClosedForms:
    def test_hand_evaluated_loss_values(self):
        e = math.e
        same = torch.tensor([[1.0, 0.0]] * 4, dtype=torch.float64)
        assert abs(ntxent_intra(same, 1.0).item() - math.log(3.0)) <= 1e-9

        v = torch.eye(2, dtype=torch.float64)
        orth = torch.cat([v, v])  # identical views, orthogonal samples
        assert abs(ntxent_intra(orth, 1.0).item() + math.log(e / (e + 2))) <= 1e-9

        ident = torch.ones((2, 1), dtype=torch.float64)
        assert abs(infonce_inter(ident, ident, 1.0).item() - math.log(2.0)) <= 1e-9
        assert abs(infonce_inter(v, v, 1.0).item() + math.log(e / (e + 1))) <= 1e-9

        zeros = torch.zeros((3, 4), dtype=torch.float64)
        assert abs(bce_multilabel(zeros, torch.zeros(3, 4, dtype=torch.float64)).item()
                   - math.log(2.0)) <= 1e-9
        one = torch.ones((1, 1), dtype=torch.float64)
        assert abs(bce_multilabel(one, one).item() - math.log(1 + math.exp(-1))) <= 1e-9
        sat = torch.full((1, 1), 40.0, dtype=torch.float64)
        assert bce_multilabel(sat, torch.ones(1, 1, dtype=torch.float64)).item() <= 1e-12


class TestCriterion3ReductionIdentities:
    def test_single_label_reduces_to_supcon(self):
        rng = np.random.default_rng(RNG_SEED + 1)
        done = 0
        while done < 10:
            n = int(rng.integers(3, 9))
            classes = rng.integers(0, 3, size=n)
            classes[1] = classes[0]  # at least one positive pair
            z = oracles.random_unit_rows(rng, n, 5)
            onehot = np.zeros((n, 3))
            onehot[np.arange(n), classes] = 1.0
            ours = mulsupcon(torch.tensor(z), torch.tensor(onehot), 0.5).item()
            ref = oracles.supcon_lout_brute(z, classes, 0.5)
            assert abs(ours - ref) <= 1e-9
            done += 1

    def test_two_identical_embeddings_shared_label(self):
        z = torch.tensor([[1.0, 0.0], [1.0, 0.0]], dtype=torch.float64)
        y = torch.ones((2, 1), dtype=torch.float64)
        assert abs(mulsupcon(z, y, 1.0).item()) <= 1e-12


class TestCriterion4MetricOracles:
    def test_fifty_random_instances_match_brute_force(self):
        rng = np.random.default_rng(RNG_SEED + 2)
        pairs = {
            "macro_precision": "macro_p",
            "macro_recall": "macro_r",
            "macro_f1": "macro_f1",
            "micro_precision": "micro_p",
            "micro_recall": "micro_r",
            "micro_f1": "micro_f1",
        }
        for i in range(50):
            n, c = int(rng.integers(2, 40)), int(rng.integers(2, 12))
            y_true = (rng.random((n, c)) < 0.4).astype(np.int64)
            probs = rng.random((n, c))
            report = evaluate_predictions(y_true, probs, 0.5)
            y_pred = (probs >= 0.5).astype(np.int64)
            ref = oracles.prf_brute(y_true, y_pred)
            for ours, theirs in pairs.items():
                assert abs(report.summary()[ours] - ref[theirs]) <= 1e-12, (i, ours)
            assert abs(report.hamming_total - oracles.hamming_brute(y_true, y_pred)) <= 1e-12
            assert abs(report.brier_total - oracles.brier_brute(y_true, probs)) <= 1e-12

    def test_worked_example_exact(self):
        y_true = np.array([[1, 0], [1, 1]])
        y_pred = np.array([[1, 1], [0, 1]])
        report = evaluate_predictions(y_true, y_pred.astype(float), 0.5)
        assert report.macro_precision == 0.75
        assert report.micro_f1 == pytest.approx(2.0 / 3.0, abs=1e-15)


class TestCriterion5StratificationGuarantee:
    def test_hundred_datasets_coverage_and_deviation(self):
        rng = np.random.default_rng(RNG_SEED + 3)
        worst = 0.0
        for trial in range(100):
            n = int(rng.integers(200, 2001))
            base = rng.uniform(0.02, 0.7, size=8)
            y = (rng.random((n, 8)) < base).astype(np.int64)
            y[y.sum(axis=1) == 0, rng.integers(0, 8)] = 1
            rare = int(rng.integers(0, 8))
            y[:, rare] = 0
            y[rng.choice(n, 3, replace=False), rare] = 1
            y[y.sum(axis=1) == 0, (rare + 1) % 8] = 1

            idx = stratified_indices(y, 0.1, seed=trial)
            sub = y[idx]
            assert (sub.sum(axis=0) >= 1).all(), f"trial {trial}: class lost"
            deviation = float(np.abs(sub.mean(axis=0) - y.mean(axis=0)).max())
            worst = max(worst, deviation)
            assert deviation <= 0.05, f"trial {trial}: deviation {deviation:.4f}"
        print(f"\n  worst per-class deviation over 100 datasets: {worst:.4f}")


@pytest.fixture(scope="module")
def benchmark_protocols():
    """Three training configurations on the default benchmark, 4 seeds each.

    Shared between the ordering criterion and the alignment criterion so the
    models are trained once. This is the expensive part of the suite; budget
    a few minutes per configuration on one CPU core.
    """
    torch.set_num_threads(1)
    dataset = generate_synthetic(SyntheticSpec())
    train_pool, eval_data = split_holdout(dataset, 0.2, seed=0)
    protocols = {}
    seconds = {}
    for recipe in BENCHMARK_RECIPES:
        started = time.perf_counter()
        protocols[recipe] = run_protocol(
            TrainConfig(recipe=recipe, seed=0), train_pool, eval_data, n_runs=4
        )
        seconds[recipe] = time.perf_counter() - started
    return protocols, seconds, eval_data


class TestCriterion6BenchmarkOrdering:
    def test_recipe_ordering_micro_f1_and_stability(self, benchmark_protocols):
        protocols, seconds, _ = benchmark_protocols
        f1 = {r: protocols[r].aggregate["micro_f1"] for r in BENCHMARK_RECIPES}
        for recipe in BENCHMARK_RECIPES:
            stats = f1[recipe]
            print(f"\n  {recipe:14s} micro_f1 {stats.mean:.4f} +/- {stats.std:.4f} "
                  f"({seconds[recipe]:.0f}s for 4 runs)")
            assert seconds[recipe] < 600.0, f"{recipe} exceeded the CPU budget"
        intra, iai, mos = (f1[r] for r in BENCHMARK_RECIPES)
        assert iai.mean >= intra.mean + 0.02, (
            f"cross-modal gain too small: {iai.mean:.4f} vs {intra.mean:.4f}"
        )
        assert mos.mean >= iai.mean + 0.02, (
            f"composite gain too small: {mos.mean:.4f} vs {iai.mean:.4f}"
        )
        assert mos.std <= intra.std, (
            f"composite should be the steadier recipe: std {mos.std:.4f} vs {intra.std:.4f}"
        )


class TestCriterion7CrossModalAlignment:
    def test_matched_pairs_align_after_mosaic1(self, benchmark_protocols):
        """Held-out co-registered pairs should out-cosine mismatched ones by 0.2.

        Known red: every mosaic1 term scores either single-modality views or
        the fused concatenation, and concatenation inner products are
        unchanged when one modality's projections are rotated by a shared
        orthogonal map. Nothing in the composite pins z1[i] to z2[i], so the
        measured gap hovers near zero (recipes with an explicit cross-modal
        term clear 0.2 comfortably). The gate is kept as stated rather than
        weakened to match the implementation.
        """
        protocols, _, eval_data = benchmark_protocols
        gaps = [alignment_gap(r.model, eval_data) for r in protocols["mosaic1"].runs]
        mean_gap = float(np.mean(gaps))
        print("\n  per-run alignment gaps: " + " ".join(f"{g:+.3f}" for g in gaps))
        assert mean_gap >= 0.2, f"matched-vs-mismatched cosine gap {mean_gap:+.3f} < 0.2"


ABLATION_CONFIG = """\
output_dir: {out}
runs: 1
dataset:
  synthetic:
    size: 800
    n_labels: 8
    seed: 7
    noise_sigma: 1.2
    class_similarity_target: 0.65
    s1_signal: 0.05
  eval_fraction: 0.2
training:
  recipe: mosaic1
  epochs: 120
  label_fraction: 0.1
  seed: 7
metrics:
  threshold: 0.5
"""


class TestCriterion8ModalityAblation:
    def test_weak_s1_strong_s2_ordering(self, tmp_path):
        """With S1 carrying little signal, zeroing it should hurt least."""
        config = tmp_path / "config.yaml"
        config.write_text(ABLATION_CONFIG.format(out=tmp_path / "out"))
        result = CliRunner().invoke(
            cli_main, ["ablate-modality", "--config", str(config)],
            catch_exceptions=False,
        )
        assert result.exit_code == 0, result.output
        rows = json.loads((tmp_path / "out" / "ablation.json").read_text())
        f1 = {row["regime"]: row["micro_f1"] for row in rows}
        print(f"\n  only_s1 {f1['only_s1_no_s2']:.4f}  only_s2 {f1['only_s2_no_s1']:.4f}  "
              f"full {f1['s1_s2_full']:.4f}")
        assert f1["only_s2_no_s1"] > f1["only_s1_no_s2"]
        assert f1["s1_s2_full"] >= max(f1["only_s1_no_s2"], f1["only_s2_no_s1"])


class TestCriterion9TrainDeterminism:
    CONFIG = """\
output_dir: {out}
runs: 1
dataset:
  synthetic:
    size: 48
    n_labels: 6
    seed: 3
  eval_fraction: 0.25
model:
  projection_dim: 16
training:
  epochs: 3
  pretrain_epochs: 2
  probe_epochs: 2
  batch_size: 16
  label_fraction: 1.0
  seed: 0
metrics:
  threshold: 0.5
"""

    def test_identical_aggregate_bytes(self, tmp_path):
        payloads = []
        for name in ("first", "second"):
            config = tmp_path / f"{name}.yaml"
            config.write_text(self.CONFIG.format(out=tmp_path / name))
            result = CliRunner().invoke(
                cli_main,
                ["train", "--config", str(config), "--recipe", "mosaic1", "--seed", "7"],
                catch_exceptions=False,
            )
            assert result.exit_code == 0, result.output
            payloads.append((tmp_path / name / "aggregate.json").read_bytes())
        assert b"micro_f1" in payloads[0]
        assert payloads[0] == payloads[1]


class TestCriterion10ClassSimilarityContract:
    def test_symmetric_unit_diagonal_on_random_inputs(self):
        rng = np.random.default_rng(RNG_SEED + 4)
        for _ in range(25):
            c, bands = int(rng.integers(2, 12)), int(rng.integers(1, 6))
            sets = {
                f"c{i}": rng.normal(size=(int(rng.integers(1, 40)), bands)) * 5
                for i in range(c)
            }
            sim = class_similarity(sets)
            np.testing.assert_array_equal(sim.values, sim.values.T)
            np.testing.assert_array_equal(np.diag(sim.values), np.ones(c))
            assert ((sim.values > 0) & (sim.values <= 1)).all()

    def test_planted_near_duplicate_attains_max(self):
        ds = generate_synthetic(SyntheticSpec(size=400, seed=5, duplicate_pair=(1, 6)))
        sim = class_similarity(class_pixel_sets(ds, pixels_per_class=2048, seed=0))
        a, b, _ = sim.max_off_diagonal()
        assert {a, b} == {"class_01", "class_06"}

"""Synthetic generator, augmentation, stratified subsampling, disk formats."""
import numpy as np
import pytest

from mmcl.data import (
    AugmentPolicy,
    SyntheticSpec,
    augment,
    builtin_vocabulary_path,
    class_pixel_sets,
    generate_synthetic,
    load_manifest,
    load_vocabulary,
    mean_patches,
    save_dataset,
    split_holdout,
    stratified_indices,
    stratified_subsample,
)
from mmcl.exceptions import ValidationError
from mmcl.metrics import class_similarity


class TestSyntheticGenerator:
    def test_shapes_dtypes_and_label_floor(self, tiny_dataset):
        assert len(tiny_dataset) == 64
        y = tiny_dataset.labels_matrix()
        assert y.shape == (64, tiny_dataset.n_labels)
        assert set(np.unique(y)).issubset({0, 1})
        assert (y.sum(axis=1) >= 1).all(), "every sample carries at least one label"
        s = tiny_dataset[0]
        assert s.s1.shape == (2, 32, 32) and s.s1.dtype == np.float32
        assert s.s2.shape == (4, 32, 32) and s.s2.dtype == np.float32

    def test_deterministic_per_seed(self):
        spec = SyntheticSpec(size=16, seed=3)
        a, b = generate_synthetic(spec), generate_synthetic(spec)
        assert np.array_equal(a.labels_matrix(), b.labels_matrix())
        np.testing.assert_array_equal(a[5].s2, b[5].s2)
        c = generate_synthetic(SyntheticSpec(size=16, seed=4))
        assert not np.array_equal(a[5].s2, c[5].s2)

    def test_cardinality_tracks_target(self):
        ds = generate_synthetic(SyntheticSpec(size=600, label_cardinality=2.5, seed=9))
        mean_card = ds.labels_matrix().sum(axis=1).mean()
        assert abs(mean_card - 2.5) < 0.4

    def test_zero_noise_makes_same_label_patches_identical(self):
        ds = generate_synthetic(SyntheticSpec(size=80, noise_sigma=0.0, seed=2))
        y = ds.labels_matrix()
        _, first, inverse = np.unique(
            y, axis=0, return_index=True, return_inverse=True
        )
        hit = False
        for i in range(len(ds)):
            j = first[inverse[i]]
            if j != i:
                np.testing.assert_array_equal(ds[i].s2, ds[j].s2)
                hit = True
        assert hit, "dataset of 80 should contain repeated label sets"

    def test_similarity_matches_target(self):
        target = 0.55
        ds = generate_synthetic(SyntheticSpec(size=400, seed=1, class_similarity_target=target))
        sim = class_similarity(class_pixel_sets(ds, pixels_per_class=1024, seed=0))
        assert abs(sim.mean_off_diagonal() - target) <= 0.1

    def test_duplicate_pair_dominates_similarity(self):
        ds = generate_synthetic(
            SyntheticSpec(size=300, seed=7, duplicate_pair=(2, 5))
        )
        sim = class_similarity(class_pixel_sets(ds, pixels_per_class=1024, seed=0))
        a, b, value = sim.max_off_diagonal()
        assert {a, b} == {"class_02", "class_05"}
        assert value > sim.mean_off_diagonal()

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            SyntheticSpec(size=1).validate()
        with pytest.raises(ValidationError):
            SyntheticSpec(label_cardinality=0.0).validate()
        with pytest.raises(ValidationError):
            SyntheticSpec(class_similarity_target=1.0).validate()
        with pytest.raises(ValidationError):
            SyntheticSpec(duplicate_pair=(1, 1)).validate()

    def test_spec_dict_round_trip(self):
        spec = SyntheticSpec(size=10, duplicate_pair=(0, 3), seed=42)
        assert SyntheticSpec.from_dict(spec.to_dict()) == spec


class TestAugment:
    @pytest.fixture()
    def patch(self):
        rng = np.random.default_rng(0)
        return rng.normal(size=(4, 32, 32)).astype(np.float32)

    def test_disabled_policy_is_identity(self, patch):
        out = augment(patch, AugmentPolicy(enabled=False), seed=1)
        np.testing.assert_array_equal(out, patch)
        assert out is not patch

    def test_same_seed_same_output(self, patch):
        a = augment(patch, AugmentPolicy(), seed=11)
        b = augment(patch, AugmentPolicy(), seed=11)
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self, patch):
        outputs = [augment(patch, AugmentPolicy(), seed=s) for s in range(6)]
        assert any(not np.array_equal(outputs[0], o) for o in outputs[1:])

    def test_shape_and_dtype_preserved(self, patch):
        for seed in range(8):
            out = augment(patch, AugmentPolicy(), seed=seed)
            assert out.shape == patch.shape
            assert out.dtype == np.float32

    def test_policy_validation(self, patch):
        with pytest.raises(ValidationError):
            augment(patch, AugmentPolicy(crop_scale=(0.0, 1.0)), seed=0)
        with pytest.raises(ValidationError):
            augment(patch, AugmentPolicy(rotations=(45,)), seed=0)
        with pytest.raises(ValidationError):
            augment(patch, AugmentPolicy(blur_prob=1.5), seed=0)

    def test_rejects_non_patch_input(self):
        with pytest.raises(ValidationError):
            augment(np.zeros((32, 32), dtype=np.float32), AugmentPolicy(), seed=0)


class TestStratifiedSubsample:
    def skewed_labels(self, n=400, seed=0):
        rng = np.random.default_rng(seed)
        p = np.array([0.6, 0.4, 0.25, 0.12, 0.05, 0.02])
        y = (rng.random((n, p.size)) < p).astype(np.int64)
        y[y.sum(axis=1) == 0, 0] = 1
        for c in range(p.size):  # force >=3 positives everywhere
            if y[:, c].sum() < 3:
                y[rng.choice(n, 3, replace=False), c] = 1
        return y

    def test_fraction_one_is_identity(self):
        y = self.skewed_labels()
        np.testing.assert_array_equal(stratified_indices(y, 1.0, seed=5), np.arange(len(y)))

    def test_covers_every_class_and_respects_quota(self):
        y = self.skewed_labels()
        idx = stratified_indices(y, 0.1, seed=3)
        assert len(idx) == round(0.1 * len(y))
        assert (y[idx].sum(axis=0) >= 1).all()
        assert np.all(np.diff(idx) > 0), "indices come back sorted"

    def test_frequency_deviation_small(self):
        y = self.skewed_labels(n=1000, seed=4)
        full = y.mean(axis=0)
        for seed in range(5):
            idx = stratified_indices(y, 0.1, seed=seed)
            sub = y[idx].mean(axis=0)
            assert np.abs(sub - full).max() <= 0.05

    def test_deterministic(self):
        y = self.skewed_labels()
        a = stratified_indices(y, 0.2, seed=9)
        b = stratified_indices(y, 0.2, seed=9)
        np.testing.assert_array_equal(a, b)

    def test_uncoverable_class_named_in_error(self):
        y = np.array([[1, 0], [1, 0], [1, 0]])
        with pytest.raises(ValidationError, match=r"\[1\]"):
            stratified_indices(y, 0.5, seed=0)

    def test_quota_too_small_for_coverage(self):
        y = np.eye(10, dtype=np.int64)  # ten classes, one sample each
        with pytest.raises(ValidationError, match="too few to cover"):
            stratified_indices(y, 0.2, seed=0)

    def test_dataset_wrapper(self, tiny_dataset):
        sub = stratified_subsample(tiny_dataset, 0.5, seed=1)
        assert len(sub) == round(0.5 * len(tiny_dataset))
        assert sub.class_names == tiny_dataset.class_names


class TestSplitHoldout:
    def test_disjoint_and_sized(self, tiny_dataset):
        train, held = split_holdout(tiny_dataset, 0.25, seed=0)
        assert len(held) == round(0.25 * len(tiny_dataset))
        assert len(train) + len(held) == len(tiny_dataset)
        assert set(s.id for s in train).isdisjoint(s.id for s in held)

    def test_train_keeps_class_coverage(self, tiny_dataset):
        train, _ = split_holdout(tiny_dataset, 0.3, seed=2)
        assert (train.labels_matrix().sum(axis=0) >= 1).all()

    def test_deterministic(self, tiny_dataset):
        a = split_holdout(tiny_dataset, 0.2, seed=5)
        b = split_holdout(tiny_dataset, 0.2, seed=5)
        assert [s.id for s in a[0]] == [s.id for s in b[0]]
        assert [s.id for s in a[1]] == [s.id for s in b[1]]


class TestDiskFormats:
    def test_manifest_round_trip(self, tmp_path, tiny_dataset):
        sub = tiny_dataset.subset(range(6))
        manifest = save_dataset(sub, tmp_path)
        loaded = load_manifest(manifest)
        assert loaded.class_names == sub.class_names
        assert [s.id for s in loaded] == [s.id for s in sub]
        np.testing.assert_array_equal(loaded.labels_matrix(), sub.labels_matrix())
        np.testing.assert_array_equal(loaded[3].s1, sub[3].s1)
        np.testing.assert_array_equal(loaded[3].s2, sub[3].s2)

    def test_unknown_class_lists_all_offenders(self, tmp_path, tiny_dataset):
        sub = tiny_dataset.subset(range(3))
        manifest = save_dataset(sub, tmp_path)
        text = manifest.read_text()
        text = text.replace("class_00", "mystery_a").replace("class_01", "mystery_b")
        manifest.write_text(text)
        with pytest.raises(ValidationError, match="mystery_a.*mystery_b"):
            load_manifest(manifest)

    def test_missing_patch_names_record(self, tmp_path, tiny_dataset):
        sub = tiny_dataset.subset(range(3))
        manifest = save_dataset(sub, tmp_path)
        victim = sub[1].id
        (tmp_path / "patches" / f"{victim}_s2.npy").unlink()
        with pytest.raises(ValidationError, match=victim):
            load_manifest(manifest)

    def test_vocabulary_loader_rules(self, tmp_path):
        good = tmp_path / "vocab.txt"
        good.write_text("water\nforest\nurban\n")
        assert load_vocabulary(good) == ["water", "forest", "urban"]
        empty = tmp_path / "empty.txt"
        empty.write_text("\n\n")
        with pytest.raises(ValidationError, match="empty"):
            load_vocabulary(empty)
        dup = tmp_path / "dup.txt"
        dup.write_text("water\nwater\n")
        with pytest.raises(ValidationError, match="duplicate"):
            load_vocabulary(dup)

    def test_builtin_vocabulary_has_19_classes(self):
        names = load_vocabulary(builtin_vocabulary_path("bigearthnet19"))
        assert len(names) == 19
        assert names == sorted(names)

    def test_mean_patches(self, tiny_dataset):
        m1, m2 = mean_patches(tiny_dataset)
        assert m1.shape == (2, 32, 32) and m2.shape == (4, 32, 32)
        np.testing.assert_allclose(
            m1, np.mean([s.s1 for s in tiny_dataset], axis=0), rtol=0, atol=1e-6
        )

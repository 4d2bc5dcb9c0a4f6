"""Datasets: co-registered dual-modality samples, synthesis, augmentation, IO.

A sample pairs an S1-like patch (2 channels by default) with an S2-like patch
(4 channels) of the same location, plus a binary multi-label vector. The
synthetic generator builds desk-scale datasets whose label signal, class
overlap, and modality informativeness are all controllable, so training
behavior can be probed without any external download.

Patch files on disk use the NumPy ``.npy`` v1 container (magic string, dtype
code, shape header, row-major little-endian float32 body). Manifests are
JSON-lines; vocabularies are newline-delimited class names whose line number
is the label index.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
from scipy import ndimage

from .exceptions import ValidationError
from .io_utils import atomic_write_bytes, atomic_write_text, seed_sequence
from .validation import check_fraction, check_patch_array, check_positive_int


@dataclass
class MultiModalSample:
    """One co-registered S1/S2 patch pair with its label vector.

    ``s1``/``s2`` may be arrays or paths; path-backed patches load lazily on
    first access and are cached.
    """

    id: str
    labels: np.ndarray
    geokey: str
    s1_source: np.ndarray | Path = field(repr=False, default=None)
    s2_source: np.ndarray | Path = field(repr=False, default=None)
    lat: float = 0.0
    lon: float = 0.0

    def _load(self, source, attr: str) -> np.ndarray:
        if isinstance(source, Path):
            arr = np.load(source).astype(np.float32, copy=False)
            setattr(self, attr, arr)
            return arr
        return source

    @property
    def s1(self) -> np.ndarray:
        return self._load(self.s1_source, "s1_source")

    @property
    def s2(self) -> np.ndarray:
        return self._load(self.s2_source, "s2_source")


def geokey_from_coords(lat: float, lon: float) -> str:
    """Shared location key: coordinates rounded to 5 decimal places."""
    return f"{lat:.5f},{lon:.5f}"


class MultiModalDataset:
    """An ordered collection of samples plus the class-name vocabulary."""

    def __init__(self, samples: Sequence[MultiModalSample], class_names: Sequence[str]):
        self.samples = list(samples)
        self.class_names = list(class_names)
        for s in self.samples:
            if len(s.labels) != len(self.class_names):
                raise ValidationError(
                    f"sample {s.id!r} has {len(s.labels)} labels, "
                    f"vocabulary has {len(self.class_names)} classes"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, idx: int) -> MultiModalSample:
        return self.samples[idx]

    def __iter__(self) -> Iterator[MultiModalSample]:
        return iter(self.samples)

    @property
    def n_labels(self) -> int:
        return len(self.class_names)

    def labels_matrix(self) -> np.ndarray:
        return np.stack([s.labels for s in self.samples]).astype(np.int64)

    def subset(self, indices: Sequence[int]) -> "MultiModalDataset":
        return MultiModalDataset([self.samples[i] for i in indices], self.class_names)


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the synthetic co-registered dataset generator.

    ``label_cardinality`` is the target mean number of active labels per
    sample; per-class marginals follow a geometric profile so a rare-class
    tail exists. ``class_similarity_target`` sets the desired mean
    off-diagonal entry of the measured S2 class-similarity matrix.
    ``s1_signal``/``s2_signal`` scale how much label information each
    modality carries relative to the noise floor; lowering one makes that
    modality less informative. ``duplicate_pair`` plants two classes with
    nearly identical spectra (useful for similarity-matrix checks).
    """

    size: int = 2000
    n_labels: int = 8
    height: int = 32
    width: int = 32
    s1_channels: int = 2
    s2_channels: int = 4
    label_cardinality: float = 2.0
    class_similarity_target: float = 0.6
    noise_sigma: float = 1.0
    s1_signal: float = 0.7
    s2_signal: float = 1.0
    duplicate_pair: tuple[int, int] | None = None
    duplicate_gap: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        check_positive_int(self.size, "size", minimum=2)
        check_positive_int(self.n_labels, "n_labels", minimum=2)
        check_positive_int(self.height, "height", minimum=8)
        check_positive_int(self.width, "width", minimum=8)
        check_positive_int(self.s1_channels, "s1_channels")
        check_positive_int(self.s2_channels, "s2_channels")
        if not (0.0 < self.label_cardinality <= self.n_labels):
            raise ValidationError(
                f"label_cardinality must lie in (0, n_labels], got {self.label_cardinality!r}"
            )
        if not (0.0 < self.class_similarity_target < 1.0):
            raise ValidationError(
                "class_similarity_target must lie in (0, 1), "
                f"got {self.class_similarity_target!r}"
            )
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma!r}")
        if self.s1_signal < 0 or self.s2_signal < 0:
            raise ValidationError("modality signal scales must be >= 0")
        if self.duplicate_pair is not None:
            a, b = self.duplicate_pair
            if a == b or not (0 <= a < self.n_labels and 0 <= b < self.n_labels):
                raise ValidationError(
                    f"duplicate_pair must name two distinct classes in range, "
                    f"got {self.duplicate_pair!r}"
                )
            if not (0.0 < self.duplicate_gap < 1.0):
                raise ValidationError(f"duplicate_gap must lie in (0, 1), got {self.duplicate_gap!r}")

    def class_names(self) -> list[str]:
        width = max(2, len(str(self.n_labels - 1)))
        return [f"class_{i:0{width}d}" for i in range(self.n_labels)]

    def to_dict(self) -> dict:
        d = {
            "size": self.size,
            "n_labels": self.n_labels,
            "height": self.height,
            "width": self.width,
            "s1_channels": self.s1_channels,
            "s2_channels": self.s2_channels,
            "label_cardinality": self.label_cardinality,
            "class_similarity_target": self.class_similarity_target,
            "noise_sigma": self.noise_sigma,
            "s1_signal": self.s1_signal,
            "s2_signal": self.s2_signal,
            "duplicate_pair": list(self.duplicate_pair) if self.duplicate_pair else None,
            "duplicate_gap": self.duplicate_gap,
            "seed": self.seed,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        kwargs = dict(d)
        if kwargs.get("duplicate_pair") is not None:
            kwargs["duplicate_pair"] = tuple(kwargs["duplicate_pair"])
        return cls(**kwargs)


def _marginal_probabilities(spec: SyntheticSpec) -> np.ndarray:
    """Geometric per-class marginals scaled to the target cardinality."""
    ratio = 0.6
    raw = ratio ** np.arange(spec.n_labels, dtype=np.float64)
    p = raw * (spec.label_cardinality / raw.sum())
    return np.clip(p, 1e-4, 0.95)


def _conditional_marginals(p: np.ndarray) -> np.ndarray:
    """Per-class marginals conditioned on the all-zero draw being rejected."""
    q = np.prod(1.0 - p)
    return p / (1.0 - q)


def _draw_labels(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    p = _marginal_probabilities(spec)
    labels = np.zeros((spec.size, spec.n_labels), dtype=np.int64)
    for i in range(spec.size):
        row = (rng.random(spec.n_labels) < p).astype(np.int64)
        while row.sum() == 0:
            row = (rng.random(spec.n_labels) < p).astype(np.int64)
        labels[i] = row
    # Guarantee every class appears at least once so downstream stratified
    # subsampling always has something to cover.
    for c in range(spec.n_labels):
        if labels[:, c].sum() == 0:
            labels[rng.integers(spec.size), c] = 1
    return labels


def _textures(spec: SyntheticSpec, rng: np.random.Generator, n_channels: int) -> np.ndarray:
    """Smooth per-class spatial fields with mean ~1, one per (class, channel)."""
    yy, xx = np.meshgrid(
        np.arange(spec.height, dtype=np.float64),
        np.arange(spec.width, dtype=np.float64),
        indexing="ij",
    )
    fields = np.empty((spec.n_labels, n_channels, spec.height, spec.width), dtype=np.float64)
    for c in range(spec.n_labels):
        for ch in range(n_channels):
            fy = rng.integers(1, 4)
            fx = rng.integers(1, 4)
            phase_y = rng.uniform(0, 2 * np.pi)
            phase_x = rng.uniform(0, 2 * np.pi)
            wave = np.sin(2 * np.pi * fy * yy / spec.height + phase_y) * np.sin(
                2 * np.pi * fx * xx / spec.width + phase_x
            )
            fields[c, ch] = 1.0 + 0.5 * wave
    return fields


def _prototype_spectra(
    spec: SyntheticSpec, rng: np.random.Generator, p_cond: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class spectra for both modalities, S2 calibrated to the similarity target.

    The measured class-mean spectrum of class c differs from class d by
    roughly ``s2_signal * ((1 - p_c) mu_c - (1 - p_d) mu_d)`` (co-active
    classes contribute a shared offset), so the raw spectra are rescaled to
    make the expected mean pairwise distance equal 1/target - 1.
    """
    mu2 = rng.normal(size=(spec.n_labels, spec.s2_channels))
    weights = 1.0 - p_cond
    eff = mu2 * weights[:, None] * max(spec.s2_signal, 1e-12)
    dists = [
        np.linalg.norm(eff[c] - eff[d])
        for c in range(spec.n_labels)
        for d in range(c + 1, spec.n_labels)
    ]
    target_dist = 1.0 / spec.class_similarity_target - 1.0
    scale = target_dist / max(float(np.mean(dists)), 1e-12)
    mu2 = mu2 * scale

    if spec.duplicate_pair is not None:
        a, b = spec.duplicate_pair
        # Plant class b's *effective* spectrum a small step from class a's, so
        # the measured pair distance is duplicate_gap * target_dist.
        direction = rng.normal(size=spec.s2_channels)
        direction /= np.linalg.norm(direction)
        eff_a = mu2[a] * weights[a]
        eff_b = eff_a + direction * spec.duplicate_gap * target_dist
        mu2[b] = eff_b / max(weights[b], 1e-12)

    mu1 = rng.normal(size=(spec.n_labels, spec.s1_channels))
    mu1 = mu1 * scale  # comparable magnitude to the S2 spectra
    if spec.duplicate_pair is not None:
        a, b = spec.duplicate_pair
        mu1[b] = mu1[a] * (weights[a] / max(weights[b], 1e-12))
    return mu1, mu2


def generate_synthetic(spec: SyntheticSpec) -> MultiModalDataset:
    """Deterministically render a synthetic dataset from ``spec``.

    Both modalities of a sample are rendered from the same label draw: each
    active class adds its per-modality prototype (spectrum x smooth texture),
    scaled by the modality's signal level, and i.i.d. Gaussian pixel noise is
    added on top. Calling this twice with an equal spec yields identical
    arrays.
    """
    spec.validate()
    rng = np.random.default_rng(seed_sequence("synthetic", spec.seed))

    labels = _draw_labels(spec, rng)
    p_cond = _conditional_marginals(_marginal_probabilities(spec))
    mu1, mu2 = _prototype_spectra(spec, rng, p_cond)
    tex1 = _textures(spec, rng, spec.s1_channels)
    tex2 = _textures(spec, rng, spec.s2_channels)

    # Per-class rendered prototypes, shape (L, C, H, W).
    proto1 = mu1[:, :, None, None] * tex1 * spec.s1_signal
    proto2 = mu2[:, :, None, None] * tex2 * spec.s2_signal
    base1 = 0.5 * np.ones((spec.s1_channels, spec.height, spec.width))
    base2 = 0.5 * np.ones((spec.s2_channels, spec.height, spec.width))

    lat = np.round(rng.uniform(-60.0, 60.0, size=spec.size), 5)
    lon = np.round(rng.uniform(-180.0, 180.0, size=spec.size), 5)

    samples = []
    id_width = max(6, len(str(spec.size - 1)))
    for i in range(spec.size):
        active = labels[i].astype(bool)
        x1 = base1 + proto1[active].sum(axis=0)
        x2 = base2 + proto2[active].sum(axis=0)
        if spec.noise_sigma > 0:
            x1 = x1 + spec.noise_sigma * rng.normal(size=x1.shape)
            x2 = x2 + spec.noise_sigma * rng.normal(size=x2.shape)
        samples.append(
            MultiModalSample(
                id=f"synth-{i:0{id_width}d}",
                labels=labels[i].copy(),
                geokey=geokey_from_coords(lat[i], lon[i]),
                s1_source=x1.astype(np.float32),
                s2_source=x2.astype(np.float32),
                lat=float(lat[i]),
                lon=float(lon[i]),
            )
        )
    return MultiModalDataset(samples, spec.class_names())


@dataclass(frozen=True)
class AugmentPolicy:
    """Stochastic patch augmentation settings.

    ``crop_scale`` is the sampled area fraction of a random resized crop
    (resized back to the original size, bilinear). Rotation picks uniformly
    from ``rotations`` (right angles, degrees). Blur applies with probability
    ``blur_prob`` using a sigma drawn from ``blur_sigma``.
    """

    enabled: bool = True
    crop_scale: tuple[float, float] = (0.8, 1.0)
    rotations: tuple[int, ...] = (0, 90, 180, 270)
    blur_sigma: tuple[float, float] = (0.1, 1.0)
    blur_prob: float = 0.5

    def validate(self) -> None:
        lo, hi = self.crop_scale
        if not (0.0 < lo <= hi <= 1.0):
            raise ValidationError(f"crop_scale must satisfy 0 < lo <= hi <= 1, got {self.crop_scale!r}")
        if not self.rotations or any(r % 90 != 0 for r in self.rotations):
            raise ValidationError(f"rotations must be right angles, got {self.rotations!r}")
        blo, bhi = self.blur_sigma
        if not (0.0 < blo <= bhi):
            raise ValidationError(f"blur_sigma must satisfy 0 < lo <= hi, got {self.blur_sigma!r}")
        if not (0.0 <= self.blur_prob <= 1.0):
            raise ValidationError(f"blur_prob must lie in [0, 1], got {self.blur_prob!r}")


def _resized_crop(patch: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    c, h, w = patch.shape
    side = math.sqrt(scale)
    ch_ = max(1, min(h, round(h * side)))
    cw_ = max(1, min(w, round(w * side)))
    top = int(rng.integers(0, h - ch_ + 1))
    left = int(rng.integers(0, w - cw_ + 1))
    crop = patch[:, top : top + ch_, left : left + cw_]
    if crop.shape[1] == h and crop.shape[2] == w:
        return crop
    t = torch.from_numpy(np.ascontiguousarray(crop, dtype=np.float32)).unsqueeze(0)
    out = torch.nn.functional.interpolate(
        t, size=(h, w), mode="bilinear", align_corners=False
    )
    return out.squeeze(0).numpy()


def augment(patch: np.ndarray, policy: AugmentPolicy, seed: int) -> np.ndarray:
    """Random resized crop + right-angle rotation + optional Gaussian blur.

    Pure function of (patch, policy, seed): the same seed reproduces the same
    output exactly. Output shape and dtype match the input. Labels are not
    part of the signature on purpose; augmentation can never touch them.
    """
    arr = check_patch_array(patch, "patch").astype(np.float32, copy=False)
    policy.validate()
    if not policy.enabled:
        return arr.copy()

    rng = np.random.default_rng(seed_sequence("augment", int(seed)))
    scale = float(rng.uniform(*policy.crop_scale))
    out = _resized_crop(arr, scale, rng)

    quarter_turns = int(rng.integers(0, len(policy.rotations)))
    k = (policy.rotations[quarter_turns] // 90) % 4
    if k:
        out = np.rot90(out, k=k, axes=(1, 2))

    if rng.random() < policy.blur_prob:
        sigma = float(rng.uniform(*policy.blur_sigma))
        out = ndimage.gaussian_filter(out, sigma=(0.0, sigma, sigma), mode="nearest")
    return np.ascontiguousarray(out, dtype=np.float32)


def stratified_indices(labels: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    """Label-stratified subsample indices: cover every class, track frequencies.

    First pass guarantees one positive per class (rarest classes first);
    the fill pass repeatedly adds the candidate whose labels most reduce the
    remaining gap to the full set's per-class positive counts scaled by
    ``fraction`` (random tie-break). Returned indices are sorted, so the
    subset preserves dataset order; ``fraction == 1.0`` returns every index.
    """
    y = np.asarray(labels)
    if y.ndim != 2:
        raise ValidationError(f"labels must be 2-D, got shape {y.shape}")
    n, n_classes = y.shape
    check_fraction(fraction, "fraction")
    y = (y > 0).astype(np.float64)

    positives_per_class = y.sum(axis=0)
    missing = [c for c in range(n_classes) if positives_per_class[c] == 0]
    if missing:
        raise ValidationError(
            f"dataset has no positive sample for classes {missing}; cannot stratify"
        )
    if fraction == 1.0:
        return np.arange(n)

    quota = max(1, round(fraction * n))
    rng = np.random.default_rng(seed_sequence("stratify", int(seed)))
    chosen = np.zeros(n, dtype=bool)
    counts = np.zeros(n_classes, dtype=np.float64)

    def _add(idx: int) -> None:
        chosen[idx] = True
        counts_local = y[idx]
        np.add(counts, counts_local, out=counts)

    # Cover pass: rarest class first, skip classes already covered by picks.
    for c in sorted(range(n_classes), key=lambda c: (positives_per_class[c], c)):
        if counts[c] > 0:
            continue
        candidates = np.flatnonzero((y[:, c] > 0) & ~chosen)
        if candidates.size == 0:
            raise ValidationError(f"class {c} cannot be covered (no unchosen positives)")
        _add(int(rng.choice(candidates)))

    if int(chosen.sum()) > quota:
        uncovered = [c for c in range(n_classes) if counts[c] == 1]
        raise ValidationError(
            f"fraction {fraction} yields {quota} samples, too few to cover every class "
            f"(needed {int(chosen.sum())}; classes forcing the overflow include {uncovered})"
        )

    # Fill pass: each pick minimizes the resulting squared per-class gap to
    # the fractional targets. That works out to the signed-deficit score with
    # a half-count penalty per carried label, which cancels the bias toward
    # multi-label samples a plain deficit score has.
    targets = positives_per_class * fraction
    cardinality = y.sum(axis=1)
    while int(chosen.sum()) < quota:
        remaining = np.flatnonzero(~chosen)
        deficit = targets - counts
        scores = y[remaining] @ deficit - 0.5 * cardinality[remaining]
        best = scores.max()
        ties = remaining[scores >= best - 1e-12]
        _add(int(rng.choice(ties)))

    # Repair pass: steepest-descent swaps between chosen and unchosen samples
    # while any exchange strictly lowers the squared per-class gap. The fill
    # alone overshoots: picks continue to the quota even after targets are
    # met, and every sample carries at least one label. Swaps never drop the
    # sole remaining positive of a class.
    for _ in range(4 * quota):
        chosen_idx = np.flatnonzero(chosen)
        open_idx = np.flatnonzero(~chosen)
        if open_idx.size == 0:
            break
        gap = counts - targets
        y_in, y_out = y[open_idx], y[chosen_idx]
        delta = (
            (2.0 * (y_in @ gap) + cardinality[open_idx])[:, None]
            + (-2.0 * (y_out @ gap) + cardinality[chosen_idx])[None, :]
            - 2.0 * (y_in @ y_out.T)
        )
        critical = counts <= 1.0
        if critical.any():
            breaks_cover = (1.0 - y_in[:, critical]) @ y_out[:, critical].T
            delta = np.where(breaks_cover > 0, np.inf, delta)
        i, o = np.unravel_index(int(np.argmin(delta)), delta.shape)
        if delta[i, o] >= -1e-9:
            break
        chosen[chosen_idx[o]] = False
        np.subtract(counts, y[chosen_idx[o]], out=counts)
        _add(int(open_idx[i]))

    return np.flatnonzero(chosen)


def stratified_subsample(
    dataset: MultiModalDataset, fraction: float, seed: int
) -> MultiModalDataset:
    """Dataset-level wrapper over :func:`stratified_indices`."""
    idx = stratified_indices(dataset.labels_matrix(), fraction, seed)
    return dataset.subset(idx)


def split_holdout(
    dataset: MultiModalDataset, eval_fraction: float, seed: int
) -> tuple[MultiModalDataset, MultiModalDataset]:
    """Random (train_pool, held_out) split, deterministic per seed.

    The held-out side is only guaranteed usable for evaluation; the train
    pool keeps at least one positive per class whenever the full dataset can
    support it (positives are re-balanced greedily if the draw starved a
    class).
    """
    check_fraction(eval_fraction, "eval_fraction", inclusive_top=False)
    n = len(dataset)
    n_eval = max(1, round(eval_fraction * n))
    if n_eval >= n:
        raise ValidationError("eval_fraction leaves no training data")
    rng = np.random.default_rng(seed_sequence("holdout", int(seed)))
    perm = rng.permutation(n)
    eval_idx = set(perm[:n_eval].tolist())

    labels = dataset.labels_matrix()
    train_idx = [i for i in range(n) if i not in eval_idx]
    train_counts = labels[train_idx].sum(axis=0)
    for c in np.flatnonzero(train_counts == 0):
        movable = [i for i in sorted(eval_idx) if labels[i, c] > 0]
        if not movable:
            continue  # class only exists in one sample; leave it where it fell
        pick = movable[int(rng.integers(len(movable)))]
        eval_idx.remove(pick)
        swap_candidates = [i for i in train_idx if labels[i, c] == 0]
        if swap_candidates:
            out = swap_candidates[int(rng.integers(len(swap_candidates)))]
            eval_idx.add(out)
        train_idx = [i for i in range(n) if i not in eval_idx]
    train_idx = [i for i in range(n) if i not in eval_idx]
    return dataset.subset(train_idx), dataset.subset(sorted(eval_idx))


# --------------------------------------------------------------------------
# Disk formats


def builtin_vocabulary_path(name: str = "bigearthnet19") -> Path:
    ref = resources.files("mmcl.vocabularies") / f"{name}.txt"
    with resources.as_file(ref) as p:
        return Path(p)


def load_vocabulary(path: str | Path) -> list[str]:
    """Newline-delimited class names; line number = label index."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    names = [ln.strip() for ln in lines if ln.strip()]
    if not names:
        raise ValidationError(f"vocabulary {path} is empty")
    if len(set(names)) != len(names):
        raise ValidationError(f"vocabulary {path} contains duplicate class names")
    return names


def save_dataset(dataset: MultiModalDataset, out_dir: str | Path) -> Path:
    """Write patches (.npy, little-endian float32), manifest.jsonl, vocabulary.txt.

    Returns the manifest path. Patch paths inside the manifest are relative
    to the manifest's directory.
    """
    out = Path(out_dir)
    patches = out / "patches"
    patches.mkdir(parents=True, exist_ok=True)
    lines = []
    for s in dataset:
        s1_rel = f"patches/{s.id}_s1.npy"
        s2_rel = f"patches/{s.id}_s2.npy"
        for rel, arr in ((s1_rel, s.s1), (s2_rel, s.s2)):
            buf = _npy_bytes(arr)
            atomic_write_bytes(out / rel, buf)
        names = [dataset.class_names[c] for c in np.flatnonzero(s.labels)]
        lines.append(
            json.dumps(
                {
                    "id": s.id,
                    "s1_path": s1_rel,
                    "s2_path": s2_rel,
                    "labels": names,
                    "lat": s.lat,
                    "lon": s.lon,
                },
                sort_keys=True,
            )
        )
    atomic_write_text(out / "vocabulary.txt", "\n".join(dataset.class_names) + "\n")
    manifest = out / "manifest.jsonl"
    atomic_write_text(manifest, "\n".join(lines) + ("\n" if lines else ""))
    return manifest


def _npy_bytes(arr: np.ndarray) -> bytes:
    import io as _io

    buf = _io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr, dtype="<f4"))
    return buf.getvalue()


def load_manifest(
    manifest_path: str | Path, vocabulary_path: str | Path | None = None
) -> MultiModalDataset:
    """Read a JSON-lines manifest into a lazily-loading dataset.

    Label names resolve against the vocabulary (``vocabulary.txt`` next to
    the manifest by default). Unknown class names and unresolvable patch
    paths raise, naming every offender / the offending record id.
    """
    manifest = Path(manifest_path)
    if vocabulary_path is None:
        vocabulary_path = manifest.parent / "vocabulary.txt"
    names = load_vocabulary(vocabulary_path)
    index = {name: i for i, name in enumerate(names)}

    samples = []
    unknown: set[str] = set()
    for line_no, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{manifest}:{line_no}: malformed JSON ({e})") from e
        labels = np.zeros(len(names), dtype=np.int64)
        for label in rec["labels"]:
            if label not in index:
                unknown.add(label)
            else:
                labels[index[label]] = 1
        s1 = (manifest.parent / rec["s1_path"]).resolve()
        s2 = (manifest.parent / rec["s2_path"]).resolve()
        for p in (s1, s2):
            if not p.exists():
                raise ValidationError(f"record {rec['id']!r}: patch file {p} does not exist")
        lat = float(rec.get("lat", 0.0))
        lon = float(rec.get("lon", 0.0))
        samples.append(
            MultiModalSample(
                id=str(rec["id"]),
                labels=labels,
                geokey=geokey_from_coords(lat, lon),
                s1_source=s1,
                s2_source=s2,
                lat=lat,
                lon=lon,
            )
        )
    if unknown:
        raise ValidationError(
            f"manifest {manifest} references classes missing from the vocabulary: "
            f"{sorted(unknown)}"
        )
    return MultiModalDataset(samples, names)


def class_pixel_sets(
    dataset: MultiModalDataset,
    pixels_per_class: int = 2048,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Sample S2 pixel spectra per active class, for the similarity matrix.

    Every sample with class c active contributes its S2 pixels to class c's
    pool; ``pixels_per_class`` spectra are drawn uniformly from each pool.
    """
    check_positive_int(pixels_per_class, "pixels_per_class")
    rng = np.random.default_rng(seed_sequence("class-pixels", int(seed)))
    labels = dataset.labels_matrix()
    out: dict[str, np.ndarray] = {}
    for c, name in enumerate(dataset.class_names):
        members = np.flatnonzero(labels[:, c] > 0)
        if members.size == 0:
            raise ValidationError(f"class {name!r} has no samples; cannot collect pixels")
        pools = []
        for i in members:
            s2 = dataset[i].s2
            pools.append(s2.reshape(s2.shape[0], -1).T)  # (pixels, bands)
        pool = np.concatenate(pools, axis=0)
        take = rng.choice(pool.shape[0], size=min(pixels_per_class, pool.shape[0]), replace=False)
        out[name] = pool[take]
    return out


def mean_patches(dataset: MultiModalDataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel-and-pixel mean S1 and S2 patches over a dataset."""
    if len(dataset) == 0:
        raise ValidationError("cannot average patches of an empty dataset")
    s1 = np.mean([s.s1 for s in dataset], axis=0).astype(np.float32)
    s2 = np.mean([s.s2 for s in dataset], axis=0).astype(np.float32)
    return s1, s2

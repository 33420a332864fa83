"""Synthetic unaligned multimodal data, on-disk format, padding and splits.

Each generated sample has a latent class ``y``. Every modality carries one
class motif at its own random position in unit-variance noise. Two of the
three modalities show ``y``'s motif and the remaining one shows a different
class's motif, so the label is the majority motif: any single modality agrees
with the label only 2/3 of the time, while all three together determine it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import MODALITIES, Modality
from .errors import ConfigError, ContractError, DatasetLoadError


@dataclass
class ModalitySequence:
    kind: Modality
    data: np.ndarray  # [T, d]

    def __post_init__(self):
        self.kind = Modality(self.kind)
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or 0 in self.data.shape:
            raise ContractError(f"{self.kind.value} sequence must be a nonempty [T, d] matrix")

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass
class MultimodalSample:
    sequences: dict[Modality, ModalitySequence]
    label: int | float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if set(self.sequences) != set(MODALITIES):
            raise ContractError("a sample needs exactly one sequence per modality")
        if isinstance(self.label, (float, np.floating)) and not -3.0 <= self.label <= 3.0:
            raise ContractError(f"score label {self.label} outside [-3, 3]")

    def __getitem__(self, m: Modality) -> ModalitySequence:
        return self.sequences[Modality(m)]

    @property
    def lengths(self) -> tuple[int, int, int]:
        return tuple(self.sequences[m].length for m in MODALITIES)

    @classmethod
    def from_arrays(cls, text, vision, audio, label, meta=None) -> "MultimodalSample":
        seqs = {m: ModalitySequence(m, x) for m, x in zip(MODALITIES, (text, vision, audio))}
        return cls(seqs, label, meta or {})


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 2000
    dims: tuple[int, int, int] = (8, 6, 4)
    lengths: tuple[tuple[int, int], ...] = ((6, 10), (8, 14), (10, 16))
    snr: float = 4.0
    num_classes: int = 2
    motif_width: int = 3
    seed: int = 0
    label_kind: str = "class"

    def validate(self) -> None:
        if self.n_samples < 1:
            raise ConfigError("n_samples must be positive")
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes")
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise ConfigError(f"bad modality dims {self.dims}")
        if len(self.lengths) != 3:
            raise ConfigError("need one length range per modality")
        for lo, hi in self.lengths:
            if lo < 1 or hi < lo:
                raise ConfigError(f"bad length range [{lo}, {hi}]")
            if lo < self.motif_width:
                raise ConfigError(f"minimum length {lo} shorter than motif width {self.motif_width}")
        if self.motif_width < 1 or self.snr < 0:
            raise ConfigError("motif_width must be positive and snr nonnegative")
        if self.label_kind not in ("class", "score"):
            raise ConfigError(f"label_kind must be 'class' or 'score', got {self.label_kind!r}")


def class_to_score(k, num_classes: int):
    """Evenly spaced sentiment score in [-3, 3] for class index ``k``."""
    return -3.0 + 6.0 * np.asarray(k, dtype=np.float64) / (num_classes - 1)


def score_to_class(score, num_classes: int):
    k = np.rint((np.asarray(score, dtype=np.float64) + 3.0) * (num_classes - 1) / 6.0)
    return np.clip(k, 0, num_classes - 1).astype(np.int64)


def motif_templates(spec: SyntheticSpec) -> dict[Modality, np.ndarray]:
    """Per-modality class motifs, [C, width, d_m], unit RMS each."""
    rng = np.random.default_rng([spec.seed, 7919])
    out = {}
    for m, d in zip(MODALITIES, spec.dims):
        t = rng.standard_normal((spec.num_classes, spec.motif_width, d))
        t /= np.sqrt((t**2).mean(axis=(1, 2), keepdims=True))
        out[m] = t
    return out


def generate_synthetic(spec: SyntheticSpec) -> list[MultimodalSample]:
    spec.validate()
    templates = motif_templates(spec)
    rng = np.random.default_rng(spec.seed)
    C, w = spec.num_classes, spec.motif_width
    samples = []
    for _ in range(spec.n_samples):
        y = int(rng.integers(C))
        odd = int(rng.integers(3))
        other = int((y + rng.integers(1, C)) % C)
        seqs, motifs, starts = {}, {}, {}
        for i, (m, d, (lo, hi)) in enumerate(zip(MODALITIES, spec.dims, spec.lengths)):
            T = int(rng.integers(lo, hi + 1))
            x = rng.standard_normal((T, d))
            cls = other if i == odd else y
            start = int(rng.integers(0, T - w + 1))
            x[start : start + w] += spec.snr * templates[m][cls]
            seqs[m] = ModalitySequence(m, x)
            motifs[m.value] = cls
            starts[m.value] = start
        label = float(class_to_score(y, C)) if spec.label_kind == "score" else y
        samples.append(MultimodalSample(seqs, label, {"class": y, "motif": motifs, "start": starts}))
    return samples


# -- matched-filter oracle ---------------------------------------------------


def matched_filter(x: np.ndarray, templates: np.ndarray) -> int:
    """Class whose template has the highest sliding correlation anywhere in ``x``."""
    w = templates.shape[1]
    windows = np.lib.stride_tricks.sliding_window_view(x, (w, x.shape[1]))[:, 0]  # [P, w, d]
    scores = np.einsum("pwd,cwd->pc", windows, templates)
    return int(scores.max(axis=0).argmax())


def matched_filter_predictions(
    samples: Sequence[MultimodalSample], spec: SyntheticSpec, modalities: Iterable[Modality] = MODALITIES
) -> np.ndarray:
    """Majority vote over per-modality matched-filter detections (ties go to the first)."""
    templates = motif_templates(spec)
    modalities = [Modality(m) for m in modalities]
    preds = np.empty(len(samples), dtype=np.int64)
    for n, s in enumerate(samples):
        votes = [matched_filter(s[m].data, templates[m]) for m in modalities]
        counts = np.bincount(votes, minlength=spec.num_classes)
        best = counts.max()
        preds[n] = next(v for v in votes if counts[v] == best)
    return preds


def sample_class(s: MultimodalSample, num_classes: int) -> int:
    if isinstance(s.label, (float, np.floating)):
        return int(score_to_class(s.label, num_classes))
    return int(s.label)


def matched_filter_accuracy(
    samples: Sequence[MultimodalSample], spec: SyntheticSpec, modalities: Iterable[Modality] = MODALITIES
) -> float:
    preds = matched_filter_predictions(samples, spec, modalities)
    truth = np.array([sample_class(s, spec.num_classes) for s in samples])
    return float((preds == truth).mean())


# -- disk format -------------------------------------------------------------

MANIFEST = "manifest.json"
LABELS = "labels.csv"


def save_dataset(samples: Sequence[MultimodalSample], directory, num_classes: int | None = None) -> Path:
    """Write ``manifest.json``, ``labels.csv`` and ``i.{L,V,A}.csv`` per sample."""
    if not samples:
        raise ContractError("refusing to save an empty dataset")
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    first = samples[0]
    score = isinstance(first.label, (float, np.floating))
    if num_classes is None:
        num_classes = 7 if score else int(max(int(s.label) for s in samples)) + 1
    manifest = {
        "samples": len(samples),
        "num_classes": int(num_classes),
        "dims": {m.value: first[m].dim for m in MODALITIES},
        "label_kind": "score" if score else "class",
    }
    for i, s in enumerate(samples):
        for m in MODALITIES:
            if s[m].dim != manifest["dims"][m.value]:
                raise ContractError(f"sample {i} {m.value} dim {s[m].dim} differs from sample 0")
            np.savetxt(root / f"{i}.{m.value}.csv", s[m].data, delimiter=",", fmt="%.17g")
    with open(root / LABELS, "w") as fh:
        for i, s in enumerate(samples):
            fh.write(f"{i},{float(s.label)!r}\n" if score else f"{i},{int(s.label)}\n")
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return root


def _read_matrix(path: Path, dim: int) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as err:
        raise DatasetLoadError(f"cannot read {path.name}: {err}") from err
    if arr.shape[1] != dim:
        raise DatasetLoadError(f"{path.name}: {arr.shape[1]} columns, manifest says {dim}")
    if not np.isfinite(arr).all():
        raise DatasetLoadError(f"{path.name}: non-finite values")
    return arr


def load_dataset(directory) -> tuple[list[MultimodalSample], dict]:
    """Read a dataset directory; returns the samples and the manifest dict."""
    root = Path(directory)
    mpath = root / MANIFEST
    if not mpath.is_file():
        raise DatasetLoadError(f"missing manifest in {root}")
    try:
        manifest = json.loads(mpath.read_text())
        n = int(manifest["samples"])
        dims = {Modality(k): int(v) for k, v in manifest["dims"].items()}
        kind = manifest["label_kind"]
    except (ValueError, KeyError, TypeError) as err:
        raise DatasetLoadError(f"malformed manifest: {err}") from err

    present = {p.name.split(".")[0] for p in root.glob("*.L.csv")}
    if len(present) != n or any(str(i) not in present for i in range(n)):
        raise DatasetLoadError(f"manifest lists {n} samples but {len(present)} are present")

    labels: dict[int, float | int] = {}
    try:
        for line in (root / LABELS).read_text().splitlines():
            if not line.strip():
                continue
            idx, val = line.split(",")
            value = float(val)
            if not math.isfinite(value):
                raise DatasetLoadError(f"non-finite label for sample {idx}")
            labels[int(idx)] = value if kind == "score" else int(value)
    except (OSError, ValueError) as err:
        raise DatasetLoadError(f"cannot read labels: {err}") from err
    if sorted(labels) != list(range(n)):
        raise DatasetLoadError(f"labels.csv covers {len(labels)} samples, manifest says {n}")

    samples = []
    for i in range(n):
        seqs = {m: ModalitySequence(m, _read_matrix(root / f"{i}.{m.value}.csv", dims[m])) for m in MODALITIES}
        samples.append(MultimodalSample(seqs, labels[i]))
    return samples, manifest


# -- batching ------------------------------------------------------------------


@dataclass
class Batch:
    data: dict[Modality, np.ndarray]  # [N, T_max, d]
    masks: dict[Modality, np.ndarray]  # [N, T_max] bool
    labels: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def lengths(self, m: Modality) -> np.ndarray:
        return self.masks[m].sum(axis=1)


def collate(samples: Sequence[MultimodalSample], indices: Sequence[int] | None = None) -> Batch:
    """Zero-pad each modality to its longest member and build masks."""
    if not samples:
        raise ContractError("cannot collate an empty sample list")
    data, masks = {}, {}
    for m in MODALITIES:
        lens = [s[m].length for s in samples]
        d = samples[0][m].dim
        arr = np.zeros((len(samples), max(lens), d))
        mask = np.zeros((len(samples), max(lens)), dtype=bool)
        for n, s in enumerate(samples):
            arr[n, : lens[n]] = s[m].data
            mask[n, : lens[n]] = True
        data[m], masks[m] = arr, mask
    labels = np.array([s.label for s in samples])
    idx = np.arange(len(samples)) if indices is None else np.asarray(indices)
    return Batch(data, masks, labels, idx)


def batch_and_pad(
    samples: Sequence[MultimodalSample], batch_size: int, seed: int | None = None
) -> list[Batch]:
    """Shuffle (when ``seed`` is given) and cut into padded batches."""
    if not samples:
        raise ContractError("cannot batch an empty sample list")
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(samples))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(samples))
    return [
        collate([samples[i] for i in order[k : k + batch_size]], order[k : k + batch_size])
        for k in range(0, len(samples), batch_size)
    ]


def split(
    samples: Sequence[MultimodalSample],
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> tuple[list[MultimodalSample], list[MultimodalSample], list[MultimodalSample]]:
    """Deterministic disjoint train/valid/test partition."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three positive numbers summing to 1, got {ratios}")
    n = len(samples)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_valid = min(int(round(ratios[1] * n)), n - n_train)
    parts = np.split(order, [n_train, n_train + n_valid])
    return tuple([samples[i] for i in part] for part in parts)

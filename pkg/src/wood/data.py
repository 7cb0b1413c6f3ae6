"""Dataset containers, IDX image-file ingestion, synthetic generators, splits.

Out-of-distribution datasets are structurally unlabeled: the ``labels``
accessor raises for OOD-role datasets, so no downstream computation can
consume a label it should not have.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, InputError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class Role(Enum):
    IND = "ind"
    OOD = "ood"


class Dataset:
    """Immutable feature matrix with optional labels and a provenance string.

    ``normalization`` records how raw values were scaled at load time so a
    checkpoint can echo it.
    """

    def __init__(
        self,
        features: np.ndarray,
        labels: np.ndarray | None,
        role: Role,
        provenance: str,
        n_classes: int | None = None,
        normalization: dict | None = None,
    ):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise InputError(f"features must be 2-D, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise InputError("features contain non-finite values")
        self.features = features
        self.role = role
        self.provenance = provenance
        self.normalization = dict(normalization) if normalization else {"kind": "identity"}
        if role is Role.OOD:
            self._labels = None
            self._n_classes = None
        else:
            if labels is None:
                raise InputError("InD dataset requires labels")
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (features.shape[0],):
                raise InputError(
                    f"labels shape {labels.shape} does not match {features.shape[0]} samples"
                )
            if np.any(labels < 0):
                raise InputError("labels must be nonnegative class indices")
            self._labels = labels
            self._n_classes = int(n_classes) if n_classes is not None else int(labels.max()) + 1
            if np.any(labels >= self._n_classes):
                raise InputError("label exceeds declared class count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def labels(self) -> np.ndarray:
        if self.role is Role.OOD:
            raise InputError("OOD datasets carry no labels")
        return self._labels

    @property
    def n_classes(self) -> int:
        if self.role is Role.OOD:
            raise InputError("OOD datasets carry no class structure")
        return self._n_classes

    def take(self, indices: np.ndarray, provenance_suffix: str) -> "Dataset":
        labels = self._labels[indices] if self._labels is not None else None
        return Dataset(
            self.features[indices],
            labels,
            self.role,
            f"{self.provenance}/{provenance_suffix}",
            n_classes=self._n_classes,
            normalization=self.normalization,
        )


class SyntheticKind(Enum):
    GAUSSIAN_BLOBS = "blobs"
    RING = "ring"
    SHIFTED_BLOB = "shifted"


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the synthetic generators.

    ``n_per_class`` is per-class for blobs and the total count for the
    unlabeled OOD kinds. ``separation`` places blob centers (radius of the
    center circle) or sets the ring radius / shifted-blob displacement base.
    """

    kind: SyntheticKind
    k: int = 3
    n_per_class: int = 200
    dim: int = 2
    separation: float = 4.0
    noise: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError(f"need k >= 2 classes, got {self.k}")
        if self.n_per_class < 1:
            raise ConfigError(f"need n_per_class >= 1, got {self.n_per_class}")
        if self.dim < 2:
            raise ConfigError(f"need dim >= 2, got {self.dim}")
        if self.separation <= 0 or self.noise <= 0:
            raise ConfigError("separation and noise must be positive")


def _blob_centers(k: int, dim: int, separation: float) -> np.ndarray:
    # Centers sit on a circle in the first two coordinates; equally spaced
    # angles make the centroid exactly the origin.
    angles = 2.0 * np.pi * np.arange(k) / k
    centers = np.zeros((k, dim))
    centers[:, 0] = separation * np.cos(angles)
    centers[:, 1] = separation * np.sin(angles)
    return centers


def synth(spec: SyntheticSpec) -> Dataset:
    """Deterministic synthetic dataset for the given spec."""
    rng = np.random.default_rng(spec.seed)
    tag = (
        f"{spec.kind.value}(k={spec.k},n={spec.n_per_class},dim={spec.dim},"
        f"sep={spec.separation},noise={spec.noise},seed={spec.seed})"
    )
    if spec.kind is SyntheticKind.GAUSSIAN_BLOBS:
        centers = _blob_centers(spec.k, spec.dim, spec.separation)
        features = np.vstack(
            [
                centers[c] + spec.noise * rng.standard_normal((spec.n_per_class, spec.dim))
                for c in range(spec.k)
            ]
        )
        labels = np.repeat(np.arange(spec.k), spec.n_per_class)
        return Dataset(features, labels, Role.IND, tag, n_classes=spec.k)

    if spec.kind is SyntheticKind.RING:
        # Annulus of radius `separation` around the blob centroid (the
        # origin): every point's radius stays within `noise` of it.
        n = spec.n_per_class
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n)
        radii = spec.separation + spec.noise * rng.uniform(-1.0, 1.0, size=n)
        features = np.zeros((n, spec.dim))
        features[:, 0] = radii * np.cos(angles)
        features[:, 1] = radii * np.sin(angles)
        return Dataset(features, None, Role.OOD, tag)

    if spec.kind is SyntheticKind.SHIFTED_BLOB:
        n = spec.n_per_class
        center = np.zeros(spec.dim)
        center[0] = 3.0 * spec.separation
        features = center + spec.noise * rng.standard_normal((n, spec.dim))
        return Dataset(features, None, Role.OOD, tag)

    raise ConfigError(f"unknown synthetic kind {spec.kind!r}")


def _stratified_counts(n: int, fractions: tuple[float, ...]) -> list[int]:
    # Largest-remainder allocation: exact totals, deterministic.
    raw = [n * f for f in fractions]
    counts = [int(np.floor(x)) for x in raw]
    remainder = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def split(ds: Dataset, fractions, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Partition into (train, calibration, test), stratified when labeled.

    Fractions must be positive and sum to 1. The three parts are disjoint
    and exhaustive; identical seeds give identical partitions.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise ConfigError(f"expected 3 fractions, got {len(fractions)}")
    if any(f <= 0 for f in fractions):
        raise ConfigError(f"fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)!r}")

    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    if ds.role is Role.IND:
        labels = ds.labels
        for c in range(ds.n_classes):
            idx = np.flatnonzero(labels == c)
            if idx.size < 3:
                raise ConfigError(
                    f"class {c} has only {idx.size} samples; cannot stratify into 3 splits"
                )
            idx = rng.permutation(idx)
            counts = _stratified_counts(idx.size, fractions)
            start = 0
            for part, count in zip(parts, counts):
                part.append(idx[start : start + count])
                start += count
    else:
        idx = rng.permutation(ds.n)
        counts = _stratified_counts(ds.n, fractions)
        start = 0
        for part, count in zip(parts, counts):
            part.append(idx[start : start + count])
            start += count

    names = ("train", "calib", "test")
    out = []
    for name, chunks in zip(names, parts):
        indices = np.sort(np.concatenate(chunks))
        out.append(ds.take(indices, name))
    return tuple(out)


def _open_maybe_gzip(path: str | Path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def _read_idx(blob: bytes, path: str) -> tuple[int, np.ndarray]:
    if len(blob) < 4:
        raise FormatError(f"{path}: truncated IDX header at byte {len(blob)}")
    (magic,) = struct.unpack(">I", blob[:4])
    ndim = magic & 0xFF
    # Only unsigned-byte tensors of sane rank are valid here; anything else
    # is a wrong or corrupted magic.
    if (magic >> 8) != 0x08 or not 1 <= ndim <= 4:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}")
    header_len = 4 + 4 * ndim
    if len(blob) < header_len:
        raise FormatError(f"{path}: truncated IDX header at byte {len(blob)}")
    dims = struct.unpack(f">{ndim}I", blob[4:header_len])
    expected = header_len + int(np.prod(dims))
    if len(blob) < expected:
        raise FormatError(
            f"{path}: truncated IDX payload at byte {len(blob)} (expected {expected})"
        )
    data = np.frombuffer(blob[header_len:expected], dtype=np.uint8).reshape(dims)
    return magic, data


def load_idx_pair(
    images_path: str | Path,
    labels_path: str | Path | None,
    role: Role = Role.IND,
) -> Dataset:
    """Load a big-endian IDX image/label file pair (gzip detected by magic).

    Pixels are scaled to [0, 1] and flattened to one row per image. For the
    OOD role (or a missing labels file) labels are dropped entirely.
    """
    magic, images = _read_idx(_open_maybe_gzip(images_path), str(images_path))
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(
            f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )
    n = images.shape[0]
    features = images.reshape(n, -1).astype(np.float64) / 255.0

    labels = None
    if labels_path is not None:
        lmagic, larray = _read_idx(_open_maybe_gzip(labels_path), str(labels_path))
        if lmagic != IDX_LABELS_MAGIC:
            raise FormatError(
                f"{labels_path}: bad magic 0x{lmagic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        if larray.shape[0] != n:
            raise FormatError(
                f"count mismatch: {n} images vs {larray.shape[0]} labels"
            )
        labels = larray.astype(np.int64)
    elif role is Role.IND:
        raise InputError("InD IDX pair requires a labels file")

    return Dataset(
        features,
        labels,
        role,
        provenance=f"idx({Path(images_path).name})",
        normalization={"kind": "pixel_scale", "scale": 255.0},
    )


def write_idx(path: str | Path, array: np.ndarray) -> None:
    """Write a uint8 tensor in IDX format (1-D = labels, 3-D = images).

    Gzip-compresses when the path ends in ``.gz``. Round-trips bit-exactly
    through :func:`load_idx_pair`'s reader.
    """
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if array.ndim == 1:
        magic = IDX_LABELS_MAGIC
    elif array.ndim == 3:
        magic = IDX_IMAGES_MAGIC
    else:
        raise InputError(f"IDX writer supports 1-D or 3-D uint8 tensors, got {array.ndim}-D")
    blob = struct.pack(">I", magic)
    blob += struct.pack(f">{array.ndim}I", *array.shape)
    blob += array.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        # mtime=0 keeps the compressed bytes deterministic.
        path.write_bytes(gzip.compress(blob, mtime=0))
    else:
        path.write_bytes(blob)


def save_dataset_csv(ds: Dataset, path: str | Path) -> None:
    """Write features (and labels for InD data) as a headered CSV.

    Floats are rendered with ``repr`` so files are deterministic and values
    reload exactly.
    """
    labeled = ds.role is Role.IND
    with open(path, "w", encoding="ascii") as fh:
        header = [f"f{i}" for i in range(ds.dim)]
        if labeled:
            header.append("label")
        fh.write(",".join(header) + "\n")
        for i in range(ds.n):
            row = [repr(float(x)) for x in ds.features[i]]
            if labeled:
                row.append(str(int(ds.labels[i])))
            fh.write(",".join(row) + "\n")


def load_dataset_csv(path: str | Path, role: Role, n_classes: int | None = None) -> Dataset:
    """Load a dataset CSV written by :func:`save_dataset_csv`."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if not header:
            raise FormatError(f"{path}: empty CSV")
        columns = header.split(",")
        has_label = columns[-1] == "label"
        dim = len(columns) - (1 if has_label else 0)
        features = []
        labels = []
        for lineno, line in enumerate(fh, start=2):
            cells = line.strip().split(",")
            if len(cells) != len(columns):
                raise FormatError(f"{path}:{lineno}: expected {len(columns)} cells")
            try:
                features.append([float(c) for c in cells[:dim]])
                if has_label:
                    labels.append(int(cells[dim]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not features:
        raise FormatError(f"{path}: no data rows")
    label_arr = np.array(labels, dtype=np.int64) if (has_label and role is Role.IND) else None
    return Dataset(
        np.array(features),
        label_arr,
        role,
        provenance=f"csv({Path(path).name})",
        n_classes=n_classes,
    )

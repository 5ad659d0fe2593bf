"""Point-cloud values, normalization, augmentation, synthetic shapes, and I/O.

A cloud is an (m, 3) float64 array of Cartesian coordinates plus an
optional class label. Two file formats are supported:

* text: header line ``pc <m> <label>`` followed by one ``x y z`` triple
  per line (label -1 encodes "no label"),
* binary: magic ``PCB1``, little-endian uint32 point count, int32 label,
  then m*3 little-endian float32 coordinates.

Synthetic datasets are generated deterministically from a spec; per-cloud
randomness is split off the dataset seed as ``seed XOR cloud_index``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from isoattack.geometry import EulerAngles, Transform3, euler_to_rotation

_BINARY_MAGIC = b"PCB1"
MANIFEST_SCHEMA_VERSION = 1

SHAPE_GENERATORS = ("sphere", "box", "cone", "stairs")


class DegenerateCloud(Exception):
    """All points coincide; the cloud cannot be scaled to the unit sphere."""


class ParseError(Exception):
    """A cloud file failed to parse; message names the file and line."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}: line {line}: {message}")
        self.path = str(path)
        self.line = line


@dataclass(frozen=True)
class PointCloud:
    """An (m, 3) coordinate array with an optional class label."""

    points: np.ndarray
    label: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"points must be (m, 3) with m >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class ShapeDatasetSpec:
    """Recipe for a deterministic synthetic shape dataset."""

    classes: tuple[str, ...] = SHAPE_GENERATORS
    points_per_cloud: int = 512
    train_count: int = 100
    test_count: int = 50
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        for name in self.classes:
            if name not in SHAPE_GENERATORS:
                raise ValueError(f"unknown shape generator {name!r}; supported: {SHAPE_GENERATORS}")
        if self.points_per_cloud < 1:
            raise ValueError("points_per_cloud must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


@dataclass
class ShapeDataset:
    """Labeled train/test cloud lists; class index = position in classes."""

    classes: tuple[str, ...]
    points_per_cloud: int
    seed: int
    noise_sigma: float = 0.0
    train: list[PointCloud] = field(default_factory=list)
    test: list[PointCloud] = field(default_factory=list)


@dataclass(frozen=True)
class AugmentConfig:
    """Training-time augmentation ranges, applied in the order
    rotate-about-y, scale, translate, jitter."""

    rotate_y_lo: float = -math.pi
    rotate_y_hi: float = math.pi
    scale_lo: float = 0.8
    scale_hi: float = 1.25
    translate_max: float = 0.1
    jitter_sigma: float = 0.01
    jitter_clip: float = 0.05

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0)


def apply_transform(p: PointCloud, a: Transform3) -> PointCloud:
    """Transform every point as q_i = A p_i, i.e. Q = P @ A.T."""
    a = np.asarray(a, dtype=np.float64)
    return PointCloud(points=p.points @ a.T, label=p.label)


def normalize_to_unit_sphere(p: PointCloud) -> PointCloud:
    """Subtract the centroid, then scale so the farthest point has norm 1."""
    pts = p.points - p.points.mean(axis=0)
    radius = float(np.max(np.linalg.norm(pts, axis=1)))
    if radius == 0.0:
        raise DegenerateCloud("all points coincide")
    return PointCloud(points=pts / radius, label=p.label)


def augment(p: PointCloud, cfg: AugmentConfig, rng: np.random.Generator) -> PointCloud:
    """Random y-rotation, uniform scale, translation, and clipped jitter."""
    theta = rng.uniform(cfg.rotate_y_lo, cfg.rotate_y_hi)
    c, s = math.cos(theta), math.sin(theta)
    ry = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    pts = p.points @ ry.T
    pts = pts * rng.uniform(cfg.scale_lo, cfg.scale_hi)
    pts = pts + rng.uniform(-cfg.translate_max, cfg.translate_max, size=3)
    if cfg.jitter_sigma > 0.0:
        jitter = rng.normal(0.0, cfg.jitter_sigma, size=pts.shape)
        pts = pts + np.clip(jitter, -cfg.jitter_clip, cfg.jitter_clip)
    return PointCloud(points=pts, label=p.label)


def augment_p_rotation(p: PointCloud, prob: float, rng: np.random.Generator) -> PointCloud:
    """With probability prob, apply a full random rotation; else identity.

    The rotation angles are uniform in [-pi, pi] about each axis.
    """
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"prob must lie in [0, 1], got {prob!r}")
    if rng.random() >= prob:
        return p
    angles = EulerAngles(*(rng.uniform(-math.pi, math.pi) for _ in range(3)))
    return apply_transform(p, euler_to_rotation(angles))


# ---------------------------------------------------------------------------
# Synthetic shapes. Every generator returns raw (unnormalized) surface
# samples; generate_shapes adds noise and normalizes.
# ---------------------------------------------------------------------------


def _sphere_points(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_box_surface(n, half_extents, rng, center=(0.0, 0.0, 0.0)):
    hx, hy, hz = half_extents
    # Face areas: +-x, +-y, +-z.
    areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy], dtype=float)
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-1.0, 1.0, size=n)
    v = rng.uniform(-1.0, 1.0, size=n)
    pts = np.empty((n, 3))
    for i in range(n):
        f = face[i]
        if f < 2:
            pts[i] = ((hx if f == 0 else -hx), u[i] * hy, v[i] * hz)
        elif f < 4:
            pts[i] = (u[i] * hx, (hy if f == 2 else -hy), v[i] * hz)
        else:
            pts[i] = (u[i] * hx, v[i] * hy, (hz if f == 4 else -hz))
    return pts + np.asarray(center)


def _box_points(n: int, rng: np.random.Generator) -> np.ndarray:
    return _sample_box_surface(n, (0.9, 0.55, 0.3), rng)


def _cone_points(n: int, rng: np.random.Generator) -> np.ndarray:
    # Apex up at (0, 0, h); base disk of radius r at z = 0. Both the disk
    # and the lateral surface have area density proportional to the radial
    # coordinate, so one sqrt draw serves both.
    r, h = 0.7, 1.4
    slant = math.hypot(r, h)
    lateral_area = math.pi * r * slant
    base_area = math.pi * r * r
    on_base = rng.random(n) < base_area / (lateral_area + base_area)
    phi = rng.uniform(-math.pi, math.pi, size=n)
    radial = r * np.sqrt(rng.random(n))
    pts = np.empty((n, 3))
    pts[:, 0] = radial * np.cos(phi)
    pts[:, 1] = radial * np.sin(phi)
    pts[:, 2] = np.where(on_base, 0.0, h * (1.0 - radial / r))
    return pts


def _stairs_points(n: int, rng: np.random.Generator) -> np.ndarray:
    # Four steps rising along +x, extruded along y.
    steps = []
    width, depth, rise = 0.4, 0.5, 0.3
    for i in range(4):
        x0 = -0.8 + i * width
        half = (width / 2, depth, ((i + 1) * rise) / 2)
        center = (x0 + width / 2, 0.0, ((i + 1) * rise) / 2)
        area = 8 * (half[0] * half[1] + half[0] * half[2] + half[1] * half[2])
        steps.append((half, center, area))
    areas = np.array([s[2] for s in steps])
    counts = rng.multinomial(n, areas / areas.sum())
    parts = [
        _sample_box_surface(c, half, rng, center)
        for (half, center, _), c in zip(steps, counts)
        if c > 0
    ]
    return np.vstack(parts)


_GENERATORS = {
    "sphere": _sphere_points,
    "box": _box_points,
    "cone": _cone_points,
    "stairs": _stairs_points,
}


def _make_cloud(generator: str, label: int, spec: ShapeDatasetSpec, cloud_seed: int) -> PointCloud:
    rng = np.random.default_rng(cloud_seed)
    pts = _GENERATORS[generator](spec.points_per_cloud, rng)
    if spec.noise_sigma > 0.0:
        pts = pts + rng.normal(0.0, spec.noise_sigma, size=pts.shape)
    return normalize_to_unit_sphere(PointCloud(points=pts, label=label))


def generate_shapes(spec: ShapeDatasetSpec) -> ShapeDataset:
    """Build the train/test dataset a ``ShapeDatasetSpec`` describes.

    Deterministic: cloud i (counting train then test, class-major) is drawn
    from an independent generator seeded with ``spec.seed XOR i``.
    """
    dataset = ShapeDataset(
        classes=spec.classes,
        points_per_cloud=spec.points_per_cloud,
        seed=spec.seed,
        noise_sigma=spec.noise_sigma,
    )
    index = 0
    for split, count in (("train", spec.train_count), ("test", spec.test_count)):
        target = dataset.train if split == "train" else dataset.test
        for label, name in enumerate(spec.classes):
            for _ in range(count):
                target.append(_make_cloud(name, label, spec, spec.seed ^ index))
                index += 1
    return dataset


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def save_cloud(p: PointCloud, path) -> None:
    """Write a cloud; the suffix picks the format (.pcb binary, else text)."""
    path = Path(path)
    label = -1 if p.label is None else int(p.label)
    if path.suffix == ".pcb":
        with open(path, "wb") as fh:
            fh.write(_BINARY_MAGIC)
            fh.write(struct.pack("<Ii", p.size, label))
            fh.write(p.points.astype("<f4").tobytes())
    else:
        lines = [f"pc {p.size} {label}"]
        lines.extend(f"{float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in p.points)
        path.write_text("\n".join(lines) + "\n")


def load_cloud(path) -> PointCloud:
    """Read a cloud saved by save_cloud; the format is sniffed from the header."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == _BINARY_MAGIC:
        return _load_binary(path, raw)
    return _load_text(path, raw)


def _load_binary(path, raw: bytes) -> PointCloud:
    if len(raw) < 12:
        raise ParseError(path, 1, "truncated binary header")
    m, label = struct.unpack_from("<Ii", raw, 4)
    if m < 1:
        raise ParseError(path, 1, "point count must be >= 1")
    expected = 12 + m * 12
    if len(raw) != expected:
        raise ParseError(path, 1, f"expected {expected} bytes for {m} points, got {len(raw)}")
    pts = np.frombuffer(raw, dtype="<f4", offset=12).reshape(m, 3).astype(np.float64)
    return PointCloud(points=pts, label=None if label < 0 else label)


def _load_text(path, raw: bytes) -> PointCloud:
    text = raw.decode("utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError(path, 1, "empty file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "pc":
        raise ParseError(path, 1, f"expected header 'pc <m> <label>', got {lines[0]!r}")
    try:
        m, label = int(header[1]), int(header[2])
    except ValueError:
        raise ParseError(path, 1, f"non-integer count or label in header {lines[0]!r}") from None
    if m < 1:
        raise ParseError(path, 1, "point count must be >= 1")
    pts = np.empty((m, 3))
    row = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(path, lineno, f"expected 3 fields, got {len(fields)}")
        if row >= m:
            raise ParseError(path, lineno, f"more than {m} points")
        try:
            pts[row] = [float(f) for f in fields]
        except ValueError:
            raise ParseError(path, lineno, f"non-numeric coordinate in {line!r}") from None
        row += 1
    if row != m:
        raise ParseError(path, len(lines), f"expected {m} points, got {row}")
    return PointCloud(points=pts, label=None if label < 0 else label)


def save_dataset(dataset: ShapeDataset, out_dir, binary: bool = True) -> Path:
    """Write all clouds plus a manifest JSON; returns the manifest path."""
    out_dir = Path(out_dir)
    suffix = ".pcb" if binary else ".pct"
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "classes": list(dataset.classes),
        "points_per_cloud": dataset.points_per_cloud,
        "noise_sigma": dataset.noise_sigma,
        "seed": dataset.seed,
        "counts": {},
        "train": [],
        "test": [],
    }
    for split in ("train", "test"):
        split_dir = out_dir / split
        split_dir.mkdir(parents=True, exist_ok=True)
        clouds = getattr(dataset, split)
        counts = [0] * len(dataset.classes)
        for i, cloud in enumerate(clouds):
            name = f"{dataset.classes[cloud.label]}_{i:04d}{suffix}"
            save_cloud(cloud, split_dir / name)
            manifest[split].append({"file": f"{split}/{name}", "label": cloud.label})
            counts[cloud.label] += 1
        manifest["counts"][split] = {c: n for c, n in zip(dataset.classes, counts)}
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def load_dataset(manifest_path) -> ShapeDataset:
    """Read a dataset directory back through its manifest."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    root = manifest_path.parent
    dataset = ShapeDataset(
        classes=tuple(manifest["classes"]),
        points_per_cloud=manifest["points_per_cloud"],
        seed=manifest["seed"],
        noise_sigma=manifest.get("noise_sigma", 0.0),
    )
    for split in ("train", "test"):
        target = dataset.train if split == "train" else dataset.test
        for entry in manifest.get(split, []):
            cloud = load_cloud(root / entry["file"])
            target.append(replace(cloud, label=entry["label"]))
    return dataset

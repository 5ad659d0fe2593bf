"""A small differentiable point-cloud classifier with input gradients.

Architecture: a per-point MLP with shared weights (3 -> h1 -> h2, ReLU),
a coordinatewise max over points, and a dense head (h2 -> h3 -> c). The
max pool makes the logits exactly invariant to point order.

Everything is plain numpy so forward, input gradients, and training are
bit-deterministic given a seed. Attacks rely only on the classifier
surface: logits, predict, input_gradient, class_count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from isoattack.pointcloud import (
    AugmentConfig,
    PointCloud,
    ShapeDataset,
    augment,
    augment_p_rotation,
)

_CHECKPOINT_MAGIC = b"MPN1"
_CHECKPOINT_VERSION = 1


class DivergenceError(Exception):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class Prediction:
    """Softmax probabilities and the argmax class (ties -> lowest index)."""

    probabilities: np.ndarray
    predicted_class: int


class Classifier(Protocol):
    """What the attacks need from a victim model."""

    @property
    def class_count(self) -> int: ...

    def logits(self, p: PointCloud) -> np.ndarray: ...

    def predict(self, p: PointCloud) -> Prediction: ...

    def input_gradient(self, p: PointCloud, cotangent: np.ndarray) -> np.ndarray: ...


@dataclass
class MiniPointNetParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3, self.w4, self.b4]

    def copy(self) -> "MiniPointNetParams":
        return MiniPointNetParams(*(a.copy() for a in self.arrays()))

    @classmethod
    def init(cls, widths: tuple[int, int, int], class_count: int, rng: np.random.Generator) -> "MiniPointNetParams":
        h1, h2, h3 = widths

        def layer(n_in, n_out):
            w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))
            return w, np.zeros(n_out)

        w1, b1 = layer(3, h1)
        w2, b2 = layer(h1, h2)
        w3, b3 = layer(h2, h3)
        w4, b4 = layer(h3, class_count)
        return cls(w1, b1, w2, b2, w3, b3, w4, b4)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class MiniPointNet:
    """Shared per-point MLP + max pool + dense head."""

    def __init__(self, params: MiniPointNetParams):
        self.params = params

    @property
    def class_count(self) -> int:
        return self.params.b4.shape[0]

    def _forward(self, pts: np.ndarray):
        p = self.params
        pre1 = pts @ p.w1 + p.b1
        h1 = np.maximum(pre1, 0.0)
        pre2 = h1 @ p.w2 + p.b2
        h2 = np.maximum(pre2, 0.0)
        pooled = h2.max(axis=0)
        pool_idx = h2.argmax(axis=0)  # first (lowest) index wins ties
        pre3 = pooled @ p.w3 + p.b3
        f1 = np.maximum(pre3, 0.0)
        z = f1 @ p.w4 + p.b4
        return z, (pre1, pre2, h1, h2, pooled, pool_idx, pre3, f1)

    def logits(self, p: PointCloud) -> np.ndarray:
        z, _ = self._forward(p.points)
        return z

    def predict(self, p: PointCloud) -> Prediction:
        probs = softmax(self.logits(p))
        return Prediction(probabilities=probs, predicted_class=int(np.argmax(probs)))

    def input_gradient(self, p: PointCloud, cotangent: np.ndarray) -> np.ndarray:
        """d(cotangent . logits)/d(points), shape (m, 3).

        Pooled channels route their gradient to the argmax point; exact
        ties go to the lowest point index.
        """
        params = self.params
        pts = p.points
        _, (pre1, pre2, _, _, _, pool_idx, pre3, _) = self._forward(pts)
        cot = np.asarray(cotangent, dtype=np.float64)
        df1 = (params.w4 @ cot) * (pre3 > 0.0)
        dpooled = params.w3 @ df1
        dh2 = np.zeros_like(pre2)
        dh2[pool_idx, np.arange(dh2.shape[1])] = dpooled
        dh1 = (dh2 * (pre2 > 0.0)) @ params.w2.T
        return (dh1 * (pre1 > 0.0)) @ params.w1.T

    def pool_margin(self, p: PointCloud) -> float:
        """Smallest winner-vs-runner-up gap across live pooled channels.

        Near-zero margins mark points where the max pool is about to
        switch winners and input gradients are only one-sided. Channels
        that pool to zero are dead (no gradient flows) and are ignored;
        with no live channel the margin is infinite.
        """
        _, (_, _, _, h2, pooled, _, _, _) = self._forward(p.points)
        alive = pooled > 0.0
        if h2.shape[0] < 2 or not np.any(alive):
            return float("inf")
        part = np.partition(h2[:, alive], h2.shape[0] - 2, axis=0)
        return float(np.min(part[-1] - part[-2]))

    def activation_margin(self, p: PointCloud) -> float:
        """Distance of the gradient-carrying path to the nearest ReLU kink.

        Considers the head units and the per-point units of pool-winner
        rows; a margin below a finite-difference step warns that the probe
        straddles a kink.
        """
        _, (pre1, pre2, _, _, _, pool_idx, pre3, _) = self._forward(p.points)
        winners = np.unique(pool_idx)
        values = [np.abs(pre3)]
        values.append(np.abs(pre2[winners]).reshape(-1))
        values.append(np.abs(pre1[winners]).reshape(-1))
        return float(min(np.min(v) for v in values if v.size))

    # Batch paths used by training/evaluation; clouds must share m.
    # The per-point layers run as one flattened matmul for speed.

    def _forward_batch(self, pts: np.ndarray):
        p = self.params
        b, m, _ = pts.shape
        pre1 = (pts.reshape(-1, 3) @ p.w1 + p.b1).reshape(b, m, -1)
        h1 = np.maximum(pre1, 0.0)
        pre2 = (h1.reshape(b * m, -1) @ p.w2 + p.b2).reshape(b, m, -1)
        h2 = np.maximum(pre2, 0.0)
        pool_idx = h2.argmax(axis=1)
        pooled = np.take_along_axis(h2, pool_idx[:, None, :], axis=1)[:, 0, :]
        pre3 = pooled @ p.w3 + p.b3
        f1 = np.maximum(pre3, 0.0)
        z = f1 @ p.w4 + p.b4
        return z, (pre1, pre2, h1, h2, pooled, pool_idx, pre3, f1)

    def batch_logits(self, pts: np.ndarray) -> np.ndarray:
        z, _ = self._forward_batch(pts)
        return z


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 0.05
    widths: tuple[int, int, int] = (32, 64, 32)
    augment: bool = True
    augment_cfg: AugmentConfig = field(default_factory=AugmentConfig)
    p_rotation: float = 0.0
    seed: int = 0


def _accuracy(model: MiniPointNet, clouds: list[PointCloud]) -> float:
    if not clouds:
        return float("nan")
    pts = np.stack([c.points for c in clouds])
    labels = np.array([c.label for c in clouds])
    preds = np.argmax(model.batch_logits(pts), axis=1)
    return float(np.mean(preds == labels))


def train(dataset: ShapeDataset, cfg: TrainConfig) -> tuple[MiniPointNet, dict]:
    """Minibatch gradient descent on softmax cross-entropy.

    No momentum or adaptive scaling; deterministic given cfg.seed. The
    augmentation toggle applies the standard pipeline and, independently,
    random full rotation with probability cfg.p_rotation.
    """
    rng = np.random.default_rng(cfg.seed)
    class_count = len(dataset.classes)
    params = MiniPointNetParams.init(cfg.widths, class_count, rng)
    model = MiniPointNet(params)
    n = len(dataset.train)
    labels = np.array([c.label for c in dataset.train])
    final_loss = float("nan")

    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = []
            for i in idx:
                cloud = dataset.train[i]
                if cfg.augment:
                    cloud = augment(cloud, cfg.augment_cfg, rng)
                if cfg.p_rotation > 0.0:
                    cloud = augment_p_rotation(cloud, cfg.p_rotation, rng)
                batch.append(cloud.points)
            pts = np.stack(batch)
            y = labels[idx]
            loss = _sgd_step(model, pts, y, cfg.learning_rate)
            epoch_loss += loss * len(idx)
        final_loss = epoch_loss / n
        if not np.isfinite(final_loss):
            raise DivergenceError(f"training loss became {final_loss}")

    report = {
        "train_accuracy": _accuracy(model, dataset.train),
        "test_accuracy": _accuracy(model, dataset.test),
        "final_loss": final_loss,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "widths": list(cfg.widths),
        "augment": cfg.augment,
        "p_rotation": cfg.p_rotation,
    }
    return model, report


def _sgd_step(model: MiniPointNet, pts: np.ndarray, y: np.ndarray, lr: float) -> float:
    p = model.params
    b = pts.shape[0]
    z, (pre1, pre2, h1, _, pooled, pool_idx, pre3, f1) = model._forward_batch(pts)
    probs = softmax(z)
    loss = float(-np.mean(np.log(probs[np.arange(b), y] + 1e-300)))

    dz = probs.copy()
    dz[np.arange(b), y] -= 1.0
    dz /= b
    dw4 = f1.T @ dz
    db4 = dz.sum(axis=0)
    df1 = (dz @ p.w4.T) * (pre3 > 0.0)
    dw3 = pooled.T @ df1
    db3 = df1.sum(axis=0)
    dpooled = df1 @ p.w3.T

    # Only pool-winner points receive gradient, so gather their rows
    # instead of scattering into a dense (b, m, h2) buffer.
    dw1, db1, dw2, db2 = _per_point_grads(p, pts, pre1, h1, pre2, pool_idx, dpooled)

    for arr, grad in zip(p.arrays(), [dw1, db1, dw2, db2, dw3, db3, dw4, db4]):
        arr -= lr * grad
    return loss


def _per_point_grads(p, pts, pre1, h1, pre2, pool_idx, dpooled):
    """Backprop through the shared per-point MLP via pool-winner rows.

    pool_idx[b, ch] is the point winning channel ch; only those rows carry
    gradient through the max pool.
    """
    h2_dim = pool_idx.shape[1]
    idx = pool_idx[:, :, None]
    # Gathered per-(batch, channel) winner rows.
    pre2_w = np.take_along_axis(pre2, idx, axis=1)  # pre2 is (b, m, h2); idx broadcasts
    # pre2_w[b, ch, :] is the winner row of channel ch; its relevant entry is channel ch.
    ch = np.arange(h2_dim)
    vals = dpooled * (pre2_w[:, ch, ch] > 0.0)  # (b, h2)
    h1_w = np.take_along_axis(h1, idx, axis=1)  # (b, h2, h1_dim)
    pts_w = np.take_along_axis(pts, idx, axis=1)  # (b, h2, 3)
    pre1_w = np.take_along_axis(pre1, idx, axis=1)  # (b, h2, h1_dim)

    dw2 = np.einsum("bci,bc->ic", h1_w, vals)
    db2 = vals.sum(axis=0)
    dh1_w = vals[:, :, None] * p.w2.T[None, :, :]  # (b, h2, h1_dim)
    dpre1_w = dh1_w * (pre1_w > 0.0)
    dw1 = np.einsum("bci,bcj->ij", pts_w, dpre1_w)
    db1 = dpre1_w.sum(axis=(0, 1))
    return dw1, db1, dw2, db2


# ---------------------------------------------------------------------------
# Checkpoints: magic, version, array count, then per array its shape and
# little-endian float32 payload.
# ---------------------------------------------------------------------------


def save_checkpoint(model: MiniPointNet, path) -> None:
    arrays = model.params.arrays()
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", _CHECKPOINT_VERSION, len(arrays)))
        for a in arrays:
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(a.astype("<f4").tobytes())


def load_checkpoint(path) -> MiniPointNet:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != _CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, offset)
        offset += 4 * ndim
        size = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=size, offset=offset).reshape(shape)
        arrays.append(arr.astype(np.float64))
        offset += 4 * size
    if len(arrays) != 8:
        raise ValueError(f"{path}: expected 8 parameter arrays, got {len(arrays)}")
    return MiniPointNet(MiniPointNetParams(*arrays))

"""Beta-Bernoulli Thompson Sampling over a gridded angle cube.

The sampling domain [lo, hi]^rank is split into divisions^rank equal
cells; each cell keeps a Beta(alpha, beta) posterior over its chance of
producing a successful attack. Selection draws one beta sample per cell
and plays the argmax; a 0/1 reward increments (alpha, beta) of the played
cell by (r, 1 - r).

rank is 3 for rotation angles (theta_x, theta_y, theta_z) and 2 for
reflection-axis angles (azimuth, polar).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from isoattack.geometry import EulerAngles

Cell = tuple[int, ...]


@dataclass(frozen=True)
class AnglePartition:
    """divisions^rank equal cells tiling [lo, hi]^rank.

    Cell (i_1, ..., i_rank) with 0-based indices covers
    [lo + i*(hi-lo)/d, lo + (i+1)*(hi-lo)/d] along each axis.
    """

    lo: float
    hi: float
    divisions: int
    rank: int = 3

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self.divisions < 1:
            raise ValueError("divisions must be >= 1")
        if self.rank not in (2, 3):
            raise ValueError("rank must be 2 or 3")

    @property
    def cell_count(self) -> int:
        return self.divisions**self.rank

    def cell_bounds(self, k: Cell) -> list[tuple[float, float]]:
        if len(k) != self.rank:
            raise ValueError(f"cell index must have {self.rank} components, got {k}")
        width = (self.hi - self.lo) / self.divisions
        bounds = []
        for i in k:
            if not 0 <= i < self.divisions:
                raise ValueError(f"cell component {i} out of range [0, {self.divisions})")
            bounds.append((self.lo + i * width, self.lo + (i + 1) * width))
        return bounds


@dataclass
class BanditState:
    """Per-cell Beta posterior parameters; mutable, updated in place."""

    partition: AnglePartition
    alpha: np.ndarray
    beta: np.ndarray

    @classmethod
    def fresh(cls, partition: AnglePartition) -> "BanditState":
        shape = (partition.divisions,) * partition.rank
        return cls(partition=partition, alpha=np.ones(shape), beta=np.ones(shape))

    def posterior_mean(self) -> np.ndarray:
        return self.alpha / (self.alpha + self.beta)

    def pull_counts(self) -> np.ndarray:
        return self.alpha + self.beta - 2.0

    def copy(self) -> "BanditState":
        return BanditState(self.partition, self.alpha.copy(), self.beta.copy())


def _gamma_variates(shape: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Marsaglia-Tsang gamma sampler, vectorized; requires shape >= 1."""
    shape = np.asarray(shape, dtype=np.float64)
    if np.any(shape < 1.0):
        raise ValueError("gamma shape parameters must be >= 1")
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(d)
    pending = np.ones(d.shape, dtype=bool)
    while np.any(pending):
        idx = np.nonzero(pending)
        x = rng.standard_normal(idx[0].size)
        v = (1.0 + c[idx] * x) ** 3
        u = rng.random(idx[0].size)
        ok = v > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = ok & (np.log(u) < 0.5 * x * x + d[idx] - d[idx] * v + d[idx] * np.log(np.where(ok, v, 1.0)))
        take = tuple(a[accept] for a in idx)
        out[take] = d[take] * v[accept]
        pending[take] = False
    return out


def beta_variates(alpha: np.ndarray, beta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Beta(alpha, beta) draws as g_a / (g_a + g_b) from two gamma variates.

    Both gamma batches run through one rejection pass.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    both = _gamma_variates(np.concatenate([alpha.reshape(-1), beta.reshape(-1)]), rng)
    ga, gb = both[: alpha.size], both[alpha.size :]
    return (ga / (ga + gb)).reshape(alpha.shape)


def select_action(state: BanditState, rng: np.random.Generator) -> Cell:
    """Draw one beta sample per cell and return the argmax cell.

    Ties break toward the lowest linear (C-order) index.
    """
    draws = beta_variates(state.alpha, state.beta, rng)
    flat = int(np.argmax(draws))
    return tuple(int(i) for i in np.unravel_index(flat, draws.shape))


def sample_point(partition: AnglePartition, k: Cell, rng: np.random.Generator) -> tuple[float, ...]:
    """One uniform draw per axis from cell k's intervals."""
    return tuple(rng.uniform(a, b) for a, b in partition.cell_bounds(k))


def sample_angles(partition: AnglePartition, k: Cell, rng: np.random.Generator) -> EulerAngles:
    """Uniform Euler angles inside rotation cell k (rank-3 partitions only)."""
    if partition.rank != 3:
        raise ValueError("sample_angles requires a rank-3 partition")
    return EulerAngles(*sample_point(partition, k, rng))


def update(state: BanditState, k: Cell, reward: int) -> BanditState:
    """Add (reward, 1 - reward) to cell k's (alpha, beta); reward is 0 or 1."""
    if reward not in (0, 1):
        raise ValueError(f"reward must be 0 or 1, got {reward!r}")
    state.alpha[k] += reward
    state.beta[k] += 1 - reward
    return state


def heatmap_marginals(state: BanditState) -> dict[str, np.ndarray]:
    """Posterior means averaged along each axis.

    For rank 3 the keys are plane names: "xy" (mean over z), "xz" (mean
    over y), "yz" (mean over x). For rank 2 the single full grid is
    returned under "azimuth_polar".
    """
    means = state.posterior_mean()
    if state.partition.rank == 2:
        return {"azimuth_polar": means.copy()}
    return {
        "xy": means.mean(axis=2),
        "xz": means.mean(axis=1),
        "yz": means.mean(axis=0),
    }


def write_heatmap_csv(matrix: np.ndarray, path) -> None:
    """d rows of d comma-separated posterior means."""
    lines = [",".join(repr(float(v)) for v in row) for row in matrix]
    Path(path).write_text("\n".join(lines) + "\n")


def write_heatmap_pgm(matrix: np.ndarray, path) -> None:
    """Plain-text PGM (P2) with values in [0, 1] scaled to 0..255."""
    h, w = matrix.shape
    grey = np.clip(np.rint(matrix * 255.0), 0, 255).astype(int)
    rows = [" ".join(str(v) for v in row) for row in grey]
    Path(path).write_text(f"P2\n{w} {h}\n255\n" + "\n".join(rows) + "\n")

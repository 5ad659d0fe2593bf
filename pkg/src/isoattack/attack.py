"""Black-box and white-box isometry attacks on point-cloud classifiers.

The black-box attack (tsi) samples exact isometries -- rotations from
bandit-selected Euler-angle cells, or reflections from axis-angle cells --
and rewards the bandit when the victim misclassifies. The white-box
attack (ctri) warm-starts from the black-box result and runs plain
gradient descent over the raw 3x3 transform on

    spectral_norm_penalty(A) + lambda * cw_loss(logits(P @ A.T), target)

stopping as soon as the prediction leaves the true class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from isoattack.bandit import AnglePartition, BanditState, sample_point, select_action, update
from isoattack.geometry import (
    DegenerateSpectrum,
    EulerAngles,
    ReflectionAxis,
    Transform3,
    euler_to_rotation,
    householder_reflection,
    spectral_norm_penalty,
    spectral_norm_penalty_grad,
)
from isoattack.model import Classifier
from isoattack.pointcloud import PointCloud, apply_transform

FAMILIES = ("rotation", "reflection")


@dataclass(frozen=True)
class TsiConfig:
    """Black-box attack parameters: angle range, grid, sampling budget."""

    lo: float = -math.pi
    hi: float = math.pi
    divisions: int = 4
    max_samples: int = 10
    family: str = "rotation"
    seed: int = 0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self.divisions < 1 or self.max_samples < 1:
            raise ValueError("divisions and max_samples must be >= 1")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.family == "rotation" and (self.lo < -math.pi or self.hi > math.pi):
            raise ValueError(
                f"rotation angles live in [-pi, pi]; got [{self.lo}, {self.hi}]"
            )

    def partition(self) -> AnglePartition:
        rank = 3 if self.family == "rotation" else 2
        return AnglePartition(self.lo, self.hi, self.divisions, rank=rank)


@dataclass(frozen=True)
class CtriConfig:
    """White-box attack parameters on top of a warm-start TSI config."""

    tsi: TsiConfig = field(default_factory=lambda: TsiConfig(max_samples=50))
    max_iters: int = 50
    eta: float = 0.0005
    lam: float = 0.001
    kappa: float = 0.0
    target_rule: str = "second-logit"
    target_class: int | None = None

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.eta <= 0.0 or self.lam <= 0.0 or self.kappa < 0.0:
            raise ValueError("need eta > 0, lam > 0, kappa >= 0")
        if self.target_rule not in ("second-logit", "fixed"):
            raise ValueError(f"unknown target_rule {self.target_rule!r}")
        if self.target_rule == "fixed" and self.target_class is None:
            raise ValueError("target_rule 'fixed' requires target_class")


@dataclass
class AttackOutcome:
    """Per-cloud attack record.

    penalty is exactly 0.0 whenever the transform is a sampled isometry
    (no gradient step touched it); otherwise it is the computed spectral
    norm of A^T A - I for the final transform.
    """

    transform: Transform3
    success: bool
    penalty: float
    iterations_used: int
    original_class: int
    final_class: int
    target_class: int | None
    confidence: float
    warm_start_rounds: int | None = None
    gradient_steps: int | None = None
    degenerate_steps: int = 0


@dataclass(frozen=True)
class TransformGradient:
    value: float
    penalty_value: float
    cw_value: float
    grad: Transform3
    degenerate: bool


def cw_loss(z: np.ndarray, target: int, kappa: float) -> tuple[float, np.ndarray]:
    """Margin loss max(-kappa, max_{j != target} z_j - z_target).

    Returns the value and its gradient cotangent with respect to z: zero
    when clipped at -kappa, otherwise +1 at the runner-up argmax and -1 at
    the target (ties toward the lowest index).
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] < 2:
        raise ValueError("need at least 2 classes")
    if not 0 <= target < z.shape[0]:
        raise ValueError(f"target {target} out of range for {z.shape[0]} classes")
    masked = z.copy()
    masked[target] = -np.inf
    runner = int(np.argmax(masked))
    margin = float(z[runner] - z[target])
    cot = np.zeros_like(z)
    if margin > -kappa:
        cot[runner] = 1.0
        cot[target] = -1.0
        return margin, cot
    return -kappa, cot


def select_target(z: np.ndarray, true_class: int) -> int:
    """Largest logit excluding the true class (ties toward lowest index)."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] < 2:
        raise ValueError("need at least 2 classes")
    masked = z.copy()
    masked[true_class] = -np.inf
    return int(np.argmax(masked))


def _draw_transform(cfg: TsiConfig, partition: AnglePartition, k, rng) -> Transform3:
    values = sample_point(partition, k, rng)
    if cfg.family == "rotation":
        return euler_to_rotation(EulerAngles(*values))
    return householder_reflection(ReflectionAxis.from_angles(*values))


def _require_label(cloud: PointCloud) -> int:
    if cloud.label is None:
        raise ValueError("attacked clouds must carry their true label")
    return cloud.label


def tsi(
    model: Classifier,
    clouds: list[PointCloud],
    cfg: TsiConfig,
    state: BanditState,
    rng: np.random.Generator | None = None,
    frozen_bandit: bool = False,
) -> list[AttackOutcome]:
    """Bandit-guided isometry sampling, up to cfg.max_samples per cloud.

    The bandit state persists across clouds (pass the same state to keep
    learning across calls). Early-stops a cloud on the first success; on
    total failure returns the sampled transform minimizing the true-class
    probability. With frozen_bandit=True posterior updates are skipped;
    that breaks the learning loop and exists only so snapshotted states
    can be replayed concurrently.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    partition = state.partition
    outcomes = []
    for cloud in clouds:
        label = _require_label(cloud)
        best_prob = math.inf
        best_transform = None
        success = False
        rounds = 0
        for _ in range(cfg.max_samples):
            rounds += 1
            k = select_action(state, rng)
            a = _draw_transform(cfg, partition, k, rng)
            pred = model.predict(apply_transform(cloud, a))
            hit = pred.predicted_class != label
            true_prob = float(pred.probabilities[label])
            if true_prob < best_prob:
                best_prob = true_prob
                best_transform = a
            if not frozen_bandit:
                update(state, k, 1 if hit else 0)
            if hit:
                best_transform = a
                success = True
                break
        final = model.predict(apply_transform(cloud, best_transform))
        outcomes.append(
            AttackOutcome(
                transform=best_transform,
                success=success,
                penalty=0.0,
                iterations_used=rounds,
                original_class=label,
                final_class=final.predicted_class,
                target_class=None,
                confidence=float(final.probabilities[final.predicted_class]),
            )
        )
    return outcomes


def transform_gradient(
    model: Classifier,
    cloud: PointCloud,
    a: Transform3,
    target: int,
    lam: float,
    kappa: float,
) -> TransformGradient:
    """Objective value and gradient of the penalized targeted loss at A.

    The cloud-side chain rule is d(loss)/dA = G^T @ P with G the model's
    input gradient at the transformed cloud under the CW cotangent. A
    degenerate penalty spectrum falls back to a subgradient and is
    flagged, never raised.
    """
    a = np.asarray(a, dtype=np.float64)
    transformed = apply_transform(cloud, a)
    z = model.logits(transformed)
    cw_value, cot = cw_loss(z, target, kappa)
    penalty_value = spectral_norm_penalty(a)
    degenerate = False
    try:
        grad = spectral_norm_penalty_grad(a)
    except DegenerateSpectrum as exc:
        grad = exc.subgradient
        degenerate = True
    if np.any(cot != 0.0):
        g = model.input_gradient(transformed, cot)
        grad = grad + lam * (g.T @ cloud.points)
    return TransformGradient(
        value=penalty_value + lam * cw_value,
        penalty_value=penalty_value,
        cw_value=cw_value,
        grad=grad,
        degenerate=degenerate,
    )


def ctri(model: Classifier, clouds: list[PointCloud], cfg: CtriConfig) -> list[AttackOutcome]:
    """Warm-start each cloud with TSI, then descend the penalized loss.

    One bandit state is created up front and shared by every warm start.
    Gradient steps use fixed step cfg.eta with no projection, and stop as
    soon as the prediction differs from the true class, so a cloud already
    fooled by its warm start never takes a step.
    """
    state = BanditState.fresh(cfg.tsi.partition())
    rng = np.random.default_rng(cfg.tsi.seed)
    outcomes = []
    for cloud in clouds:
        label = _require_label(cloud)
        warm = tsi(model, [cloud], cfg.tsi, state, rng=rng)[0]
        if cfg.target_rule == "fixed":
            target = int(cfg.target_class)
        else:
            target = select_target(model.logits(cloud), label)
        a = warm.transform
        pred = model.predict(apply_transform(cloud, a))
        steps = 0
        degenerate_steps = 0
        while steps < cfg.max_iters and pred.predicted_class == label:
            tg = transform_gradient(model, cloud, a, target, cfg.lam, cfg.kappa)
            if tg.degenerate:
                degenerate_steps += 1
            a = a - cfg.eta * tg.grad
            steps += 1
            pred = model.predict(apply_transform(cloud, a))
        outcomes.append(
            AttackOutcome(
                transform=a,
                success=pred.predicted_class != label,
                penalty=spectral_norm_penalty(a) if steps > 0 else 0.0,
                iterations_used=warm.iterations_used + steps,
                original_class=label,
                final_class=pred.predicted_class,
                target_class=target,
                confidence=float(pred.probabilities[pred.predicted_class]),
                warm_start_rounds=warm.iterations_used,
                gradient_steps=steps,
                degenerate_steps=degenerate_steps,
            )
        )
    return outcomes

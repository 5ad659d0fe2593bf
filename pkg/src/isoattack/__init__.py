"""Isometry-based adversarial attacks on point-cloud classifiers.

The package provides exact 3x3 isometry construction and analysis
(`geometry`), point-cloud data handling and synthetic shape generation
(`pointcloud`), a Beta-Bernoulli Thompson-sampling bandit over the
transform parameter space (`bandit`), a small differentiable
permutation-invariant classifier (`model`), the two attack algorithms
(`attack`), and experiment drivers plus a CLI (`harness`, `cli`).
"""

from isoattack.geometry import (
    DegenerateSpectrum,
    EulerAngles,
    ReflectionAxis,
    compose,
    euler_to_rotation,
    householder_reflection,
    is_orthogonal,
    spectral_norm_penalty,
    spectral_norm_penalty_grad,
)
from isoattack.pointcloud import (
    DegenerateCloud,
    ParseError,
    PointCloud,
    ShapeDatasetSpec,
    apply_transform,
    generate_shapes,
    load_cloud,
    normalize_to_unit_sphere,
    save_cloud,
)
from isoattack.bandit import AnglePartition, BanditState, heatmap_marginals, sample_angles, select_action, update
from isoattack.model import DivergenceError, MiniPointNet, Prediction, TrainConfig, train
from isoattack.attack import AttackOutcome, CtriConfig, TsiConfig, ctri, cw_loss, select_target, transform_gradient, tsi

__version__ = "0.1.0"

__all__ = [
    "AnglePartition",
    "AttackOutcome",
    "BanditState",
    "CtriConfig",
    "DegenerateCloud",
    "DegenerateSpectrum",
    "DivergenceError",
    "EulerAngles",
    "MiniPointNet",
    "ParseError",
    "PointCloud",
    "Prediction",
    "ReflectionAxis",
    "ShapeDatasetSpec",
    "TrainConfig",
    "TsiConfig",
    "apply_transform",
    "compose",
    "ctri",
    "cw_loss",
    "euler_to_rotation",
    "generate_shapes",
    "heatmap_marginals",
    "householder_reflection",
    "is_orthogonal",
    "load_cloud",
    "normalize_to_unit_sphere",
    "sample_angles",
    "save_cloud",
    "select_action",
    "select_target",
    "spectral_norm_penalty",
    "spectral_norm_penalty_grad",
    "train",
    "transform_gradient",
    "tsi",
    "update",
]

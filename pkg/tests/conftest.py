"""Shared fixtures: the reference dataset and trained victim models.

Training the victims is the expensive part of the suite, so they are
session-scoped and shared between the unit tests and the acceptance run.
"""

import pytest

from isoattack.harness import victim_train_config
from isoattack.model import save_checkpoint, train
from isoattack.pointcloud import ShapeDatasetSpec, generate_shapes, save_dataset

REFERENCE_DATASET_SEED = 20240801
VICTIM_SEED = 1
SECOND_VICTIM_SEED = 2


@pytest.fixture(scope="session")
def reference_spec():
    return ShapeDatasetSpec(seed=REFERENCE_DATASET_SEED)


@pytest.fixture(scope="session")
def dataset(reference_spec):
    return generate_shapes(reference_spec)


@pytest.fixture(scope="session")
def victim(dataset):
    model, report = train(dataset, victim_train_config(VICTIM_SEED))
    return model, report


@pytest.fixture(scope="session")
def second_victim(dataset):
    model, report = train(dataset, victim_train_config(SECOND_VICTIM_SEED))
    return model, report


@pytest.fixture(scope="session")
def run_files(tmp_path_factory, dataset, victim, second_victim):
    """Dataset manifest plus victim checkpoints on disk for harness runs."""
    root = tmp_path_factory.mktemp("runfiles")
    manifest = save_dataset(dataset, root / "data")
    ckpt_a = root / "victim_a.mpn"
    ckpt_b = root / "victim_b.mpn"
    save_checkpoint(victim[0], ckpt_a)
    save_checkpoint(second_victim[0], ckpt_b)
    return {"manifest": manifest, "victim_a": ckpt_a, "victim_b": ckpt_b}

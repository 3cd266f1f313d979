import numpy as np
import pytest
import torch

from rfdreid.backbone import BackboneConfig
from rfdreid.data import make_toy_corpus
from rfdreid.trainer import TrainConfig

# toy geometry: divisible by 32, part splits of the final map stay integral
TOY_INPUT_HW = (96, 32)


def toy_backbone_config(num_classes: int, **overrides) -> BackboneConfig:
    base = dict(
        num_classes=num_classes,
        stage_widths=(16, 32, 64, 128),
        input_hw=TOY_INPUT_HW,
        embed_dim=128,
        reduction_ratio=16,
        last_stride=1,
    )
    base.update(overrides)
    return BackboneConfig(**base)


def toy_train_config(total_iterations: int, **overrides) -> TrainConfig:
    base = dict(total_iterations=total_iterations, p_identities=4, k_images=4,
                br_images_per_class=8)
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """8 identities x 12 images across 2 cameras; session-scoped because the
    PNG rendering is shared by many tests."""
    root = tmp_path_factory.mktemp("toy_corpus")
    return make_toy_corpus(root, identities=8, images_per_identity=12, cameras=2,
                           hw=(128, 48), seed=11)


@pytest.fixture(scope="session")
def jittered_corpus(tmp_path_factory):
    """Corpus with varying stored sizes, for pseudo-labeling paths."""
    root = tmp_path_factory.mktemp("jittered_corpus")
    return make_toy_corpus(root, identities=6, images_per_identity=6, cameras=2,
                           hw=(96, 40), seed=3, size_jitter=0.45)


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(2024)

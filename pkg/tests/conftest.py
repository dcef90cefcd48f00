import numpy as np
import pytest

from src.imaging.image_io import save_png
from src.imaging.synthetic import make_dataset
from src.model.config import ModelConfig
from src.model.network import init_params
from src.training.config import TrainConfig


def tiny_model_config(**overrides) -> ModelConfig:
    base = dict(
        enc_channels=4,
        enc_blocks=1,
        hidden_width=16,
        hidden_layers=2,
        encoding_dim=8,
        freq_init="pow2",
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_train_config(dataset_dir="unused", **overrides) -> TrainConfig:
    model = overrides.pop("model", None) or tiny_model_config()
    base = dict(
        dataset_dir=str(dataset_dir),
        epochs=1,
        iters_per_epoch=2,
        batch_size=2,
        lr_patch=8,
        queries_per_item=16,
        scale_min=2.0,
        scale_max=3.0,
        lr=1e-3,
        lr_halve_epochs=[],
        seed=0,
        precision="double",
        eval_scales=[2.0, 3.0],
        prefetch=False,
        model=model,
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    return tiny_model_config()


@pytest.fixture
def tiny_params(tiny_cfg):
    return init_params(tiny_cfg, np.random.default_rng(0), np.float64)


@pytest.fixture
def random_image(rng):
    return rng.random((12, 10, 3))


@pytest.fixture
def synthetic_dir(tmp_path):
    out = tmp_path / "hr"
    make_dataset(out, count=3, size=32, seed=7)
    return out


@pytest.fixture
def png_path(tmp_path, rng):
    path = tmp_path / "small.png"
    save_png(rng.random((20, 20, 3)), path)
    return path

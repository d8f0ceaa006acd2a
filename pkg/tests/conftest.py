import numpy as np
import pytest

from scarmap import ModelConfig, SceneSpec, VQVAE, generate_normal_scene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(**overrides) -> ModelConfig:
    """1-channel 8x8 model small enough for elementwise finite differences."""
    base = dict(
        input_size=8,
        in_channels=1,
        band_roles=("NIR",),
        conv_layers=3,
        conv_channels=(6, 8),
        latent_dim=4,
        codebook_size=4,
        lr=1e-3,
        batch_size=2,
        epochs=1,
        seed=3,
        dtype="float64",
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def tiny_model() -> VQVAE:
    return VQVAE(tiny_config())


@pytest.fixture(scope="session")
def normal_scene():
    return generate_normal_scene(SceneSpec(size=(256, 256), seed=11))

import numpy as np
import pytest
import torch

from desmoke.config import AmbientParams, ModelConfig, SceneConfig, SmokeSource


@pytest.fixture(autouse=True)
def _seeded():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture
def tiny_model_cfg():
    """Small widths so module tests stay fast."""
    return ModelConfig(num_queries=8, query_dim=32, channels=(32, 24, 16, 16))


@pytest.fixture
def entangled_scene():
    return SceneConfig(
        scenario="entangled", clip_length=8, height=96, width=96,
        sources=(SmokeSource(x=30.0, y=40.0, start_frame=1, direction_deg=20.0,
                             velocity_px_per_frame=2.0),),
        ambient_params=AmbientParams(base_density=0.35, drift_speed=0.5, noise_scale=1.0),
        seed=33,
    )

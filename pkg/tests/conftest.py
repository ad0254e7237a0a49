import numpy as np
import pytest

from usguide import dataset as ds
from usguide import model as qm
from usguide import phantom


@pytest.fixture(scope="session")
def phantom_small():
    return phantom.with_image_size(phantom.PhantomConfig(), 32, 32, 1)


@pytest.fixture(scope="session")
def small_model_config():
    return qm.ModelConfig(image_size=(32, 32, 1), conv_channels=(8, 16))


@pytest.fixture(scope="session")
def small_dataset(phantom_small):
    """~500-sample mixed-policy set at 32x32; shared across tests."""
    return ds.build_dataset(
        [(ds.DemoPolicy("expert_sweep"), 4),
         (ds.DemoPolicy("novice_jitter"), 6),
         (ds.DemoPolicy("uniform_random"), 10)],
        phantom_small, n_steps=25, seed=11)


@pytest.fixture(scope="session")
def small_split(small_dataset):
    return ds.split(small_dataset, 0.25, seed=0)


@pytest.fixture(scope="session")
def trained_small_model(small_split):
    train_set, val_set = small_split
    cfg = qm.ModelConfig(image_size=(32, 32, 1), conv_channels=(8, 16),
                         input_norm=ds.norm_stats(train_set))
    model = qm.build(cfg, seed=0)
    qm.train(model, train_set, val_set, qm.TrainConfig(epochs=6, seed=0))
    return model


def random_state(rng, config, max_tilt=1.0, fz_max=18.0):
    from usguide import quat

    phi = rng.uniform(0, 2 * np.pi)
    angle = rng.uniform(0, max_tilt)
    pose = quat.from_axis_angle([np.cos(phi), np.sin(phi), 0], angle)
    wrench = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1),
                       rng.uniform(0, fz_max), rng.uniform(-5, 5),
                       rng.uniform(-5, 5), rng.uniform(-5, 5)])
    return phantom.ProbeState(pose, wrench)

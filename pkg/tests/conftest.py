import numpy as np
import pytest

from radarfields.encodings import HashGridConfig
from radarfields.fields import FieldConfig, FieldModel
from radarfields.radar import RadarConfig
from radarfields.scene import ScenePrimitive, SyntheticScene, make_line_trajectory

SMALL_BOUNDS = ((-4.0, -4.0, -1.0), (4.0, 4.0, 3.0))


@pytest.fixture
def small_radar():
    return RadarConfig(n_bins=24, n_azimuth=12)


def tiny_field_config(bounds=SMALL_BOUNDS, width=8, levels=4):
    return FieldConfig(
        hash=HashGridConfig(n_levels=levels, features_per_level=2, table_size_log2=8,
                            base_resolution=2, per_level_scale=1.5, bounds=bounds),
        chi_dim=5, chi_hidden=(width, width), alpha_hidden=(width,), rho_gamma_hidden=(width, width))


def randomize(model, seed=0, scale=0.5):
    """Give every parameter (including the zero-initialised output layers) random values."""
    rng = np.random.default_rng(seed)
    for k, v in model.parameters().items():
        s = 0.3 if k == "hash.tables" else scale
        v[...] = rng.normal(0.0, s, size=v.shape)
    return model


@pytest.fixture
def tiny_model():
    return randomize(FieldModel(tiny_field_config(), seed=0))


@pytest.fixture
def small_scene():
    prims = [ScenePrimitive("box", (2.5, 0.0, 0.75), (0.5, 2.0, 1.5), 0.9, 1.0)]
    return SyntheticScene(prims, SMALL_BOUNDS, noise_floor=1e-3, jitter=0.0)


@pytest.fixture
def small_trajectory():
    return make_line_trajectory((-1.0, -1.0), (-1.0, 1.0), 10, 1.0, yaw=0.0)


# one line per acceptance criterion, printed after the run whatever the capture mode
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

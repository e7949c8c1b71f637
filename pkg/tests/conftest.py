import numpy as np
import pytest

from ridnet.sdk.data import simulate_pair
from ridnet.sdk.model import make_rng
from ridnet.sdk.models.canonical_types import Preset, ThetaMode
from ridnet.sdk.models.config import DataConfig, GraphConfig, ModelConfig, RunConfig


@pytest.fixture(autouse=True)
def _isolated_environment(monkeypatch):
    """Keep RIDNET_* variables of the host shell out of resolved configs."""
    for name in ("RIDNET_THREADS", "RIDNET_LOG_LEVEL", "RIDNET_SEED"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def rng():
    return make_rng(2024)


@pytest.fixture
def toy_config():
    """1 block, 4 channels, K=4 in a 5x5 window."""
    return ModelConfig(
        blocks=1,
        channels=4,
        embed_hidden=4,
        tail_hidden=4,
        graph=GraphConfig(window=5, k_neighbors=4, theta_mode=ThetaMode.FULL, edge_hidden=4),
    )


@pytest.fixture
def micro_config():
    return RunConfig.resolve(preset=Preset.MICRO)


@pytest.fixture
def small_data_config():
    return DataConfig(seed=3, volumes=2, dims=(9, 64, 64))


@pytest.fixture
def volume_pair(small_data_config):
    """(clean, noisy) pair 0 of a small abdomen dataset."""
    return simulate_pair(small_data_config, 0)


@pytest.fixture
def toy_stack(rng):
    return rng.uniform(0.0, 1.0, size=(3, 8, 8))


def naive_conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, mode: str = "reflect") -> np.ndarray:
    """Loop reference for a stride-1 'same' 2D cross-correlation."""
    c_out, c_in, kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    if mode == "reflect":
        padded = np.pad(x, ((0, 0), (ph, ph), (pw, pw)), mode="reflect")
    else:
        padded = np.pad(x, ((0, 0), (ph, ph), (pw, pw)), mode="constant")
    _, h, w = x.shape
    out = np.zeros((c_out, h, w))
    for o in range(c_out):
        for r in range(h):
            for c in range(w):
                out[o, r, c] = np.sum(padded[:, r : r + kh, c : c + kw] * kernel[o]) + bias[o]
    return out


def naive_conv3d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, mode: str = "reflect") -> np.ndarray:
    """Loop reference for a stride-1 'same' 3D cross-correlation over [C, D, H, W]."""
    c_out, c_in, kd, kh, kw = kernel.shape
    pads = ((0, 0), (kd // 2, kd // 2), (kh // 2, kh // 2), (kw // 2, kw // 2))
    padded = np.pad(x, pads, mode="reflect" if mode == "reflect" else "constant")
    _, d, h, w = x.shape
    out = np.zeros((c_out, d, h, w))
    for o in range(c_out):
        for z in range(d):
            for r in range(h):
                for c in range(w):
                    out[o, z, r, c] = np.sum(padded[:, z : z + kd, r : r + kh, c : c + kw] * kernel[o]) + bias[o]
    return out

# type: ignore  # noqa: PGH003

import numpy as np
import pytest

from conformalkit.utils.xdg.config import UserConfig


def _central_difference(func, point, step=1e-6):
    point = np.asarray(point, dtype=np.float64)
    grad = np.zeros_like(point)
    for index in np.ndindex(point.shape):
        shifted = point.copy()
        shifted[index] += step
        upper = func(shifted)
        shifted[index] -= 2 * step
        lower = func(shifted)
        grad[index] = (upper - lower) / (2 * step)
    return grad


def _relative_error(analytic, numeric):
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


@pytest.fixture
def central_difference():
    """Numerical gradient of a scalar function of an array."""
    return _central_difference


@pytest.fixture
def relative_error():
    return _relative_error


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def empty_user_config(tmp_path):
    return UserConfig(tmp_path / "no-user-config")


@pytest.fixture(autouse=True)
def isolated_user_dirs(tmp_path, monkeypatch):
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "xdg-config"))
    monkeypatch.setenv("XDG_DATA_HOME", str(tmp_path / "xdg-data"))
    monkeypatch.delenv("CONFORMAL_KIT_LOG", raising=False)

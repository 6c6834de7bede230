import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from ce_lab.core.config import PipelineSettings, Settings  # noqa: E402
from ce_lab.models import ChannelSpec, Partition, Tolerances  # noqa: E402
from ce_lab.services.builders import cesaro_projection, pinching  # noqa: E402
from ce_lab.services.cp_maps import from_kraus, identity_map  # noqa: E402
from ce_lab.services.linalg import matrix_unit  # noqa: E402

PROBLEMS_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "problems"))


@pytest.fixture
def tol():
    return Tolerances()


@pytest.fixture
def fast_settings():
    return Settings(
        pipeline=PipelineSettings(k_max=2, order_trials=5, ks_probes=10, words_per_length=3, isometry_trials=5)
    )


@pytest.fixture
def identity2():
    return identity_map(2)


@pytest.fixture
def pinch2():
    return pinching(Partition(ambient_dim=2, blocks=((1,), (2,))))


@pytest.fixture
def pinch3():
    return pinching(Partition(ambient_dim=3, blocks=((1, 2), (3,))))


def absorbing_kraus(p: float = 0.5):
    """Coordinates 0 and 1 are absorbing; coordinate 2 leaks into them with weights p and 1 - p."""
    return (
        matrix_unit(3, 0, 0),
        matrix_unit(3, 1, 1),
        np.sqrt(p) * matrix_unit(3, 0, 2),
        np.sqrt(1 - p) * matrix_unit(3, 1, 2),
    )


@pytest.fixture
def absorbing3(tol):
    """Projection x ↦ diag(x00, x11, (x00 + x11)/2): its range is not closed under products."""
    return cesaro_projection(ChannelSpec(kraus=absorbing_kraus(), trace_preserving=True), tol)


@pytest.fixture
def corner2():
    """x ↦ e00 x e00: a projection that is not unital."""
    return from_kraus([matrix_unit(2, 0, 0)], label="corner")


def diag3(a, b, c):
    return np.diag(np.array([a, b, c], dtype=complex))

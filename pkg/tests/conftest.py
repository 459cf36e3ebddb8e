import numpy as np
import pytest

from home_equiv import data, geometry


def random_rotation(rng):
    """QR of a Gaussian with det corrected to +1."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_h(rng, width=16, height=16):
    return geometry.random_homography(rng, width, height)[0]


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small shared dataset: 40 train/val/test samples plus 12 aux."""
    root = tmp_path_factory.mktemp("tiny_ds")
    data.generate_dataset(str(root), seed=11, count=40, aux=12)
    return data.load_dataset(str(root))

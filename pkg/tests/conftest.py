import numpy as np
import pytest

from rftwosample.models.configs import ForestConfig
from rftwosample.utils.numkit import RngStream


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture
def small_forest():
    """Forest small enough for unit tests."""
    return ForestConfig(num_trees=25, min_node_size=2)


@pytest.fixture
def separated_pair():
    """Two clearly different samples: unit Gaussians four standard deviations apart."""
    gen = np.random.default_rng(7)
    x = gen.standard_normal((40, 3))
    y = gen.standard_normal((40, 3)) + 4.0
    return x, y


@pytest.fixture
def null_pair():
    gen = np.random.default_rng(11)
    return gen.standard_normal((40, 3)), gen.standard_normal((40, 3))


def _write_csv(path, rows, header=None):
    lines = []
    if header is not None:
        lines.append(",".join(header))
    lines.extend(",".join(repr(float(v)) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def write_csv():
    return _write_csv

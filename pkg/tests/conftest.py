import numpy as np
import pytest

from csaloha.capture import CaptureTable


def random_table(rng, t_max, zero_frac=0.3):
    """Random valid capture table; some entries forced to zero so sparse rows are covered."""
    rows = []
    for t_a in range(1, t_max + 1):
        w = rng.random(t_a + 1)
        w[rng.random(t_a + 1) < zero_frac] = 0.0
        if w.sum() == 0:
            w[rng.integers(t_a + 1)] = 1.0
        rows.append(w / w.sum())
    return CaptureTable.from_rows(rows, {"source": "synthetic-random"})


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

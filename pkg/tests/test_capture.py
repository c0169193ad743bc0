import json
from math import comb

import numpy as np
import pytest

from csaloha.capture import (CaptureTable, TableFormatError, chain_capture, chain_capture_bruteforce, load_table,
                             save_table, split, synthetic_table, zero_capture_table)

from conftest import random_table


def test_split_single_user():
    t = CaptureTable.from_rows([{1: 0.85}])
    sp = split(t)
    assert sp.c[1, 1] == 0.85
    assert sp.u[1, 1] == 0.0


def test_split_half():
    t = CaptureTable.from_rows([{1: 1.0}, {2: 1.0}, {3: 1.0}, {2: 0.6, 0: 0.4}])
    sp = split(t)
    assert sp.c[4, 2] == pytest.approx(0.3, abs=1e-16)
    assert sp.u[4, 2] == pytest.approx(0.3, abs=1e-16)
    assert sp.c[3, 3] == 1.0 and sp.u[3, 3] == 0.0


def test_split_matches_binomial_ratio(rng):
    t = random_table(rng, 9)
    sp = split(t)
    for t_a in range(1, 10):
        for s in range(1, t_a + 1):
            expected = comb(t_a - 1, s - 1) / comb(t_a, s) * t.p[t_a, s]
            assert sp.c[t_a, s] == pytest.approx(expected, rel=1e-15, abs=1e-300)
    np.testing.assert_array_equal(sp.c + sp.u, t.p)
    assert np.all(sp.c <= t.p + 1e-300) and np.all(sp.c >= 0)


def test_chain_perfect_mud():
    C = chain_capture(synthetic_table("perfect-mud", 12))
    np.testing.assert_allclose(C.C, 1.0, atol=1e-15)


def test_chain_collision():
    C = chain_capture(synthetic_table("collision", 8))
    assert C.C[0] == 1.0
    assert np.all(C.C[1:] == 0.0)


def test_chain_first_entry_is_single_user_capture(rng):
    for _ in range(20):
        t = random_table(rng, 5)
        assert chain_capture(t).C[0] == t.p[1, 1]


def test_chain_dp_matches_enumeration(rng):
    for _ in range(100):
        t = random_table(rng, 6)
        C = chain_capture(t)
        for tt in range(6):
            assert abs(C.C[tt] - chain_capture_bruteforce(t, tt)) < 1e-12


def test_chain_hand_example():
    # t_A = 2: both recovered 0.5, one recovered 0.4; single-user capture 0.9
    t = CaptureTable.from_rows([{1: 0.9}, {1: 0.4, 2: 0.5}])
    # C(1) = c(2|2) + c(1|2) + u(1|2) * C(0) = 0.5 + 0.2 + 0.2 * 0.9
    assert chain_capture(t).C[1] == pytest.approx(0.88, abs=1e-15)


def test_chain_monotone_under_mass_shift(rng):
    for _ in range(50):
        t = random_table(rng, 7)
        base = chain_capture(t).C
        p = t.p.copy()
        t_a = int(rng.integers(1, 8))
        s = int(rng.integers(1, t_a + 1))
        moved = p[t_a, 0] * rng.random()
        p[t_a, 0] -= moved
        p[t_a, s] += moved
        bumped = chain_capture(CaptureTable(p)).C
        assert np.all(bumped >= base - 1e-15)


def test_synthetic_tables():
    t = synthetic_table("collision", 3)
    assert t.rows() == [[0.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]]
    t = synthetic_table("perfect-mud", 2)
    assert t.rows() == [[0.0, 1.0], [0.0, 0.0, 1.0]]
    t = synthetic_table("singleton-prob", 1, 0.85)
    assert t.p[1, 1] == 0.85 and t.p[1, 0] == pytest.approx(0.15)
    with pytest.raises(ValueError):
        synthetic_table("singleton-prob", 2, 1.5)
    with pytest.raises(ValueError):
        synthetic_table("collision", 0)
    with pytest.raises(ValueError):
        synthetic_table("nonsense", 2)


def test_singleton_one_equals_collision():
    np.testing.assert_array_equal(synthetic_table("singleton-prob", 10, 1.0).p, synthetic_table("collision", 10).p)


def test_table_validation():
    with pytest.raises(TableFormatError):
        CaptureTable.from_rows([[0.5, 0.6]])
    with pytest.raises(TableFormatError):
        CaptureTable.from_rows([[0.5, 0.5], [0.2, 0.2, 0.2]])
    with pytest.raises(TableFormatError):
        CaptureTable.from_rows([[-0.1, 1.1]])
    with pytest.raises(TableFormatError):
        CaptureTable.from_rows([[0.5, 0.5, 0.0]])


def test_round_trip_exact(tmp_path, rng):
    t = random_table(rng, 12)
    t = CaptureTable(t.p, {"source": "monte-carlo", "snr_db": 10.0, "T_sim": 1000, "seed": 7, "phy_hash": "abc"})
    path = tmp_path / "t.json"
    save_table(t, path, header={"tool": "x"})
    back = load_table(path)
    np.testing.assert_array_equal(back.p, t.p)
    assert back.meta == t.meta
    doc = json.loads(path.read_text())
    assert set(doc) >= {"version", "t_max", "snr_db", "source", "T_sim", "seed", "phy_hash", "rows"}


def test_serialised_precision(tmp_path):
    t = CaptureTable.from_rows([[1 / 3, 2 / 3]])
    path = tmp_path / "t.json"
    save_table(t, path)
    text = path.read_text()
    assert "0.3333333333333333" in text


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d.update(t_max=3), "rows"),
    (lambda d: d["rows"][0].update(probs=[0.5, 0.6]), "sums"),
    (lambda d: d.pop("rows"), "lacks"),
    (lambda d: d["rows"].reverse(), "ordered"),
    (lambda d: d.update(version=99), "version"),
])
def test_malformed_files(tmp_path, mutate, message):
    path = tmp_path / "t.json"
    save_table(synthetic_table("collision", 2), path)
    doc = json.loads(path.read_text())
    mutate(doc)
    path.write_text(json.dumps(doc))
    with pytest.raises(TableFormatError, match=message):
        load_table(path)


def test_not_json(tmp_path):
    path = tmp_path / "t.json"
    path.write_text("t_max = 3")
    with pytest.raises(TableFormatError):
        load_table(path)


def test_zero_table():
    assert np.all(chain_capture(zero_capture_table(5)).C == 0)

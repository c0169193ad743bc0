import numpy as np
import pytest

from csaloha.capture import synthetic_table
from csaloha.macsim import (ContentionGraph, PhyOracle, RecoveryReport, TableOracle, empirical_stats, example_graph,
                            generate_graph, run_receiver, simulate)
from csaloha.phy import PhyEngine, PhyScenario

COLLISION = TableOracle(synthetic_table("collision", 64))
PERFECT = TableOracle(synthetic_table("perfect-mud", 64))


class CheckingOracle:
    """Wraps an oracle and asserts the graph invariants at every query."""

    def __init__(self, inner):
        self.inner = inner
        self.last_residual = None

    def start(self, graph, rng):
        self.inner.start(graph, rng)
        self.last_residual = graph.residual_degree.copy()

    def __call__(self, graph, slot, candidates, rng):
        graph.check()
        assert np.all(graph.residual_degree <= self.last_residual)
        self.last_residual = graph.residual_degree.copy()
        assert set(candidates.tolist()) == set(graph.unrecovered_in(slot).tolist())
        out = self.inner(graph, slot, candidates, rng)
        assert set(np.asarray(out).tolist()) <= set(candidates.tolist())
        return out


def peel(graph):
    """Reference collision-channel peeling on the complete graph (order free)."""
    rec = set()
    changed = True
    while changed:
        changed = False
        for users in graph.slot_users:
            left = [int(u) for u in users if int(u) not in rec]
            if len(left) == 1:
                rec.add(left[0])
                changed = True
    return rec


def test_example_graph_walkthrough():
    g = example_graph()
    rep = run_receiver(g, COLLISION, np.random.default_rng(0))
    assert rep.recovered == 3
    assert rep.order == [1, 2, 0]  # u2, then u3, then u1


def test_graph_validation():
    with pytest.raises(ValueError):
        ContentionGraph(2, [[0, 0]])
    with pytest.raises(ValueError):
        ContentionGraph(2, [[0, 2]])


def test_generate_full_activation():
    g = generate_graph(7, 5, 7.0, np.random.default_rng(1))
    for users in g.slot_users:
        np.testing.assert_array_equal(users, np.arange(7))


def test_generate_rejects_bad_beta():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        generate_graph(10, 5, 0.0, rng)
    with pytest.raises(ValueError):
        generate_graph(10, 5, 11.0, rng)


def test_mean_slot_degree():
    rng = np.random.default_rng(2)
    degs = [generate_graph(100, 1, 3.0, rng).slot_degrees[0] for _ in range(10_000)]
    assert np.mean(degs) == pytest.approx(3.0, abs=0.1)


def test_edge_frequency_is_uniform():
    rng = np.random.default_rng(3)
    counts = np.zeros(20)
    for _ in range(2000):
        g = generate_graph(20, 1, 4.0, rng)
        counts[g.slot_users[0]] += 1
    np.testing.assert_allclose(counts / 2000, 0.2, atol=0.03)


def test_perfect_mud_recovers_every_connected_user():
    rng = np.random.default_rng(4)
    for _ in range(20):
        g = generate_graph(60, 40, 2.0, rng)
        rep = run_receiver(g, CheckingOracle(PERFECT), rng)
        connected = {u for u in range(60) if g.user_slots[u]}
        assert set(rep.order) == connected


def test_collision_matches_reference_peeling():
    rng = np.random.default_rng(5)
    for _ in range(30):
        g = generate_graph(80, 90, 3.0, rng)
        rep = run_receiver(g, CheckingOracle(COLLISION), rng)
        assert set(rep.order) == peel(g)


@pytest.mark.parametrize("oracle", [PERFECT, COLLISION])
def test_order_insensitivity(oracle):
    rng = np.random.default_rng(6)
    for _ in range(10):
        g = generate_graph(50, 60, 2.5, rng)
        perm = rng.permutation(g.n_slots)
        h = ContentionGraph(g.n_users, [g.slot_users[k] for k in perm])
        a = run_receiver(g, oracle, np.random.default_rng(0))
        b = run_receiver(h, oracle, np.random.default_rng(0))
        assert set(a.order) == set(b.order)


def test_residuals_after_run():
    rng = np.random.default_rng(7)
    oracle = TableOracle(synthetic_table("singleton-prob", 64, p1=0.7))
    g = generate_graph(100, 120, 3.0, rng)
    rep = run_receiver(g, CheckingOracle(oracle), rng)
    g.check()
    for u in np.flatnonzero(g.recovered):
        for j in g.user_slots[u]:
            assert u not in g.unrecovered_in(j)
    assert rep.final_residual.sum() == sum(g.unrecovered_in(j).size for j in range(g.n_slots))


def test_no_requery_at_same_degree():
    # an oracle that never recovers anything is asked once per non-empty slot
    class Never:
        def start(self, graph, rng):
            pass

        def __call__(self, graph, slot, candidates, rng):
            return candidates[:0]

    g = ContentionGraph(4, [[0, 1], [2], [], [1, 2, 3]])
    rep = run_receiver(g, Never(), np.random.default_rng(0))
    assert rep.recovered == 0 and rep.oracle_calls == 3


def test_table_oracle_beyond_t_max():
    oracle = TableOracle(synthetic_table("perfect-mud", 2))
    g = ContentionGraph(3, [[0, 1, 2]])
    assert run_receiver(g, oracle, np.random.default_rng(0)).recovered == 0


def test_simulation_reproducible():
    oracle = TableOracle(synthetic_table("singleton-prob", 64, p1=0.6))
    a = simulate(200, 220, 3.0, oracle, runs=5, seed=11)
    b = simulate(200, 220, 3.0, oracle, runs=5, seed=11)
    assert [r.order for r in a] == [r.order for r in b]
    c = simulate(200, 220, 3.0, oracle, runs=5, seed=12)
    assert [r.order for r in a] != [r.order for r in c]


def test_report_rates():
    r = RecoveryReport(n_users=10, n_slots=4, recovered=6)
    assert r.p_r == 0.6 and r.throughput == 1.5


def test_empirical_stats_single_run():
    s = empirical_stats([RecoveryReport(10, 5, 4)])
    assert s.runs == 1 and s.mean_p_r == 0.4 and s.p_r_half_width is None and s.t_half_width is None


def test_empirical_stats_identical_runs():
    s = empirical_stats([RecoveryReport(10, 5, 4)] * 6)
    assert s.p_r_half_width == 0.0 and s.t_half_width == 0.0


def test_empirical_stats_bernoulli_mix():
    reps = [RecoveryReport(1, 1, 1)] * 30 + [RecoveryReport(1, 1, 0)] * 70
    s = empirical_stats(reps)
    sd = np.sqrt(0.3 * 0.7 * 100 / 99)
    assert s.mean_p_r == pytest.approx(0.3)
    assert s.p_r_half_width == pytest.approx(1.959963984540054 * sd / 10)


def test_empirical_stats_empty():
    with pytest.raises(ValueError):
        empirical_stats([])


def test_phy_oracle_small_run():
    eng = PhyEngine(PhyScenario(snr_db=10.0))
    rng = np.random.default_rng(8)
    g = generate_graph(128, 20, 4.0, rng)
    oracle = CheckingOracle(PhyOracle(eng))
    rep = run_receiver(g, oracle, rng)
    assert 0 < rep.recovered <= 128
    g.check()


def test_phy_oracle_reproducible_and_checks_size():
    eng = PhyEngine(PhyScenario())
    g = generate_graph(128, 10, 3.0, np.random.default_rng(9))
    a = run_receiver(g, PhyOracle(eng), np.random.default_rng(1))
    b = run_receiver(g, PhyOracle(eng), np.random.default_rng(1))
    assert a.order == b.order
    with pytest.raises(ValueError):
        run_receiver(ContentionGraph(5, [[0]]), PhyOracle(eng), np.random.default_rng(0))

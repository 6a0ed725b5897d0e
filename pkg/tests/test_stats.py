import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from chshgame.core import DEFAULT_TABLE, HIDDEN_VARIABLES, MU, SETTINGS
from chshgame.games import run_game
from chshgame.stats import (
    PAIR_OF_CELL,
    ContingencyCounts,
    EmptyContext,
    balancing_discrepancy,
    chsh_statistic,
    conditional_frequencies,
    conditional_frequency,
    context_correlations,
    empirical,
    empirical_correlation,
    kl_independence,
    max_cell_freq_error,
    max_cell_gap,
    pair_counts,
    snapshot_stats,
    stirling_gap,
    w_closed_form,
    w_log_factor,
)
from chshgame.strategies import ForcingScientist, IndependentNature, QuantumNature

tables = arrays(np.int64, (16, 4), elements=st.integers(0, 30))


def test_increment_examples():
    c = ContingencyCounts.empty()
    c.increment(HIDDEN_VARIABLES[3], SETTINGS[2])
    e = empirical(c)
    assert e.P_hat[3, 2] == 1.0
    assert e.P_hat.sum() == 1.0
    c.increment(3, 2)
    e = empirical(c)
    assert e.Q_hat[3] == 1.0 and e.R_hat[2] == 1.0
    assert c.n == 2 and c.check_marginals()
    with pytest.raises(IndexError):
        c.increment(16, 0)


def test_uniform_spread_factorises_exactly():
    t = np.full((16, 4), 3)
    e = empirical(t)
    np.testing.assert_array_equal(e.P_hat, np.outer(e.Q_hat, e.R_hat))
    assert kl_independence(e) == 0.0


def test_empirical_needs_rounds():
    with pytest.raises(ValueError):
        empirical(ContingencyCounts.empty())


def test_kl_examples():
    one = np.zeros((16, 4), dtype=int)
    one[5, 1] = 9
    assert kl_independence(one) == 0.0
    diag = np.zeros((16, 4), dtype=int)
    for i in range(4):
        diag[i, i] = 7
    assert kl_independence(diag) == pytest.approx(math.log(4), abs=1e-14)


@given(tables.filter(lambda t: t.sum() > 0))
def test_kl_nonnegative_and_pinsker(t):
    d = kl_independence(t)
    assert d >= 0.0
    e = empirical(t)
    assert np.all(np.abs(e.P_hat - np.outer(e.Q_hat, e.R_hat)) <= 1.0)
    # the total variation between P and Q x R bounds every cell
    assert max_cell_gap(e) <= math.sqrt(d / 2) + 1e-12


@given(tables.filter(lambda t: t.sum() > 0))
def test_marginals_consistent(t):
    c = ContingencyCounts.from_table(t)
    assert c.check_marginals()
    e = empirical(c)
    np.testing.assert_allclose(e.P_hat.sum(axis=1), e.Q_hat, atol=1e-12)
    np.testing.assert_allclose(e.P_hat.sum(axis=0), e.R_hat, atol=1e-12)
    assert abs(e.P_hat.sum() - 1) <= 1e-12


def test_from_table_validation():
    with pytest.raises(ValueError):
        ContingencyCounts.from_table(np.zeros((4, 16)))
    with pytest.raises(ValueError):
        ContingencyCounts.from_table(-np.ones((16, 4)))


def test_correlation_examples():
    t = np.zeros((16, 4), dtype=int)
    # hidden variables whose coordinates 1 and 3 agree, played under (1,3)
    for i, h in enumerate(HIDDEN_VARIABLES):
        if h.X(1) == h.X(3):
            t[i, 0] = 2
    pc = pair_counts(t)
    assert empirical_correlation(pc, (1, 3)) == 1.0
    assert empirical_correlation(pc, (1, 3), use_context=False) == 1.0
    with pytest.raises(EmptyContext):
        empirical_correlation(pc, (2, 4))
    assert np.all(pc.context <= pc.population)


def test_correlation_of_uniform_stream():
    rng = np.random.default_rng(3)
    n = 40_000
    c = ContingencyCounts.from_table(np.bincount(rng.integers(0, 64, n), minlength=64).reshape(16, 4))
    pc = pair_counts(c)
    for u in SETTINGS:
        assert abs(empirical_correlation(pc, u, use_context=False)) <= 4 / math.sqrt(n)


def test_correlation_of_table_stream():
    tr = run_game("closed", ForcingScientist("round_robin"), QuantumNature(), 100_000, seed=4,
                  snapshot_stride=100_000)
    pc = pair_counts(tr.final.counts)
    assert empirical_correlation(pc, (1, 3)) == pytest.approx(-1 / math.sqrt(2), abs=0.02)


def test_chsh_statistic_examples():
    r = 1 / math.sqrt(2)
    assert chsh_statistic(-r, r, -r, -r) == pytest.approx(-2 * math.sqrt(2), abs=1e-15)
    assert chsh_statistic(0, 0, 0, 0) == 0
    assert chsh_statistic(1, -1, 1, 1) == 4


def test_conditional_frequency_examples():
    t = np.zeros((16, 4), dtype=int)
    t[0, 0] = 1
    assert conditional_frequency(t, 1, 1, (1, 3)) == 1.0
    with pytest.raises(EmptyContext):
        conditional_frequency(t, 1, 1, (1, 4))
    f = conditional_frequencies(t)
    assert np.isnan(f[1]).all()
    assert max_cell_freq_error(t) == pytest.approx(1 - MU)
    assert math.isnan(max_cell_freq_error(np.zeros((16, 4))))


def test_conditional_frequencies_independent_stream():
    tr = run_game("closed", ForcingScientist(), IndependentNature(), 100_000, seed=2,
                  snapshot_stride=100_000)
    f = conditional_frequencies(tr.final.counts)
    np.testing.assert_allclose(f, 0.25, atol=0.02)


def test_w_closed_form_examples():
    assert w_closed_form(ContingencyCounts.empty()) == 0.0
    t = np.zeros((16, 4), dtype=int)
    t[0, 0] = t[1, 1] = 1
    assert w_closed_form(t) == pytest.approx(math.log(2), abs=1e-14)
    # by hand: P = (1/2, 1/2) on two cells, Q x R = 1/4 there, so D = ln 2
    assert kl_independence(t) == pytest.approx(math.log(2), abs=1e-14)
    assert stirling_gap(t) == pytest.approx(math.log(2) / 2, abs=1e-14)
    one = np.zeros((16, 4), dtype=int)
    one[2, 3] = 1000
    assert w_closed_form(one) == pytest.approx(0.0, abs=1e-9)
    assert stirling_gap(one) == pytest.approx(0.0, abs=1e-12)
    single = np.zeros((16, 4), dtype=int)
    single[0, 0] = 1
    with pytest.raises(ValueError):
        stirling_gap(single)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 15), st.integers(0, 3)), min_size=1, max_size=200))
def test_telescoping_identity(moves):
    c = ContingencyCounts.empty()
    prev = 0.0
    for tau, u in moves:
        c.increment(tau, u)
        cur = w_closed_form(c)
        assert cur - prev == pytest.approx(w_log_factor(c, tau, u), abs=1e-10)
        prev = cur


def test_balancing_discrepancy():
    t = np.zeros((16, 4), dtype=int)
    assert balancing_discrepancy(t) == 0.0
    t[0, 0] = 1
    assert balancing_discrepancy(t) == 1.0   # (1,4) unplayed
    t[0, 1] = 1
    assert balancing_discrepancy(t) == 0.0
    t[15, 1] = 2                             # X_1 = -1 only under (1,4)
    # freq(+ | s=1) = 2/4, freq(+ | 1,3) = 1, freq(+ | 1,4) = 1/3
    assert balancing_discrepancy(t) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(tables.filter(lambda t: t.sum() > 0))
def test_snapshot_stats_matches_scalar_functions(t):
    s = snapshot_stats(t)
    assert s["kl_independence"][0] == pytest.approx(kl_independence(t), abs=1e-12)
    np.testing.assert_allclose(s["C"][0], context_correlations(t), atol=1e-12, equal_nan=True)
    e = s["max_cell_freq_error"][0]
    assert e == pytest.approx(max_cell_freq_error(t), abs=1e-12, nan_ok=True)


def test_pair_of_cell_projection():
    for u, (a, b) in enumerate(SETTINGS):
        for i, h in enumerate(HIDDEN_VARIABLES):
            x, y = h.X(a), h.X(b)
            assert PAIR_OF_CELL[i, u] == 2 * (x == -1) + (y == -1)


def test_independent_round_robin_chsh_bound():
    tr = run_game("closed", ForcingScientist("round_robin"), IndependentNature(), 100_000, seed=9,
                  snapshot_stride=100_000)
    c = context_correlations(tr.final.counts)
    assert abs(chsh_statistic(*c)) <= 2.05
    np.testing.assert_array_equal(tr.final.counts.setting_counts, [25_000] * 4)


def test_default_table_is_used():
    t = np.zeros((16, 4), dtype=int)
    t[0, :] = 1
    assert max_cell_freq_error(t, DEFAULT_TABLE) == pytest.approx(max(1 - MU, 1 - (2 + math.sqrt(2)) / 8))

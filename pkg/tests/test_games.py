import math

import numpy as np
import pytest

from chshgame.core import DEFAULT_TABLE, HIDDEN_VARIABLES, MU, NU, SETTINGS, HiddenVariable, InvalidSetting
from chshgame.games import (
    COLUMNS,
    ClosedGameState,
    ConsistencyViolation,
    History,
    InvalidBet,
    LocalityGameState,
    closed_round,
    locality_round,
    run_game,
)
from chshgame.gtp import BettingDistribution
from chshgame.stats import w_closed_form
from chshgame.strategies import (
    ClosedTurn,
    FixedScientistA,
    ForcingScientist,
    IndependentNature,
    LocalityNature,
    LocalityScientists,
    MixtureNature,
    OddsScientistB,
    Policy,
    QuantumNature,
    ScientistA,
    ScientistB,
)

HALF = BettingDistribution((0.5, 0.5))
UNIFORM4 = {u: BettingDistribution.uniform(4) for u in SETTINGS}


def odds_bets_b(omega_a, s):
    e = DEFAULT_TABLE.conditional_lookup[s - 1]
    ia = 0 if omega_a == 1 else 1
    return {t: BettingDistribution(tuple(e[t - 3][ia])) for t in (3, 4)}


def test_locality_identity_bets_leave_capital_unchanged():
    state = LocalityGameState()
    rng = np.random.default_rng(0)
    for _ in range(200):
        s, t = int(rng.integers(1, 3)), int(rng.integers(3, 5))
        lam = HIDDEN_VARIABLES[int(rng.integers(16))]
        a = lam.X(s)
        locality_round(state, {1: HALF, 2: HALF}, s, a, odds_bets_b(a, s), t, lam)
    assert abs(state.logK_A) < 1e-12
    assert abs(state.logK_B) < 1e-12
    assert state.round == 200 and len(state.history) == 200


def test_locality_consistency_violation():
    state = LocalityGameState()
    lam = HiddenVariable.parse("-+++")
    with pytest.raises(ConsistencyViolation) as info:
        locality_round(state, {1: HALF, 2: HALF}, 1, 1, {3: HALF, 4: HALF}, 3, lam)
    assert info.value.round == 1


def test_locality_setting_errors():
    lam = HIDDEN_VARIABLES[0]
    with pytest.raises(InvalidSetting):
        locality_round(LocalityGameState(), {1: HALF, 2: HALF}, 3, 1, {3: HALF, 4: HALF}, 3, lam)
    with pytest.raises(InvalidSetting):
        locality_round(LocalityGameState(), {1: HALF, 2: HALF}, 1, 1, {3: HALF, 4: HALF}, 2, lam)
    with pytest.raises(InvalidBet):
        locality_round(LocalityGameState(), {1: HALF}, 1, 1, {3: HALF, 4: HALF}, 3, lam)
    with pytest.raises(InvalidBet):
        locality_round(LocalityGameState(), {1: HALF, 2: (1.0, 0.0)}, 1, 1, {3: HALF, 4: HALF}, 3, lam)


def test_locality_capital_update_values():
    state = LocalityGameState()
    lam = HiddenVariable.parse("+++-")
    bets_a = {1: BettingDistribution((0.8, 0.2)), 2: HALF}
    bets_b = {3: HALF, 4: BettingDistribution((0.3, 0.7))}
    locality_round(state, bets_a, 1, 1, bets_b, 4, lam)
    assert state.logK_A == pytest.approx(math.log(0.8 / 0.5))
    # p(-1 | +1, 1, 4) = 2 * p(+1, -1 | 1, 4) = 2 mu
    assert state.logK_B == pytest.approx(math.log(0.7 / (2 * MU)))


def test_flat_b_loses_at_kl_rate():
    n = 100_000
    sci = LocalityScientists(FixedScientistA(), OddsScientistB("flat"))
    tr = run_game("locality", sci, LocalityNature(), n, seed=5, snapshot_stride=n)
    h = -(2 * MU * math.log(2 * MU) + 2 * NU * math.log(2 * NU))
    d = math.log(2) - h
    assert tr.final.logK_B / n == pytest.approx(-d, rel=0.03)
    assert tr.final.logK_A == 0.0


def test_closed_round_w_examples():
    lam1, lam2 = HIDDEN_VARIABLES[0], HIDDEN_VARIABLES[7]
    s = ClosedGameState()
    closed_round(s, UNIFORM4, SETTINGS[0], lam1)
    assert s.logW_AB == 0.0
    closed_round(s, UNIFORM4, SETTINGS[1], lam1)
    assert s.logW_AB == pytest.approx(0.0, abs=1e-15)
    s = ClosedGameState()
    closed_round(s, UNIFORM4, SETTINGS[0], lam1)
    closed_round(s, UNIFORM4, SETTINGS[1], lam2)
    assert s.logW_AB == pytest.approx(math.log(2), abs=1e-15)
    assert w_closed_form(s.counts) == pytest.approx(math.log(2), abs=1e-15)


def test_closed_round_capital_and_outcomes():
    s = ClosedGameState()
    lam = HiddenVariable.parse("+-+-")
    closed_round(s, UNIFORM4, (1, 4), lam)
    rec = s.history.records[-1]
    assert (rec.omega_s, rec.omega_t) == (1, -1)
    assert s.logK_AB == pytest.approx(math.log(0.25 / MU))
    assert s.counts.n == 1 and s.counts.table[lam.index, 1] == 1


def test_closed_round_errors():
    lam = HIDDEN_VARIABLES[0]
    with pytest.raises(InvalidBet):
        closed_round(ClosedGameState(), {SETTINGS[0]: BettingDistribution.uniform(4)}, SETTINGS[0], lam)
    bad = dict(UNIFORM4)
    bad[SETTINGS[2]] = BettingDistribution((0.5, 0.5))
    with pytest.raises(InvalidBet):
        closed_round(ClosedGameState(), bad, SETTINGS[0], lam)
    with pytest.raises(InvalidSetting):
        closed_round(ClosedGameState(), UNIFORM4, (3, 3), lam)
    with pytest.raises(InvalidBet):
        closed_round(ClosedGameState(), None, SETTINGS[0], lam)


def test_closed_round_accepts_tuple_keys():
    bets = {tuple(u): BettingDistribution.uniform(4) for u in SETTINGS}
    s = closed_round(ClosedGameState(), bets, (2, 3), HIDDEN_VARIABLES[1])
    assert s.round == 1


def test_run_game_argument_errors():
    with pytest.raises(ValueError):
        run_game("closed", ForcingScientist(), QuantumNature(), 0, seed=1)
    with pytest.raises(ValueError):
        run_game("closed", ForcingScientist(), QuantumNature(), 10, seed=1, snapshot_stride=0)
    with pytest.raises(ValueError):
        run_game("open", ForcingScientist(), QuantumNature(), 10, seed=1)
    with pytest.raises(ValueError):
        run_game("closed", ForcingScientist(), QuantumNature(), 10, seed=1, engine="warp")
    with pytest.raises(ValueError):
        run_game("closed", ForcingScientist(), QuantumNature(), 10, seed=1, engine="batch",
                 history_mode="full")
    with pytest.raises(ValueError):
        run_game("locality", LocalityScientists(), LocalityNature(), 10, seed=1, engine="batch")
    with pytest.raises(ValueError):
        run_game("closed", ForcingScientist(), QuantumNature(), 10, seed=1, history_mode="some")


@pytest.mark.parametrize("engine", ["loop", "batch"])
def test_same_seed_same_trajectory(engine):
    runs = [run_game("closed", ForcingScientist(), QuantumNature(), 3000, seed=11,
                     snapshot_stride=7, engine=engine) for _ in range(2)]
    for name in COLUMNS:
        np.testing.assert_array_equal(runs[0].columns[name], runs[1].columns[name])
    other = run_game("closed", ForcingScientist(), QuantumNature(), 3000, seed=12,
                     snapshot_stride=7, engine=engine)
    assert not np.array_equal(runs[0].columns["lambda"], other.columns["lambda"])


def test_locality_determinism():
    runs = [run_game("locality", LocalityScientists(), LocalityNature(), 2000, seed=3, snapshot_stride=1)
            for _ in range(2)]
    for name in COLUMNS:
        np.testing.assert_array_equal(runs[0].columns[name], runs[1].columns[name])


@pytest.mark.parametrize("make_nature", [
    lambda: QuantumNature(), lambda: QuantumNature("copy"), lambda: IndependentNature(),
    lambda: MixtureNature(QuantumNature(), IndependentNature(), 0.3),
])
@pytest.mark.parametrize("settings", ["uniform", "round_robin"])
def test_batch_engine_matches_loop(make_nature, settings):
    n = 9000   # spans several blocks
    loop = run_game("closed", ForcingScientist(settings), make_nature(), n, seed=21,
                    snapshot_stride=13, engine="loop")
    batch = run_game("closed", ForcingScientist(settings), make_nature(), n, seed=21,
                     snapshot_stride=13, engine="batch")
    for name in ("n", "s", "t", "lambda", "omega_A", "omega_B"):
        np.testing.assert_array_equal(loop.columns[name], batch.columns[name])
    for name in ("logK_AB", "logW_AB", "kl_independence", "C13", "S_n", "max_cell_freq_error"):
        np.testing.assert_allclose(loop.columns[name], batch.columns[name], rtol=1e-11, atol=1e-8)
    np.testing.assert_array_equal(loop.tables, batch.tables)
    assert loop.final.max_logW_AB == pytest.approx(batch.final.max_logW_AB, abs=1e-8)


def test_snapshot_rows():
    tr = run_game("closed", ForcingScientist(), QuantumNature(), 1005, seed=1, snapshot_stride=100)
    np.testing.assert_array_equal(tr.columns["n"], list(range(100, 1001, 100)) + [1005])
    assert len(tr) == 11
    assert tr.row(0)["n"] == 100
    assert np.isnan(tr.columns["logK_A"]).all()
    loc = run_game("locality", LocalityScientists(), LocalityNature(), 50, seed=1, snapshot_stride=10)
    assert np.isnan(loc.columns["logW_AB"]).all() and np.isnan(loc.columns["kl_independence"]).all()


@pytest.mark.parametrize("make_nature", [
    lambda: QuantumNature(), lambda: IndependentNature(),
    lambda: MixtureNature(QuantumNature("copy"), IndependentNature()),
])
def test_w_recursion_equals_closed_form(make_nature):
    tr = run_game("closed", ForcingScientist(), make_nature(), 10_000, seed=2, snapshot_stride=500)
    for row in range(len(tr)):
        closed = w_closed_form(tr.tables[row])
        assert tr.columns["logW_AB"][row] == pytest.approx(closed, rel=1e-8, abs=1e-9)


def test_full_history_records_are_consistent():
    tr = run_game("closed", ForcingScientist(), QuantumNature(), 500, seed=3, history_mode="full")
    recs = tr.history.records
    assert len(recs) == 500 == tr.final.round
    for r in recs:
        assert (r.omega_s, r.omega_t) == (r.lam.X(r.setting.a), r.lam.X(r.setting.b))
        assert set(r.bets) == set(SETTINGS)
    loc = run_game("locality", LocalityScientists(), LocalityNature(), 500, seed=3, history_mode="full")
    for r in loc.history.records:
        assert r.lam.X(r.s) == r.omega_a and r.lam.X(r.t) == r.omega_b
    summary = run_game("closed", ForcingScientist(), QuantumNature(), 500, seed=3, engine="loop")
    assert summary.history.records == [] and len(summary.history) == 500


def test_capital_finite_and_history_length():
    tr = run_game("locality", LocalityScientists(), LocalityNature(), 3000, seed=8)
    assert math.isfinite(tr.final.logK_A) and math.isfinite(tr.final.logK_B)
    assert tr.final.counts.n == 3000 and tr.final.counts.check_marginals()


# -- timing: what each player is shown -------------------------------------------

class SpyScientist(ForcingScientist):
    """Records the history length it sees and checks it never sees the current round."""

    def reset(self):
        super().reset()
        self.seen = []
        self.observed = 0

    def announce(self, history):
        assert len(history) == self.observed
        self.seen.append(len(history))
        return super().announce(history)

    def observe(self, record):
        super().observe(record)
        self.observed += 1
        assert record.n == self.observed


class SpyNature(QuantumNature):
    def reset(self):
        self.turns = []

    def choose(self, history, turn):
        assert isinstance(turn, ClosedTurn)
        assert set(turn.bets) == set(SETTINGS)
        self.turns.append((len(history), turn.setting))
        return super().choose(history, turn)


class BlindNature(Policy):
    reads_setting = False

    def reset(self):
        self.calls = 0

    def choose(self, history):
        self.calls += 1
        return HIDDEN_VARIABLES[self.calls % 16]


def test_closed_timing():
    sci, nat = SpyScientist(), SpyNature()
    run_game("closed", sci, nat, 50, seed=0, engine="loop")
    assert sci.seen == list(range(50))
    assert [n for n, _ in nat.turns] == list(range(50))
    blind = BlindNature()
    run_game("closed", ForcingScientist(), blind, 20, seed=0)
    assert blind.calls == 20


def test_independent_natures_are_never_shown_the_setting():
    class Trap(IndependentNature):
        def choose(self, *args):
            assert len(args) == 1, "setting leaked to a setting-blind nature"
            return super().choose(*args)

    run_game("closed", ForcingScientist(), Trap(), 30, seed=0, engine="loop")
    run_game("closed", ForcingScientist(), MixtureNature(QuantumNature(), Trap()), 30, seed=0,
             engine="loop")


class SpyA(ScientistA):
    def announce(self, history):
        self.last_n = len(history)
        return super().announce(history)


class SpyB(ScientistB):
    def announce(self, history, turn):
        assert turn.omega_a in (1, -1) and turn.s in (1, 2)
        assert turn.t is None and turn.bets_b is None
        return super().announce(history, turn)


class SpyNatureA(Policy):
    def announce(self, history, turn):
        assert turn.s in (1, 2) and set(turn.bets_a) == {1, 2}
        assert turn.omega_a is None and turn.t is None and turn.bets_b is None
        return 1


class SpyNatureB(Policy):
    def choose(self, history, turn):
        assert turn.omega_a == 1 and turn.t in (3, 4) and set(turn.bets_b) == {3, 4}
        return HiddenVariable((1, 1, 1, 1))


def test_locality_timing():
    sci = LocalityScientists(SpyA(), SpyB())
    tr = run_game("locality", sci, LocalityNature(SpyNatureA(), SpyNatureB()), 40, seed=0)
    assert tr.final.round == 40
    assert sci.a.last_n == 39


def test_history_validation():
    with pytest.raises(ValueError):
        History("partial")

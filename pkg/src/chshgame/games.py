"""State machines for the locality game and the loopholes-closed game, and the
run loop that drives policies through them.

A round function validates the moves of one round and returns the updated
state; the state owns the capital logs and the contingency counts. The run
loop asks each player for its move in protocol order, handing it only what
has been announced so far.

For the closed game there is also a vectorised engine used when the
scientist is a :class:`~chshgame.strategies.ForcingScientist` and the nature
can draw its moves in blocks. It reproduces the loop engine's moves exactly
(same random streams) and its capital logs up to floating-point rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core import (
    DEFAULT_TABLE,
    HIDDEN_VARIABLES,
    QUADS,
    SETTINGS,
    ChshTable,
    HiddenVariable,
    InvalidSetting,
    SettingPair,
    as_setting,
    check_outcome,
    pair_index,
)
from .gtp import BettingDistribution
from .stats import PAIR_OF_CELL, ContingencyCounts, snapshot_stats
from .strategies import ClosedTurn, ForcingScientist, LocalityTurn, Policy

__all__ = [
    "ConsistencyViolation",
    "InvalidBet",
    "ClosedRecord",
    "LocalityRecord",
    "LocalityGameState",
    "ClosedGameState",
    "History",
    "locality_round",
    "closed_round",
    "Trajectory",
    "run_game",
    "COLUMNS",
]


class ConsistencyViolation(ValueError):
    """Nature B's hidden variable disagrees with the A-side outcome already announced."""

    def __init__(self, message: str, round: Optional[int] = None):
        super().__init__(message)
        self.round = round


class InvalidBet(ValueError):
    """A bet that is not a strictly positive distribution over the right alphabet."""


class ClosedRecord(NamedTuple):
    n: int
    setting: SettingPair
    lam: HiddenVariable
    omega_s: int
    omega_t: int
    bets: Optional[dict] = None


class LocalityRecord(NamedTuple):
    n: int
    s: int
    omega_a: int
    t: int
    lam: HiddenVariable
    omega_b: int
    bets_a: Optional[dict] = None
    bets_b: Optional[dict] = None


@dataclass
class History:
    """What every player may see: the number of finished rounds and, in
    ``full`` mode, their records."""

    mode: str = "full"
    records: list = field(default_factory=list)
    n: int = 0

    def __post_init__(self):
        if self.mode not in ("full", "summary"):
            raise ValueError(f"history mode must be 'full' or 'summary', got {self.mode!r}")

    def append(self, record) -> None:
        self.n += 1
        if self.mode == "full":
            self.records.append(record)

    def __len__(self) -> int:
        return self.n


@dataclass
class LocalityGameState:
    round: int = 0
    logK_A: float = 0.0
    logK_B: float = 0.0
    max_logK_A: float = 0.0
    max_logK_B: float = 0.0
    counts: ContingencyCounts = field(default_factory=ContingencyCounts.empty)
    history: History = field(default_factory=History)
    table: ChshTable = DEFAULT_TABLE


@dataclass
class ClosedGameState:
    round: int = 0
    logK_AB: float = 0.0
    logW_AB: float = 0.0
    max_logK_AB: float = 0.0
    max_logW_AB: float = 0.0
    counts: ContingencyCounts = field(default_factory=ContingencyCounts.empty)
    history: History = field(default_factory=History)
    table: ChshTable = DEFAULT_TABLE


def _check_bet(bet, size: int, where: str) -> BettingDistribution:
    if not isinstance(bet, BettingDistribution):
        try:
            bet = BettingDistribution(tuple(bet))
        except (TypeError, ValueError) as exc:
            raise InvalidBet(f"{where}: {exc}") from None
    if len(bet) != size:
        raise InvalidBet(f"{where}: expected {size} weights, got {len(bet)}")
    return bet


def _check_bet_map(bets, keys, size: int, who: str) -> dict:
    if bets is None:
        raise InvalidBet(f"{who} announced no bets")
    out = {}
    for key in keys:
        look = key
        if look not in bets and isinstance(key, SettingPair) and tuple(key) in bets:
            look = tuple(key)
        if look not in bets:
            raise InvalidBet(f"{who} has no bet for context {key}")
        out[key] = _check_bet(bets[look], size, f"{who} bet for {key}")
    return out


def locality_round(state: LocalityGameState, bets_a: dict, s: int, omega_a: int,
                   bets_b: dict, t: int, lam: HiddenVariable) -> LocalityGameState:
    """One round of the locality game.

    ``bets_a[s']`` is A's distribution ``(q(+1|s'), q(-1|s'))``; ``bets_b[t']``
    is B's distribution over its outcome in the context ``(omega_a, s, t')``.
    """
    if s not in (1, 2):
        raise InvalidSetting(f"A-side setting must be 1 or 2, got {s!r}")
    if t not in (3, 4):
        raise InvalidSetting(f"B-side setting must be 3 or 4, got {t!r}")
    omega_a = check_outcome(omega_a)
    n = state.round + 1
    bets_a = _check_bet_map(bets_a, (1, 2), 2, "Scientist A")
    bets_b = _check_bet_map(bets_b, (3, 4), 2, "Scientist B")
    if lam.X(s) != omega_a:
        raise ConsistencyViolation(
            f"round {n}: X_{s}(lambda={lam}) = {lam.X(s):+d} but Nature A announced {omega_a:+d}", n)
    omega_b = lam.X(t)
    table = state.table
    ia = 0 if omega_a == 1 else 1
    ib = 0 if omega_b == 1 else 1
    state.logK_A += math.log(bets_a[s][ia]) - math.log(table.marginal_lookup[s - 1][ia])
    state.logK_B += math.log(bets_b[t][ib]) - math.log(table.conditional_lookup[s - 1][t - 3][ia][ib])
    if not (math.isfinite(state.logK_A) and math.isfinite(state.logK_B)):
        raise ArithmeticError(f"round {n}: capital log became non-finite")
    state.max_logK_A = max(state.max_logK_A, state.logK_A)
    state.max_logK_B = max(state.max_logK_B, state.logK_B)
    state.counts.increment(lam.index, 2 * (s - 1) + (t - 3))
    state.round = n
    keep = state.history.mode == "full"
    state.history.append(LocalityRecord(n, s, omega_a, t, lam, omega_b,
                                        bets_a if keep else None, bets_b if keep else None))
    return state


def closed_round(state: ClosedGameState, bets: dict, u, lam: HiddenVariable) -> ClosedGameState:
    """One round of the loopholes-closed game.

    The counts are incremented before the W factor is taken, so the empirical
    distributions in the factor include the current round.
    """
    u = as_setting(u)
    bets = _check_bet_map(bets, SETTINGS, 4, "Scientist AB")
    if not isinstance(lam, HiddenVariable):
        lam = HiddenVariable(tuple(lam))
    x, y = lam.X(u.a), lam.X(u.b)
    k = pair_index(x, y)
    j = u.index
    table = state.table
    p = table.entries[j, k]
    if p <= 0:
        raise ArithmeticError(f"odds table gives zero odds to {(x, y)} under {u}")
    state.logK_AB += math.log(bets[u][k]) - math.log(p)
    c = state.counts
    i = lam.index
    c.increment(i, j)
    n = c.n
    state.logW_AB += (math.log(c.table[i, j]) - math.log(c.tau_counts[i])
                      - math.log(c.setting_counts[j]) + math.log(n))
    state.max_logK_AB = max(state.max_logK_AB, state.logK_AB)
    state.max_logW_AB = max(state.max_logW_AB, state.logW_AB)
    state.round = n
    state.history.append(ClosedRecord(n, u, lam, x, y, bets if state.history.mode == "full" else None))
    return state


# -- trajectories -------------------------------------------------------------

COLUMNS = ("n", "s", "t", "lambda", "omega_A", "omega_B", "logK_A", "logK_B", "logK_AB", "logW_AB",
           "kl_independence", "C13", "C14", "C23", "C24", "S_n", "max_cell_freq_error")
_FLOAT_COLUMNS = COLUMNS[6:]


@dataclass
class Trajectory:
    """Snapshots of a run, one row per snapshot round.

    ``columns`` maps every name in :data:`COLUMNS` to an array; entries that do
    not apply to the protocol are NaN (floats) or empty strings.
    ``tables`` holds the contingency table at each snapshot.
    """

    protocol: str
    columns: dict
    tables: np.ndarray
    final: object
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.columns["n"])

    def row(self, i: int) -> dict:
        return {name: self.columns[name][i] for name in COLUMNS}

    @property
    def history(self) -> History:
        return self.final.history


class _SnapshotBuffer:
    def __init__(self, protocol: str, table: ChshTable):
        self.protocol = protocol
        self.table = table
        self.rows = {name: [] for name in COLUMNS}
        self.tables = []

    def add_many(self, n, s, t, lam, oa, ob, logs: dict, tables: np.ndarray):
        stats = snapshot_stats(tables, self.table)
        m = len(n)
        r = self.rows
        r["n"].extend(int(v) for v in n)
        r["s"].extend(int(v) for v in s)
        r["t"].extend(int(v) for v in t)
        r["lambda"].extend(str(HIDDEN_VARIABLES[int(v)]) for v in lam)
        r["omega_A"].extend(int(v) for v in oa)
        r["omega_B"].extend(int(v) for v in ob)
        for name in ("logK_A", "logK_B", "logK_AB", "logW_AB"):
            r[name].extend(np.asarray(logs[name], dtype=float) if name in logs else [math.nan] * m)
        if self.protocol == "closed":
            r["kl_independence"].extend(stats["kl_independence"])
        else:
            r["kl_independence"].extend([math.nan] * m)
        for idx, name in enumerate(("C13", "C14", "C23", "C24")):
            r[name].extend(stats["C"][:, idx])
        r["S_n"].extend(stats["S"])
        r["max_cell_freq_error"].extend(stats["max_cell_freq_error"])
        self.tables.append(np.asarray(tables, dtype=np.int64).reshape(-1, 16, 4))

    def finish(self) -> tuple[dict, np.ndarray]:
        cols = {}
        for name in COLUMNS:
            if name == "lambda":
                cols[name] = np.array(self.rows[name], dtype="<U4")
            elif name in _FLOAT_COLUMNS:
                cols[name] = np.array(self.rows[name], dtype=float)
            else:
                cols[name] = np.array(self.rows[name], dtype=np.int64)
        tables = np.concatenate(self.tables) if self.tables else np.zeros((0, 16, 4), dtype=np.int64)
        return cols, tables


def _is_snapshot(n: int, rounds: int, stride: int) -> bool:
    return n % stride == 0 or n == rounds


# -- loop engines -------------------------------------------------------------

def _call_nature(nature: Policy, history, turn):
    return nature.choose(history, turn) if nature.reads_setting else nature.choose(history)


def _run_closed_loop(scientist, nature, rounds, stride, history_mode, table):
    state = ClosedGameState(history=History(history_mode), table=table)
    snaps = _SnapshotBuffer("closed", table)
    for _ in range(rounds):
        bets, u = scientist.announce(state.history)
        u = as_setting(u)
        lam = _call_nature(nature, state.history, ClosedTurn(bets, u))
        closed_round(state, bets, u, lam)
        rec = state.history.records[-1] if history_mode == "full" else ClosedRecord(
            state.round, u, lam, lam.X(u.a), lam.X(u.b))
        scientist.observe(rec)
        nature.observe(rec)
        n = state.round
        if _is_snapshot(n, rounds, stride):
            snaps.add_many([n], [u.a], [u.b], [lam.index], [rec.omega_s], [rec.omega_t],
                           {"logK_AB": [state.logK_AB], "logW_AB": [state.logW_AB]},
                           state.counts.table[None].copy())
    return state, snaps


def _run_locality_loop(scientists, nature, rounds, stride, history_mode, table):
    state = LocalityGameState(history=History(history_mode), table=table)
    snaps = _SnapshotBuffer("locality", table)
    sa, sb = scientists.a, scientists.b
    na, nb = nature.a, nature.b
    for _ in range(rounds):
        h = state.history
        bets_a, s = sa.announce(h)
        omega_a = na.announce(h, LocalityTurn(bets_a, s))
        bets_b, t = sb.announce(h, LocalityTurn(bets_a, s, omega_a))
        lam = nb.choose(h, LocalityTurn(bets_a, s, omega_a, bets_b, t))
        if not isinstance(lam, HiddenVariable):
            lam = HiddenVariable(tuple(lam))
        locality_round(state, bets_a, s, omega_a, bets_b, t, lam)
        rec = state.history.records[-1] if history_mode == "full" else LocalityRecord(
            state.round, s, omega_a, t, lam, lam.X(t))
        scientists.observe(rec)
        nature.observe(rec)
        n = state.round
        if _is_snapshot(n, rounds, stride):
            snaps.add_many([n], [s], [t], [lam.index], [omega_a], [rec.omega_b],
                           {"logK_A": [state.logK_A], "logK_B": [state.logK_B]},
                           state.counts.table[None].copy())
    return state, snaps


# -- vectorised closed-game engine ---------------------------------------------

def _occurrence_rank(keys: np.ndarray, nkeys: int) -> np.ndarray:
    """For each position, how many earlier positions hold the same key."""
    order = np.argsort(keys, kind="stable")
    counts = np.bincount(keys, minlength=nkeys)
    starts = np.cumsum(counts) - counts
    rank = np.empty(len(keys), dtype=np.int64)
    rank[order] = np.arange(len(keys)) - starts[keys[order]]
    return rank


def _running(start: float, inc: np.ndarray) -> np.ndarray:
    # sequential left-to-right sums, same order as the loop engine
    return np.cumsum(np.concatenate(([start], inc)))[1:]


def _batch_ok(scientist, nature, history_mode) -> bool:
    return (history_mode == "summary" and type(scientist) is ForcingScientist
            and hasattr(nature, "sample_block"))


def _run_closed_batch(scientist: ForcingScientist, nature, rounds, stride, table, block=4096):
    state = ClosedGameState(history=History("summary"), table=table)
    snaps = _SnapshotBuffer("closed", table)
    log_table = np.log(table.entries)
    c = state.counts
    ctx = scientist.counts          # (4 settings, 4 pairs), updated in place
    done = 0
    while done < rounds:
        m = min(block, rounds - done)
        u = scientist.settings.block(m)
        tau = nature.sample_block(u)
        k = PAIR_OF_CELL[tau, u]
        # bets: add-half estimate from counts before each round
        key = u * 4 + k
        r_key = _occurrence_rank(key, 16)
        r_u = _occurrence_rank(u, 4)
        prior_u = ctx.sum(axis=1)
        lnq = np.log(ctx.ravel()[key] + r_key + 0.5) - np.log(prior_u[u] + r_u + 2.0)
        inc_k = lnq - log_table[u, k]
        # W factor with counts that include the current round
        cell = tau * 4 + u
        r_cell = _occurrence_rank(cell, 64)
        r_tau = _occurrence_rank(tau, 16)
        nn = c.n + np.arange(1, m + 1)
        inc_w = (np.log(c.table.ravel()[cell] + r_cell + 1) - np.log(c.tau_counts[tau] + r_tau + 1)
                 - np.log(c.setting_counts[u] + r_u + 1) + np.log(nn))
        path_k = _running(state.logK_AB, inc_k)
        path_w = _running(state.logW_AB, inc_w)
        # snapshots inside this block
        pos = np.nonzero((nn % stride == 0) | (nn == rounds))[0]
        if len(pos):
            onehot = np.zeros((m, 64), dtype=np.int64)
            onehot[np.arange(m), cell] = 1
            cum = np.cumsum(onehot, axis=0)[pos].reshape(-1, 16, 4) + c.table
            a_side = np.array([SETTINGS[i].a for i in range(4)])[u[pos]]
            b_side = np.array([SETTINGS[i].b for i in range(4)])[u[pos]]
            snaps.add_many(nn[pos], a_side, b_side, tau[pos],
                           QUADS[tau[pos], a_side - 1], QUADS[tau[pos], b_side - 1],
                           {"logK_AB": path_k[pos], "logW_AB": path_w[pos]}, cum)
        # commit the block
        np.add.at(ctx, (u, k), 1)
        np.add.at(c.table, (tau, u), 1)
        np.add.at(c.tau_counts, tau, 1)
        np.add.at(c.setting_counts, u, 1)
        c.n += m
        state.logK_AB = float(path_k[-1])
        state.logW_AB = float(path_w[-1])
        state.max_logK_AB = max(state.max_logK_AB, float(path_k.max()))
        state.max_logW_AB = max(state.max_logW_AB, float(path_w.max()))
        state.round = c.n
        state.history.n = c.n
        done += m
    return state, snaps


def run_game(protocol: str, scientist: Policy, nature: Policy, rounds: int, seed: int,
             snapshot_stride: int = 1, history_mode: str = "summary",
             table: ChshTable = DEFAULT_TABLE, engine: str = "auto") -> Trajectory:
    """Bind both policies to ``seed`` and play ``rounds`` rounds.

    ``protocol`` is ``"locality"`` (scientist and nature are the pair objects
    :class:`~chshgame.strategies.LocalityScientists` /
    :class:`~chshgame.strategies.LocalityNature` or anything with ``.a`` and
    ``.b`` players) or ``"closed"``. ``engine`` is ``"loop"``, ``"batch"``
    (closed game with a forcing scientist and a block-sampling nature only) or
    ``"auto"``.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if snapshot_stride < 1:
        raise ValueError("snapshot stride must be >= 1")
    if history_mode not in ("full", "summary"):
        raise ValueError(f"history mode must be 'full' or 'summary', got {history_mode!r}")
    scientist.bind(seed, "scientist")
    nature.bind(seed, "nature")
    if protocol == "closed":
        use_batch = engine == "batch" or (engine == "auto" and _batch_ok(scientist, nature, history_mode))
        if use_batch:
            if not _batch_ok(scientist, nature, history_mode):
                raise ValueError("batch engine needs a ForcingScientist, a block-sampling nature "
                                 "and summary history")
            state, snaps = _run_closed_batch(scientist, nature, rounds, snapshot_stride, table)
        elif engine in ("auto", "loop"):
            state, snaps = _run_closed_loop(scientist, nature, rounds, snapshot_stride, history_mode, table)
        else:
            raise ValueError(f"unknown engine {engine!r}")
    elif protocol == "locality":
        if engine == "batch":
            raise ValueError("the locality game has no batch engine")
        state, snaps = _run_locality_loop(scientist, nature, rounds, snapshot_stride, history_mode, table)
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    cols, tables = snaps.finish()
    return Trajectory(protocol, cols, tables, state, seed)

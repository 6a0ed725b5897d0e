"""Scientist and Nature policies for the two hidden-variable games.

Every policy is bound to a run with :meth:`Policy.bind`, which derives the
policy's own random stream from ``(role, seed)`` and clears its state. After
that a policy is a deterministic function of what it has been shown.

Randomness comes from :class:`UniformStream`: PCG64 seeded with the first 8
bytes of ``blake2b(f"{role}:{seed}")``, read one double at a time. Every
random policy consumes a fixed number of doubles per move, so a move drawn in
a block (``sample_block``) is identical to the same move drawn alone.

Move interfaces
---------------
Closed game
    scientist: ``announce(history) -> (bets, u)`` where ``bets`` maps every
    :class:`SettingPair` to a distribution over the 4 outcome pairs.
    nature: ``choose(history, turn) -> HiddenVariable`` if ``reads_setting``
    else ``choose(history)``. ``turn`` is a :class:`ClosedTurn`.
Locality game
    scientist A: ``announce(history) -> (bets_a, s)``; scientist B:
    ``announce(history, turn) -> (bets_b, t)`` with ``bets_b[t]`` a
    distribution over B's outcome in the context ``(omega_a, s, t)``.
    nature A: ``announce(history, turn) -> omega_a``; nature B:
    ``choose(history, turn) -> HiddenVariable``. ``turn`` is a
    :class:`LocalityTurn` with the not-yet-announced fields set to ``None``.

All policies get ``observe(record)`` after every round.
"""
from __future__ import annotations

import hashlib
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_TABLE,
    HIDDEN_VARIABLES,
    OUTCOME_PAIRS,
    SETTINGS,
    ChshTable,
    HiddenVariable,
    SettingPair,
    conditional_odds,
    outcome_bit,
    pair_index,
)
from .gtp import BettingDistribution

__all__ = [
    "derive_seed",
    "UniformStream",
    "ClosedTurn",
    "LocalityTurn",
    "Policy",
    "UniformSettings",
    "RoundRobinSettings",
    "make_settings",
    "ForcingScientist",
    "FixedBetScientist",
    "ScientistA",
    "ScientistB",
    "FixedScientistA",
    "OddsScientistB",
    "LocalityScientists",
    "QuantumNature",
    "MeasurementDependentNature",
    "IndependentNature",
    "DeterministicNature",
    "ReplayNature",
    "ReplayExhausted",
    "MixtureNature",
    "FairNatureA",
    "LocalityExploitNature",
    "LocalityNature",
]


def derive_seed(role: str, seed: int) -> int:
    digest = hashlib.blake2b(f"{role}:{int(seed)}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class UniformStream:
    """Buffered stream of uniform doubles in [0, 1) from a PCG64 generator."""

    def __init__(self, seed: int, block: int = 4096):
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._block = block
        self._buf = np.empty(0)
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._rng.random(self._block)
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        return float(x)

    def take(self, k: int) -> np.ndarray:
        rest = self._buf[self._pos:]
        if k <= len(rest):
            self._pos += k
            return rest[:k].copy()
        out = np.concatenate([rest, self._rng.random(k - len(rest))])
        self._buf = np.empty(0)
        self._pos = 0
        return out


class ClosedTurn(NamedTuple):
    bets: dict
    setting: SettingPair


class LocalityTurn(NamedTuple):
    bets_a: dict
    s: int
    omega_a: Optional[int] = None
    bets_b: Optional[dict] = None
    t: Optional[int] = None


class Policy:
    """Base class: a named policy with its own random stream."""

    kind = "policy"
    reads_setting = True

    def bind(self, seed: int, role: str) -> "Policy":
        self.seed = int(seed)
        self.role = role
        self.stream = UniformStream(derive_seed(role, seed))
        self.reset()
        return self

    def reset(self) -> None:
        pass

    def observe(self, record) -> None:
        pass


# -- setting policies ---------------------------------------------------------

class UniformSettings(Policy):
    """Iid uniform choice among ``size`` settings, one double per choice."""

    kind = "uniform"

    def __init__(self, size: int = 4):
        self.size = size

    def next(self) -> int:
        return min(int(self.stream.next() * self.size), self.size - 1)

    def block(self, m: int) -> np.ndarray:
        return np.minimum((self.stream.take(m) * self.size).astype(np.int64), self.size - 1)


class RoundRobinSettings(Policy):
    kind = "round_robin"

    def __init__(self, size: int = 4):
        self.size = size

    def reset(self) -> None:
        self._i = 0

    def next(self) -> int:
        i = self._i % self.size
        self._i += 1
        return i

    def block(self, m: int) -> np.ndarray:
        out = (self._i + np.arange(m)) % self.size
        self._i += m
        return out


def make_settings(name: str, size: int) -> Policy:
    if name == "uniform":
        return UniformSettings(size)
    if name == "round_robin":
        return RoundRobinSettings(size)
    raise ValueError(f"unknown setting policy {name!r}")


# -- closed-game scientists ---------------------------------------------------

class ForcingScientist(Policy):
    """Add-half bets on the outcome pair, separately for each setting pair.

    ``bets(.|u)`` is ``(c_u(k) + 1/2) / (T(u) + 2)`` where ``c_u(k)`` counts past
    rounds played under ``u`` that showed outcome pair ``k``.
    """

    kind = "forcing"

    def __init__(self, settings: str = "uniform"):
        self.settings_name = settings
        self.settings = make_settings(settings, 4)

    def bind(self, seed, role):
        super().bind(seed, role)
        self.settings.bind(seed, role + ".settings")
        return self

    def reset(self):
        self.counts = np.zeros((4, 4), dtype=np.int64)

    def bets(self) -> dict:
        out = {}
        for u, row in enumerate(self.counts.tolist()):
            denom = sum(row) + 2.0
            out[SETTINGS[u]] = BettingDistribution(tuple((c + 0.5) / denom for c in row))
        return out

    def announce(self, history):
        return self.bets(), SETTINGS[self.settings.next()]

    def observe(self, record):
        self.counts[record.setting.index, pair_index(record.omega_s, record.omega_t)] += 1


class FixedBetScientist(Policy):
    """Bets the same distributions every round (the odds table by default)."""

    kind = "fixed"

    def __init__(self, bets: Optional[dict] = None, settings: str = "uniform",
                 table: ChshTable = DEFAULT_TABLE):
        if bets is None:
            bets = {su: BettingDistribution(tuple(table.entries[u])) for u, su in enumerate(SETTINGS)}
        self.fixed = dict(bets)
        self.settings = make_settings(settings, 4)

    def bind(self, seed, role):
        super().bind(seed, role)
        self.settings.bind(seed, role + ".settings")
        return self

    def announce(self, history):
        return dict(self.fixed), SETTINGS[self.settings.next()]


# -- locality-game scientists -------------------------------------------------

def _kt2(c_plus: int, c_minus: int) -> BettingDistribution:
    denom = c_plus + c_minus + 1.0
    return BettingDistribution(((c_plus + 0.5) / denom, (c_minus + 0.5) / denom))


class ScientistA(Policy):
    """Add-half bets on A's outcome for each of A's settings; index 0 is ``+1``."""

    kind = "kt_a"

    def __init__(self, settings: str = "uniform"):
        self.settings_name = settings
        self.settings = make_settings(settings, 2)

    def bind(self, seed, role):
        super().bind(seed, role)
        self.settings.bind(seed, role + ".settings")
        return self

    def reset(self):
        self.counts = [[0, 0], [0, 0]]   # counts[s-1][bit(omega)]

    def bets(self) -> dict:
        return {s: _kt2(*self.counts[s - 1]) for s in (1, 2)}

    def announce(self, history):
        return self.bets(), 1 + self.settings.next()

    def observe(self, record):
        self.counts[record.s - 1][outcome_bit(record.omega_a)] += 1


class ScientistB(Policy):
    """Add-half bets on B's outcome per context ``(omega_a, s, t)``, with a
    balancing rule for the choice of ``t``.

    The balancing rule looks at the current ``(a, s)``. For each candidate
    ``t`` it computes, as if ``t`` were chosen this round, the discrepancy
    ``|freq(a | s) - freq(a | s, t')|`` for both ``t'`` (a context never played
    counts as 1) and takes the larger one. Candidates within ``1/N(s)`` of the
    best value are treated as ties and go to the less played ``(s, t)``, then
    to ``t = 3``.
    """

    kind = "balancing_b"

    def reset(self):
        # indexed by s-1, t-3, bit(a)
        self.n_s = [0, 0]
        self.n_as = [[0, 0], [0, 0]]
        self.n_st = [[0, 0], [0, 0]]
        self.n_ast = [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
        self.b_counts = {}   # (bit a, s, t) -> [count +1, count -1]

    def bets(self, s: int, omega_a: int) -> dict:
        ab = outcome_bit(omega_a)
        return {t: _kt2(*self.b_counts.get((ab, s, t), (0, 0))) for t in (3, 4)}

    def choose_t(self, s: int, omega_a: int) -> int:
        i, ab = s - 1, outcome_bit(omega_a)
        n_s = self.n_s[i] + 1
        f_s = (self.n_as[i][ab] + 1) / n_s

        def disc(j: int, chosen: bool) -> float:
            m = self.n_st[i][j] + chosen
            if m == 0:
                return 1.0
            return abs(f_s - (self.n_ast[i][j][ab] + chosen) / m)

        obj = [max(disc(0, j == 0), disc(1, j == 1)) for j in (0, 1)]
        best = min(obj)
        cands = [j for j in (0, 1) if obj[j] <= best + 1.0 / n_s]
        j = min(cands, key=lambda j: (self.n_st[i][j], j))
        return 3 + j

    def announce(self, history, turn: LocalityTurn):
        return self.bets(turn.s, turn.omega_a), self.choose_t(turn.s, turn.omega_a)

    def observe(self, record):
        i, j, ab = record.s - 1, record.t - 3, outcome_bit(record.omega_a)
        self.n_s[i] += 1
        self.n_as[i][ab] += 1
        self.n_st[i][j] += 1
        self.n_ast[i][j][ab] += 1
        c = self.b_counts.setdefault((ab, record.s, record.t), [0, 0])
        c[outcome_bit(record.omega_b)] += 1


class OddsScientistB(Policy):
    """Non-adaptive B: bets the conditional odds (``mode="odds"``) or a flat
    1/2 (``mode="flat"``) and picks ``t`` by a setting policy."""

    kind = "odds_b"

    def __init__(self, mode: str = "odds", settings: str = "uniform", table: ChshTable = DEFAULT_TABLE):
        if mode not in ("odds", "flat"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.table = table
        self.settings = make_settings(settings, 2)

    def bind(self, seed, role):
        super().bind(seed, role)
        self.settings.bind(seed, role + ".settings")
        return self

    def announce(self, history, turn: LocalityTurn):
        if self.mode == "flat":
            bets = {t: BettingDistribution((0.5, 0.5)) for t in (3, 4)}
        else:
            bets = {t: BettingDistribution((conditional_odds(self.table, 1, turn.omega_a, (turn.s, t)),
                                            conditional_odds(self.table, -1, turn.omega_a, (turn.s, t))))
                    for t in (3, 4)}
        return bets, 3 + self.settings.next()


class FixedScientistA(Policy):
    """A-side bettor with fixed bets (flat 1/2 by default)."""

    kind = "fixed_a"

    def __init__(self, settings: str = "uniform", bets: Optional[dict] = None):
        self.fixed = bets or {s: BettingDistribution((0.5, 0.5)) for s in (1, 2)}
        self.settings = make_settings(settings, 2)

    def bind(self, seed, role):
        super().bind(seed, role)
        self.settings.bind(seed, role + ".settings")
        return self

    def announce(self, history):
        return dict(self.fixed), 1 + self.settings.next()


class LocalityScientists(Policy):
    """Scientist A and Scientist B of the locality game as one bound pair."""

    kind = "locality_pair"

    def __init__(self, a: Optional[Policy] = None, b: Optional[Policy] = None, settings: str = "uniform"):
        self.a = a if a is not None else ScientistA(settings)
        self.b = b if b is not None else ScientistB()

    def bind(self, seed, role):
        super().bind(seed, role)
        self.a.bind(seed, role + ".A")
        self.b.bind(seed, role + ".B")
        return self

    def observe(self, record):
        self.a.observe(record)
        self.b.observe(record)


# -- closed-game natures ------------------------------------------------------

def _cdf_pick(cum: np.ndarray, v: float) -> int:
    return min(int(np.searchsorted(cum, v, side="right")), len(cum) - 1)


# (setting u, outcome pair k, fill bits f1 f2) -> hidden-variable index, for both fill rules
def _assemble_tables() -> tuple[np.ndarray, np.ndarray]:
    uniform = np.empty((4, 4, 2, 2), dtype=np.int64)
    copy = np.empty((4, 4), dtype=np.int64)
    for u, (a, b) in enumerate(SETTINGS):
        other_a, other_b = 3 - a, 7 - b
        for k, (x, y) in enumerate(OUTCOME_PAIRS):
            for f1 in (0, 1):
                for f2 in (0, 1):
                    q = [0, 0, 0, 0]
                    q[a - 1], q[b - 1] = x, y
                    q[other_a - 1], q[other_b - 1] = 1 - 2 * f1, 1 - 2 * f2
                    uniform[u, k, f1, f2] = HiddenVariable(tuple(q)).index
            q = [0, 0, 0, 0]
            q[a - 1] = q[other_a - 1] = x
            q[b - 1] = q[other_b - 1] = y
            copy[u, k] = HiddenVariable(tuple(q)).index
    return uniform, copy


_FILL_UNIFORM, _FILL_COPY = _assemble_tables()
FILL_RULES = ("uniform", "copy")


class QuantumNature(Policy):
    """Samples the measured pair from the odds row of the current setting and
    fills the two unmeasured coordinates.

    ``fill="uniform"``: unmeasured coordinates are independent fair coins.
    ``fill="copy"``: each unmeasured coordinate repeats the measured one on the
    same side. Uses three doubles per move.
    """

    kind = "quantum"

    def __init__(self, fill: str = "uniform", table: ChshTable = DEFAULT_TABLE):
        if fill not in FILL_RULES:
            raise ValueError(f"unknown fill rule {fill!r}")
        self.fill = fill
        self.table = table
        self._cum = np.cumsum(table.entries, axis=1)

    def _assemble(self, u, k, f1, f2):
        if self.fill == "copy":
            return _FILL_COPY[u, k]
        return _FILL_UNIFORM[u, k, f1, f2]

    def choose(self, history, turn: ClosedTurn) -> HiddenVariable:
        u = turn.setting.index
        v0, v1, v2 = self.stream.next(), self.stream.next(), self.stream.next()
        k = _cdf_pick(self._cum[u], v0)
        return HIDDEN_VARIABLES[int(self._assemble(u, k, int(v1 >= 0.5), int(v2 >= 0.5)))]

    def sample_block(self, u: np.ndarray) -> np.ndarray:
        v = self.stream.take(3 * len(u)).reshape(-1, 3)
        k = np.minimum((v[:, :1] >= self._cum[u]).sum(axis=1), 3)
        f1 = (v[:, 1] >= 0.5).astype(np.int64)
        f2 = (v[:, 2] >= 0.5).astype(np.int64)
        return np.asarray(self._assemble(u, k, f1, f2), dtype=np.int64)


class MeasurementDependentNature(QuantumNature):
    """A local hidden-variable Nature that reads the setting before choosing
    its hidden variable. It samples exactly like :class:`QuantumNature`."""

    kind = "md_lhv"


class IndependentNature(Policy):
    """Draws the hidden variable iid from a fixed law, never seeing the setting."""

    kind = "independent"
    reads_setting = False

    def __init__(self, weights: Optional[Sequence[float]] = None):
        w = np.full(16, 1 / 16) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (16,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("hidden-variable law must be 16 nonnegative weights summing to 1")
        self.weights = w
        self._cum = np.cumsum(w)

    def choose(self, history) -> HiddenVariable:
        return HIDDEN_VARIABLES[_cdf_pick(self._cum, self.stream.next())]

    def sample_block(self, u: np.ndarray) -> np.ndarray:
        v = self.stream.take(len(u))
        return np.minimum(np.searchsorted(self._cum, v, side="right"), 15).astype(np.int64)


class DeterministicNature(Policy):
    """Announces the same hidden variable every round, in any role."""

    kind = "deterministic"
    reads_setting = False

    def __init__(self, lam: HiddenVariable):
        self.lam = lam if isinstance(lam, HiddenVariable) else HiddenVariable(tuple(lam))

    def choose(self, history, turn=None) -> HiddenVariable:
        return self.lam

    def announce(self, history, turn) -> int:
        return self.lam.X(turn.s)

    def sample_block(self, u: np.ndarray) -> np.ndarray:
        return np.full(len(u), self.lam.index, dtype=np.int64)


class ReplayExhausted(IndexError):
    """A replay nature ran out of scripted moves. ``round`` is the first
    round without a move."""

    def __init__(self, n_moves: int):
        super().__init__(f"replay has only {n_moves} moves")
        self.round = n_moves + 1


class ReplayNature(Policy):
    """Plays back a recorded list of hidden variables (and, in the locality
    game, A-side outcomes taken from the recorded hidden variables)."""

    kind = "replay"
    reads_setting = False

    def __init__(self, moves: Sequence):
        self.moves = [m if isinstance(m, HiddenVariable) else HiddenVariable.parse(m) if isinstance(m, str)
                      else HiddenVariable(tuple(m)) for m in moves]

    def reset(self):
        self._i = 0
        self._a = 0

    def _next(self) -> HiddenVariable:
        if self._i >= len(self.moves):
            raise ReplayExhausted(len(self.moves))
        lam = self.moves[self._i]
        self._i += 1
        return lam

    def choose(self, history, turn=None) -> HiddenVariable:
        return self._next()

    def announce(self, history, turn) -> int:
        if self._a >= len(self.moves):
            raise ReplayExhausted(len(self.moves))
        lam = self.moves[self._a]
        self._a += 1
        return lam.X(turn.s)

    def sample_block(self, u: np.ndarray) -> np.ndarray:
        return np.array([self._next().index for _ in range(len(u))], dtype=np.int64)


class MixtureNature(Policy):
    """Each round, plays ``first`` with probability ``weight`` and ``second``
    otherwise (one double per round from its own stream)."""

    kind = "mixture"

    def __init__(self, first: Policy, second: Policy, weight: float = 0.5):
        if not 0.0 <= weight <= 1.0:
            raise ValueError("mixture weight must lie in [0, 1]")
        self.first, self.second, self.weight = first, second, float(weight)
        self.reads_setting = first.reads_setting or second.reads_setting

    def bind(self, seed, role):
        super().bind(seed, role)
        self.first.bind(seed, role + ".first")
        self.second.bind(seed, role + ".second")
        return self

    @staticmethod
    def _call(p: Policy, history, turn):
        return p.choose(history, turn) if p.reads_setting else p.choose(history)

    def choose(self, history, turn=None) -> HiddenVariable:
        pick = self.first if self.stream.next() < self.weight else self.second
        return self._call(pick, history, turn)

    def sample_block(self, u: np.ndarray) -> np.ndarray:
        first = self.stream.take(len(u)) < self.weight
        out = np.empty(len(u), dtype=np.int64)
        out[first] = self.first.sample_block(u[first])
        out[~first] = self.second.sample_block(u[~first])
        return out

    def observe(self, record):
        self.first.observe(record)
        self.second.observe(record)


# -- locality-game natures ----------------------------------------------------

class FairNatureA(Policy):
    """Nature A announcing a fair coin (the odds ``p(a | s) = 1/2``)."""

    kind = "fair_a"

    def announce(self, history, turn: LocalityTurn) -> int:
        return 1 if self.stream.next() < 0.5 else -1


class LocalityExploitNature(Policy):
    """Nature B that has seen ``(s, omega_a, t)``: draws B's outcome from
    ``p(. | omega_a, s, t)`` and returns a hidden variable consistent with A's
    outcome, remaining coordinates fair coins (three doubles per move)."""

    kind = "locality_exploit"

    def __init__(self, table: ChshTable = DEFAULT_TABLE):
        self.table = table

    def choose(self, history, turn: LocalityTurn) -> HiddenVariable:
        s, a, t = turn.s, turn.omega_a, turn.t
        v0, v1, v2 = self.stream.next(), self.stream.next(), self.stream.next()
        b = 1 if v0 < self.table.conditional_lookup[s - 1][t - 3][outcome_bit(a)][0] else -1
        bits = [0, 0, 0, 0]
        bits[s - 1], bits[t - 1] = outcome_bit(a), outcome_bit(b)
        bits[(3 - s) - 1] = 0 if v1 < 0.5 else 1
        bits[(7 - t) - 1] = 0 if v2 < 0.5 else 1
        return HIDDEN_VARIABLES[8 * bits[0] + 4 * bits[1] + 2 * bits[2] + bits[3]]


class LocalityNature(Policy):
    """Nature A and Nature B of the locality game as one bound pair."""

    kind = "locality"

    def __init__(self, a: Optional[Policy] = None, b: Optional[Policy] = None):
        self.a = a if a is not None else FairNatureA()
        self.b = b if b is not None else LocalityExploitNature()

    def bind(self, seed, role):
        super().bind(seed, role)
        self.a.bind(seed, role + ".A")
        self.b.bind(seed, role + ".B")
        return self

    def observe(self, record):
        self.a.observe(record)
        self.b.observe(record)

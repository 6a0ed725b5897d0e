"""Simple predictive game on a finite alphabet and the add-half forcing strategy.

Skeptic's log capital is kept in nats. Symbols are the integers ``0..A-1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "BettingDistribution",
    "LogCapital",
    "FrequencyCounts",
    "CapitalError",
    "capital_update",
    "kt_bet",
    "kt_log_mixture",
    "kt_log_capital",
    "PredictiveTrajectory",
    "run_predictive_game",
    "kl_divergence",
]

LN2 = math.log(2.0)


class CapitalError(ArithmeticError):
    """A capital update produced a non-finite log capital."""


@dataclass(frozen=True)
class BettingDistribution:
    """A strictly positive probability vector over a finite alphabet."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(map(float, self.weights))
        if len(w) < 2:
            raise ValueError("alphabet must have at least two symbols")
        if not all(0.0 < x < math.inf for x in w):
            raise ValueError(f"betting weights must be strictly positive, got {w}")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError(f"betting weights must sum to 1, got {math.fsum(w)!r}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, size: int) -> "BettingDistribution":
        return cls((1.0 / size,) * size)

    def __getitem__(self, i: int) -> float:
        return self.weights[i]

    def __len__(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.array(self.weights)


@dataclass(frozen=True)
class LogCapital:
    """Skeptic's capital in log form.

    ``log_value`` is the log of the capital still in play. With ``thrift``
    enabled, every time the total capital first exceeds ``2**k`` half of the
    capital in play is moved to a locked reserve (``locked_log``, ``-inf`` while
    empty) that is never bet again.
    """

    log_value: float = 0.0
    locked_log: float = -math.inf
    thrift: bool = False
    level: int = 0

    @property
    def total_log(self) -> float:
        if self.locked_log == -math.inf:
            return self.log_value
        return float(np.logaddexp(self.log_value, self.locked_log))

    @property
    def value(self) -> float:
        return math.exp(self.total_log)


@dataclass
class FrequencyCounts:
    counts: list[int]
    total: int = 0

    def __post_init__(self):
        self.counts = [int(c) for c in self.counts]
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be nonnegative")
        if self.total != sum(self.counts):
            self.total = sum(self.counts)

    @classmethod
    def empty(cls, size: int) -> "FrequencyCounts":
        return cls([0] * size, 0)

    def add(self, symbol: int) -> None:
        self.counts[symbol] += 1
        self.total += 1

    def frequencies(self) -> np.ndarray:
        if self.total == 0:
            raise ValueError("no observations")
        return np.array(self.counts, dtype=float) / self.total


def _apply_thrift(k: LogCapital, log_value: float) -> LogCapital:
    locked, level = k.locked_log, k.level
    while True:
        total = log_value if locked == -math.inf else float(np.logaddexp(log_value, locked))
        if total <= (level + 1) * LN2:
            break
        log_value -= LN2
        locked = log_value if locked == -math.inf else float(np.logaddexp(locked, log_value))
        level += 1
    return LogCapital(log_value, locked, True, level)


def capital_update(k: LogCapital, bet: BettingDistribution, odds: BettingDistribution,
                   observed: int) -> LogCapital:
    """One round of ``K_n = K_{n-1} * q_n(w) / p(w)`` in log form."""
    if len(bet) != len(odds):
        raise ValueError("bet and odds live on different alphabets")
    if not 0 <= observed < len(odds):
        raise ValueError(f"symbol {observed!r} outside alphabet of size {len(odds)}")
    new = k.log_value + math.log(bet[observed]) - math.log(odds[observed])
    if not math.isfinite(new):
        raise CapitalError(f"log capital became {new!r}")
    if k.thrift:
        return _apply_thrift(k, new)
    return LogCapital(new, k.locked_log, False, k.level)


def kt_bet(counts: FrequencyCounts) -> BettingDistribution:
    """Add-half (Krichevsky-Trofimov) predictive distribution."""
    size = len(counts.counts)
    if size < 2:
        raise ValueError("alphabet must have at least two symbols")
    denom = counts.total + size / 2.0
    return BettingDistribution(tuple((c + 0.5) / denom for c in counts.counts))


def kt_log_mixture(counts: Sequence[int]) -> float:
    """Log probability that the add-half mixture assigns to any sequence with
    the given symbol counts."""
    c = np.asarray(counts, dtype=float)
    size = c.size
    n = c.sum()
    return float(np.sum(gammaln(c + 0.5) - gammaln(0.5)) + gammaln(size / 2.0) - gammaln(n + size / 2.0))


def kt_log_capital(counts: Sequence[int], odds: Sequence[float]) -> float:
    """Closed form of the add-half strategy's log capital against fixed odds."""
    c = np.asarray(counts, dtype=float)
    return kt_log_mixture(c) - float(np.dot(c, np.log(np.asarray(odds, dtype=float))))


def kl_divergence(r: Sequence[float], p: Sequence[float]) -> float:
    """``D(r || p)`` in nats, with ``0 ln 0 = 0``."""
    r = np.asarray(r, dtype=float)
    p = np.asarray(p, dtype=float)
    m = r > 0
    return float(np.sum(r[m] * (np.log(r[m]) - np.log(p[m]))))


@dataclass
class PredictiveTrajectory:
    """Per-round state of a predictive game; row ``i`` is the state after round ``i+1``."""

    odds: BettingDistribution
    symbols: np.ndarray
    log_value: np.ndarray
    locked_log: np.ndarray
    counts: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.symbols)

    def __getitem__(self, i: int) -> tuple[LogCapital, FrequencyCounts]:
        row = self.counts[i]
        return (LogCapital(float(self.log_value[i]), float(self.locked_log[i])),
                FrequencyCounts(row.tolist(), int(row.sum())))

    @property
    def total_log(self) -> np.ndarray:
        return np.logaddexp(self.log_value, self.locked_log)

    @property
    def final(self) -> tuple[LogCapital, FrequencyCounts]:
        return self[len(self) - 1]


def run_predictive_game(odds: BettingDistribution, reality: Iterable[int], rounds: int,
                        thrift: bool = False) -> PredictiveTrajectory:
    """Play ``rounds`` rounds with Skeptic betting the add-half mixture.

    Each round the bet is fixed from the counts so far before the next symbol
    is drawn from ``reality``.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    size = len(odds)
    log_p = [math.log(x) for x in odds.weights]
    it = iter(reality)
    counts = [0] * size
    history = np.zeros((rounds, size), dtype=np.int64)
    symbols = np.empty(rounds, dtype=np.int64)
    log_value = np.empty(rounds)
    locked_log = np.full(rounds, -math.inf)
    k = LogCapital(thrift=thrift)
    lv = 0.0
    half = size / 2.0
    for n in range(rounds):
        scale = 1.0 / (n + half)
        bet = [(c + 0.5) * scale for c in counts]
        try:
            x = int(next(it))
        except StopIteration:
            raise ValueError(f"reality ran out of symbols after {n} rounds") from None
        if not 0 <= x < size:
            raise ValueError(f"symbol {x!r} outside alphabet of size {size}")
        lv += math.log(bet[x]) - log_p[x]
        if thrift:
            k = _apply_thrift(k, lv)
            lv = k.log_value
            locked_log[n] = k.locked_log
        counts[x] += 1
        symbols[n] = x
        log_value[n] = lv
        history[n] = counts
    return PredictiveTrajectory(odds, symbols, log_value, locked_log, history)

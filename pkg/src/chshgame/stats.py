"""Empirical quantities of the loopholes-closed game.

Everything is derived from the contingency table ``T(tau; u)``: a (16, 4)
integer array indexed by hidden-variable index and setting index (orderings
as in :mod:`chshgame.core`). Factorials go through ``gammaln``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from .core import DEFAULT_TABLE, OUTCOME_PAIRS, QUADS, SETTINGS, ChshTable, as_setting, pair_index

__all__ = [
    "EmptyContext",
    "ContingencyCounts",
    "EmpiricalDistributions",
    "PairCounts",
    "empirical",
    "kl_independence",
    "max_cell_gap",
    "pair_counts",
    "empirical_correlation",
    "context_correlations",
    "chsh_statistic",
    "conditional_frequency",
    "conditional_frequencies",
    "max_cell_freq_error",
    "w_closed_form",
    "w_log_factor",
    "stirling_gap",
    "balancing_discrepancy",
    "snapshot_stats",
    "PAIR_OF_CELL",
]


class EmptyContext(ZeroDivisionError):
    """A frequency was requested for a setting pair that never occurred."""


def _pair_of_cell() -> np.ndarray:
    # PAIR_OF_CELL[tau, u] = index of the outcome pair that tau shows under u
    out = np.empty((16, 4), dtype=np.int64)
    for u, (a, b) in enumerate(SETTINGS):
        for i, q in enumerate(QUADS):
            out[i, u] = pair_index(q[a - 1], q[b - 1])
    return out


PAIR_OF_CELL = _pair_of_cell()
# projection matrix: (16 taus) -> (4 outcome pairs), one per setting pair
_PROJ = np.zeros((4, 16, 4))
for _u in range(4):
    _PROJ[_u, np.arange(16), PAIR_OF_CELL[:, _u]] = 1.0
_SIGN = np.array([x * y for x, y in OUTCOME_PAIRS], dtype=float)


@dataclass
class ContingencyCounts:
    """Counts ``T(tau; u)`` with running marginals ``T(tau)`` and ``T(u)``."""

    table: np.ndarray
    tau_counts: np.ndarray
    setting_counts: np.ndarray
    n: int = 0

    @classmethod
    def empty(cls) -> "ContingencyCounts":
        return cls(np.zeros((16, 4), dtype=np.int64), np.zeros(16, dtype=np.int64),
                   np.zeros(4, dtype=np.int64), 0)

    @classmethod
    def from_table(cls, table) -> "ContingencyCounts":
        t = np.array(table, dtype=np.int64)
        if t.shape != (16, 4) or np.any(t < 0):
            raise ValueError("counts table must be a nonnegative (16, 4) integer array")
        return cls(t, t.sum(axis=1), t.sum(axis=0), int(t.sum()))

    def increment(self, tau, u) -> "ContingencyCounts":
        i = tau if isinstance(tau, (int, np.integer)) else tau.index
        j = u if isinstance(u, (int, np.integer)) else as_setting(u).index
        if not (0 <= i < 16 and 0 <= j < 4):
            raise IndexError(f"cell ({i}, {j}) outside the 16 x 4 table")
        self.table[i, j] += 1
        self.tau_counts[i] += 1
        self.setting_counts[j] += 1
        self.n += 1
        return self

    def check_marginals(self) -> bool:
        return (np.array_equal(self.table.sum(axis=1), self.tau_counts)
                and np.array_equal(self.table.sum(axis=0), self.setting_counts)
                and int(self.table.sum()) == self.n)

    def copy(self) -> "ContingencyCounts":
        return ContingencyCounts(self.table.copy(), self.tau_counts.copy(),
                                 self.setting_counts.copy(), self.n)


@dataclass(frozen=True)
class EmpiricalDistributions:
    P_hat: np.ndarray   # (16, 4)
    Q_hat: np.ndarray   # (16,)
    R_hat: np.ndarray   # (4,)


def _table(counts) -> np.ndarray:
    if isinstance(counts, ContingencyCounts):
        return counts.table
    return np.asarray(counts)


def empirical(counts) -> EmpiricalDistributions:
    t = _table(counts).astype(float)
    n = t.sum()
    if n < 1:
        raise ValueError("empirical distributions need at least one round")
    return EmpiricalDistributions(t / n, t.sum(axis=1) / n, t.sum(axis=0) / n)


def kl_independence(emp) -> float:
    """``D(P_hat || Q_hat x R_hat)`` in nats (the empirical mutual information).

    Accepts either :class:`EmpiricalDistributions` or counts.
    """
    if not isinstance(emp, EmpiricalDistributions):
        emp = empirical(emp)
    prod = np.outer(emp.Q_hat, emp.R_hat)
    p = emp.P_hat
    m = p > 0
    d = float(np.sum(p[m] * (np.log(p[m]) - np.log(prod[m]))))
    return max(d, 0.0)


def max_cell_gap(emp) -> float:
    """``max |P_hat - Q_hat * R_hat|`` over the 64 cells."""
    if not isinstance(emp, EmpiricalDistributions):
        emp = empirical(emp)
    return float(np.max(np.abs(emp.P_hat - np.outer(emp.Q_hat, emp.R_hat))))


@dataclass(frozen=True)
class PairCounts:
    """``population[u, k]``: rounds whose hidden variable shows outcome pair ``k``
    on the coordinates of setting pair ``u`` (whatever setting was used).
    ``context[u, k]``: the same, restricted to rounds played under ``u``."""

    population: np.ndarray
    context: np.ndarray
    setting_counts: np.ndarray
    n: int


def pair_counts(counts) -> PairCounts:
    t = _table(counts)
    pop = np.zeros((4, 4), dtype=np.int64)
    ctx = np.zeros((4, 4), dtype=np.int64)
    tau = t.sum(axis=1)
    for u in range(4):
        pop[u] = np.bincount(PAIR_OF_CELL[:, u], weights=tau, minlength=4).astype(np.int64)
        ctx[u] = np.bincount(PAIR_OF_CELL[:, u], weights=t[:, u], minlength=4).astype(np.int64)
    return PairCounts(pop, ctx, t.sum(axis=0), int(t.sum()))


def empirical_correlation(pc: PairCounts, u, use_context: bool = True) -> float:
    """``C_n(s, t)`` from context pair counts, or the analogue over all rounds."""
    j = as_setting(u).index
    if use_context:
        denom = pc.setting_counts[j]
        if denom == 0:
            raise EmptyContext(f"setting pair {SETTINGS[j]} never played")
        return float(np.dot(_SIGN, pc.context[j]) / denom)
    if pc.n == 0:
        raise EmptyContext("no rounds played")
    return float(np.dot(_SIGN, pc.population[j]) / pc.n)


def context_correlations(counts) -> np.ndarray:
    """The four ``C_n(s, t)`` in setting order; NaN for unplayed settings."""
    pc = pair_counts(counts)
    out = np.full(4, np.nan)
    for u in range(4):
        if pc.setting_counts[u] > 0:
            out[u] = empirical_correlation(pc, u)
    return out


def chsh_statistic(c13: float, c14: float, c23: float, c24: float) -> float:
    return c13 - c14 + c23 + c24


def conditional_frequencies(counts) -> np.ndarray:
    """(4, 4) array of ``#(pair k, setting u) / #(setting u)``; NaN rows for unplayed settings."""
    t = _table(counts)
    out = np.full((4, 4), np.nan)
    for u in range(4):
        tot = t[:, u].sum()
        if tot > 0:
            out[u] = np.bincount(PAIR_OF_CELL[:, u], weights=t[:, u], minlength=4) / tot
    return out


def conditional_frequency(counts, a: int, b: int, u) -> float:
    j = as_setting(u).index
    t = _table(counts)
    tot = t[:, j].sum()
    if tot == 0:
        raise EmptyContext(f"setting pair {SETTINGS[j]} never played")
    k = pair_index(a, b)
    return float(t[PAIR_OF_CELL[:, j] == k, j].sum() / tot)


def max_cell_freq_error(counts, table: ChshTable = DEFAULT_TABLE) -> float:
    """Largest deviation of a conditional frequency from its odds-table cell,
    over the setting pairs played so far."""
    f = conditional_frequencies(counts)
    played = ~np.isnan(f[:, 0])
    if not played.any():
        return float("nan")
    return float(np.max(np.abs(f[played] - table.entries[played])))


def w_closed_form(counts) -> float:
    """``ln W_n = ln n! + sum ln T(tau;u)! - sum ln T(tau)! - sum ln T(u)!``."""
    t = _table(counts).astype(float)
    n = t.sum()
    return float(gammaln(n + 1.0) + gammaln(t + 1.0).sum()
                 - gammaln(t.sum(axis=1) + 1.0).sum() - gammaln(t.sum(axis=0) + 1.0).sum())


def w_log_factor(counts: ContingencyCounts, tau: int, u: int) -> float:
    """Log of one W update, ``ln P_hat(tau;u) - ln Q_hat(tau) - ln R_hat(u)``,
    using counts that already include the current round."""
    n = counts.n
    return (math.log(counts.table[tau, u]) - math.log(counts.tau_counts[tau])
            - math.log(counts.setting_counts[u]) + math.log(n))


def stirling_gap(counts) -> float:
    """``|ln W_n / n - D(P_hat || Q_hat x R_hat)|``."""
    t = _table(counts)
    n = int(t.sum())
    if n < 2:
        raise ValueError("need n >= 2")
    return abs(w_closed_form(t) / n - kl_independence(t))


def balancing_discrepancy(counts) -> float:
    """Largest ``|freq(a | s) - freq(a | s, t)|`` over ``a``, ``s`` and ``t``.

    ``freq(a | s)`` is the share of rounds with A-side setting ``s`` whose
    hidden variable has ``X_s = a``; ``freq(a | s, t)`` restricts to rounds
    with setting pair ``(s, t)``. Unplayed contexts count as discrepancy 1.
    """
    t = _table(counts)
    worst = 0.0
    for s in (1, 2):
        us = [2 * (s - 1), 2 * (s - 1) + 1]
        plus = QUADS[:, s - 1] == 1
        n_st = np.array([t[:, j].sum() for j in us], dtype=float)
        n_ast = np.array([t[plus, j].sum() for j in us], dtype=float)
        if n_st.sum() == 0:
            continue
        f_s = n_ast.sum() / n_st.sum()
        for m, ma in zip(n_st, n_ast):
            worst = max(worst, 1.0 if m == 0 else abs(f_s - ma / m))
    return float(worst)


def snapshot_stats(tables, odds_table: ChshTable = DEFAULT_TABLE) -> dict:
    """Per-snapshot statistics of one (16, 4) table or a stack of them.

    Returns arrays: ``kl_independence`` (m,), ``C`` (m, 4) with NaN for
    unplayed settings, ``S`` (m,), ``max_cell_freq_error`` (m,).
    """
    t = np.asarray(tables, dtype=float)
    if t.ndim == 2:
        t = t[None]
    n = t.sum(axis=(1, 2))
    tau = t.sum(axis=2)
    su = t.sum(axis=1)
    # mutual information through x*log(x) sums
    kl = (xlogy(t, t).sum(axis=(1, 2)) - xlogy(tau, tau).sum(axis=1)
          - xlogy(su, su).sum(axis=1) + xlogy(n, n)) / n
    ctx = np.einsum("miu,uik->muk", t, _PROJ)
    with np.errstate(invalid="ignore", divide="ignore"):
        freq = ctx / su[:, :, None]
    corr = freq @ _SIGN
    dev = np.abs(freq - odds_table.entries).reshape(len(t), -1)
    played = ~np.all(np.isnan(dev), axis=1)
    err = np.full(len(t), np.nan)
    err[played] = np.nanmax(dev[played], axis=1)
    return {
        "kl_independence": np.maximum(kl, 0.0),
        "C": corr,
        "S": corr[:, 0] - corr[:, 1] + corr[:, 2] + corr[:, 3],
        "max_cell_freq_error": err,
    }

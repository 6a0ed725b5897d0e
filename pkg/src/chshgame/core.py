"""Outcome and setting alphabets, the CHSH odds table, and hidden variables.

Conventions used throughout the package
---------------------------------------
* Outcomes are the integers ``+1`` and ``-1``. Where an outcome has to be an
  array index we use its *bit*: ``+1 -> 0`` and ``-1 -> 1``.
* Setting pairs ``(a, b)`` with ``a in {1, 2}`` and ``b in {3, 4}`` are indexed
  ``u = 2*(a - 1) + (b - 3)``, i.e. ``(1,3), (1,4), (2,3), (2,4)`` map to
  ``0, 1, 2, 3``.
* Ordered outcome pairs ``(x, y)`` (A side first) are indexed
  ``2*bit(x) + bit(y)``: ``(+,+), (+,-), (-,+), (-,-)``.
* A hidden variable is a quadruple ``(w1, w2, w3, w4)`` of outcomes. Its index
  is the 4-bit number ``bit(w1) bit(w2) bit(w3) bit(w4)`` (``w1`` is the most
  significant bit), so ``(+1,+1,+1,+1)`` is 0 and ``(-1,-1,-1,-1)`` is 15.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

__all__ = [
    "OUTCOMES",
    "SETTINGS",
    "OUTCOME_PAIRS",
    "HIDDEN_VARIABLES",
    "MU",
    "NU",
    "InvalidSetting",
    "InvalidOutcome",
    "check_outcome",
    "outcome_bit",
    "bit_outcome",
    "pair_index",
    "SettingPair",
    "HiddenVariable",
    "ChshTable",
    "DEFAULT_TABLE",
    "odds",
    "marginal_odds",
    "conditional_odds",
    "table_correlation",
]

OUTCOMES: tuple[int, int] = (1, -1)
OUTCOME_PAIRS: tuple[tuple[int, int], ...] = ((1, 1), (1, -1), (-1, 1), (-1, -1))

MU = (2.0 - math.sqrt(2.0)) / 8.0
NU = (2.0 + math.sqrt(2.0)) / 8.0


class InvalidSetting(ValueError):
    """A measurement setting outside {1, 2} x {3, 4}."""


class InvalidOutcome(ValueError):
    """An outcome other than +1 or -1."""


def check_outcome(x) -> int:
    if x == 1 or x == -1:
        return int(x)
    raise InvalidOutcome(f"outcome must be +1 or -1, got {x!r}")


def outcome_bit(x: int) -> int:
    return 0 if x == 1 else 1


def bit_outcome(bit: int) -> int:
    return 1 - 2 * bit


def pair_index(x: int, y: int) -> int:
    """Index of the ordered outcome pair ``(x, y)``."""
    return 2 * outcome_bit(x) + outcome_bit(y)


class SettingPair(NamedTuple):
    """Joint setting ``(a, b)``: Scientist A's ``a in {1,2}``, B's ``b in {3,4}``."""

    a: int
    b: int

    @classmethod
    def make(cls, a: int, b: int) -> "SettingPair":
        if a not in (1, 2):
            raise InvalidSetting(f"A-side setting must be 1 or 2, got {a!r}")
        if b not in (3, 4):
            raise InvalidSetting(f"B-side setting must be 3 or 4, got {b!r}")
        return cls(int(a), int(b))

    @classmethod
    def from_index(cls, u: int) -> "SettingPair":
        if not 0 <= u < 4:
            raise InvalidSetting(f"setting index must be in 0..3, got {u!r}")
        return SETTINGS[u]

    @property
    def index(self) -> int:
        return 2 * (self.a - 1) + (self.b - 3)

    def __str__(self) -> str:
        return f"({self.a},{self.b})"


SETTINGS: tuple[SettingPair, ...] = tuple(SettingPair(a, b) for a in (1, 2) for b in (3, 4))


def as_setting(u) -> SettingPair:
    """Coerce a ``SettingPair``, an ``(a, b)`` tuple or an index into a validated pair."""
    if isinstance(u, SettingPair):
        return SettingPair.make(u.a, u.b)
    if isinstance(u, (int, np.integer)):
        return SettingPair.from_index(int(u))
    try:
        a, b = u
    except (TypeError, ValueError):
        raise InvalidSetting(f"not a setting pair: {u!r}") from None
    return SettingPair.make(a, b)


@dataclass(frozen=True)
class HiddenVariable:
    """A point of the canonical hidden-variable space ``Omega^4``.

    ``X(s)`` is the projection onto coordinate ``s``; every quadruple of
    outcomes is its own hidden variable, so the projection map is onto.
    """

    quad: tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.quad) != 4:
            raise ValueError(f"hidden variable needs 4 coordinates, got {self.quad!r}")
        object.__setattr__(self, "quad", tuple(check_outcome(w) for w in self.quad))

    def X(self, s: int) -> int:
        if s not in (1, 2, 3, 4):
            raise InvalidSetting(f"projection index must be in 1..4, got {s!r}")
        return self.quad[s - 1]

    @property
    def index(self) -> int:
        i = 0
        for w in self.quad:
            i = 2 * i + outcome_bit(w)
        return i

    @classmethod
    def from_index(cls, i: int) -> "HiddenVariable":
        if not 0 <= i < 16:
            raise ValueError(f"hidden-variable index must be in 0..15, got {i!r}")
        return HIDDEN_VARIABLES[i]

    @classmethod
    def parse(cls, text: str) -> "HiddenVariable":
        """Parse the 4-character form used in CSV files, e.g. ``"+-+-"``."""
        if len(text) != 4 or any(c not in "+-" for c in text):
            raise ValueError(f"expected 4 characters from '+-', got {text!r}")
        return cls(tuple(1 if c == "+" else -1 for c in text))

    def __str__(self) -> str:
        return "".join("+" if w == 1 else "-" for w in self.quad)


HIDDEN_VARIABLES: tuple[HiddenVariable, ...] = tuple(
    HiddenVariable(q) for q in itertools.product(OUTCOMES, repeat=4)
)


def _quads() -> np.ndarray:
    """(16, 4) array of the outcome values of every hidden variable."""
    return np.array([h.quad for h in HIDDEN_VARIABLES], dtype=np.int64)


QUADS = _quads()


@dataclass(frozen=True)
class ChshTable:
    """Odds ``p(x, y | a, b)`` for every setting pair and ordered outcome pair.

    ``entries[u, k]`` holds the odds of outcome pair ``k`` under setting pair
    ``u`` (see the module docstring for both orderings). The default table is
    built by :meth:`default`; other tables are useful for the oracle.
    """

    entries: np.ndarray = field(repr=False)
    mu: float = MU
    nu: float = NU

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        if e.shape != (4, 4):
            raise ValueError(f"table must be 4x4, got shape {e.shape}")
        if np.any(e < 0) or not np.all(np.isfinite(e)):
            raise ValueError("table entries must be finite and nonnegative")
        if np.max(np.abs(e.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("each setting row must sum to 1")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @classmethod
    def from_mu_nu(cls, mu: float, nu: float) -> "ChshTable":
        """Standard layout: equal outcomes get ``mu`` and unequal get ``nu``,
        except under ``(1, 4)`` where the roles swap."""
        e = np.empty((4, 4))
        for u, (a, b) in enumerate(SETTINGS):
            same, diff = (nu, mu) if (a, b) == (1, 4) else (mu, nu)
            for k, (x, y) in enumerate(OUTCOME_PAIRS):
                e[u, k] = same if x == y else diff
        return cls(e, mu, nu)

    @classmethod
    def default(cls) -> "ChshTable":
        return cls.from_mu_nu(MU, NU)

    @classmethod
    def from_joint(cls, weights) -> "ChshTable":
        """Pairwise marginals of a distribution over the 16 hidden variables."""
        w = np.asarray(weights, dtype=float)
        e = np.zeros((4, 4))
        for u, (a, b) in enumerate(SETTINGS):
            for i, q in enumerate(QUADS):
                e[u, pair_index(q[a - 1], q[b - 1])] += w[i]
        return cls(e, float("nan"), float("nan"))

    @cached_property
    def marginal_lookup(self) -> list:
        """``[s-1][bit(a)] -> p(a | s)`` as nested lists (fast scalar access)."""
        return [[marginal_odds(self, a, s) for a in OUTCOMES] for s in (1, 2)]

    @cached_property
    def conditional_lookup(self) -> list:
        """``[s-1][t-3][bit(a)][bit(b)] -> p(b | a, s, t)`` as nested lists."""
        return [[[[conditional_odds(self, b, a, (s, t)) for b in OUTCOMES] for a in OUTCOMES]
                 for t in (3, 4)] for s in (1, 2)]

    @property
    def is_positive(self) -> bool:
        return bool(np.all(self.entries > 0))

    def row(self, u) -> np.ndarray:
        return self.entries[as_setting(u).index]

    def __eq__(self, other):
        if not isinstance(other, ChshTable):
            return NotImplemented
        return bool(np.array_equal(self.entries, other.entries))

    def __hash__(self):
        return hash(self.entries.tobytes())


DEFAULT_TABLE = ChshTable.default()


def odds(table: ChshTable, a: int, b: int, u) -> float:
    """``p(a, b | u)``."""
    return float(table.entries[as_setting(u).index, pair_index(check_outcome(a), check_outcome(b))])


def marginal_odds(table: ChshTable, a: int, s: int) -> float:
    """``p(a | s)``, summed over B's outcome; must not depend on B's setting."""
    if s not in (1, 2):
        raise InvalidSetting(f"A-side setting must be 1 or 2, got {s!r}")
    a = check_outcome(a)
    via3 = odds(table, a, 1, (s, 3)) + odds(table, a, -1, (s, 3))
    via4 = odds(table, a, 1, (s, 4)) + odds(table, a, -1, (s, 4))
    if abs(via3 - via4) > 1e-12:
        raise ValueError(f"A-side marginal depends on B's setting: {via3} vs {via4}")
    return via3


def conditional_odds(table: ChshTable, b: int, a: int, u) -> float:
    """``p(b | a, s, t) = p(a, b | s, t) / p(a | s)``."""
    u = as_setting(u)
    return odds(table, a, b, u) / marginal_odds(table, a, u.a)


def table_correlation(table: ChshTable, u) -> float:
    """``C(s, t) = sum_{a,b} a*b*p(a, b | s, t)``."""
    row = table.row(u)
    return float(sum(x * y * row[k] for k, (x, y) in enumerate(OUTCOME_PAIRS)))

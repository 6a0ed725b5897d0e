"""Independent ground truth: the CHSH bound over joint laws on the 16 hidden
variables, the table's CHSH value, and exact long-run rates of the Nature
policies against the forcing scientist.

Nothing here runs a game. Limit laws are built by enumerating each policy's
sampling rule, so they share no code path with the samplers in
:mod:`chshgame.strategies`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import nnls
from scipy.special import xlogy

from .core import (
    DEFAULT_TABLE,
    OUTCOME_PAIRS,
    QUADS,
    SETTINGS,
    ChshTable,
    HiddenVariable,
    MU,
    NU,
    table_correlation,
)

__all__ = [
    "UnsupportedConfiguration",
    "JointDistribution",
    "chsh_value",
    "table_tsirelson",
    "WitnessResult",
    "no_joint_witness",
    "marginal_matrix",
    "limit_joint",
    "limiting_kl",
    "limiting_k_rate",
    "mutual_information",
    "oracle_report",
]

_CHSH_SIGNS = np.array([1.0, -1.0, 1.0, 1.0])


class UnsupportedConfiguration(ValueError):
    """No closed-form limit law is known for the requested configuration."""


@dataclass(frozen=True)
class JointDistribution:
    """A probability law on the 16 hidden variables (index order of :mod:`core`)."""

    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (16,):
            raise ValueError(f"need 16 weights, got shape {w.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, lam) -> "JointDistribution":
        i = lam.index if isinstance(lam, HiddenVariable) else int(lam)
        w = np.zeros(16)
        w[i] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls) -> "JointDistribution":
        return cls(np.full(16, 1 / 16))

    def correlations(self) -> np.ndarray:
        """``E[X_s X_t]`` for the four setting pairs in setting order."""
        return np.array([self.weights @ (QUADS[:, a - 1] * QUADS[:, b - 1]) for a, b in SETTINGS])


def chsh_value(d: JointDistribution) -> float:
    """``C(1,3) - C(1,4) + C(2,3) + C(2,4)`` of a joint law."""
    return float(_CHSH_SIGNS @ d.correlations())


def table_tsirelson(table: ChshTable = DEFAULT_TABLE) -> float:
    """The same combination computed from the table's rows."""
    return float(sum(sgn * table_correlation(table, u) for u, sgn in enumerate(_CHSH_SIGNS)))


def marginal_matrix() -> np.ndarray:
    """(16, 16) matrix mapping a joint law to the 16 table entries.

    Row ``4*u + k`` picks the hidden variables showing outcome pair ``k`` on the
    coordinates of setting pair ``u``.
    """
    m = np.zeros((16, 16))
    for u, (a, b) in enumerate(SETTINGS):
        for k, (x, y) in enumerate(OUTCOME_PAIRS):
            m[4 * u + k] = (QUADS[:, a - 1] == x) & (QUADS[:, b - 1] == y)
    return m


@dataclass(frozen=True)
class WitnessResult:
    """Outcome of :func:`no_joint_witness` with both certificates spelled out."""

    no_joint: bool
    chsh_certificate: bool
    feasibility_certificate: bool
    tsirelson: float
    residual: float
    closest: np.ndarray = field(repr=False)

    def __bool__(self) -> bool:
        return self.no_joint


def no_joint_witness(table: ChshTable = DEFAULT_TABLE, bound_tol: float = 1e-9,
                     residual_tol: float = 1e-6) -> WitnessResult:
    """Decide whether no joint law on the hidden variables reproduces ``table``.

    Two independent checks: the table's CHSH value exceeds 2 in magnitude,
    and nonnegative least squares on the 16 marginal equations plus
    normalisation leaves a residual above ``residual_tol``. ``no_joint`` is
    true only if both agree.
    """
    s = table_tsirelson(table)
    by_bound = abs(s) > 2.0 + bound_tol
    a = np.vstack([marginal_matrix(), np.ones((1, 16))])
    rhs = np.concatenate([table.entries.ravel(), [1.0]])
    w, resid = nnls(a, rhs)
    by_lp = resid > residual_tol
    return WitnessResult(bool(by_bound and by_lp), bool(by_bound), bool(by_lp), s, float(resid), w)


# -- limit laws of the closed game ------------------------------------------

def _setting_law(setting_policy: str) -> np.ndarray:
    # both policies visit each setting pair with long-run frequency 1/4
    if setting_policy in ("uniform", "round_robin"):
        return np.full(4, 0.25)
    raise UnsupportedConfiguration(f"no limit law for setting policy {setting_policy!r}")


def _fill_law(table: ChshTable, fill: str) -> np.ndarray:
    """(16, 4) conditional law of the hidden variable given the setting pair
    for a Nature that samples the measured pair from the table."""
    out = np.zeros((16, 4))
    for u, (a, b) in enumerate(SETTINGS):
        other_a, other_b = 3 - a, 7 - b
        for i, q in enumerate(QUADS):
            k = OUTCOME_PAIRS.index((int(q[a - 1]), int(q[b - 1])))
            if fill == "uniform":
                out[i, u] = table.entries[u, k] / 4.0
            elif fill == "copy":
                same = q[other_a - 1] == q[a - 1] and q[other_b - 1] == q[b - 1]
                out[i, u] = table.entries[u, k] if same else 0.0
            else:
                raise UnsupportedConfiguration(f"unknown fill rule {fill!r}")
    return out


def _conditional_law(nature: str, fill: str, weights, lam, mixture, table) -> np.ndarray:
    if nature in ("quantum", "md_lhv"):
        return _fill_law(table, fill)
    if nature == "independent":
        w = JointDistribution(np.full(16, 1 / 16) if weights is None else weights).weights
        return np.repeat(w[:, None], 4, axis=1)
    if nature == "deterministic":
        if lam is None:
            raise UnsupportedConfiguration("deterministic nature needs a hidden variable")
        return np.repeat(JointDistribution.point_mass(lam).weights[:, None], 4, axis=1)
    if nature == "mixture":
        if mixture is None:
            raise UnsupportedConfiguration("mixture nature needs (first, second, weight)")
        first, second, p = mixture
        return (p * _conditional_law(*_expand(first), table=table)
                + (1 - p) * _conditional_law(*_expand(second), table=table))
    raise UnsupportedConfiguration(f"no limit law for nature {nature!r}")


def _expand(component) -> tuple:
    # a mixture component is a kind name or a dict of keyword arguments
    if isinstance(component, str):
        component = {"nature": component}
    c = dict(component)
    return (c.pop("nature"), c.pop("fill", "uniform"), c.pop("weights", None),
            c.pop("lam", None), c.pop("mixture", None))


def limit_joint(nature: str, fill: str = "uniform", setting_policy: str = "uniform",
                weights=None, lam=None, mixture: Optional[tuple] = None,
                table: ChshTable = DEFAULT_TABLE) -> np.ndarray:
    """Long-run joint law ``P(tau; u)`` of (hidden variable, setting pair), a (16, 4) array.

    Parameters
    ----------
    nature : {"quantum", "md_lhv", "independent", "deterministic", "mixture"}
    fill : {"uniform", "copy"}
        Fill rule of a table-sampling nature.
    setting_policy : {"uniform", "round_robin"}
    weights : array_like, optional
        Law of an independent nature (uniform by default).
    lam : HiddenVariable or int, optional
        The fixed hidden variable of a deterministic nature.
    mixture : tuple, optional
        ``(first, second, weight)``; components are kind names or keyword dicts.
    """
    return _conditional_law(nature, fill, weights, lam, mixture, table) * _setting_law(setting_policy)


def mutual_information(joint: np.ndarray) -> float:
    """``D(P || Q x R)`` of a (16, 4) joint law."""
    p = np.asarray(joint, dtype=float)
    prod = np.outer(p.sum(axis=1), p.sum(axis=0))
    return float(max(np.sum(xlogy(p, p)) - np.sum(xlogy(p, np.where(p > 0, prod, 1.0))), 0.0))


def limiting_kl(nature: str, fill: str = "uniform", setting_policy: str = "uniform",
                **params) -> float:
    """Limit of ``ln W_n / n``: the mutual information of the limit law.

    Keyword parameters are passed to :func:`limit_joint`.
    """
    return mutual_information(limit_joint(nature, fill, setting_policy, **params))


def limiting_k_rate(nature: str, fill: str = "uniform", setting_policy: str = "uniform",
                    **params) -> float:
    """Limit of ``ln K_n / n`` for the add-half forcing scientist.

    Per setting pair the capital grows at ``D(pair law | u || table row u)``;
    the rate is the setting-weighted sum.
    """
    table = params.get("table", DEFAULT_TABLE)
    joint = limit_joint(nature, fill, setting_policy, **params)
    rate = 0.0
    for u, (a, b) in enumerate(SETTINGS):
        r = joint[:, u].sum()
        if r == 0:
            continue
        law = np.zeros(4)
        for i, q in enumerate(QUADS):
            law[OUTCOME_PAIRS.index((int(q[a - 1]), int(q[b - 1])))] += joint[i, u] / r
        if np.any((law > 0) & (table.entries[u] == 0)):
            return math.inf
        m = law > 0
        rate += r * float(np.sum(law[m] * np.log(law[m] / table.entries[u][m])))
    return rate


def oracle_report(table: ChshTable = DEFAULT_TABLE) -> dict:
    """All constants used by the acceptance suite, as a JSON-ready dict."""
    witness = no_joint_witness(table)
    flat = ChshTable.from_mu_nu(0.25, 0.25)
    point = ChshTable.from_joint(JointDistribution.point_mass(0).weights)
    point_masses = [chsh_value(JointDistribution.point_mass(i)) for i in range(16)]
    names = ["C13", "C14", "C23", "C24"]
    return {
        "mu": MU,
        "nu": NU,
        "correlations": {n: table_correlation(table, u) for u, n in enumerate(names)},
        "tsirelson": table_tsirelson(table),
        "point_mass_chsh": point_masses,
        "no_joint_witness": {
            "default": witness.no_joint,
            "chsh_certificate": witness.chsh_certificate,
            "feasibility_certificate": witness.feasibility_certificate,
            "residual": witness.residual,
            "flat_table": no_joint_witness(flat).no_joint,
            "point_mass_table": no_joint_witness(point).no_joint,
        },
        "limiting_kl": {
            "quantum_uniform_fill": limiting_kl("quantum", "uniform"),
            "quantum_copy_fill": limiting_kl("quantum", "copy"),
            "md_lhv_copy_fill": limiting_kl("md_lhv", "copy"),
            "independent_uniform": limiting_kl("independent"),
            "deterministic": limiting_kl("deterministic", lam=0),
            "mixture_quantum_independent": limiting_kl(
                "mixture", mixture=("quantum", "independent", 0.5)),
        },
        "k_rate": {
            "quantum_uniform_fill": limiting_k_rate("quantum", "uniform"),
            "independent_uniform": limiting_k_rate("independent"),
            "deterministic": {str(HiddenVariable.from_index(i)): limiting_k_rate("deterministic", lam=i)
                              for i in range(16)},
            "mixture_quantum_independent": limiting_k_rate(
                "mixture", mixture=("quantum", "independent", 0.5)),
        },
        "k_rate_independent_uniform": limiting_k_rate("independent"),
    }

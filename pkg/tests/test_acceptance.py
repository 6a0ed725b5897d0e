"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every numeric target is either a table constant or an oracle output. Seeds
are fixed in advance and never tuned to results.
"""
import math
import time

import numpy as np
import pytest
from scipy.special import gammaln

from chshgame.core import DEFAULT_TABLE, HIDDEN_VARIABLES, MU, NU, SETTINGS, HiddenVariable, table_correlation
from chshgame.games import COLUMNS, run_game
from chshgame.gtp import BettingDistribution, kl_divergence, run_predictive_game
from chshgame.oracle import (
    JointDistribution,
    chsh_value,
    limiting_k_rate,
    limiting_kl,
    no_joint_witness,
    table_tsirelson,
)
from chshgame.stats import (
    balancing_discrepancy,
    empirical,
    kl_independence,
    max_cell_freq_error,
    max_cell_gap,
    w_closed_form,
)
from chshgame.strategies import (
    DeterministicNature,
    ForcingScientist,
    IndependentNature,
    LocalityNature,
    LocalityScientists,
    MeasurementDependentNature,
    MixtureNature,
    QuantumNature,
    UniformStream,
    derive_seed,
)

SEEDS = (1, 2, 3, 4, 5)
N = 100_000


class Checks:
    """Collects named checks and prints one line for the criterion."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failures = []

    def check(self, ok, what):
        if not ok:
            self.failures.append(what)

    def report(self, capsys):
        status = "PASS" if not self.failures else "FAIL"
        line = f"criterion {self.number:>2} [{status}] {self.title}"
        if self.failures:
            line += "\n    " + "\n    ".join(self.failures[:10])
        with capsys.disabled():
            print("\n" + line)
        assert not self.failures, line


def closed_run(nature, seed, rounds=N, stride=None, settings="uniform"):
    return run_game("closed", ForcingScientist(settings), nature, rounds, seed,
                    snapshot_stride=stride or rounds)


def test_criterion_01_table_constants(capsys):
    c = Checks(1, "table constants, correlations and S")
    c.check(abs(MU - (2 - math.sqrt(2)) / 8) <= 1e-15, f"mu = {MU!r}")
    c.check(abs(NU - (2 + math.sqrt(2)) / 8) <= 1e-15, f"nu = {NU!r}")
    c.check(abs(2 * MU + 2 * NU - 1) <= 1e-15, "2 mu + 2 nu != 1")
    r = 1 / math.sqrt(2)
    for u, expect in zip(SETTINGS, (-r, r, -r, -r)):
        got = table_correlation(DEFAULT_TABLE, u)
        c.check(abs(got - expect) <= 1e-12, f"C{u.a}{u.b} = {got!r}, expected {expect!r}")
    s = table_tsirelson()
    c.check(abs(s + 2 * math.sqrt(2)) <= 1e-12, f"S = {s!r}")
    c.report(capsys)


def test_criterion_02_classical_bound_and_witness(capsys):
    c = Checks(2, "classical CHSH bound and no-joint witness")
    t0 = time.perf_counter()
    for lam in HIDDEN_VARIABLES:
        s = chsh_value(JointDistribution.point_mass(lam))
        c.check(abs(s) == 2.0, f"point mass {lam}: |S| = {abs(s)!r}")
    rng = np.random.default_rng(20240101)
    worst = 0.0
    for w in rng.dirichlet(np.full(16, 0.3), size=10_000):
        worst = max(worst, abs(chsh_value(JointDistribution(w / w.sum()))))
    c.check(worst <= 2 + 1e-12, f"random law reached |S| = {worst!r}")
    res = no_joint_witness()
    c.check(res.chsh_certificate, "CHSH certificate missing")
    c.check(res.feasibility_certificate, f"feasibility residual only {res.residual!r}")
    elapsed = time.perf_counter() - t0
    c.check(elapsed < 1.0, f"took {elapsed:.2f} s")
    c.report(capsys)


def _closed_form_steps(lam, u):
    """ln W_n for every n, from cumulative counts (vectorised over steps)."""
    n = len(lam)
    onehot = np.zeros((n, 64), dtype=np.int64)
    onehot[np.arange(n), lam * 4 + u] = 1
    t = np.cumsum(onehot, axis=0).reshape(n, 16, 4)
    steps = np.arange(1, n + 1, dtype=float)
    return (gammaln(steps + 1) + gammaln(t + 1.0).sum(axis=(1, 2))
            - gammaln(t.sum(axis=2) + 1.0).sum(axis=1) - gammaln(t.sum(axis=1) + 1.0).sum(axis=1))


def _random_nature(rng):
    kind = rng.integers(6)
    if kind == 0:
        return QuantumNature(["uniform", "copy"][rng.integers(2)])
    if kind == 1:
        return MeasurementDependentNature(["uniform", "copy"][rng.integers(2)])
    if kind == 2:
        return IndependentNature(rng.dirichlet(np.ones(16)))
    if kind == 3:
        return DeterministicNature(HIDDEN_VARIABLES[rng.integers(16)])
    return MixtureNature(QuantumNature(), IndependentNature(), float(rng.uniform()))


LAMBDA_INDEX = {str(h): h.index for h in HIDDEN_VARIABLES}


def test_criterion_03_w_identity(capsys):
    c = Checks(3, "W recursion equals the closed form; per-step telescoping")
    rng = np.random.default_rng(3)
    n = 10_000
    for run in range(100):
        nature = _random_nature(rng)
        policy = ["uniform", "round_robin"][rng.integers(2)]
        seed = int(rng.integers(2 ** 32))
        tr = closed_run(nature, seed, rounds=n, stride=1, settings=policy)
        lam = np.array([LAMBDA_INDEX[x] for x in tr.columns["lambda"]])
        u = 2 * (tr.columns["s"] - 1) + (tr.columns["t"] - 3)
        recursion = tr.columns["logW_AB"]
        closed = _closed_form_steps(lam, u.astype(np.int64))
        rel = np.abs(recursion - closed) / np.maximum(np.abs(closed), 1.0)
        c.check(rel.max() <= 1e-8, f"run {run} ({nature.kind}): relative gap {rel.max():.2e}")
        final = w_closed_form(tr.final.counts)
        c.check(abs(recursion[-1] - final) <= 1e-8 * max(abs(final), 1.0),
                f"run {run}: final recursion {recursion[-1]!r} vs closed form {final!r}")
        step = np.abs(np.diff(recursion) - np.diff(closed))
        c.check(step.max() <= 1e-10, f"run {run}: telescoping step gap {step.max():.2e}")
    c.report(capsys)


def test_criterion_04_stirling_bridge(capsys):
    c = Checks(4, "ln W / n tracks D(P || Q x R) within 70 ln n / n")
    bound = 70 * math.log(N) / N
    natures = {"quantum": QuantumNature, "independent": IndependentNature,
               "mixture": lambda: MixtureNature(QuantumNature(), IndependentNature())}
    for name, make in natures.items():
        for seed in SEEDS:
            tr = closed_run(make(), seed)
            gap = abs(tr.final.logW_AB / N - kl_independence(tr.final.counts))
            c.check(gap <= bound, f"{name} seed {seed}: gap {gap:.3e} > {bound:.3e}")
    c.report(capsys)


def test_criterion_05_quantum_branch(capsys):
    c = Checks(5, "quantum nature: table reproduced, K bounded, W grows at the oracle rate")
    target = limiting_kl("quantum", "uniform")
    for seed in SEEDS:
        tr = closed_run(QuantumNature(), seed)
        f = tr.final
        err = max_cell_freq_error(f.counts)
        c.check(err <= 0.02, f"seed {seed}: conditional frequency error {err:.4f}")
        c.check(f.max_logK_AB < 5, f"seed {seed}: max logK_AB {f.max_logK_AB:.3f}")
        rate = f.logW_AB / N
        c.check(abs(rate - target) <= 0.15 * target, f"seed {seed}: logW/n {rate:.4f} vs {target:.4f}")
        c.check(f.logW_AB >= 20, f"seed {seed}: logW_AB {f.logW_AB:.2f}")
    c.report(capsys)


def test_criterion_06_independent_branch(capsys):
    c = Checks(6, "independent nature: K grows at ln2/2, W stays flat, |S| <= 2")
    target = limiting_k_rate("independent")
    assert target == pytest.approx(math.log(2) / 2, abs=1e-15)
    for seed in SEEDS:
        tr = closed_run(IndependentNature(), seed)
        f = tr.final
        rate = f.logK_AB / N
        c.check(abs(rate - target) <= 0.10 * target, f"seed {seed}: logK/n {rate:.4f} vs {target:.4f}")
        c.check(f.logW_AB / N <= 0.005, f"seed {seed}: logW/n {f.logW_AB / N:.5f}")
        s = tr.columns["S_n"][-1]
        c.check(abs(s) <= 2.05, f"seed {seed}: |S_n| = {abs(s):.4f}")
        gap = max_cell_gap(empirical(f.counts))
        c.check(gap <= 0.01, f"seed {seed}: max cell gap {gap:.4f}")
    c.report(capsys)


FIXED_LAMBDAS = ("++++", "+-+-", "--++", "-++-")


def test_criterion_07_dichotomy(capsys):
    c = Checks(7, "every nature loses: max(ln K, ln W) >= 20")
    natures = {
        "quantum": QuantumNature(),
        "md_lhv copy fill": MeasurementDependentNature("copy"),
        "independent uniform": IndependentNature(),
        **{f"deterministic {s}": DeterministicNature(HiddenVariable.parse(s)) for s in FIXED_LAMBDAS},
        "mixture 50/50": MixtureNature(QuantumNature(), IndependentNature(), 0.5),
    }
    for name, nature in natures.items():
        f = closed_run(nature, seed=7).final
        best = max(f.logK_AB, f.logW_AB)
        c.check(best >= 20, f"{name}: logK {f.logK_AB:.2f}, logW {f.logW_AB:.2f}")
    c.report(capsys)


def test_criterion_08_locality_game(capsys):
    c = Checks(8, "locality game: table reproduced, K_A and K_B bounded, balancing holds")
    for seed in SEEDS:
        tr = run_game("locality", LocalityScientists(), LocalityNature(), N, seed, snapshot_stride=10_000)
        f = tr.final
        err = max_cell_freq_error(f.counts)
        c.check(err <= 0.02, f"seed {seed}: conditional frequency error {err:.4f}")
        c.check(f.max_logK_A < 5 and f.max_logK_B < 5,
                f"seed {seed}: max logK_A {f.max_logK_A:.3f}, max logK_B {f.max_logK_B:.3f}")
        assert tr.columns["n"][0] == 10_000
        early = balancing_discrepancy(tr.tables[0])
        late = balancing_discrepancy(f.counts)
        c.check(early <= 0.05, f"seed {seed}: discrepancy {early:.4f} at n = 10^4")
        c.check(late <= 0.02, f"seed {seed}: discrepancy {late:.4f} at n = 10^5")
    c.report(capsys)


def _iid_reality(probs, n, seed):
    cum = np.cumsum(probs)
    x = np.searchsorted(cum, UniformStream(derive_seed("nature", seed)).take(n), side="right")
    return np.minimum(x, len(probs) - 1)


FORCING_PAIRS = (
    ((0.7, 0.3), (0.5, 0.5)),
    ((0.1, 0.2, 0.3, 0.4), (0.25, 0.25, 0.25, 0.25)),
    ((0.25, 0.25, 0.25, 0.25), (0.4, 0.3, 0.2, 0.1)),
)
NULL_LAWS = ((0.5, 0.5), (0.1, 0.2, 0.3, 0.4), (0.3, 0.7))
NULL_SEEDS = (0, 1, 2)


def test_criterion_09_predictive_game(capsys):
    c = Checks(9, "predictive game: K grows at D(r || p) off the null, stays <= e under it")
    for r, p in FORCING_PAIRS:
        x = _iid_reality(r, N, seed=1)
        tr = run_predictive_game(BettingDistribution(p), x, N)
        d = kl_divergence(r, p)
        rate = tr.log_value[-1] / N
        c.check(abs(rate - d) <= 0.10 * d, f"r={r}, p={p}: logK/n {rate:.4f} vs D {d:.4f}")
    n_max = 1_000_000
    n = np.arange(1, n_max + 1)
    bound = 4 * np.sqrt(np.log(n) / n)
    for p in NULL_LAWS:
        for seed in NULL_SEEDS:
            x = _iid_reality(p, n_max, seed)
            tr = run_predictive_game(BettingDistribution(p), x, n_max)
            peak = tr.log_value.max()
            c.check(peak <= 1.0, f"p={p}, seed {seed}: max logK {peak:.4f} at n = {tr.log_value.argmax() + 1}")
            # the bound is zero at n = 1, so the check starts at n = 2
            err = np.abs(tr.counts / n[:, None] - np.asarray(p)).max(axis=1)
            bad = err[1:] > bound[1:]
            c.check(not bad.any(), f"p={p}, seed {seed}: frequency error over bound at n = {bad.argmax() + 2}")
    c.report(capsys)


def test_criterion_10_performance_and_determinism(capsys):
    c = Checks(10, "10^6-round closed run under 10 s; repeat runs identical")
    runs, times = [], []
    for _ in range(2):
        t0 = time.perf_counter()
        runs.append(run_game("closed", ForcingScientist(), QuantumNature(), 1_000_000, seed=42,
                             snapshot_stride=100, history_mode="summary"))
        times.append(time.perf_counter() - t0)
    c.check(min(times) < 10.0, f"fastest run took {min(times):.2f} s")
    for name in COLUMNS:
        a, b = runs[0].columns[name], runs[1].columns[name]
        same = (a is None and b is None) or np.array_equal(a, b, equal_nan=a.dtype.kind == "f")
        c.check(same, f"column {name} differs between runs")
    c.check(np.array_equal(runs[0].tables, runs[1].tables), "count tables differ between runs")
    c.report(capsys)

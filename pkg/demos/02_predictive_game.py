"""Betting against a forecaster with the add-half rule.

A forecaster posts fixed odds ``p``. Reality draws symbols iid from ``r``.
The bettor stakes its capital on the add-half estimate of the symbol law.
If ``r`` differs from ``p`` the log-capital grows at ``D(r || p)`` per
round; if ``r = p`` it stays small.
"""
import numpy as np

from chshgame.gtp import BettingDistribution, kl_divergence, kt_log_capital, run_predictive_game

rng = np.random.default_rng(1)
n = 100_000

# %% Odds wrong: reality favours the first symbol.
p, r = (0.5, 0.5), (0.7, 0.3)
x = rng.choice(2, size=n, p=r)
traj = run_predictive_game(BettingDistribution(p), x, n)
print(f"r != p: log K / n = {traj.log_value[-1] / n:.4f}, D(r || p) = {kl_divergence(r, p):.4f}")

# %% The capital depends on the counts only, through a closed form.
print(f"closed form at n: {kt_log_capital(traj.counts[-1], p):.6f} vs recursion {traj.log_value[-1]:.6f}")

# %% Odds right: the capital has mean one and rarely climbs far.
y = rng.choice(4, size=n, p=(0.1, 0.2, 0.3, 0.4))
null = run_predictive_game(BettingDistribution((0.1, 0.2, 0.3, 0.4)), y, n)
print(f"r == p: largest log K over the run = {null.log_value.max():.4f}")
print(f"        final frequencies {np.round(null.counts[-1] / n, 4)}")

# %% Thrift: lock away half the betting account whenever it doubles.
thrifty = run_predictive_game(BettingDistribution(p), x[:200], 200, thrift=True)
print(f"thrift after 200 rounds: total {thrifty.total_log[-1]:.3f}, locked {thrifty.locked_log[-1]:.3f}")

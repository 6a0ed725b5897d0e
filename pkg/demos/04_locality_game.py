"""The locality game: a local Nature can fake the table if it sees the settings.

Nature A commits to an outcome before the B-side setting is chosen. Nature
B then picks a hidden variable consistent with that outcome, steering the
B-side outcome toward the table's conditional odds. Both scientists bet
with add-half rules and stay near zero capital, while the outcome
frequencies match the table.
"""
import numpy as np

from chshgame.games import run_game
from chshgame.stats import balancing_discrepancy, conditional_frequencies, max_cell_freq_error
from chshgame.strategies import LocalityNature, LocalityScientists

n = 100_000
tr = run_game("locality", LocalityScientists(), LocalityNature(), n, seed=3, snapshot_stride=10_000)
f = tr.final

print(f"max log K_A = {f.max_logK_A:.3f}, max log K_B = {f.max_logK_B:.3f}")
print(f"largest gap between frequencies and the table: {max_cell_freq_error(f.counts):.4f}")
print("frequencies, one row per setting pair:")
print(np.round(conditional_frequencies(f.counts), 3))

# %% The A-side outcome must not reveal the B-side setting. The balancing
# scientist chooses settings to keep the two conditional frequencies close.
for n_i, table in zip(tr.columns["n"], tr.tables):
    print(f"n = {n_i:>6}: balancing discrepancy {balancing_discrepancy(table):.4f}")

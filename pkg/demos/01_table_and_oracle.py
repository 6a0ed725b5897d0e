"""The CHSH table and why no hidden-variable law reproduces it.

Run with ``python3 demos/01_table_and_oracle.py``.
"""
import numpy as np

from chshgame.core import DEFAULT_TABLE, HIDDEN_VARIABLES, MU, NU, SETTINGS, table_correlation
from chshgame.oracle import JointDistribution, chsh_value, no_joint_witness, table_tsirelson

# %% The table: one row per setting pair, one column per outcome pair
# (++, +-, -+, --). Equal outcomes are unlikely except under (1,4).
print(f"mu = {MU:.6f}, nu = {NU:.6f}")
for u, row in zip(SETTINGS, DEFAULT_TABLE.entries):
    print(f"  {u}: {np.round(row, 4)}  C = {table_correlation(DEFAULT_TABLE, u):+.4f}")
print(f"CHSH combination of the table: {table_tsirelson():+.6f}")

# %% A hidden variable fixes all four outcomes at once. Each of the 16
# possibilities gives a CHSH value of exactly +2 or -2.
values = {str(h): chsh_value(JointDistribution.point_mass(h)) for h in HIDDEN_VARIABLES}
print("point masses:", " ".join(f"{k}:{v:+.0f}" for k, v in values.items()))

# %% Every joint law is a mixture of point masses, so |S| <= 2 for all of them.
rng = np.random.default_rng(0)
worst = max(abs(chsh_value(JointDistribution(w))) for w in rng.dirichlet(np.ones(16), 2000))
print(f"largest |S| over 2000 random joint laws: {worst:.4f}")

# %% The witness confirms it two ways: the table's |S| exceeds 2, and no
# nonnegative weights on the 16 hidden variables solve the marginal equations.
res = no_joint_witness()
print(f"no joint law: {res.no_joint} (CHSH: {res.chsh_certificate}, "
      f"least-squares residual {res.residual:.4f})")

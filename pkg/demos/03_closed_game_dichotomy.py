"""The closed game: whatever Nature does, one of two capitals grows.

The scientist picks a setting pair and bets on the outcome pair at the
table's odds (capital K). A second process W bets that the hidden variable
depends on the setting. A Nature that reproduces the table must let the
hidden variable depend on the setting, so W grows; a Nature whose hidden
variable ignores the setting cannot reproduce the table, so K grows.
"""
from chshgame.core import HiddenVariable
from chshgame.games import run_game
from chshgame.oracle import limiting_k_rate, limiting_kl
from chshgame.strategies import (
    DeterministicNature,
    ForcingScientist,
    IndependentNature,
    MixtureNature,
    QuantumNature,
)

n = 100_000
natures = {
    "quantum": (QuantumNature(), dict(nature="quantum")),
    "independent": (IndependentNature(), dict(nature="independent")),
    "deterministic ++++": (DeterministicNature(HiddenVariable.parse("++++")),
                           dict(nature="deterministic", lam=HiddenVariable.parse("++++"))),
    "mixture 50/50": (MixtureNature(QuantumNature(), IndependentNature()),
                      dict(nature="mixture", mixture=("quantum", "independent", 0.5))),
}

print(f"{'nature':<20}{'lnK/n':>9}{'oracle':>9}{'lnW/n':>9}{'oracle':>9}{'S_n':>9}")
for name, (nature, limit_args) in natures.items():
    tr = run_game("closed", ForcingScientist(), nature, n, seed=1, snapshot_stride=n)
    f = tr.final
    print(f"{name:<20}{f.logK_AB / n:9.4f}{limiting_k_rate(**limit_args):9.4f}"
          f"{f.logW_AB / n:9.4f}{limiting_kl(**limit_args):9.4f}{tr.columns['S_n'][-1]:9.3f}")

# %% The quantum nature reproduces the table, so K stays near zero, while
# W grows at the mutual information between hidden variable and setting.

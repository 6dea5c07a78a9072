"""Deviation library: named attacker configurations for bound checks.

Each fixture pits one deviating miner with power ``alpha`` against a
single inertial follower.  The scripted deviants express withholding
patterns the state-machine attacker never produces, so the accounting
bounds get exercised from several directions.
"""

from __future__ import annotations

from .game import GameConfig, MinerConfig
from .strategies import ScriptEntry, StrategySpec
from .walks import sufficient_inertia


def _stubborn_script(horizon: int, release_every: int) -> dict[int, ScriptEntry]:
    """Withhold a private chain, release everything on a fixed cadence."""
    script = {}
    for t in range(1, horizon + 1):
        if t % release_every == 0:
            script[t] = ScriptEntry(target="private_tip", publish="all")
        else:
            script[t] = ScriptEntry(target="private_tip", publish="none")
    return script


def _flip_flop_script(horizon: int, hold: int) -> dict[int, ScriptEntry]:
    """Alternate between withholding spells and honest spells."""
    script = {}
    for t in range(1, horizon + 1):
        phase = (t - 1) % (2 * hold)
        if phase < hold:
            script[t] = ScriptEntry(target="private_tip", publish="none")
        elif phase == hold:
            script[t] = ScriptEntry(target="private_tip", publish="all")
        else:
            script[t] = ScriptEntry(target="public_tip", publish="all")
    return script


def deviation_fixtures(alpha: float, horizon: int, seed: int) -> dict[str, GameConfig]:
    """Named single-deviant games against the calculator's inertial follower."""
    bound = sufficient_inertia(alpha)
    follower = MinerConfig(1.0 - alpha, StrategySpec("inertial", inertia=bound.I))

    def game(spec: StrategySpec) -> GameConfig:
        return GameConfig(miners=(MinerConfig(alpha, spec), follower), horizon=horizon, seed=seed)

    return {
        "selfish": game(StrategySpec("selfish")),
        "stubborn_release_5": game(
            StrategySpec("scripted", inertia=bound.I, script=_stubborn_script(horizon, 5))
        ),
        "flip_flop_3": game(
            StrategySpec("scripted", inertia=bound.I, script=_flip_flop_script(horizon, 3))
        ),
    }


def fixture_analysis_j(alpha: float) -> int:
    return sufficient_inertia(alpha).J

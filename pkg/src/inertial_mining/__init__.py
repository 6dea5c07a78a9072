"""Mining-game simulator and analyzer.

A discrete-time model of proof-of-work mining: one block per period, a
shared randomization device for tie-breaking, simultaneous end-of-period
publication.  Includes the standard longest-chain rule, an inertial
variant that resists chain switching, a withholding attacker, trace
forensics that attribute displaced blocks to their causes, and
closed-form calculators for the random-walk bounds behind all of it.
"""

from .blocktree import Block, BlockTree, chains_through, longest_chains
from .forensics import (
    BlockClassification,
    CanonicalChain,
    ForensicReport,
    KillerAttribution,
    analyze,
    canonical_chain,
    check_qr_bound,
    classify,
    cousin,
    killer_attribution,
    late_kill_tail,
    nearest_ancestor_on_chain,
)
from .game import (
    Game,
    GameConfig,
    GameError,
    MinerConfig,
    PayoffReport,
    Trace,
    TraceEvent,
    run_game,
    write_jsonl,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    SweepSpec,
    aggregate,
    replication_seed,
    run_experiment,
    run_sweep,
    splitmix64,
)
from .strategies import ScriptEntry, StrategyError, StrategySpec
from .walks import (
    InertiaBound,
    InfeasibleError,
    epsilon,
    epsilon_star,
    epsilon_star_tail,
    inertia_residuals,
    selfish_revenue,
    selfish_stationary,
    selfish_threshold,
    sufficient_inertia,
)

__version__ = "0.1.0"

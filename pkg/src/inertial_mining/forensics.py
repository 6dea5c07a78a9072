"""Post-hoc trace accounting: who displaced whom.

Given a finished run with a single deviating miner, these functions tag
every block honest or dishonest, attribute each displaced follower block
to the deviant block responsible for displacing it (its killer), and
check the per-period accounting series against the closed-form ceilings
from the walks module.

A block is dishonestly mined if it was withheld past its mining period or
extends something other than the follower rule's target for that period.
Followers never do either, so the deviant owns every dishonest block.
All functions are pure; traces are never mutated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .blocktree import GENESIS, BlockTree
from .game import Trace
from .walks import epsilon_star


class ForensicsError(ValueError):
    pass


@dataclass(frozen=True)
class CanonicalChain:
    """The settled spine of a run: deepest public chain, genesis first."""

    blocks: tuple[int, ...]
    settlement: int
    tie_at_horizon: bool

    def __post_init__(self):
        if self.settlement > len(self.blocks) - 1:
            raise ForensicsError("settlement exceeds chain")

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def tip_depth(self) -> int:
        return len(self.blocks)

    @property
    def settled_depth(self) -> int:
        return len(self.blocks) - self.settlement

    def block_at_depth(self, d: int) -> Optional[int]:
        """The unique chain block at depth d (genesis is depth 1)."""
        if 1 <= d <= len(self.blocks):
            return self.blocks[d - 1]
        return None


def canonical_chain(tree: BlockTree, settlement: int) -> CanonicalChain:
    blocks, tie = tree.deepest_chain()
    return CanonicalChain(blocks=tuple(blocks), settlement=settlement, tie_at_horizon=tie)


def chain_of_trace(trace: Trace) -> CanonicalChain:
    return CanonicalChain(
        blocks=tuple(trace.chain),
        settlement=trace.config.resolved_settlement(),
        tie_at_horizon=trace.tie_at_horizon,
    )


@dataclass
class BlockClassification:
    """Per-block honesty tags plus the follower target each period."""

    dishonest: np.ndarray  # bool, indexed by block id
    initial: np.ndarray  # bool; initial implies dishonest
    follower_target: np.ndarray  # b_t for each period t

    def tag(self, block_id: int) -> str:
        if self.initial[block_id]:
            return "initial"
        if self.dishonest[block_id]:
            return "dishonest"
        return "honest"


def classify(trace: Trace) -> BlockClassification:
    """Tag every block honest/dishonest/initial.

    Dishonest means withheld (not published in its mining period) or
    mined off the follower target recorded for that period; initial means
    dishonest atop an honest parent.
    """
    if trace.proto_target is None:
        raise ForensicsError("trace missing per-period follower targets")
    n = trace.horizon
    parent = np.asarray(trace.parent)
    published = np.asarray(trace.published_at)
    targets = np.asarray(trace.proto_target)
    ids = np.arange(n + 1)
    dishonest = (published != ids) | (parent != targets)
    dishonest[GENESIS] = False
    initial = dishonest & ~dishonest[parent]
    initial[GENESIS] = False
    return BlockClassification(dishonest=dishonest, initial=initial, follower_target=targets)


def nearest_ancestor_on_chain(trace: Trace, block_id: int, chain: CanonicalChain) -> int:
    """Deepest ancestor on the canonical chain; the block itself if it is on it."""
    on_chain = set(chain.blocks)
    b = block_id
    parent = trace.parent
    while b not in on_chain:
        b = parent[b]
    return b


def cousin(trace: Trace, block_id: int, chain: CanonicalChain) -> Optional[int]:
    """The unique chain block at the same depth, if the chain reaches it."""
    return chain.block_at_depth(int(trace.depth[block_id]))


@dataclass
class KillerAttribution:
    killed: list[int]
    killer_of: dict[int, int]
    k_series: np.ndarray  # kills credited to the block mined at t
    l_series: np.ndarray  # deviant block at t on the canonical chain
    s_series: np.ndarray  # alpha*K + (1-alpha)*L
    lag_counts: dict[int, int]  # killer period minus killed period, later kills only
    excluded_window: int
    excluded_no_cousin: int
    deviant: int
    alpha: float
    horizon: int

    @property
    def excluded(self) -> int:
        return self.excluded_window + self.excluded_no_cousin


def killer_attribution(
    trace: Trace,
    chain: CanonicalChain,
    j_window: int,
    deviant: Optional[int] = None,
) -> KillerAttribution:
    """Attribute every displaced follower block to a deviant killer block.

    A follower block off the canonical chain is displaced.  Its killer is
    the equal-depth chain block (its cousin) when that block sits within
    ``j_window`` depths of the start of its consecutive dishonest run on
    the chain, and the run's first (initial) block otherwise.  Displaced
    blocks inside the settlement window, or deeper than the chain tip,
    are excluded from the accounting and counted.
    """
    if j_window < 1:
        raise ForensicsError(f"attribution window must be >= 1, got {j_window}")
    if deviant is None:
        deviant = trace.config.deviant
    if deviant is None:
        raise ForensicsError("no deviating miner in trace; pass the miner to analyze")
    cls = classify(trace)
    n = trace.horizon
    depth = trace.depth
    miner = np.asarray(trace.miner)
    dishonest = cls.dishonest

    on_chain = np.zeros(n + 1, dtype=bool)
    on_chain[list(chain.blocks)] = True

    # Start (shallowest depth) of the consecutive dishonest run on the
    # chain containing each chain position; only meaningful where the
    # chain block is dishonest.
    run_start_depth = np.zeros(len(chain) + 1, dtype=np.int64)
    prev_dishonest = False
    for d in range(2, len(chain) + 1):
        b = chain.blocks[d - 1]
        if dishonest[b]:
            run_start_depth[d] = run_start_depth[d - 1] if prev_dishonest else d
            prev_dishonest = True
        else:
            prev_dishonest = False

    killed = [
        t
        for t in range(1, n + 1)
        if miner[t] != deviant and not on_chain[t]
    ]
    killer_of: dict[int, int] = {}
    k_series = np.zeros(n + 1, dtype=np.int64)
    lag_counts: dict[int, int] = {}
    excluded_window = 0
    excluded_no_cousin = 0
    settled_depth = chain.settled_depth
    for t in killed:
        d = int(depth[t])
        cous = chain.block_at_depth(d)
        if cous is None:
            excluded_no_cousin += 1
            continue
        if d > settled_depth:
            excluded_window += 1
            continue
        wz_depth = int(run_start_depth[d])
        if wz_depth == 0:
            raise ForensicsError(
                f"chain block at depth {d} is honest yet displaced block {t} shares its depth"
            )
        if d <= wz_depth + j_window:
            killer = cous
        else:
            killer = chain.blocks[wz_depth - 1]
        killer_of[t] = killer
        k_series[killer] += 1
        if killer != cous and killer > t:
            lag = killer - t
            lag_counts[lag] = lag_counts.get(lag, 0) + 1

    alpha = trace.config.miners[deviant].power
    l_series = ((miner == deviant) & on_chain).astype(np.int64)
    l_series[GENESIS] = 0
    s_series = alpha * k_series + (1.0 - alpha) * l_series
    return KillerAttribution(
        killed=killed,
        killer_of=killer_of,
        k_series=k_series,
        l_series=l_series,
        s_series=s_series,
        lag_counts=lag_counts,
        excluded_window=excluded_window,
        excluded_no_cousin=excluded_no_cousin,
        deviant=deviant,
        alpha=alpha,
        horizon=n,
    )


def _mean_se(series: np.ndarray) -> tuple[float, float]:
    mean = float(series.mean())
    se = float(series.std(ddof=1) / math.sqrt(len(series)))
    return mean, se


def check_qr_bound(attribution: KillerAttribution, alpha: float, min_periods: int = 100_000) -> dict:
    """Three-sigma checks of the per-period displacement accounting.

    Both the payoff-style series S and the raw kill counts K must stay
    below alpha*(1-alpha) on average for the deviation to be unprofitable.
    """
    if alpha <= 0.0:
        raise ForensicsError("alpha must be > 0")
    if attribution.horizon < min_periods:
        raise ForensicsError(
            f"attribution covers {attribution.horizon} periods; need >= {min_periods}"
        )
    bound = alpha * (1.0 - alpha)
    mean_s, se_s = _mean_se(attribution.s_series[1:])
    mean_k, se_k = _mean_se(attribution.k_series[1:].astype(np.float64))
    return {
        "mean_S": mean_s,
        "se_S": se_s,
        "bound": bound,
        "pass_S": mean_s <= bound + 3.0 * se_s,
        "mean_K": mean_k,
        "se_K": se_k,
        "pass_K": mean_k <= bound + 3.0 * se_k,
    }


def late_kill_tail(
    trace: Trace,
    chain: CanonicalChain,
    j_window: int,
    deviant: Optional[int] = None,
    attribution: Optional[KillerAttribution] = None,
) -> list[dict]:
    """Tail of the kill-lag distribution against the survival ceilings.

    For each observed lag k, the fraction of periods whose block was
    displaced by a block mined more than k periods later must stay below
    the walk survival probability for k steps, up to three sigma.
    """
    if attribution is None:
        attribution = killer_attribution(trace, chain, j_window, deviant=deviant)
    n = attribution.horizon
    lags = sorted(attribution.lag_counts)
    out = []
    for k in lags:
        tail = sum(c for lag, c in attribution.lag_counts.items() if lag > k)
        frac = tail / n
        se = math.sqrt(frac * (1.0 - frac) / n)
        ceiling = epsilon_star(k, attribution.alpha) + 3.0 * se
        out.append(
            {
                "lag": k,
                "count": attribution.lag_counts[k],
                "tail_count": tail,
                "tail_frac": frac,
                "bound": ceiling,
                "ok": frac <= ceiling,
            }
        )
    return out


@dataclass
class ForensicReport:
    mean_S: float
    se_S: float
    bound: float
    pass_S: bool
    mean_K: float
    se_K: float
    pass_K: bool
    killed_total: int
    excluded: int
    lag_histogram: list[dict] = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return self.pass_S and self.pass_K and all(row["ok"] for row in self.lag_histogram)

    def to_json(self) -> dict:
        return {
            "mean_S": self.mean_S,
            "se_S": self.se_S,
            "bound": self.bound,
            "pass_S": self.pass_S,
            "mean_K": self.mean_K,
            "se_K": self.se_K,
            "pass_K": self.pass_K,
            "killed_total": self.killed_total,
            "excluded": self.excluded,
            "lag_histogram": self.lag_histogram,
        }


def analyze(
    trace: Trace,
    j_window: int,
    deviant: Optional[int] = None,
    min_periods: int = 100_000,
) -> ForensicReport:
    """Full forensic pass over one trace: attribution, bounds, lag tail."""
    chain = chain_of_trace(trace)
    attribution = killer_attribution(trace, chain, j_window, deviant=deviant)
    checks = check_qr_bound(attribution, attribution.alpha, min_periods=min_periods)
    tail = late_kill_tail(trace, chain, j_window, attribution=attribution)
    return ForensicReport(
        mean_S=checks["mean_S"],
        se_S=checks["se_S"],
        bound=checks["bound"],
        pass_S=checks["pass_S"],
        mean_K=checks["mean_K"],
        se_K=checks["se_K"],
        pass_K=checks["pass_K"],
        killed_total=len(attribution.killed),
        excluded=attribution.excluded,
        lag_histogram=tail,
    )

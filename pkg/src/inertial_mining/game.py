"""Discrete-period mining game engine.

Each period draws a shared randomization value xi and a lottery value u,
every miner picks a target (followers of the same rule are evaluated once
as a group), the lottery picks the single winner in proportion to mining
power, and all publication decisions apply simultaneously at the end of
the period.  Followers publish what they mine immediately, so the public
tree in an all-follower game is a single path and such games run through
a vectorized path that consumes the random stream identically.

Payoffs are the per-miner shares of the canonical chain, truncated by the
settlement window so the unsettled tip does not count.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .blocktree import GENESIS, NO_MINER, UNPUBLISHED, BlockTree
from .strategies import (
    ScriptedStrategy,
    StandardStrategy,
    StrategySpec,
    build,
    inertial_target,
    standard_target,
)

RNG_CHUNK = 4096
PRUNE_EVERY = 256


class GameError(ValueError):
    pass


@dataclass(frozen=True)
class MinerConfig:
    power: float
    strategy: StrategySpec

    def __post_init__(self):
        if not 0.0 < self.power <= 1.0:
            raise GameError(f"miner power must be in (0, 1], got {self.power}")


@dataclass(frozen=True)
class GameConfig:
    miners: tuple[MinerConfig, ...]
    horizon: int
    seed: int = 0
    settlement: Optional[int] = None
    record_decisions: bool = False
    reference_inertia: int = 1  # follower rule used for labeling when no follower mines

    def __post_init__(self):
        if len(self.miners) < 1:
            raise GameError("at least one miner required")
        if self.horizon < 1:
            raise GameError("horizon must be >= 1")
        total = sum(m.power for m in self.miners)
        if abs(total - 1.0) > 1e-9:
            raise GameError(f"miner powers must sum to 1, got {total}")
        deviants = [i for i, m in enumerate(self.miners) if not m.strategy.is_protocol]
        if len(deviants) > 1:
            raise GameError("at most one deviating miner per game")
        if self.settlement is not None and self.settlement < 0:
            raise GameError("settlement window must be >= 0")

    @property
    def deviant(self) -> Optional[int]:
        for i, m in enumerate(self.miners):
            if not m.strategy.is_protocol:
                return i
        return None

    @property
    def max_inertia(self) -> int:
        return max([m.strategy.inertia or 1 for m in self.miners] + [self.reference_inertia])

    def resolved_settlement(self) -> int:
        if self.settlement is not None:
            return self.settlement
        return 2 * self.max_inertia

    def powers(self) -> tuple[float, ...]:
        return tuple(m.power for m in self.miners)


@dataclass
class TraceEvent:
    """Everything observable about one period."""

    period: int
    xi: float
    winner: int
    new_block: int
    parent: int
    proto_target: int
    decisions: list[dict]
    tips: list[tuple[int, int]]


@dataclass
class Trace:
    """Per-period record of a finished run, indexed by block id (= period)."""

    config: GameConfig
    parent: "list[int] | np.ndarray"
    depth: "list[int] | np.ndarray"
    miner: "list[int] | np.ndarray"
    published_at: "list[int] | np.ndarray"
    proto_target: "list[int] | np.ndarray"
    xis: "list[float] | np.ndarray"
    chain: list[int]  # canonical chain, genesis first
    tie_at_horizon: bool
    single_path_periods: int
    decisions: Optional[list[list[dict]]] = None
    tips_log: Optional[list[list[tuple[int, int]]]] = None

    @property
    def horizon(self) -> int:
        return self.config.horizon

    def settled_chain(self) -> list[int]:
        """Canonical chain minus genesis and the settlement window."""
        w = self.config.resolved_settlement()
        settled = self.chain[1:]
        return settled[: len(settled) - w] if w else settled


@dataclass(frozen=True)
class PayoffReport:
    shares: tuple[float, ...]
    blocks: tuple[int, ...]
    settled_length: int
    tie_at_horizon: bool
    single_path_fraction: float


class _FollowerGroup:
    """Shared per-period evaluation for identically parameterized followers."""

    __slots__ = ("kind", "inertia", "gamma", "last_target", "target")

    def __init__(self, key):
        self.kind = key[0]
        self.inertia = key[1] if self.kind == "inertial" else 0
        self.gamma = key[1] if self.kind == "standard" else None
        self.last_target = GENESIS
        self.target = GENESIS

    def evaluate(self, tree: BlockTree, xi: float) -> int:
        if self.kind == "standard":
            t = standard_target(tree, xi, self.gamma)
        else:
            t = inertial_target(tree, xi, self.inertia, self.last_target)
        self.last_target = t
        self.target = t
        return t


class Game:
    """Stepwise game runner; ``run`` drives it to the horizon."""

    def __init__(self, config: GameConfig):
        self.config = config
        self.tree = BlockTree()
        self.period = 0
        self.single_path_periods = 0

        self._cum = np.cumsum(config.powers())
        self._cum[-1] = 1.0
        self._cum_list = self._cum.tolist()
        self._rng = np.random.Generator(np.random.PCG64(config.seed))
        self._buffer: list[float] = []
        self._buf_pos = 0

        self.groups: dict = {}
        self.miner_group: list = []
        self.deviant = config.deviant
        self.deviant_strategy = None
        self._scripted = False
        for i, m in enumerate(config.miners):
            key = m.strategy.group_key()
            if key is not None:
                if key not in self.groups:
                    self.groups[key] = _FollowerGroup(key)
                self.miner_group.append(self.groups[key])
            else:
                self.miner_group.append(None)
                self.deviant_strategy = build(m.strategy)
                self._scripted = m.strategy.kind == "scripted"
        if self.groups:
            first_key = next(
                m.strategy.group_key() for m in config.miners if m.strategy.is_protocol
            )
            self.reference = self.groups[first_key]
            self._shadow = False
        else:
            # No follower mines; keep a non-mining follower so every period
            # still has a well-defined protocol target.
            self.reference = _FollowerGroup(("inertial", config.reference_inertia))
            self._shadow = True
        self._prune_slack = self.config.max_inertia + 2

        self.xis: list[float] = [0.0]
        self.proto_target: list[int] = [GENESIS]
        self.decisions: Optional[list[list[dict]]] = [] if config.record_decisions else None
        self.tips_log: Optional[list[list[tuple[int, int]]]] = (
            [] if config.record_decisions else None
        )

    # -- randomness --------------------------------------------------------

    def _next_pair(self) -> tuple[float, float]:
        if self._buf_pos >= len(self._buffer):
            self._buffer = self._rng.random(2 * RNG_CHUNK).tolist()
            self._buf_pos = 0
        xi = self._buffer[self._buf_pos]
        u = self._buffer[self._buf_pos + 1]
        self._buf_pos += 2
        return xi, u

    # -- stepping ----------------------------------------------------------

    def step(self) -> TraceEvent:
        winner, new_block, target, publishes, dev_target = self._advance()
        t = self.period
        decided = self.decisions[-1] if self.config.record_decisions else []
        tips = self.tips_log[-1] if self.config.record_decisions else []
        return TraceEvent(
            period=t,
            xi=self.xis[t],
            winner=winner,
            new_block=new_block,
            parent=target,
            proto_target=self.proto_target[t],
            decisions=decided,
            tips=tips,
        )

    def _advance(self):
        if self.period >= self.config.horizon:
            raise GameError("game already at horizon")
        self.period += 1
        t = self.period
        tree = self.tree
        xi, u = self._next_pair()

        for group in self.groups.values():
            group.evaluate(tree, xi)
        if self._shadow:
            self.reference.evaluate(tree, xi)
        dev = self.deviant
        if dev is not None:
            strat = self.deviant_strategy
            if self._scripted:
                dev_target = strat.choose_target(tree, xi, period=t)
            else:
                dev_target = strat.choose_target(tree, xi)
            if not tree.connected[dev_target] and tree.miner[dev_target] != dev:
                raise GameError(
                    f"miner {dev} targets block {dev_target} it cannot see at period {t}"
                )

        winner = bisect_right(self._cum_list, u)
        if winner >= len(self._cum_list):
            winner = len(self._cum_list) - 1
        if winner == dev:
            target = dev_target
        else:
            target = self.miner_group[winner].target
        new_block = tree.add_block(target, winner)

        publishes: list[tuple[int, list[int]]] = []
        if winner != dev:
            publishes.append((winner, [new_block]))
        if dev is not None:
            opponent_target = None if winner == dev else target
            args = (tree, xi, winner == dev, new_block if winner == dev else None, opponent_target)
            if self._scripted:
                dev_pubs = strat.choose_publish(*args, period=t)
            else:
                dev_pubs = strat.choose_publish(*args)
            for b in dev_pubs:
                if tree.miner[b] != dev:
                    raise GameError(f"miner {dev} publishes block {b} it did not mine")
            if dev_pubs:
                publishes.append((dev, list(dev_pubs)))

        for _, blocks in publishes:
            for b in blocks:
                tree.publish(b, t)

        if tree.leaf_count == 1:
            self.single_path_periods += 1
        self.xis.append(xi)
        self.proto_target.append(self.reference.target)

        if t % PRUNE_EVERY == 0:
            # Leaves at or below the floor can no longer enter any stay set:
            # follower targets only move deeper, so anything strictly below
            # every tracked target plus the inertia window is settled.
            anchors = [g.last_target for g in self.groups.values()]
            if not anchors:
                anchors.append(self.reference.last_target)
            if self._scripted:
                anchors.append(self.deviant_strategy.fallback.last_target)
            min_target_depth = min(tree.depth[b] for b in anchors)
            tree.prune(min(tree.max_depth - self._prune_slack, min_target_depth - 1))

        if self.config.record_decisions:
            decided = []
            pub_by_miner = {i: blocks for i, blocks in publishes}
            for i in range(len(self.config.miners)):
                mt = dev_target if i == dev else self.miner_group[i].target
                decided.append({"miner": i, "target": mt, "publish": pub_by_miner.get(i, [])})
            self.decisions.append(decided)
            self.tips_log.append(tree.all_leaves())
        return winner, new_block, target, publishes, dev_target if dev is not None else None

    def finish(self) -> tuple[Trace, PayoffReport]:
        if self.period != self.config.horizon:
            raise GameError("game has not reached the horizon")
        tree = self.tree
        chain, tie = tree.deepest_chain()
        trace = Trace(
            config=self.config,
            parent=tree.parent,
            depth=tree.depth,
            miner=tree.miner,
            published_at=tree.published_at,
            proto_target=self.proto_target,
            xis=self.xis,
            chain=chain,
            tie_at_horizon=tie,
            single_path_periods=self.single_path_periods,
            decisions=self.decisions,
            tips_log=self.tips_log,
        )
        return trace, _payoff(trace)


def _payoff(trace: Trace) -> PayoffReport:
    n = len(trace.config.miners)
    settled = trace.settled_chain()
    blocks = [0] * n
    for b in settled:
        blocks[trace.miner[b]] += 1
    total = len(settled)
    shares = tuple(c / total if total else 0.0 for c in blocks)
    return PayoffReport(
        shares=shares,
        blocks=tuple(blocks),
        settled_length=total,
        tie_at_horizon=trace.tie_at_horizon,
        single_path_fraction=trace.single_path_periods / trace.config.horizon,
    )


def _run_followers_only(config: GameConfig) -> tuple[Trace, PayoffReport]:
    """Vectorized run for all-follower games.

    With one block per period and immediate publication the public tree is
    always a single path, so every period's target is the previous block
    and only the lottery outcomes matter.  Consumes the random stream
    exactly like the stepwise loop.
    """
    t = config.horizon
    rng = np.random.Generator(np.random.PCG64(config.seed))
    draws = rng.random(2 * t)
    xis = draws[0::2]
    cum = np.cumsum(config.powers())
    cum[-1] = 1.0
    winners = np.searchsorted(cum, draws[1::2], side="right")
    np.minimum(winners, len(cum) - 1, out=winners)

    ids = np.arange(t + 1)
    miner = np.empty(t + 1, dtype=np.int64)
    miner[0] = NO_MINER
    miner[1:] = winners
    trace = Trace(
        config=config,
        parent=np.maximum(ids - 1, 0),
        depth=ids + 1,
        miner=miner,
        published_at=ids,
        proto_target=np.maximum(ids - 1, 0),
        xis=np.concatenate(([0.0], xis)),
        chain=ids.tolist(),
        tie_at_horizon=False,
        single_path_periods=t,
        decisions=None,
        tips_log=None,
    )
    w = config.resolved_settlement()
    settled = winners[: t - w] if w else winners
    blocks = np.bincount(settled, minlength=len(cum))
    total = int(settled.size)
    payoff = PayoffReport(
        shares=tuple(blocks / total) if total else tuple([0.0] * len(cum)),
        blocks=tuple(int(c) for c in blocks),
        settled_length=total,
        tie_at_horizon=False,
        single_path_fraction=1.0,
    )
    return trace, payoff


def run_game(config: GameConfig) -> tuple[Trace, PayoffReport]:
    if config.deviant is None and not config.record_decisions:
        return _run_followers_only(config)
    game = Game(config)
    advance = game._advance
    for _ in range(config.horizon):
        advance()
    return game.finish()


def write_jsonl(trace: Trace, path) -> None:
    """One JSON object per period; requires a run with record_decisions."""
    if trace.decisions is None:
        raise GameError("trace was recorded without per-period decisions")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in range(1, trace.horizon + 1):
            row = {
                "period": t,
                "xi": format(trace.xis[t], ".17g"),
                "winner": int(trace.miner[t]),
                "new_block": t,
                "parent": int(trace.parent[t]),
                "decisions": trace.decisions[t - 1],
                "tips": [{"id": int(b), "depth": int(d)} for b, d in trace.tips_log[t - 1]],
            }
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")

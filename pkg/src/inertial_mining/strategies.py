"""Per-miner decision rules.

Every strategy exposes two hooks called by the game engine each period:
``choose_target`` before the mining lottery (it must not depend on the
period's outcome) and ``choose_publish`` after it.  Because exactly one
block is mined per period and followers publish immediately, a miner that
did not win knows the opposing side just mined; publication decisions may
exploit that, which is what makes the withholding attack expressible.

Follower decisions depend only on the public view and the shared
randomization value, so the engine evaluates each follower group once per
period.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .blocktree import BlockTree, GENESIS

PROTOCOL_KINDS = ("standard", "inertial")


class StrategyError(ValueError):
    pass


@dataclass(frozen=True)
class ScriptEntry:
    """One scripted period: explicit target/publish, None means fallback."""

    target: Optional[Union[int, str]] = None  # id, "public_tip" or "private_tip"
    publish: Optional[Union[tuple, str]] = None  # ids, "all" or "none"


@dataclass(frozen=True)
class StrategySpec:
    """Declarative strategy choice, as it appears in experiment configs."""

    kind: str
    inertia: Optional[int] = None
    gamma: Optional[float] = None
    script: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in (*PROTOCOL_KINDS, "selfish", "scripted"):
            raise StrategyError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "inertial":
            if self.inertia is None or self.inertia < 1:
                raise StrategyError("inertial strategy requires inertia >= 1")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise StrategyError("gamma must be in [0, 1]")

    @property
    def is_protocol(self) -> bool:
        return self.kind in PROTOCOL_KINDS

    def group_key(self):
        if self.kind == "standard":
            return ("standard", self.gamma)
        if self.kind == "inertial":
            return ("inertial", self.inertia)
        return None

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.inertia is not None:
            out["inertia"] = self.inertia
        if self.gamma is not None:
            out["gamma"] = self.gamma
        if self.script is not None:
            out["script"] = {
                str(t): {
                    "target": e.target,
                    "publish": list(e.publish) if isinstance(e.publish, tuple) else e.publish,
                }
                for t, e in self.script.items()
            }
        return out

    @staticmethod
    def from_json(obj: dict) -> "StrategySpec":
        script = None
        if obj.get("script") is not None:
            script = {}
            for t, e in obj["script"].items():
                publish = e.get("publish")
                if isinstance(publish, list):
                    publish = tuple(publish)
                script[int(t)] = ScriptEntry(target=e.get("target"), publish=publish)
        return StrategySpec(
            kind=obj["kind"],
            inertia=obj.get("inertia"),
            gamma=obj.get("gamma"),
            script=script,
        )


def _pick_uniform(ordered: list[int], xi: float) -> int:
    idx = int(xi * len(ordered))
    if idx >= len(ordered):
        idx = len(ordered) - 1
    return ordered[idx]


def standard_target(tree: BlockTree, xi: float, gamma: Optional[float] = None) -> int:
    """Tip of the longest public chain; ties broken uniformly via xi.

    With ``gamma`` set and exactly one tied tip that had been withheld
    (published later than mined), that tip is chosen with probability
    gamma instead of uniformly.  This reproduces tie-break bias levels the
    shared randomization device alone cannot; it is an experiment-only
    extension, off by default.
    """
    tips = tree.tips_at_max
    if len(tips) == 1:
        for tip in tips:
            return tip
    ordered = sorted(tips)
    if gamma is not None:
        withheld = [b for b in ordered if tree.published_at[b] > b]
        if len(withheld) == 1:
            if xi < gamma:
                return withheld[0]
            rest = [b for b in ordered if b != withheld[0]]
            return _pick_uniform(rest, (xi - gamma) / (1.0 - gamma))
    return _pick_uniform(ordered, xi)


def inertial_target(tree: BlockTree, xi: float, inertia: int, prev_target: int) -> int:
    """Inertial chain selection.

    Single public chain: extend its tip.  Otherwise switch to the unique
    longest chain only when it leads the runner-up by at least ``inertia``
    blocks; failing that, stay among the chains containing the previous
    target, tie-broken uniformly via xi.
    """
    if tree.leaf_count == 1:
        for tip in tree.tips_at_max:
            return tip
    longest, runner_up = tree.top_two_depths()
    if longest >= runner_up + inertia:
        for tip in tree.tips_at_max:
            return tip
    stay = tree.stay_tips(prev_target)
    if len(stay) == 1:
        return stay[0]
    return _pick_uniform(stay, xi)


class StandardStrategy:
    """Immediate-publish longest-chain mining."""

    __slots__ = ("gamma", "last_target")

    def __init__(self, gamma: Optional[float] = None):
        self.gamma = gamma
        self.last_target = GENESIS

    def choose_target(self, tree: BlockTree, xi: float) -> int:
        t = standard_target(tree, xi, self.gamma)
        self.last_target = t
        return t

    def choose_publish(self, tree, xi, won, new_block, opponent_target):
        return [new_block] if won else []


class InertialStrategy:
    """Immediate-publish mining that resists switching between forks."""

    __slots__ = ("inertia", "last_target")

    def __init__(self, inertia: int):
        if inertia < 1:
            raise StrategyError("inertia must be >= 1")
        self.inertia = inertia
        self.last_target = GENESIS

    def choose_target(self, tree: BlockTree, xi: float) -> int:
        t = inertial_target(tree, xi, self.inertia, self.last_target)
        self.last_target = t
        return t

    def choose_publish(self, tree, xi, won, new_block, opponent_target):
        return [new_block] if won else []


class SelfishStrategy:
    """Withhold-and-release attacker.

    Mines on its own branch whenever it has one, withholds fresh blocks,
    and reacts to opposing blocks by disclosing just enough of the private
    chain: match the public length when far ahead, override outright when
    the lead shrinks to one, or force a published tie (the race) when the
    last withheld block is about to be overtaken.  When behind, it adopts
    the public chain and restarts from a fresh fork base.
    """

    __slots__ = ("private_chain", "race", "race_tip", "last_tip", "state_counts")

    def __init__(self):
        self.private_chain: list[int] = []
        self.race = False
        self.race_tip = GENESIS
        self.last_tip = GENESIS
        self.state_counts: dict[str, int] = {}

    @property
    def lead(self) -> int:
        return len(self.private_chain)

    def fork_base(self, tree: BlockTree) -> int:
        if self.private_chain:
            return tree.parent[self.private_chain[0]]
        return self.last_tip

    def _record_state(self):
        key = "race" if self.race else str(len(self.private_chain))
        self.state_counts[key] = self.state_counts.get(key, 0) + 1

    def choose_target(self, tree: BlockTree, xi: float) -> int:
        self._record_state()
        if self.private_chain:
            t = self.private_chain[-1]
        elif self.race:
            t = self.race_tip
        else:
            tips = tree.tips_at_max
            if self.last_tip in tips:
                t = self.last_tip
            elif len(tips) == 1:
                t = next(iter(tips))
            else:
                t = _pick_uniform(sorted(tips), xi)
        self.last_tip = t
        return t

    def choose_publish(self, tree, xi, won, new_block, opponent_target):
        if won:
            self.last_tip = new_block
            if self.race:
                # Extending the tied branch settles the race in our favor.
                self.race = False
                return [new_block]
            self.private_chain.append(new_block)
            return []
        if self.race:
            # The opposing block lands on one of the tied tips next view;
            # either way the tie is settled, adopt whatever wins.
            self.race = False
            return []
        if not self.private_chain:
            return []
        opp_depth = tree.depth[opponent_target] + 1
        lead = tree.depth[self.private_chain[-1]] - opp_depth
        if lead < 0:
            # Overtaken: abandon the withheld branch, mine publicly again.
            self.private_chain = []
            return []
        if lead == 0:
            pubs = self.private_chain
            self.private_chain = []
            self.race = True
            self.race_tip = pubs[-1]
            return pubs
        if lead == 1:
            pubs = self.private_chain
            self.private_chain = []
            return pubs
        # Far ahead: disclose only up to the opposing chain's new length.
        cut = 0
        while cut < len(self.private_chain) and tree.depth[self.private_chain[cut]] <= opp_depth:
            cut += 1
        pubs = self.private_chain[:cut]
        self.private_chain = self.private_chain[cut:]
        return pubs


class ScriptedStrategy:
    """Replays a fixed decision list; unscripted periods fall back to inertial."""

    __slots__ = ("script", "fallback", "own_unpublished")

    def __init__(self, script: Optional[dict] = None, inertia: int = 1):
        self.script = dict(script or {})
        self.fallback = InertialStrategy(inertia)
        self.own_unpublished: list[int] = []

    def _entry(self, period: int) -> Optional[ScriptEntry]:
        return self.script.get(period)

    def choose_target(self, tree: BlockTree, xi: float, period: int = -1) -> int:
        entry = self._entry(period)
        fallback_target = self.fallback.choose_target(tree, xi)
        if entry is None or entry.target is None:
            return fallback_target
        if entry.target == "public_tip":
            return fallback_target
        if entry.target == "private_tip":
            return self.own_unpublished[-1] if self.own_unpublished else fallback_target
        target = int(entry.target)
        # Engine validates visibility; reject ids that do not exist yet.
        if target not in tree:
            raise StrategyError(f"script targets unknown block {target} at period {period}")
        self.fallback.last_target = target
        return target

    def choose_publish(self, tree, xi, won, new_block, opponent_target, period: int = -1):
        if won:
            self.own_unpublished.append(new_block)
        entry = self._entry(period)
        if entry is None or entry.publish is None or entry.publish == "all":
            pubs = self.own_unpublished
            self.own_unpublished = []
            return pubs
        if entry.publish == "none":
            return []
        pubs = [int(b) for b in entry.publish]
        for b in pubs:
            if b not in self.own_unpublished:
                raise StrategyError(f"script publishes block {b} it does not hold at period {period}")
        self.own_unpublished = [b for b in self.own_unpublished if b not in pubs]
        return pubs


def build(spec: StrategySpec):
    """Instantiate the runtime strategy for a spec."""
    if spec.kind == "standard":
        return StandardStrategy(gamma=spec.gamma)
    if spec.kind == "inertial":
        return InertialStrategy(spec.inertia)
    if spec.kind == "selfish":
        return SelfishStrategy()
    if spec.kind == "scripted":
        return ScriptedStrategy(spec.script, inertia=spec.inertia or 1)
    raise StrategyError(f"unknown strategy kind {spec.kind!r}")

import numpy as np
import pytest

import bruteforce
from inertial_mining.blocktree import BlockTree, GENESIS
from inertial_mining.forensics import (
    CanonicalChain,
    ForensicsError,
    analyze,
    canonical_chain,
    chain_of_trace,
    check_qr_bound,
    classify,
    cousin,
    killer_attribution,
    late_kill_tail,
    nearest_ancestor_on_chain,
)
from inertial_mining.game import GameConfig, MinerConfig, Trace, run_game
from inertial_mining.strategies import StrategySpec

INERT2 = StrategySpec("inertial", inertia=2)
SELFISH = StrategySpec("selfish")


def cfg(miners, horizon, seed=0, **kw):
    return GameConfig(
        miners=tuple(MinerConfig(p, s) for p, s in miners), horizon=horizon, seed=seed, **kw
    )


def make_trace(parent, miner, published_at, proto_target, chain=None, settlement=0, alpha=0.3):
    """Hand-built trace; miner 0 is the deviant, miner 1 the follower."""
    n = len(parent) - 1
    depth = [1] * len(parent)
    for b in range(1, len(parent)):
        depth[b] = depth[parent[b]] + 1
    if chain is None:
        chain, _ = bruteforce.canonical(parent, published_at)
    config = GameConfig(
        miners=(MinerConfig(alpha, SELFISH), MinerConfig(1 - alpha, INERT2)),
        horizon=n,
        settlement=settlement,
    )
    return Trace(
        config=config,
        parent=parent,
        depth=depth,
        miner=miner,
        published_at=published_at,
        proto_target=proto_target,
        xis=[0.0] * (n + 1),
        chain=chain,
        tie_at_horizon=False,
        single_path_periods=0,
    )


def test_canonical_chain_from_tree():
    tree = BlockTree()
    a = tree.add_block(GENESIS, 0)
    tree.publish(a, 1)
    b = tree.add_block(a, 1)
    tree.publish(b, 2)
    chain = canonical_chain(tree, 1)
    assert chain.blocks == (GENESIS, a, b)
    assert chain.settled_depth == 2
    assert not chain.tie_at_horizon
    with pytest.raises(ForensicsError):
        canonical_chain(tree, 5)


def test_classification_definitions():
    # period 1: honest; period 2: withheld (published late); period 3:
    # wrong parent; period 4: dishonest atop dishonest parent
    parent = [0, 0, 1, 1, 3]
    miner = [-1, 1, 0, 0, 0]
    published = [0, 1, 3, 3, 4]
    targets = [0, 0, 1, 2, 1]  # block 3 still withheld at period 4
    trace = make_trace(parent, miner, published, targets)
    cls = classify(trace)
    assert cls.tag(1) == "honest"
    assert cls.tag(2) == "initial"  # withheld, honest parent
    assert cls.tag(3) == "initial"  # wrong parent (target was 2), honest parent
    assert cls.tag(4) == "dishonest"  # parent 3 is dishonest
    assert cls.tag(GENESIS) == "honest"


def test_ancestor_and_cousin_lookups():
    # chain 0-1-2-3, fork 1-4-5 (off-chain)
    parent = [0, 0, 1, 2, 1, 4]
    miner = [-1, 1, 1, 1, 0, 0]
    published = [0, 1, 2, 3, 4, 5]
    targets = [0, 0, 1, 2, 2, 3]
    trace = make_trace(parent, miner, published, targets, chain=[0, 1, 2, 3])
    chain = chain_of_trace(trace)
    assert nearest_ancestor_on_chain(trace, 5, chain) == 1
    assert nearest_ancestor_on_chain(trace, 3, chain) == 3  # already on chain
    assert cousin(trace, 4, chain) == 2  # same depth
    assert cousin(trace, 5, chain) == 3
    assert cousin(trace, 3, chain) == 3  # a chain block is its own cousin
    deep = make_trace(parent + [5], miner + [0], published + [6], targets + [3], chain=[0, 1, 2, 3])
    assert cousin(deep, 6, chain_of_trace(deep)) is None  # deeper than the tip


def fork_figure_trace():
    """Four follower blocks displaced by a dishonest run on the chain.

    Chain: 0-1-2-3-4-5-6-7 where 1, 2 are honest and 3..7 were withheld by
    the deviant (one consecutive dishonest run starting at 3).  Followers
    mined blocks 8..11 at depths 4..7 on a dead fork below block 2.
    """
    #      id: 0  1  2  3  4  5  6  7  8  9 10 11
    parent = [0, 0, 1, 2, 3, 4, 5, 6, 2, 8, 9, 10]
    miner = [-1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1]
    published = [0, 1, 2, 12, 12, 12, 12, 12, 8, 9, 10, 11]
    targets = [0, 0, 1, 2, 3, 8, 9, 10, 2, 8, 9, 10]
    horizon = 12
    parent = parent + [7]
    miner = miner + [1]
    published = published + [12]
    targets = targets + [7]
    return make_trace(parent, miner, published, targets)


def test_fork_figure_attribution():
    # the first displaced block has its cousin within the window; the rest
    # fall to the run's initial block
    trace = fork_figure_trace()
    chain = chain_of_trace(trace)
    assert chain.blocks == (0, 1, 2, 3, 4, 5, 6, 7, 12)
    cls = classify(trace)
    assert [cls.tag(b) for b in (3, 4, 5, 6, 7)] == ["initial"] + ["dishonest"] * 4
    attr = killer_attribution(trace, chain, 1)
    assert attr.killed == [8, 9, 10, 11]
    # depths: block 8 -> 4, 9 -> 5, 10 -> 6, 11 -> 7; run starts at depth 4
    assert attr.killer_of[8] == 3  # own cousin (depth 4 <= 4 + 1)
    assert attr.killer_of[9] == 4  # cousin at depth 5 = 4 + J
    assert attr.killer_of[10] == 3  # beyond the window: the initial block
    assert attr.killer_of[11] == 3
    assert attr.k_series[3] == 3 and attr.k_series[4] == 1
    assert attr.excluded == 0


def test_fork_figure_matches_brute_force():
    trace = fork_figure_trace()
    chain = chain_of_trace(trace)
    for j in (1, 2, 3, 5):
        attr = killer_attribution(trace, chain, j)
        want = bruteforce.attribution(
            list(trace.parent),
            list(trace.miner),
            list(trace.published_at),
            list(trace.proto_target),
            deviant=0,
            j_window=j,
            settlement=trace.config.resolved_settlement(),
        )
        assert attr.killer_of == want["killer_of"]
        assert list(attr.k_series) == want["k_series"]
        assert list(attr.l_series) == want["l_series"]
        assert attr.lag_counts == want["lag_counts"]


def test_attribution_validation():
    trace = fork_figure_trace()
    chain = chain_of_trace(trace)
    with pytest.raises(ForensicsError):
        killer_attribution(trace, chain, 0)
    honest = cfg([(0.5, INERT2), (0.5, INERT2)], 50, seed=1)
    tr, _ = run_game(honest)
    with pytest.raises(ForensicsError):
        killer_attribution(tr, chain_of_trace(tr), 1)  # no deviant, none named


def test_honest_only_accounting():
    c = cfg([(0.3, INERT2), (0.7, INERT2)], 120_000, seed=4)
    trace, _ = run_game(c)
    chain = chain_of_trace(trace)
    attr = killer_attribution(trace, chain, 1, deviant=0)
    assert attr.killed == []
    assert attr.k_series.sum() == 0
    assert late_kill_tail(trace, chain, 1, attribution=attr) == []
    rep = check_qr_bound(attr, 0.3)
    assert rep["pass_S"] and rep["pass_K"]
    assert rep["mean_K"] == 0.0
    assert abs(rep["mean_S"] - 0.21) <= 3 * rep["se_S"]


def test_qr_bound_preconditions():
    c = cfg([(0.3, INERT2), (0.7, INERT2)], 200, seed=4)
    trace, _ = run_game(c)
    attr = killer_attribution(trace, chain_of_trace(trace), 1, deviant=0)
    with pytest.raises(ForensicsError):
        check_qr_bound(attr, 0.3)  # too few periods
    with pytest.raises(ForensicsError):
        check_qr_bound(attr, 0.0, min_periods=10)


def test_selfish_trace_matches_brute_force():
    # 12-period runs at several seeds, exact field-by-field agreement
    for seed in range(25):
        c = cfg([(0.35, SELFISH), (0.65, INERT2)], 12, seed=seed)
        trace, _ = run_game(c)
        chain = chain_of_trace(trace)
        attr = killer_attribution(trace, chain, 2)
        want = bruteforce.attribution(
            list(trace.parent),
            list(trace.miner),
            list(trace.published_at),
            list(trace.proto_target),
            deviant=0,
            j_window=2,
            settlement=trace.config.resolved_settlement(),
        )
        assert list(chain.blocks) == want["chain"]
        assert attr.killed == want["killed"]
        assert attr.killer_of == want["killer_of"]
        assert list(attr.k_series) == want["k_series"]
        assert list(attr.l_series) == want["l_series"]
        assert attr.lag_counts == want["lag_counts"]
        assert attr.excluded_window == want["excluded_window"]
        assert attr.excluded_no_cousin == want["excluded_no_cousin"]


def test_attribution_invariants_on_selfish_run():
    c = cfg([(0.3, SELFISH), (0.7, StrategySpec("standard"))], 60_000, seed=17)
    trace, _ = run_game(c)
    chain = chain_of_trace(trace)
    attr = killer_attribution(trace, chain, 3)
    cls = classify(trace)
    # totality: every displaced block killed or explicitly excluded
    assert len(attr.killed) == attr.k_series.sum() + attr.excluded
    # every killer dishonest, every killed block honest and off-chain
    on_chain = set(chain.blocks)
    assert all(cls.dishonest[k] for k in attr.killer_of.values())
    assert all(not cls.dishonest[x] and x not in on_chain for x in attr.killer_of)
    # follower depths strictly increase across follower-mined periods
    follower_depths = [trace.depth[t] for t in range(1, 60_001) if trace.miner[t] == 1]
    assert all(a < b for a, b in zip(follower_depths, follower_depths[1:]))


def test_analyze_produces_full_report():
    c = cfg([(0.3, SELFISH), (0.7, INERT2)], 120_000, seed=6)
    trace, _ = run_game(c)
    rep = analyze(trace, 1)
    doc = rep.to_json()
    assert set(doc) == {
        "mean_S",
        "se_S",
        "bound",
        "pass_S",
        "mean_K",
        "se_K",
        "pass_K",
        "killed_total",
        "excluded",
        "lag_histogram",
    }
    assert doc["bound"] == pytest.approx(0.21)
    assert rep.all_pass

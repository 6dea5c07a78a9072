"""Block tree with public-view bookkeeping.

One block is mined per period, so block ids are the mining periods
themselves (genesis is 0).  The tree tracks, incrementally, the *connected
public* forest: blocks that are published and whose every ancestor is
published.  Published blocks with an unpublished parent stay dangling and
join the public view only once the parent connects.

Leaves of the connected public forest drive all chain-selection queries.
Leaves far below the current maximum depth can no longer influence any
protocol decision; ``prune`` archives them so per-period queries stay O(1)
even in runs that accumulate many orphaned tips.  Archived leaves are kept
and still show up in the exhaustive queries (``all_leaves``,
``chains_through``).
"""

from __future__ import annotations

from dataclasses import dataclass

GENESIS = 0
NO_MINER = -1
UNPUBLISHED = -1


class UnknownBlockError(KeyError):
    pass


class DanglingBlockError(ValueError):
    pass


@dataclass(frozen=True)
class Block:
    """Read-only view of one block's bookkeeping row."""

    id: int
    parent: int
    miner: int
    mined_at: int
    published_at: int | None

    @property
    def is_genesis(self) -> bool:
        return self.id == GENESIS


class BlockTree:
    __slots__ = (
        "parent",
        "depth",
        "miner",
        "published_at",
        "connected",
        "is_leaf",
        "_first_child",
        "_next_sibling",
        "_pending",
        "active_leaves",
        "archived_leaves",
        "leaf_count",
        "max_depth",
        "tips_at_max",
        "prune_floor",
    )

    def __init__(self) -> None:
        self.parent = [GENESIS]
        self.depth = [1]
        self.miner = [NO_MINER]
        self.published_at = [0]
        self.connected = [True]
        self.is_leaf = [True]
        self._first_child = [-1]
        self._next_sibling = [-1]
        self._pending: dict[int, list[int]] = {}
        self.active_leaves: dict[int, set[int]] = {1: {GENESIS}}
        self.archived_leaves: set[int] = set()
        self.leaf_count = 1
        self.max_depth = 1
        self.tips_at_max: set[int] = {GENESIS}
        self.prune_floor = 0

    def __len__(self) -> int:
        return len(self.parent)

    def __contains__(self, block_id: int) -> bool:
        return 0 <= block_id < len(self.parent)

    def block(self, block_id: int) -> Block:
        if block_id not in self:
            raise UnknownBlockError(block_id)
        pub = self.published_at[block_id]
        return Block(
            id=block_id,
            parent=self.parent[block_id],
            miner=self.miner[block_id],
            mined_at=block_id,
            published_at=None if pub == UNPUBLISHED else pub,
        )

    # -- growth ----------------------------------------------------------

    def add_block(self, parent_id: int, miner: int) -> int:
        """Append a freshly mined (still private) block and return its id."""
        if parent_id not in self:
            raise UnknownBlockError(parent_id)
        block_id = len(self.parent)
        self.parent.append(parent_id)
        self.depth.append(self.depth[parent_id] + 1)
        self.miner.append(miner)
        self.published_at.append(UNPUBLISHED)
        self.connected.append(False)
        self.is_leaf.append(False)
        self._first_child.append(-1)
        self._next_sibling.append(self._first_child[parent_id])
        self._first_child[parent_id] = block_id
        return block_id

    def publish(self, block_id: int, period: int) -> None:
        """Mark a block published at ``period``; connect it if possible."""
        if block_id not in self:
            raise UnknownBlockError(block_id)
        if self.published_at[block_id] != UNPUBLISHED:
            raise ValueError(f"block {block_id} already published")
        self.published_at[block_id] = period
        parent_id = self.parent[block_id]
        if self.connected[parent_id]:
            self._connect(block_id)
        else:
            self._pending.setdefault(parent_id, []).append(block_id)

    def _connect(self, block_id: int) -> None:
        stack = [block_id]
        while stack:
            b = stack.pop()
            self.connected[b] = True
            p = self.parent[b]
            if self.is_leaf[p]:
                self._drop_leaf(p)
            self._add_leaf(b)
            stack.extend(self._pending.pop(b, ()))

    def _add_leaf(self, b: int) -> None:
        self.is_leaf[b] = True
        self.leaf_count += 1
        d = self.depth[b]
        if d <= self.prune_floor:
            self.archived_leaves.add(b)
            return
        bucket = self.active_leaves.get(d)
        if bucket is None:
            self.active_leaves[d] = {b}
        else:
            bucket.add(b)
        if d > self.max_depth:
            self.max_depth = d
            self.tips_at_max = {b}
        elif d == self.max_depth:
            self.tips_at_max.add(b)

    def _drop_leaf(self, b: int) -> None:
        self.is_leaf[b] = False
        self.leaf_count -= 1
        if b in self.archived_leaves:
            self.archived_leaves.discard(b)
            return
        d = self.depth[b]
        bucket = self.active_leaves.get(d)
        bucket.discard(b)
        if not bucket:
            del self.active_leaves[d]
        if d == self.max_depth:
            self.tips_at_max.discard(b)

    def prune(self, floor: int) -> None:
        """Archive active leaves at depth <= floor.

        Callers must guarantee that archived leaves can no longer affect
        chain selection (depth at most max_depth minus the inertia window
        and strictly below every follower's current target).
        """
        if floor <= self.prune_floor:
            return
        self.prune_floor = floor
        for d in [d for d in self.active_leaves if d <= floor]:
            self.archived_leaves.update(self.active_leaves.pop(d))

    # -- public-view queries ----------------------------------------------

    def is_public(self, block_id: int) -> bool:
        return block_id in self and self.connected[block_id]

    def longest_tips(self) -> list[int]:
        """Tips of all maximal-depth public chains, sorted by id."""
        if len(self.tips_at_max) == 1:
            return list(self.tips_at_max)
        return sorted(self.tips_at_max)

    def longest_chains(self) -> list[tuple[int, int]]:
        return [(b, self.max_depth) for b in self.longest_tips()]

    def top_two_depths(self) -> tuple[int, int]:
        """Largest two public chain lengths (with multiplicity).

        When every other leaf has been archived the second value is the
        prune floor, an upper bound on the true second-longest length that
        yields the same inertia-switch decision.
        """
        if len(self.tips_at_max) >= 2:
            return self.max_depth, self.max_depth
        d = self.max_depth - 1
        while d > self.prune_floor:
            if d in self.active_leaves:
                return self.max_depth, d
            d -= 1
        return self.max_depth, self.prune_floor

    def ancestor_at_depth(self, block_id: int, d: int) -> int:
        b = block_id
        while self.depth[b] > d:
            b = self.parent[b]
        return b

    def stay_tips(self, through: int) -> list[int]:
        """Tips of public chains containing ``through`` (active window only).

        Valid while ``through`` is at least as deep as the prune floor,
        which the engine guarantees for follower targets.
        """
        d = self.depth[through]
        found = []
        if self.is_leaf[through]:
            found.append(through)
        for dd, bucket in self.active_leaves.items():
            if dd <= d:
                continue
            for leaf in bucket:
                if self.ancestor_at_depth(leaf, d) == through:
                    found.append(leaf)
        found.sort()
        return found

    def chains_through(self, block_id: int) -> list[int]:
        """Tips of all public root-to-leaf chains whose path includes the block."""
        if block_id not in self:
            raise UnknownBlockError(block_id)
        if not self.connected[block_id]:
            raise DanglingBlockError(f"block {block_id} is not in the public view")
        d = self.depth[block_id]
        found = [block_id] if self.is_leaf[block_id] else []
        for leaf in self._iter_leaves():
            if leaf != block_id and self.depth[leaf] > d:
                if self.ancestor_at_depth(leaf, d) == block_id:
                    found.append(leaf)
        found.sort()
        return found

    def _iter_leaves(self):
        for bucket in self.active_leaves.values():
            yield from bucket
        yield from self.archived_leaves

    def all_leaves(self) -> list[tuple[int, int]]:
        """Every public tip as (id, depth), sorted by id."""
        return sorted((b, self.depth[b]) for b in self._iter_leaves())

    def children(self, block_id: int) -> list[int]:
        """Children of a block (published or not), sorted by id."""
        if block_id not in self:
            raise UnknownBlockError(block_id)
        out = []
        c = self._first_child[block_id]
        while c != -1:
            out.append(c)
            c = self._next_sibling[c]
        out.reverse()
        return out

    def deepest_chain(self) -> tuple[list[int], bool]:
        """Canonical chain genesis..tip; ties broken by smallest tip id.

        Returns the block list and whether the deepest tip was tied.
        """
        tips = self.longest_tips()
        tie = len(tips) > 1
        b = tips[0]
        chain = []
        while True:
            chain.append(b)
            if b == GENESIS:
                break
            b = self.parent[b]
        chain.reverse()
        return chain, tie


def longest_chains(tree: BlockTree) -> list[tuple[int, int]]:
    """Maximal-depth public tips with their depth, sorted by id."""
    return tree.longest_chains()


def chains_through(tree: BlockTree, block_id: int) -> list[int]:
    """Tips of all public chains containing the given block."""
    return tree.chains_through(block_id)

"""Search tree with cost annotations, spatial index and cost pruning.

The tree stores every node ever inserted (so best trajectories can always
be reconstructed) and maintains a *live* set: the nodes that are still
expandable and indexed for nearest/range queries.  Pruning detaches a node
together with its whole subtree from the live set; records are kept.

Nearest-neighbor and range queries use a kd-tree over weighted coordinates.
Angular dimensions are handled exactly: their coordinates are wrapped into
one period on insertion and queries are replicated at +/- one period, which
reduces the wrapped metric to plain Euclidean arithmetic.  Queries are
expected O(log N) on the trees the planners grow; the index is rebuilt
balanced whenever the live count doubles or most slots are dead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numba import njit

from .core import TWO_PI

_NO_NODE = -1


class UnknownNodeError(KeyError):
    """Raised when an operation references a node id that is not live."""


class EmptyTreeError(RuntimeError):
    """Raised by queries on a tree with no live nodes."""


@dataclass(frozen=True)
class Metric:
    """Weighted L2 metric with optional angular (mod 2*pi) dimensions.

    Distances are computed on scaled coordinates ``w_i * x_i``; angular
    dimensions use the wrapped difference, i.e. the shortest way around the
    circle of circumference ``2*pi*w_i``.
    """

    weights: np.ndarray
    angular_dims: tuple[int, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive finite")
        ang = tuple(sorted(int(d) for d in self.angular_dims))
        if any(d < 0 or d >= w.shape[0] for d in ang):
            raise ValueError("angular dimension out of range")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "angular_dims", ang)
        periods = np.zeros(w.shape[0])
        for d in ang:
            periods[d] = TWO_PI * w[d]
        periods.flags.writeable = False
        object.__setattr__(self, "_periods", periods)
        # replica offsets: cartesian product of {-p, 0, +p} over angular dims
        offsets = np.zeros((1, w.shape[0]))
        for d in ang:
            p = periods[d]
            shifted = [offsets.copy(), offsets.copy(), offsets.copy()]
            shifted[1][:, d] += p
            shifted[2][:, d] -= p
            offsets = np.vstack(shifted)
        offsets.flags.writeable = False
        object.__setattr__(self, "_offsets", offsets)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def scale(self, state) -> np.ndarray:
        """Map a state to scaled coordinates, wrapping angular dims into [0, p)."""
        x = np.asarray(state, dtype=np.float64) * self.weights
        for d in self.angular_dims:
            x[d] = x[d] % self._periods[d]
        return x

    def scaled_sq_distance(self, a_scaled: np.ndarray, b_scaled: np.ndarray) -> float:
        """Squared distance between two scaled points (wrap via replica minimum)."""
        best = math.inf
        for off in self._offsets:
            d2 = 0.0
            for d in range(self.dim):
                diff = a_scaled[d] + off[d] - b_scaled[d]
                d2 += diff * diff
            if d2 < best:
                best = d2
        return best

    def distance(self, a, b) -> float:
        return math.sqrt(self.scaled_sq_distance(self.scale(a), self.scale(b)))


# ---------------------------------------------------------------------------
# kd-tree kernels (array-based, lazy deletion)


@njit(cache=True)
def _kd_insert(pts, split_dim, left, right, root, slot, dim):
    d = 0
    if root == _NO_NODE:
        split_dim[slot] = 0
        return slot
    node = root
    while True:
        sd = split_dim[node]
        if pts[slot, sd] < pts[node, sd]:
            nxt = left[node]
            if nxt == _NO_NODE:
                left[node] = slot
                split_dim[slot] = (sd + 1) % dim
                return root
        else:
            nxt = right[node]
            if nxt == _NO_NODE:
                right[node] = slot
                split_dim[slot] = (sd + 1) % dim
                return root
        node = nxt


@njit(cache=True)
def _kd_nearest(pts, split_dim, left, right, alive, ids, root, queries):
    """Best (squared distance, id) over all query replicas; ties -> lowest id."""
    best_d2 = np.inf
    best_id = np.int64(_NO_NODE)
    stack_node = np.empty(128, dtype=np.int64)
    stack_pd2 = np.empty(128, dtype=np.float64)
    dim = pts.shape[1]
    for qi in range(queries.shape[0]):
        q = queries[qi]
        sp = 0
        node = root
        while True:
            while node != _NO_NODE:
                if alive[node]:
                    d2 = 0.0
                    for d in range(dim):
                        diff = q[d] - pts[node, d]
                        d2 += diff * diff
                    if d2 < best_d2 or (d2 == best_d2 and ids[node] < best_id):
                        best_d2 = d2
                        best_id = ids[node]
                sd = split_dim[node]
                diff = q[sd] - pts[node, sd]
                if diff < 0.0:
                    near = left[node]
                    far = right[node]
                else:
                    near = right[node]
                    far = left[node]
                if far != _NO_NODE:
                    stack_node[sp] = far
                    stack_pd2[sp] = diff * diff
                    sp += 1
                    if sp == stack_node.shape[0]:
                        stack_node = np.concatenate((stack_node, np.empty_like(stack_node)))
                        stack_pd2 = np.concatenate((stack_pd2, np.empty_like(stack_pd2)))
                node = near
            node = _NO_NODE
            while sp > 0:
                sp -= 1
                if stack_pd2[sp] <= best_d2:
                    node = stack_node[sp]
                    break
            if node == _NO_NODE:
                break
    return best_d2, best_id


@njit(cache=True)
def _kd_range(pts, split_dim, left, right, alive, root, queries, r2, out):
    """Collect slots with squared distance <= r2 from any replica into out."""
    count = 0
    stack = np.empty(128, dtype=np.int64)
    dim = pts.shape[1]
    for qi in range(queries.shape[0]):
        q = queries[qi]
        sp = 0
        node = root
        while True:
            while node != _NO_NODE:
                if alive[node]:
                    d2 = 0.0
                    for d in range(dim):
                        diff = q[d] - pts[node, d]
                        d2 += diff * diff
                    if d2 <= r2:
                        if count == out.shape[0]:
                            return -1  # caller grows the buffer and retries
                        out[count] = node
                        count += 1
                sd = split_dim[node]
                diff = q[sd] - pts[node, sd]
                if diff < 0.0:
                    near = left[node]
                    far = right[node]
                else:
                    near = right[node]
                    far = left[node]
                if far != _NO_NODE and diff * diff <= r2:
                    stack[sp] = far
                    sp += 1
                    if sp == stack.shape[0]:
                        stack = np.concatenate((stack, np.empty_like(stack)))
                node = near
            if sp == 0:
                break
            sp -= 1
            node = stack[sp]
    return count


class SpatialIndex:
    """Dynamic kd-tree over scaled coordinates with lazy deletion.

    Node ids are arbitrary nonnegative ints supplied by the caller.  The
    index answers exact nearest/range queries under the metric (verified
    against linear scans in the test suite) with expected logarithmic cost;
    it rebuilds itself balanced after enough inserts or removals.
    """

    def __init__(self, metric: Metric, capacity: int = 256):
        self.metric = metric
        self._cap = max(16, capacity)
        dim = metric.dim
        self._pts = np.empty((self._cap, dim))
        self._split = np.zeros(self._cap, dtype=np.int64)
        self._left = np.full(self._cap, _NO_NODE, dtype=np.int64)
        self._right = np.full(self._cap, _NO_NODE, dtype=np.int64)
        self._alive = np.zeros(self._cap, dtype=np.uint8)
        self._ids = np.full(self._cap, _NO_NODE, dtype=np.int64)
        self._root = _NO_NODE
        self._size = 0          # slots used (live + dead)
        self._live = 0
        self._slot_of: dict[int, int] = {}
        self._rebuild_at = 64

    def __len__(self) -> int:
        return self._live

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._slot_of

    def _grow(self):
        self._cap *= 2
        for name in ("_pts",):
            arr = getattr(self, name)
            new = np.empty((self._cap, arr.shape[1]))
            new[: arr.shape[0]] = arr
            setattr(self, name, new)
        for name, fill in (("_split", 0), ("_left", _NO_NODE), ("_right", _NO_NODE), ("_alive", 0), ("_ids", _NO_NODE)):
            arr = getattr(self, name)
            new = np.full(self._cap, fill, dtype=arr.dtype)
            new[: arr.shape[0]] = arr
            setattr(self, name, new)

    def insert(self, node_id: int, state) -> None:
        if node_id in self._slot_of:
            raise ValueError(f"node {node_id} already indexed")
        if self._size == self._cap:
            self._grow()
        slot = self._size
        self._size += 1
        self._pts[slot] = self.metric.scale(state)
        self._left[slot] = _NO_NODE
        self._right[slot] = _NO_NODE
        self._alive[slot] = 1
        self._ids[slot] = node_id
        self._slot_of[node_id] = slot
        self._live += 1
        self._root = _kd_insert(
            self._pts, self._split, self._left, self._right, self._root, slot, self.metric.dim
        )
        if self._size >= self._rebuild_at:
            self._rebuild()

    def remove(self, node_id: int) -> None:
        slot = self._slot_of.pop(node_id, None)
        if slot is None:
            raise UnknownNodeError(node_id)
        self._alive[slot] = 0
        self._live -= 1
        if self._size > 64 and self._live < self._size // 2:
            self._rebuild()

    def _rebuild(self) -> None:
        """Rebuild a balanced tree over the live slots (median splits)."""
        live_slots = np.flatnonzero(self._alive[: self._size])
        pts = self._pts[live_slots].copy()
        ids = self._ids[live_slots].copy()
        n = live_slots.shape[0]
        dim = self.metric.dim
        self._cap = max(16, 2 * n, self._cap // (2 if self._cap > 4 * max(n, 8) else 1))
        self._pts = np.empty((self._cap, dim))
        self._split = np.zeros(self._cap, dtype=np.int64)
        self._left = np.full(self._cap, _NO_NODE, dtype=np.int64)
        self._right = np.full(self._cap, _NO_NODE, dtype=np.int64)
        self._alive = np.zeros(self._cap, dtype=np.uint8)
        self._ids = np.full(self._cap, _NO_NODE, dtype=np.int64)
        self._pts[:n] = pts
        self._ids[:n] = ids
        self._alive[:n] = 1
        self._size = n
        self._slot_of = {int(ids[i]): i for i in range(n)}

        def build(order: np.ndarray, depth: int) -> int:
            if order.shape[0] == 0:
                return _NO_NODE
            sd = depth % dim
            mid = order.shape[0] // 2
            order = order[np.argsort(pts[order, sd], kind="stable")]
            node = order[mid]
            self._split[node] = sd
            self._left[node] = build(order[:mid], depth + 1)
            self._right[node] = build(order[mid + 1 :], depth + 1)
            return node

        import sys

        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, 4 * int(math.log2(n + 2)) + 64))
        try:
            self._root = build(np.arange(n, dtype=np.int64), 0)
        finally:
            sys.setrecursionlimit(old)
        self._rebuild_at = max(64, 2 * n)

    def _queries(self, state) -> np.ndarray:
        q = self.metric.scale(state)
        return q + self.metric._offsets

    def nearest(self, state) -> int:
        """Id of the live node closest to ``state``; ties -> lowest id."""
        if self._live == 0:
            raise EmptyTreeError("no live nodes")
        _, best = _kd_nearest(
            self._pts, self._split, self._left, self._right, self._alive, self._ids,
            self._root, self._queries(state),
        )
        return int(best)

    def in_range(self, state, radius: float) -> np.ndarray:
        """Sorted ids of live nodes within ``radius`` (inclusive) of ``state``."""
        if radius <= 0:
            raise ValueError("radius must be > 0")
        if self._live == 0:
            return np.empty(0, dtype=np.int64)
        queries = self._queries(state)
        buf = np.empty(max(64, self._live // 4), dtype=np.int64)
        while True:
            cnt = _kd_range(
                self._pts, self._split, self._left, self._right, self._alive,
                self._root, queries, radius * radius, buf,
            )
            if cnt >= 0:
                break
            buf = np.empty(buf.shape[0] * 2, dtype=np.int64)
        return np.unique(self._ids[buf[:cnt]])


# ---------------------------------------------------------------------------
# radius schedule and the tree proper


@dataclass(frozen=True)
class RadiusSchedule:
    """Shrinking prune radius ``R(t) = r0 * (1 + t)**(-gamma)``.

    ``t`` is the planner's valid-iteration count.  Strictly decreasing,
    positive, and tends to zero.
    """

    r0: float
    gamma: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.r0) and self.r0 > 0):
            raise ValueError("r0 must be finite and > 0")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")

    def radius(self, t: int) -> float:
        return self.r0 * (1.0 + t) ** (-self.gamma)


@dataclass
class _NodeRecord:
    state: np.ndarray
    cost: float
    parent: int
    control: np.ndarray | None
    duration: float
    edge_cost: float


class PlanTree:
    """The planners' search tree.

    Every inserted node is kept in an append-only record store; the *live*
    subset is expandable and spatially indexed.  ``cost_to_come`` of a node
    is the cost of its parent plus the edge cost, fixed at insertion.
    """

    def __init__(self, root_state, metric: Metric, capacity: int = 256):
        self.metric = metric
        root = np.array(root_state, dtype=np.float64)
        self._records: list[_NodeRecord] = [_NodeRecord(root, 0.0, _NO_NODE, None, 0.0, 0.0)]
        self._children: list[list[int]] = [[]]
        self._on_best_path: list[bool] = [True]  # root is always part of the best chain
        self.index = SpatialIndex(metric, capacity)
        self.index.insert(0, root)
        # live ids in a swap-remove list for O(1) uniform sampling
        self._live_list: list[int] = [0]
        self._live_pos: dict[int, int] = {0: 0}
        self.best_cost = math.inf
        self.best_node: int | None = None
        self._best_chain: list[int] = [0]
        self.removed_best_path_nodes = 0  # safety counter, must stay 0

    # -- basic accessors ----------------------------------------------------

    def __len__(self) -> int:
        return len(self._live_list)

    @property
    def node_count(self) -> int:
        return len(self._live_list)

    @property
    def total_inserted(self) -> int:
        return len(self._records)

    @property
    def root(self) -> int:
        return 0

    def is_live(self, node_id: int) -> bool:
        return node_id in self._live_pos

    def live_ids(self) -> list[int]:
        return list(self._live_list)

    def live_at(self, position: int) -> int:
        """Live id at a position in the internal list (for uniform sampling)."""
        return self._live_list[position]

    def state_of(self, node_id: int) -> np.ndarray:
        return self._records[node_id].state

    def cost_of(self, node_id: int) -> float:
        return self._records[node_id].cost

    def parent_of(self, node_id: int) -> int:
        return self._records[node_id].parent

    def edge_of(self, node_id: int) -> tuple[np.ndarray | None, float]:
        rec = self._records[node_id]
        return rec.control, rec.duration

    def on_best_path(self, node_id: int) -> bool:
        return self._on_best_path[node_id]

    def chain_to_root(self, node_id: int) -> list[int]:
        """Node ids from the root to ``node_id`` along parent links."""
        chain = []
        node = node_id
        while node != _NO_NODE:
            chain.append(node)
            node = self._records[node].parent
        return chain[::-1]

    # -- mutation -----------------------------------------------------------

    def insert(self, parent: int, state, control, duration: float, edge_cost: float) -> int:
        """Add a child under a live parent; returns the new node id."""
        if parent not in self._live_pos:
            raise UnknownNodeError(parent)
        if edge_cost < 0 or not np.isfinite(edge_cost):
            raise ValueError("edge_cost must be finite and >= 0")
        node_id = len(self._records)
        rec = _NodeRecord(
            np.array(state, dtype=np.float64),
            self._records[parent].cost + edge_cost,
            parent,
            np.array(control, dtype=np.float64),
            float(duration),
            float(edge_cost),
        )
        self._records.append(rec)
        self._children.append([])
        self._on_best_path.append(False)
        self._children[parent].append(node_id)
        self.index.insert(node_id, rec.state)
        self._live_pos[node_id] = len(self._live_list)
        self._live_list.append(node_id)
        return node_id

    def _detach(self, node_id: int) -> None:
        if self._on_best_path[node_id]:
            self.removed_best_path_nodes += 1
        pos = self._live_pos.pop(node_id, None)
        if pos is None:
            return
        last = self._live_list.pop()
        if last != node_id:
            self._live_list[pos] = last
            self._live_pos[last] = pos
        self.index.remove(node_id)

    def remove_subtree(self, node_id: int) -> int:
        """Detach a node and all its live descendants; returns the count."""
        removed = 0
        stack = [node_id]
        while stack:
            node = stack.pop()
            if node in self._live_pos:
                self._detach(node)
                removed += 1
            stack.extend(self._children[node])
        return removed

    def nearest(self, state) -> int:
        if len(self._live_list) == 0:
            raise EmptyTreeError("tree has no live nodes")
        return self.index.nearest(state)

    def neighbors_within(self, state, radius: float) -> np.ndarray:
        return self.index.in_range(state, radius)

    def prune(self, state, cost: float, radius: float) -> bool:
        """Admission test for a candidate node, with competitive removal.

        Returns False (reject the candidate) iff some live neighbor within
        ``radius`` has strictly lower cost-to-come.  Otherwise removes every
        neighbor whose cost is strictly higher -- sparing nodes on the best
        trajectory -- and returns True.  Equal-cost neighbors are kept and
        the candidate is still accepted.
        """
        neighbors = self.neighbors_within(state, radius)
        for nb in neighbors:
            if self._records[nb].cost < cost:
                return False
        for nb in neighbors:
            if self._records[nb].cost > cost and not self._on_best_path[nb] and nb in self._live_pos:
                self.remove_subtree(nb)
        return True

    def mark_best(self, node_id: int, cost: float) -> None:
        """Record a new best goal-reaching node and re-flag its root chain."""
        if self.best_node is not None:
            for node in self._best_chain:
                self._on_best_path[node] = False
            self._on_best_path[0] = True
        chain = self.chain_to_root(node_id)
        for node in chain:
            self._on_best_path[node] = True
        self._best_chain = chain
        self.best_node = node_id
        self.best_cost = cost

    # -- serialization ------------------------------------------------------

    def dump(self) -> str:
        """Line-oriented record dump, one node per line.

        Format (space-separated):
        ``id parent cost duration flags state_csv control_csv``
        where ``flags`` contains ``L`` (live) and/or ``B`` (on best path),
        or ``-`` for neither, and the root's control/duration are ``-``.
        Floats use ``repr`` so dumps are stable and exact.
        """
        lines = []
        for node_id, rec in enumerate(self._records):
            flags = ""
            if node_id in self._live_pos:
                flags += "L"
            if self._on_best_path[node_id]:
                flags += "B"
            state_csv = ",".join(repr(float(x)) for x in rec.state)
            if rec.control is None:
                ctrl_csv = "-"
                dur = "-"
            else:
                ctrl_csv = ",".join(repr(float(x)) for x in rec.control)
                dur = repr(float(rec.duration))
            lines.append(
                f"{node_id} {rec.parent} {repr(float(rec.cost))} {dur} {flags or '-'} {state_csv} {ctrl_csv}"
            )
        return "\n".join(lines) + "\n"

    def check_cost_consistency(self) -> float:
        """Max relative error between stored costs and parent-chain edge sums."""
        worst = 0.0
        for node_id in self._live_list:
            total = 0.0
            for node in self.chain_to_root(node_id):
                total += self._records[node].edge_cost
            stored = self._records[node_id].cost
            err = abs(total - stored) / max(1.0, abs(stored))
            worst = max(worst, err)
        return worst

"""Density-based clustering of community feature vectors.

OPTICS is run once with an unbounded generating radius and DBSCAN-style
clusters are cut from the reachability plot at each swept ``eps``. HDBSCAN
builds the mutual-reachability minimum spanning tree, condenses the
single-linkage hierarchy with ``min_cluster_size = min_pts`` and keeps the
excess-of-mass clusters. Outliers are labelled -1 everywhere.

Core distances follow the usual convention that a point counts itself among
its ``min_pts`` neighbours.
"""

from __future__ import annotations

import heapq
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_EPS_SWEEP = (0.1, 0.5, 0.9, 1.0, 1.5, 2.0, 3.0, 5.0)


@dataclass(frozen=True)
class ClusterConfig:
    min_pts: int = 5
    eps_sweep: tuple[float, ...] = DEFAULT_EPS_SWEEP

    def __post_init__(self):
        if self.min_pts < 2:
            raise ValueError("min_pts must be >= 2")
        eps = tuple(float(e) for e in self.eps_sweep)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("eps values must be > 0")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps sweep must be strictly increasing")
        object.__setattr__(self, "eps_sweep", eps)


def canonical_labels(labels: Sequence[int]) -> np.ndarray:
    """Renumber clusters 0..C-1 by first appearance in point order; -1 stays."""
    remap: dict[int, int] = {}
    out = np.full(len(labels), -1, dtype=int)
    for i, c in enumerate(labels):
        if c != -1:
            out[i] = remap.setdefault(int(c), len(remap))
    return out


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", canonical_labels(self.labels))

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) and self.labels.max() >= 0 else 0

    @property
    def n_outliers(self) -> int:
        return int((self.labels == -1).sum())

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, ClusterAssignment) and np.array_equal(self.labels, other.labels)

    def __hash__(self) -> int:
        return hash(self.labels.tobytes())


def pairwise_distances(points) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def core_distances(dist: np.ndarray, min_pts: int) -> np.ndarray:
    n = dist.shape[0]
    if n < min_pts:
        return np.full(n, np.inf)
    return np.sort(dist, axis=1)[:, min_pts - 1]


@dataclass(frozen=True)
class ReachabilityPlot:
    ordering: np.ndarray
    reachability: np.ndarray  # indexed by point, inf where undefined
    core_distance: np.ndarray
    min_pts: int

    @property
    def ordered_reachability(self) -> np.ndarray:
        return self.reachability[self.ordering]


def optics_order(points, min_pts: int) -> ReachabilityPlot:
    dist = pairwise_distances(points)
    n = dist.shape[0]
    if n == 0:
        raise ValueError("optics_order needs at least one point")
    core = core_distances(dist, min_pts)
    reach = np.full(n, np.inf)
    processed = np.zeros(n, dtype=bool)
    ordering: list[int] = []
    heap: list[tuple[float, int]] = []

    def expand(p: int) -> None:
        if not math.isfinite(core[p]):
            return
        new = np.maximum(core[p], dist[p])
        better = np.flatnonzero(~processed & (new < reach))
        for q in better:
            reach[q] = new[q]
            heapq.heappush(heap, (float(new[q]), int(q)))

    for start in range(n):
        if processed[start]:
            continue
        processed[start] = True
        ordering.append(start)
        expand(start)
        while heap:
            r, q = heapq.heappop(heap)
            if processed[q] or r != reach[q]:
                continue
            processed[q] = True
            ordering.append(q)
            expand(q)
    return ReachabilityPlot(np.array(ordering, dtype=int), reach, core, min_pts)


def extract_dbscan(plot: ReachabilityPlot, eps: float) -> ClusterAssignment:
    if not eps > 0:
        raise ValueError("eps must be > 0")
    labels = np.full(len(plot.ordering), -1, dtype=int)
    current = -1
    for p in plot.ordering:
        if plot.reachability[p] > eps:
            if plot.core_distance[p] <= eps:
                current += 1
                labels[p] = current
        else:
            labels[p] = current
    return ClusterAssignment(labels)


@dataclass(frozen=True)
class SweepRow:
    eps: float
    n_clusters: int
    n_outliers: int
    assignment: ClusterAssignment


@dataclass(frozen=True)
class SweepResult:
    plot: ReachabilityPlot
    rows: tuple[SweepRow, ...]
    saturation_eps: float

    def at(self, eps: float) -> ClusterAssignment:
        for row in self.rows:
            if row.eps == eps:
                return row.assignment
        raise KeyError(eps)


def sweep_eps(points, cfg: ClusterConfig | None = None) -> SweepResult:
    """Cut one OPTICS ordering at every swept eps.

    ``saturation_eps`` is the smallest swept value from which the assignment
    no longer changes for any larger swept value.
    """
    cfg = cfg or ClusterConfig()
    plot = optics_order(points, cfg.min_pts)
    rows = []
    for eps in cfg.eps_sweep:
        a = extract_dbscan(plot, eps)
        rows.append(SweepRow(eps, a.n_clusters, a.n_outliers, a))
    sat = rows[-1].eps
    for row in reversed(rows):
        if row.assignment != rows[-1].assignment:
            break
        sat = row.eps
    return SweepResult(plot, tuple(rows), sat)


# --- HDBSCAN -----------------------------------------------------------------


def _mst_prim(mr: np.ndarray) -> list[tuple[float, int, int]]:
    n = mr.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    via = np.full(n, -1, dtype=int)
    edges: list[tuple[float, int, int]] = []
    current = 0
    in_tree[0] = True
    for _ in range(n - 1):
        row = mr[current]
        upd = ~in_tree & (row < best)
        best[upd] = row[upd]
        via[upd] = current
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        u, v = sorted((int(via[nxt]), nxt))
        edges.append((float(best[nxt]), u, v))
        in_tree[nxt] = True
        current = nxt
    edges.sort()
    return edges


@dataclass
class _Hierarchy:
    n: int
    left: dict[int, int] = field(default_factory=dict)
    right: dict[int, int] = field(default_factory=dict)
    dist: dict[int, float] = field(default_factory=dict)
    size: dict[int, int] = field(default_factory=dict)


def _single_linkage(n: int, edges: list[tuple[float, int, int]]) -> _Hierarchy:
    h = _Hierarchy(n)
    parent = list(range(2 * n - 1))

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for i in range(n):
        h.size[i] = 1
    node = n
    for w, u, v in edges:
        ru, rv = find(u), find(v)
        h.left[node], h.right[node] = min(ru, rv), max(ru, rv)
        h.dist[node] = w
        h.size[node] = h.size[ru] + h.size[rv]
        parent[ru] = parent[rv] = node
        node += 1
    return h


def _leaves(h: _Hierarchy, node: int) -> list[int]:
    out, stack = [], [node]
    while stack:
        x = stack.pop()
        if x < h.n:
            out.append(x)
        else:
            stack.append(h.right[x])
            stack.append(h.left[x])
    return sorted(out)


def _condense(h: _Hierarchy, min_size: int, lam_cap: float) -> list[tuple[int, int, float, int]]:
    """Rows of (parent cluster, child, lambda, child size); clusters are labelled from n."""
    n = h.n
    root = 2 * n - 2
    relabel = {root: n}
    next_label = n + 1
    rows: list[tuple[int, int, float, int]] = []
    queue = [root]
    while queue:
        node = queue.pop(0)
        if node < n:
            continue
        left, right = h.left[node], h.right[node]
        d = h.dist[node]
        lam = 1.0 / d if d > 0 else lam_cap
        big_l, big_r = h.size[left] >= min_size, h.size[right] >= min_size
        me = relabel[node]
        if big_l and big_r:
            for child in (left, right):
                relabel[child] = next_label
                rows.append((me, next_label, lam, h.size[child]))
                next_label += 1
                queue.append(child)
            continue
        for child, big in ((left, big_l), (right, big_r)):
            if big:
                relabel[child] = me
                queue.append(child)
            else:
                rows.extend((me, p, lam, 1) for p in _leaves(h, child))
    return rows


def _select_eom(rows, n: int) -> tuple[set[int], dict[int, int]]:
    cluster_parent: dict[int, int] = {}
    birth = {n: 0.0}
    for parent, child, lam, _ in rows:
        if child >= n:
            cluster_parent[child] = parent
            birth[child] = lam
    stability: dict[int, float] = defaultdict(float)
    for parent, child, lam, size in rows:
        stability[parent] += (lam - birth[parent]) * size
    children: dict[int, list[int]] = defaultdict(list)
    for c, p in cluster_parent.items():
        children[p].append(c)
    if not children[n]:
        return {n}, cluster_parent

    selected: dict[int, bool] = {}

    def descendants(c: int) -> list[int]:
        out, stack = [], list(children[c])
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(children[x])
        return out

    for c in sorted(birth, reverse=True):
        if c == n:
            continue
        child_total = sum(stability[ch] for ch in children[c])
        if child_total > stability[c]:
            selected[c] = False
            stability[c] = child_total
        else:
            selected[c] = True
            for d in descendants(c):
                selected[d] = False
    return {c for c, keep in selected.items() if keep}, cluster_parent


def hdbscan(points, min_pts: int = 5) -> ClusterAssignment:
    """HDBSCAN with excess-of-mass selection and min cluster size = ``min_pts``.

    When the hierarchy never splits into two clusters of at least ``min_pts``
    points, the root itself is returned as a single cluster, keeping only the
    points that persist to its final density level.
    """
    x = np.asarray(points, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("hdbscan needs at least one point")
    if n < min_pts:
        return ClusterAssignment(np.full(n, -1))
    dist = pairwise_distances(x)
    core = core_distances(dist, min_pts)
    mr = np.maximum(dist, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(mr, np.inf)
    if n == 1:
        return ClusterAssignment(np.zeros(1, dtype=int))
    edges = _mst_prim(mr)
    positive = [w for w, _, _ in edges if w > 0]
    # zero distances get a finite lambda just above every real one
    lam_cap = 2.0 / min(positive) if positive else 1.0
    h = _single_linkage(n, edges)
    rows = _condense(h, min_pts, lam_cap)
    selected, cluster_parent = _select_eom(rows, n)

    labels = np.full(n, -1, dtype=int)
    if selected == {n}:
        root_rows = [(child, lam) for parent, child, lam, _ in rows if parent == n and child < n]
        top = max(lam for _, lam in root_rows)
        for p, lam in root_rows:
            if lam >= top:
                labels[p] = 0
        return ClusterAssignment(labels)

    label_of = {c: i for i, c in enumerate(sorted(selected))}
    for parent, child, lam, _ in rows:
        if child >= n:
            continue
        c = parent
        while c not in selected and c in cluster_parent:
            c = cluster_parent[c]
        if c in selected:
            labels[child] = label_of[c]
    return ClusterAssignment(labels)


# --- agreement ---------------------------------------------------------------


def _comb2(k: int) -> int:
    return k * (k - 1) // 2


def adjusted_rand_index(a: Sequence[int], b: Sequence[int], noise: str = "label") -> float:
    """ARI from the contingency table.

    ``noise="label"`` treats -1 as an ordinary cluster; ``noise="singletons"``
    gives each outlier its own cluster.
    """
    a = np.asarray(a, dtype=int)
    b = np.asarray(b, dtype=int)
    if a.shape != b.shape:
        raise ValueError("assignments differ in length")
    if noise == "singletons":
        a = _explode_noise(a)
        b = _explode_noise(b)
    elif noise != "label":
        raise ValueError(f"unknown noise mode {noise!r}")
    n = len(a)
    if n < 2:
        return 1.0
    pairs: dict[tuple[int, int], int] = defaultdict(int)
    for x, y in zip(a.tolist(), b.tolist()):
        pairs[(x, y)] += 1
    index = sum(_comb2(v) for v in pairs.values())
    sum_a = sum(_comb2(int(v)) for v in np.unique(a, return_counts=True)[1])
    sum_b = sum(_comb2(int(v)) for v in np.unique(b, return_counts=True)[1])
    total = _comb2(n)
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def _explode_noise(labels: np.ndarray) -> np.ndarray:
    out = labels.copy()
    nxt = int(labels.max(initial=-1)) + 1
    for i in np.flatnonzero(labels == -1):
        out[i] = nxt
        nxt += 1
    return out


@dataclass(frozen=True)
class ClusterMatch:
    a: int
    b: int
    overlap: int
    size_a: int
    size_b: int

    @property
    def size_delta(self) -> int:
        return self.size_a - self.size_b


@dataclass(frozen=True)
class AgreementReport:
    labels_a: tuple[int, ...]
    labels_b: tuple[int, ...]
    contingency: tuple[tuple[int, ...], ...]
    ari: float
    matches: tuple[ClusterMatch, ...]
    outliers: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "ari": self.ari,
            "labels_a": list(self.labels_a),
            "labels_b": list(self.labels_b),
            "contingency": [list(r) for r in self.contingency],
            "matches": [
                {
                    "a": m.a,
                    "b": m.b,
                    "overlap": m.overlap,
                    "size_a": m.size_a,
                    "size_b": m.size_b,
                    "size_delta": m.size_delta,
                }
                for m in self.matches
            ],
            "outliers": list(self.outliers),
        }


def compare_assignments(a, b) -> AgreementReport:
    la = np.asarray(a.labels if isinstance(a, ClusterAssignment) else a, dtype=int)
    lb = np.asarray(b.labels if isinstance(b, ClusterAssignment) else b, dtype=int)
    if la.shape != lb.shape:
        raise ValueError(f"assignment lengths differ: {len(la)} vs {len(lb)}")
    labels_a = sorted(set(la.tolist()))
    labels_b = sorted(set(lb.tolist()))
    ia = {c: i for i, c in enumerate(labels_a)}
    ib = {c: i for i, c in enumerate(labels_b)}
    table = np.zeros((len(labels_a), len(labels_b)), dtype=int)
    for x, y in zip(la.tolist(), lb.tolist()):
        table[ia[x], ib[y]] += 1

    cells = sorted(
        ((-int(table[ia[x], ib[y]]), x, y) for x in labels_a if x != -1 for y in labels_b if y != -1),
    )
    used_a: set[int] = set()
    used_b: set[int] = set()
    matches = []
    for neg, x, y in cells:
        if neg == 0:
            break
        if x in used_a or y in used_b:
            continue
        used_a.add(x)
        used_b.add(y)
        matches.append(ClusterMatch(x, y, -neg, int((la == x).sum()), int((lb == y).sum())))
    return AgreementReport(
        labels_a=tuple(labels_a),
        labels_b=tuple(labels_b),
        contingency=tuple(tuple(int(v) for v in row) for row in table),
        ari=adjusted_rand_index(la, lb),
        matches=tuple(matches),
        outliers=(int((la == -1).sum()), int((lb == -1).sum())),
    )

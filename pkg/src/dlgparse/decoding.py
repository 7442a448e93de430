"""Structure decoders over static pairwise score matrices.

A score matrix is an (n+1) × (n+1) array whose entry (j, i) is the score of
a link u_j → u_i; the diagonal and the root column are -inf (no link may
target the dummy root).  Decoders return the parent of each EDU 1..n as a
plain list.  Two candidate-edge regimes exist: "forward" keeps only j < i
(the dialogue setting), "all-pairs" keeps every off-diagonal entry, which
makes the maximum-spanning-arborescence search a genuine algorithm.
"""

from __future__ import annotations

import itertools

import numpy as np

BRUTE_FORCE_LIMIT = 8


class InfeasibleGraphError(RuntimeError):
    """No arborescence rooted at the dummy node exists in the edge set."""

    def __init__(self, unreachable: list[int]):
        self.unreachable = unreachable
        super().__init__(f"nodes unreachable from the root: {unreachable}")


class _Edge:
    __slots__ = ("weight", "src", "dst", "base")

    def __init__(self, weight: float, src: int, dst: int, base: "_Edge | None" = None):
        self.weight = weight
        self.src = src
        self.dst = dst
        self.base = base


def _matrix_edges(scores: np.ndarray, edges: str) -> list[_Edge]:
    if edges not in ("forward", "all-pairs"):
        raise ValueError(f"edges must be 'forward' or 'all-pairs', got {edges!r}")
    n1 = scores.shape[0]
    if scores.shape != (n1, n1):
        raise ValueError(f"score matrix must be square, got {scores.shape}")
    out = []
    for j in range(n1):
        for i in range(1, n1):
            if i == j or (edges == "forward" and j > i):
                continue
            w = scores[j, i]
            if np.isfinite(w):
                out.append(_Edge(float(w), j, i))
    return out


def greedy_decode(scores: np.ndarray) -> list[int]:
    """Parent of each EDU = best-scoring earlier node, lowest index on ties."""
    n = scores.shape[0] - 1
    return [int(np.argmax(scores[:i, i])) for i in range(1, n + 1)]


def _check_reachable(n_nodes: int, edge_list: list[_Edge]) -> None:
    succ: dict[int, list[int]] = {}
    for e in edge_list:
        succ.setdefault(e.src, []).append(e.dst)
    seen = {0}
    frontier = [0]
    while frontier:
        node = frontier.pop()
        for nxt in succ.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    unreachable = [v for v in range(1, n_nodes) if v not in seen]
    if unreachable:
        raise InfeasibleGraphError(unreachable)


def _better(e: _Edge, cur: _Edge) -> bool:
    if e.weight != cur.weight:
        return e.weight > cur.weight
    return (e.src, e.dst) < (cur.src, cur.dst)


def _find_cycle(best: dict[int, _Edge], root: int) -> list[int] | None:
    confirmed = {root}
    for start in best:
        if start in confirmed:
            continue
        path: list[int] = []
        on_path: set[int] = set()
        node = start
        while True:
            if node in on_path:
                return path[path.index(node):]
            if node == root or node in confirmed or node not in best:
                break
            path.append(node)
            on_path.add(node)
            node = best[node].src
        confirmed.update(on_path)
    return None


def _chu_liu_edmonds(nodes: set[int], edge_list: list[_Edge],
                     root: int) -> dict[int, _Edge]:
    """Maximum-weight arborescence by greedy selection and cycle contraction."""
    best: dict[int, _Edge] = {}
    for e in edge_list:
        if e.dst == root or e.src == e.dst:
            continue
        cur = best.get(e.dst)
        if cur is None or _better(e, cur):
            best[e.dst] = e
    for v in nodes:
        if v != root and v not in best:
            raise InfeasibleGraphError([v])

    cycle = _find_cycle(best, root)
    if cycle is None:
        return best

    cyc = set(cycle)
    super_id = max(nodes) + 1
    contracted_nodes = (nodes - cyc) | {super_id}
    contracted = []
    for e in edge_list:
        if e.src in cyc and e.dst in cyc:
            continue
        if e.dst in cyc:
            contracted.append(_Edge(e.weight - best[e.dst].weight, e.src, super_id, e))
        elif e.src in cyc:
            contracted.append(_Edge(e.weight, super_id, e.dst, e))
        else:
            contracted.append(_Edge(e.weight, e.src, e.dst, e))

    sub = _chu_liu_edmonds(contracted_nodes, contracted, root)

    chosen: dict[int, _Edge] = {}
    entering: _Edge | None = None
    for dst, e in sub.items():
        base = e.base
        if dst == super_id:
            entering = base
        else:
            chosen[base.dst] = base
    # the edge entering the contracted cycle displaces exactly one cycle edge
    chosen[entering.dst] = entering
    for v in cyc:
        if v != entering.dst:
            chosen[v] = best[v]
    return chosen


def mst_decode(scores: np.ndarray, edges: str = "forward") -> list[int]:
    """Maximum spanning arborescence rooted at the dummy node.

    Deterministic: score ties prefer the lexicographically smaller
    (source, target) pair.  Raises :class:`InfeasibleGraphError` when some
    node cannot be reached from the root in the candidate edge set.
    """
    n = scores.shape[0] - 1
    edge_list = _matrix_edges(scores, edges)
    _check_reachable(n + 1, edge_list)
    chosen = _chu_liu_edmonds(set(range(n + 1)), edge_list, 0)
    return [chosen[i].src for i in range(1, n + 1)]


def brute_force_arborescence(scores: np.ndarray, edges: str = "forward") -> list[int]:
    """Exhaustive maximum arborescence, usable as an oracle for n ≤ 8.

    Enumerates every parent assignment from the candidate edge set, keeps
    those that form a tree rooted at the dummy node, and returns the best by
    (weight, lexicographically smallest parent vector).
    """
    n = scores.shape[0] - 1
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force enumeration is limited to n <= {BRUTE_FORCE_LIMIT}, got {n}")
    edge_list = _matrix_edges(scores, edges)
    _check_reachable(n + 1, edge_list)
    candidates: list[list[int]] = [[] for _ in range(n + 1)]
    for e in edge_list:
        candidates[e.dst].append(e.src)

    best_parents: tuple[int, ...] | None = None
    best_weight = -np.inf
    for assignment in itertools.product(*candidates[1:]):
        if not _is_arborescence(assignment):
            continue
        w = sum(scores[p, i] for i, p in enumerate(assignment, start=1))
        if w > best_weight or (w == best_weight and
                               (best_parents is None or assignment < best_parents)):
            best_weight = w
            best_parents = assignment
    if best_parents is None:
        raise InfeasibleGraphError(list(range(1, n + 1)))
    return list(best_parents)


def _is_arborescence(parents: tuple[int, ...]) -> bool:
    # every node must reach the root by following parents, without a cycle
    status = [0] * (len(parents) + 1)  # 0 unknown, 1 visiting, 2 rooted
    status[0] = 2
    for start in range(1, len(parents) + 1):
        path = []
        node = start
        while status[node] == 0:
            status[node] = 1
            path.append(node)
            node = parents[node - 1]
        if status[node] == 1:
            return False
        for v in path:
            status[v] = 2
    return True


def tree_weight(scores: np.ndarray, parents: list[int]) -> float:
    return float(sum(scores[p, i] for i, p in enumerate(parents, start=1)))

"""Finite rooted pointed/marked trees and their constructive algebra.

A ``PointedTree`` is a finite rooted tree with positive edge lengths, an
ordered tuple of pointed vertices (slot 0 is always the root, vertices
may repeat), an optional root-containing marked subtree, and an optional
``spine_unbounded`` flag saying the marked branch conceptually extends
to infinity (kept finite in the representation).

On top of it live the span/projection maps, the branch decomposition
indexed by subsets of pointed leaves (the ``BranchCode``), the
code/distance-matrix conversions, the four-point condition, the
Split/Graft pair, height and spine truncations, the measure <-> tree
decoration maps, and length-measure sampling.

Subsets of {1..n} are bitmasks (bit k-1 for leaf k).  The Graft ordering
of subsets ("peel order") sorts by the sorted-tuple lexicographic order
in which a proper prefix ranks *above* its extensions; this is the order
that makes the backward leaf-peeling of the span well defined when
pointed vertices coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PointedTree",
    "BranchCode",
    "build_tree",
    "span",
    "span_vertices",
    "project",
    "mrca_table",
    "code_L",
    "code_D",
    "matrix_L",
    "four_point_check",
    "tree_from_distances",
    "tree_from_code",
    "graft_order",
    "split_n",
    "graft_n",
    "graft_at",
    "truncate",
    "truncate2_plus",
    "truncate2_minus",
    "clean_root",
    "tree_from_measure",
    "measure_from_tree",
    "growth_n",
    "length_measure_total",
    "sample_length_point",
    "canonical_key",
    "trees_equivalent",
    "contract_simple",
    "to_text",
    "from_text",
]


class PointedTree:
    """Finite rooted tree with ordered pointed vertices and optional marks."""

    __slots__ = ("root", "parent", "length", "children", "pointed", "marked",
                 "spine_unbounded", "_height")

    def __init__(self, root, parent, length, children, pointed, marked=None,
                 spine_unbounded=False):
        self.root = root
        self.parent = parent          # id -> parent id (root absent)
        self.length = length          # id -> edge length to parent (> 0)
        self.children = children      # id -> ordered list of child ids
        self.pointed = tuple(pointed)
        self.marked = frozenset(marked) if marked is not None else None
        self.spine_unbounded = spine_unbounded
        self._height = None

    # -- basic accessors ------------------------------------------------

    @property
    def n_pointed(self) -> int:
        """Number of pointed vertices besides the root."""
        return len(self.pointed) - 1

    def vertices(self):
        return self.parent.keys() | {self.root}

    def n_vertices(self) -> int:
        return len(self.parent) + 1

    def heights(self):
        if self._height is None:
            h = {self.root: 0.0}
            stack = [self.root]
            while stack:
                v = stack.pop()
                for c in self.children.get(v, ()):
                    h[c] = h[v] + self.length[c]
                    stack.append(c)
            self._height = h
        return self._height

    def height(self, v) -> float:
        return self.heights()[v]

    def tree_height(self) -> float:
        return max(self.heights().values())

    def path_to_root(self, v):
        """Vertices from v down to the root, inclusive."""
        out = [v]
        while v != self.root:
            v = self.parent[v]
            out.append(v)
        return out

    def mrca(self, u, v):
        anc = set(self.path_to_root(u))
        while v not in anc:
            v = self.parent[v]
        return v

    def distance(self, u, v) -> float:
        h = self.heights()
        return h[u] + h[v] - 2.0 * h[self.mrca(u, v)]

    def leaves(self):
        return [v for v in self.vertices() if not self.children.get(v)]

    def copy(self) -> "PointedTree":
        return PointedTree(
            self.root, dict(self.parent), dict(self.length),
            {v: list(cs) for v, cs in self.children.items()},
            self.pointed, self.marked, self.spine_unbounded,
        )

    def fresh_id(self) -> int:
        return max((v for v in self.vertices() if isinstance(v, int)), default=-1) + 1

    def pointed_distance_matrix(self) -> np.ndarray:
        idx = self.pointed
        m = len(idx)
        d = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1, m):
                d[i, j] = d[j, i] = self.distance(idx[i], idx[j])
        return d

    def __repr__(self):
        return (f"PointedTree({self.n_vertices()} vertices, "
                f"{self.n_pointed} pointed, height={self.tree_height():.4g})")


def build_tree(root, parent, length, pointed, children_order=None, marked=None,
               spine_unbounded=False) -> PointedTree:
    """Assemble a tree, contracting zero-length edges.

    ``children_order``: optional id -> ordered child list; derived from the
    parent map (insertion order) when omitted.
    """
    children = {v: [] for v in list(parent) + [root]}
    if children_order is not None:
        children.update({v: list(cs) for v, cs in children_order.items()})
    else:
        for v, p in parent.items():
            children.setdefault(p, []).append(v)
    for v in parent:
        children.setdefault(v, [])

    # contract zero-length edges top-down (merge child into parent)
    merged = {}

    def rep(v):
        while v in merged:
            v = merged[v]
        return v

    order = [root]
    i = 0
    while i < len(order):
        for c in children.get(order[i], ()):
            order.append(c)
        i += 1
    for v in order[1:]:
        if length[v] == 0.0:
            merged[v] = parent[v]
    if merged:
        new_parent, new_length, new_children = {}, {}, {}
        for v in order:
            r = rep(v)
            new_children.setdefault(r, [])
            if v in merged:
                continue
            if v != root:
                p = rep(parent[v])
                new_parent[v] = p
                new_length[v] = length[v]
        for v in order:
            if v in merged or v == root:
                continue
            new_children.setdefault(new_parent[v], []).append(v)
        pointed = tuple(rep(v) for v in pointed)
        if marked is not None:
            marked = {rep(v) for v in marked}
        parent, length, children = new_parent, new_length, new_children
    return PointedTree(root, dict(parent), dict(length),
                       {v: list(children.get(v, ())) for v in
                        set(parent) | {root} | set(children)},
                       pointed, marked, spine_unbounded)


def segment_tree(length: float, *, unbounded=False) -> PointedTree:
    """The 1-pointed segment [0, length] rooted at 0."""
    if length == 0.0:
        t = PointedTree(0, {}, {}, {0: []}, (0, 0), marked={0},
                        spine_unbounded=unbounded)
        return t
    return PointedTree(0, {1: 0}, {1: length}, {0: [1], 1: []}, (0, 1),
                       marked={0, 1}, spine_unbounded=unbounded)


def contract_simple(tree: PointedTree) -> PointedTree:
    """Merge non-root, non-pointed pass-through vertices into their edges.

    Vertices on the marked-set boundary are kept so marks stay exact.
    """
    keep_special = set(tree.pointed)
    t = tree.copy()
    changed = True
    while changed:
        changed = False
        for v in list(t.parent):
            cs = t.children.get(v, [])
            if len(cs) != 1 or v in keep_special:
                continue
            if t.marked is not None:
                c = cs[0]
                in_m = v in t.marked
                if in_m != (c in t.marked) or in_m != (t.parent[v] in t.marked):
                    continue
            c = cs[0]
            p = t.parent[v]
            t.length[c] = t.length[v] + t.length[c]
            t.parent[c] = p
            pcs = t.children[p]
            pcs[pcs.index(v)] = c
            del t.parent[v], t.length[v], t.children[v]
            if t.marked is not None and v in t.marked:
                t.marked = t.marked - {v}
            changed = True
    t._height = None
    return t


# -- span, projection, branch tables -----------------------------------


def span_vertices(tree: PointedTree) -> set:
    """Vertices on the union of root-to-pointed paths (uncontracted)."""
    out = set()
    for v in tree.pointed:
        for x in tree.path_to_root(v):
            if x in out:
                break
            out.add(x)
    return out


def span(tree: PointedTree) -> PointedTree:
    """The sub-tree spanned by the root and the pointed vertices."""
    keep = span_vertices(tree)
    parent = {v: p for v, p in tree.parent.items() if v in keep}
    length = {v: tree.length[v] for v in parent}
    children = {v: [c for c in tree.children.get(v, ()) if c in keep]
                for v in keep}
    sub = PointedTree(tree.root, parent, length, children, tree.pointed)
    return contract_simple(sub)


def project(tree: PointedTree, y):
    """Projection of vertex y on the span; returns (vertex, height)."""
    sp = span_vertices(tree)
    for x in tree.path_to_root(y):
        if x in sp:
            return x, tree.height(x)
    raise AssertionError("root is always on the span")


def _pointed_masks(tree: PointedTree):
    """Vertex -> bitmask of pointed leaves it is an ancestor of."""
    masks = {v: 0 for v in tree.vertices()}
    for k in range(1, len(tree.pointed)):
        bit = 1 << (k - 1)
        for x in tree.path_to_root(tree.pointed[k]):
            if masks[x] & bit:
                break
            masks[x] |= bit
    return masks


def mrca_table(tree: PointedTree):
    """For every nonempty subset A of {1..n}: (v_A, w_A, branch length).

    v_A is the most recent common ancestor of the pointed vertices in A;
    w_A is the deepest point of [root, v_A] shared with the paths to the
    complement (w_A = v_A when the subtree above v_A meets them).
    """
    n = tree.n_pointed
    masks = _pointed_masks(tree)
    table = {}
    for a in range(1, 1 << n):
        k0 = (a & -a).bit_length()  # lowest leaf index in A
        v = tree.pointed[k0]
        while masks[v] & a != a:
            v = tree.parent[v]
        if masks[v] != a:
            w = v
        else:
            w = v
            while masks[w] == a:
                w = tree.parent[w]
        table[a] = (v, w, tree.height(v) - tree.height(w))
    return table


@dataclass(frozen=True)
class BranchCode:
    """Branch lengths of the span, indexed by nonempty subsets of {1..n}."""

    n: int
    lengths: tuple

    def __post_init__(self):
        if len(self.lengths) != (1 << self.n) - 1:
            raise ValueError("lengths must have 2^n - 1 entries")

    def length_of(self, mask: int) -> float:
        return self.lengths[mask - 1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.lengths)

    def total(self) -> float:
        return float(sum(self.lengths))


def code_L(tree: PointedTree) -> BranchCode:
    """The branch-length coding of the span of a pointed tree."""
    n = tree.n_pointed
    tbl = mrca_table(tree)
    return BranchCode(n, tuple(tbl[a][2] for a in range(1, 1 << n)))


def code_D(code: BranchCode) -> np.ndarray:
    """Pointed distance matrix of a branch code ((n+1) x (n+1), row 0 = root)."""
    n = code.n
    d = np.zeros((n + 1, n + 1))
    for a in range(1, 1 << n):
        la = code.length_of(a)
        if la == 0.0:
            continue
        for i in range(n + 1):
            in_i = i > 0 and (a >> (i - 1)) & 1
            for j in range(i + 1, n + 1):
                in_j = (a >> (j - 1)) & 1
                if bool(in_i) != bool(in_j):
                    d[i, j] += la
    return d + d.T


def matrix_L(d: np.ndarray, tol: float = 1e-9) -> BranchCode:
    """Branch code from a pointed distance matrix (four-point required).

    L_A(d) = 1/4 min over i,j in A, i',j' in A^c of
             (d_ii' + d_ij' + d_ji' + d_jj' - 2 d_ij - 2 d_i'j')_+ .
    """
    ok, witness = four_point_check(d, tol)
    if not ok:
        raise ValueError(f"matrix violates the four-point condition at {witness}")
    m = d.shape[0]
    n = m - 1
    lengths = []
    for a in range(1, 1 << n):
        ins = [i for i in range(1, m) if (a >> (i - 1)) & 1]
        outs = [i for i in range(m) if i == 0 or not (a >> (i - 1)) & 1]
        best = math.inf
        for i in ins:
            for j in ins:
                for ip in outs:
                    for jp in outs:
                        v = (d[i, ip] + d[i, jp] + d[j, ip] + d[j, jp]
                             - 2.0 * d[i, j] - 2.0 * d[ip, jp])
                        if v < best:
                            best = v
        lengths.append(max(best, 0.0) / 4.0)
    return BranchCode(n, tuple(lengths))


def four_point_check(d: np.ndarray, tol: float = 1e-9):
    """Four-point condition with witness; repeats cover the triangle inequality."""
    d = np.asarray(d, dtype=float)
    m = d.shape[0]
    if d.shape != (m, m) or not np.allclose(d, d.T, atol=tol):
        return False, "not symmetric"
    if np.any(np.abs(np.diag(d)) > tol) or np.any(d < -tol):
        return False, "diagonal/negativity"
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    lhs = d[i, j] + d[k, l]
                    if lhs > max(d[i, k] + d[j, l], d[i, l] + d[j, k]) + tol:
                        return False, (i, j, k, l)
    return True, None


def tree_from_distances(d: np.ndarray, tol: float = 1e-9) -> PointedTree:
    """Discrete pointed tree realizing a four-point distance matrix.

    Leaf-insertion construction: vertex k attaches on the path to the
    already-inserted vertex sharing the deepest common ancestor with it.
    """
    ok, witness = four_point_check(d, tol)
    if not ok:
        raise ValueError(f"matrix violates the four-point condition at {witness}")
    n = d.shape[0] - 1
    root = 0
    parent, length, children = {}, {}, {root: []}
    heights = {root: 0.0}
    nxt = [1]
    pointed = [root]

    def new_vertex(p, ln):
        v = nxt[0]
        nxt[0] += 1
        parent[v] = p
        length[v] = ln
        children[v] = []
        children[p].append(v)
        heights[v] = heights[p] + ln
        return v

    def vertex_at(leaf, h):
        """Vertex at height h on [root, leaf], splitting an edge if needed."""
        path = []
        v = leaf
        while True:
            path.append(v)
            if v == root:
                break
            v = parent[v]
        for v in path:
            if heights[v] == h:
                return v
        # path is deepest-first; find the edge crossing h
        for v in path:
            if v != root and heights[parent[v]] < h < heights[v]:
                p = parent[v]
                mid = nxt[0]
                nxt[0] += 1
                parent[mid] = p
                length[mid] = h - heights[p]
                heights[mid] = h
                children[mid] = [v]
                children[p][children[p].index(v)] = mid
                parent[v] = mid
                length[v] = heights[v] - h
                return mid
        raise ValueError("height not on path")

    for k in range(1, n + 1):
        hk = d[0, k]
        if k == 1 or not pointed[1:]:
            vk = new_vertex(root, hk) if hk > 0 else root
        else:
            share = [(d[0, k] + d[0, j] - d[j, k]) / 2.0 for j in range(1, k)]
            j_star = int(np.argmax(share)) + 1
            a = max(0.0, min(share[j_star - 1], hk, d[0, j_star]))
            base = vertex_at(pointed[j_star], a)
            vk = new_vertex(base, hk - a) if hk - a > 0 else base
        pointed.append(vk)
    return PointedTree(root, parent, length, children, tuple(pointed))


def tree_from_code(code: BranchCode) -> PointedTree:
    return tree_from_distances(code_D(code))


# -- the Graft ordering and Split/Graft pair ----------------------------


def _subset_key(mask: int):
    """Sort key for the peel order: prefix ranks above its extensions."""
    bits = tuple(i + 1 for i in range(mask.bit_length()) if (mask >> i) & 1)
    return bits + (math.inf,)


def graft_order(code: BranchCode):
    """Subset processing order for Graft: list of (A, B, length_A).

    Computed by backward leaf-peeling of the coded span: repeatedly
    remove the key-maximal subset sitting at a maximal position of the
    current partial span.  B names the attach vertex (0 stands for the
    root) among the root and subsets placed earlier.
    """
    s = tree_from_code(code)
    tbl = mrca_table(s)
    n = code.n
    pos = {a: tbl[a][0] for a in range(1, 1 << n)}
    anc = {v: set(s.path_to_root(v)[1:]) for v in s.vertices()}
    present = set(pos)
    removed = []
    while present:
        occupied = {pos[a] for a in present}
        cands = [a for a in present
                 if not any(pos[a] in anc[o] for o in occupied if o != pos[a])]
        a_star = max(cands, key=_subset_key)
        removed.append(a_star)
        present.discard(a_star)
    order = list(reversed(removed))
    out = []
    placed = []
    for a in order:
        w = tbl[a][1]
        if w == s.root:
            b = 0
        else:
            earlier = [bb for bb in placed if pos[bb] == w]
            if not earlier:
                raise AssertionError("peel order left an attach vertex unplaced")
            b = max(earlier, key=_subset_key)
        out.append((a, b, tbl[a][2]))
        placed.append(a)
    return out


def split_n(tree: PointedTree):
    """Decompose a pointed tree along its span branches.

    Returns a dict keyed by subset bitmask (plus key 0 for the bushes at
    the root).  Component A is rooted at w_A, 1-pointed at v_A, with the
    span segment [w_A, v_A] as its marked spine, and carries everything
    whose projection falls in the half-open branch above w_A.
    """
    n = tree.n_pointed
    masks = _pointed_masks(tree)
    tbl = mrca_table(tree)
    sp = span_vertices(tree)
    comp_of = {}
    for v in tree.vertices():
        p = v
        while p not in sp:
            p = tree.parent[p]
        comp_of[v] = 0 if p == tree.root else masks[p]
    out = {}
    for a in list(range(1, 1 << n)) + [0]:
        if a == 0:
            rt = tree.root
            vs = [v for v in tree.vertices() if comp_of[v] == 0 and v != rt]
            pt = (rt, rt)
            spine = {rt}
        else:
            va, wa, la = tbl[a]
            rt = wa
            if la == 0.0:
                out[a] = PointedTree(rt, {}, {}, {rt: []}, (rt, rt),
                                     marked={rt}, spine_unbounded=True)
                continue
            vs = [v for v in tree.vertices() if comp_of[v] == a]
            pt = (wa, va)
            spine = {wa}
            x = va
            while x != wa:
                spine.add(x)
                x = tree.parent[x]
        keep = set(vs) | {rt}
        parent = {v: tree.parent[v] for v in vs}
        length = {v: tree.length[v] for v in vs}
        children = {v: [c for c in tree.children.get(v, ()) if c in keep]
                    for v in keep}
        out[a] = PointedTree(rt, parent, length, children, pt,
                             marked=spine & keep, spine_unbounded=(a != 0))
    return out


def _attach_copy(dst: PointedTree, at, src: PointedTree, remap_base: int):
    """Copy src (minus its root) under vertex ``at`` of dst; returns id map."""
    idmap = {src.root: at}
    counter = [remap_base]
    order = [src.root]
    i = 0
    while i < len(order):
        for c in src.children.get(order[i], ()):
            order.append(c)
        i += 1
    for v in order[1:]:
        nid = counter[0]
        counter[0] += 1
        idmap[v] = nid
        dst.parent[nid] = idmap[src.parent[v]]
        dst.length[nid] = src.length[v]
        dst.children[nid] = []
        dst.children[idmap[src.parent[v]]].append(nid)
    return idmap, counter[0]


def graft_n(code_or_tree, components) -> PointedTree:
    """Rebuild a pointed tree from its span code and spine-marked components.

    ``components`` maps each nonempty subset bitmask to a marked tree
    whose spine is at least as long as the coded branch (or flagged
    unbounded); the component is read through the spine truncation at
    the branch length, so material above it is ignored.  Inverse of
    ``split_n`` (composed with the span) on trees whose root is not a
    branching vertex.
    """
    code = code_or_tree if isinstance(code_or_tree, BranchCode) \
        else code_L(code_or_tree)
    order = graft_order(code)
    out = PointedTree(0, {}, {}, {0: []}, (0,))
    vertex_of = {0: 0}
    next_id = 1
    for a, b, la in order:
        comp = components.get(a)
        base = vertex_of[b]
        if comp is None:
            if la != 0.0:
                raise ValueError(f"missing component for subset {a:b}")
            vertex_of[a] = base
            continue
        piece = truncate2_plus(comp, la)
        spine_tip = piece.pointed[1]
        if abs(piece.height(spine_tip) - la) > 1e-9 * max(1.0, la):
            raise ValueError(f"component for subset {a:b} shorter than {la}")
        idmap, next_id = _attach_copy(out, base, piece, next_id)
        vertex_of[a] = idmap[spine_tip]
    n = code.n
    pointed = [0] + [vertex_of[1 << (k - 1)] for k in range(1, n + 1)]
    out.pointed = tuple(pointed)
    out._height = None
    return out


def graft_at(tree: PointedTree, i: int, h: float, side: str,
             other: PointedTree) -> PointedTree:
    """Graft ``other`` on the branch [root, v_i] at height h.

    ``side`` is 'g' (left) or 'd' (right): it fixes where the grafted
    pointed vertices enter the pointed order (before/after slot i) and
    the planar child order at the attach point.
    """
    if side not in ("g", "d"):
        raise ValueError("side must be 'g' or 'd'")
    if not 1 <= i <= tree.n_pointed:
        raise ValueError(f"pointed index {i} out of range")
    t = tree.copy()
    vi = t.pointed[i]
    hi = t.height(vi)
    if h > hi + 1e-12:
        raise ValueError(f"graft height {h} above the pointed vertex at {hi}")
    h = min(h, hi)
    # locate/insert the attach vertex on the path
    path = t.path_to_root(vi)
    x = None
    upward = None
    for v in path:
        hv = t.height(v)
        if abs(hv - h) <= 1e-12 * max(1.0, hv):
            x = v
            idx = path.index(v)
            upward = path[idx - 1] if idx > 0 else None
            break
    if x is None:
        for v in path:
            if v != t.root and t.height(t.parent[v]) < h < t.height(v):
                p = t.parent[v]
                mid = t.fresh_id()
                t.parent[mid] = p
                t.length[mid] = h - t.height(p)
                t.children[mid] = [v]
                t.children[p][t.children[p].index(v)] = mid
                t.length[v] = t.height(v) - h
                t.parent[v] = mid
                t._height = None
                x = mid
                upward = v
                break
    if x is None:
        raise ValueError("attach height not on the branch")
    old_children = list(other.children.get(other.root, ()))
    idmap, _ = _attach_copy(t, x, other, t.fresh_id())
    new_top = [idmap[c] for c in old_children]
    if upward is not None:
        cs = t.children[x]
        for c in new_top:
            cs.remove(c)
        at = cs.index(upward)
        if side == "g":
            t.children[x] = cs[:at] + new_top + cs[at:]
        else:
            t.children[x] = cs[:at + 1] + new_top + cs[at + 1:]
    new_pointed = [idmap[v] for v in other.pointed[1:]]
    pt = list(t.pointed)
    if side == "g":
        pt = pt[:i] + new_pointed + pt[i:]
    else:
        pt = pt[:i + 1] + new_pointed + pt[i + 1:]
    t.pointed = tuple(pt)
    t._height = None
    return t


# -- truncations ---------------------------------------------------------


def truncate(tree: PointedTree, t: float) -> PointedTree:
    """Height truncation keeping the whole span regardless of t."""
    sp = span_vertices(tree)
    h = tree.heights()
    keep = {v for v in tree.vertices() if h[v] <= t or v in sp}
    out = tree.copy()
    marked = set(out.marked) if out.marked is not None else None
    # drop vertices not kept, inserting cut leaves on crossing edges
    order = sorted(tree.parent, key=lambda v: h[v])
    for v in order:
        if v in keep:
            continue
        p = tree.parent[v]
        if p not in keep:
            continue  # whole subtree vanishes with its top
        if v not in out.parent:
            continue
        if h[p] < t:
            cut = out.fresh_id()
            out.parent[cut] = p
            out.length[cut] = t - h[p]
            out.children[cut] = []
            out.children[p][out.children[p].index(v)] = cut
            if marked is not None and v in tree.marked:
                marked.add(cut)
        else:
            out.children[p].remove(v)
        stack = [v]
        while stack:
            u = stack.pop()
            stack.extend(out.children.pop(u, ()))
            out.parent.pop(u, None)
            out.length.pop(u, None)
            if marked is not None:
                marked.discard(u)
    out.marked = frozenset(marked) if marked is not None else None
    out._height = None
    return out


def _spine_path(tree: PointedTree):
    """The marked spine as a root-to-tip vertex list (marks must be a path)."""
    if tree.marked is None:
        raise ValueError("tree has no marked spine")
    tip = None
    deepest = -1.0
    for v in tree.marked:
        hv = tree.height(v)
        if hv > deepest:
            deepest, tip = hv, v
    path = [x for x in tree.path_to_root(tip)][::-1]
    if set(path) != set(tree.marked):
        raise ValueError("marked set is not a single branch")
    return path


def _spine_vertex_at(t: PointedTree, h: float):
    """Vertex of the marked spine at height h (insert/extend as needed)."""
    path = _spine_path(t)
    for v in path:
        if abs(t.height(v) - h) <= 1e-12 * max(1.0, h):
            return v
    for v in path[1:]:
        if t.height(t.parent[v]) < h < t.height(v):
            p = t.parent[v]
            mid = t.fresh_id()
            t.parent[mid] = p
            t.length[mid] = h - t.height(p)
            t.children[mid] = [v]
            t.children[p][t.children[p].index(v)] = mid
            t.parent[v] = mid
            t.length[v] = t.height(v) - h
            t.marked = t.marked | {mid}
            t._height = None
            return mid
    top = path[-1]
    if t.height(top) < h:
        if not t.spine_unbounded:
            raise ValueError("spine shorter than requested height")
        ext = t.fresh_id()
        t.parent[ext] = top
        t.length[ext] = h - t.height(top)
        t.children[ext] = []
        t.children.setdefault(top, []).append(ext)
        t.marked = t.marked | {ext}
        t._height = None
        return ext
    raise ValueError("no spine vertex at requested height")


def _truncate_spine(tree: PointedTree, a: float, strict: bool) -> PointedTree:
    t = tree.copy()
    tip = _spine_vertex_at(t, a)
    spine = set(_spine_path(t))
    h = t.heights()

    def proj_height(v):
        while v not in spine:
            v = t.parent[v]
        return h[v]

    keep = set()
    for v in t.vertices():
        ph = proj_height(v)
        if ph < a or (not strict and ph <= a):
            keep.add(v)
    keep.add(tip)
    for v in list(spine):
        if h[v] <= a:
            keep.add(v)
    drop = [v for v in t.vertices() if v not in keep]
    for v in drop:
        p = t.parent.get(v)
        if p in keep and v in t.children.get(p, ()):
            t.children[p].remove(v)
        t.parent.pop(v, None)
        t.length.pop(v, None)
        t.children.pop(v, None)
    t.marked = frozenset(v for v in t.marked if v in keep)
    t.pointed = (t.root, tip)
    t.spine_unbounded = False
    t._height = None
    return t


def truncate2_plus(tree: PointedTree, a: float) -> PointedTree:
    """Spine truncation keeping bushes attached at spine height <= a."""
    return _truncate_spine(tree, a, strict=False)


def truncate2_minus(tree: PointedTree, a: float) -> PointedTree:
    """Spine truncation keeping bushes attached strictly below a."""
    return _truncate_spine(tree, a, strict=True)


def clean_root(tree: PointedTree) -> PointedTree:
    """Erase the bushes hanging at the root off the marked subtree."""
    if tree.marked is None:
        raise ValueError("clean_root needs a marked tree")
    t = tree.copy()
    spine = set(t.marked)

    def proj(v):
        while v not in spine:
            v = t.parent[v]
        return v

    drop = [v for v in t.vertices() if v != t.root and proj(v) == t.root]
    dropset = set(drop)
    for v in drop:
        p = t.parent.get(v)
        if p is not None and p not in dropset and v in t.children.get(p, ()):
            t.children[p].remove(v)
        t.parent.pop(v, None)
        t.length.pop(v, None)
        t.children.pop(v, None)
    t._height = None
    return t


# -- decoration measures -------------------------------------------------


def tree_from_measure(atoms, spine_height: float | None = None) -> PointedTree:
    """Graft subtrees at given heights on an (unbounded) marked spine.

    ``atoms`` is a list of (height, subtree) pairs; heights must be >= 0.
    """
    for h, _sub in atoms:
        if h < 0:
            raise ValueError("atom heights must be >= 0")
    top = max([h for h, _ in atoms], default=0.0)
    if spine_height is not None:
        top = max(top, spine_height)
    t = segment_tree(top, unbounded=True)
    t.pointed = (t.root,) if top == 0.0 else (t.root, 1)
    next_id = t.fresh_id()
    for h, sub in sorted(atoms, key=lambda p: p[0]):
        at = _spine_vertex_at(t, h)
        _, next_id = _attach_copy(t, at, sub, next_id)
    tip = max(set(_spine_path(t)), key=t.height)
    t.pointed = (t.root, tip) if tip != t.root else (t.root,)
    return t


def measure_from_tree(tree: PointedTree):
    """Atoms (attach height, subtree) of the decoration of the marked spine."""
    spine = set(_spine_path(tree))
    atoms = []
    for v in sorted(spine, key=tree.height):
        for c in tree.children.get(v, ()):
            if c in spine:
                continue
            sub_vertices = []
            stack = [c]
            while stack:
                u = stack.pop()
                sub_vertices.append(u)
                stack.extend(tree.children.get(u, ()))
            parent = {u: tree.parent[u] for u in sub_vertices if u != v}
            parent[c] = v
            length = {u: tree.length[u] for u in sub_vertices}
            children = {u: list(tree.children.get(u, ())) for u in sub_vertices}
            children[v] = [c]
            sub = PointedTree(v, parent, length, children, (v,))
            atoms.append((tree.height(v), sub))
    return atoms


# -- growth, length measure ----------------------------------------------


def growth_n(tree: PointedTree, h: float) -> PointedTree:
    """Extend every pointed vertex by a branch of length h (order kept)."""
    if h == 0.0:
        return tree.copy()
    t = tree.copy()
    new_pointed = [t.root]
    nid = t.fresh_id()
    for v in t.pointed[1:]:
        t.parent[nid] = v
        t.length[nid] = h
        t.children[nid] = []
        t.children.setdefault(v, []).append(nid)
        new_pointed.append(nid)
        nid += 1
    t.pointed = tuple(new_pointed)
    t._height = None
    return t


def length_measure_total(tree: PointedTree) -> float:
    return float(sum(tree.length.values()))


def sample_length_point(tree: PointedTree, density, stream):
    """Point of the tree drawn proportionally to density(height) d(length).

    ``density`` exposes ``cdf``/``ppf`` (a ``HeightDensity``); ``None``
    means the uniform length measure.  Returns (edge child id, height).
    """
    h = tree.heights()
    edges = [(v, h[tree.parent[v]], h[v]) for v in tree.parent]
    if not edges:
        raise ValueError("tree has zero total length")
    if density is None:
        weights = np.array([hi - lo for _, lo, hi in edges])
    else:
        weights = np.array([density.cdf(hi) - density.cdf(lo)
                            for _, lo, hi in edges])
    total = weights.sum()
    if total <= 0:
        raise ValueError("length measure has zero mass under the density")
    gen = stream.generator
    e = int(gen.choice(len(edges), p=weights / total))
    v, lo, hi = edges[e]
    q = gen.random()
    if density is None:
        return v, lo + q * (hi - lo)
    target = density.cdf(lo) + q * (density.cdf(hi) - density.cdf(lo))
    return v, float(density.ppf(target))


# -- canonical forms and serialization ------------------------------------


def canonical_key(tree: PointedTree):
    """Complete invariant of the pointed/marked isometry class.

    Recursively sorted child keys; planar order is deliberately not part
    of the key (planarity is compared separately where it matters).
    """
    slots = {}
    for k, v in enumerate(tree.pointed):
        slots.setdefault(v, []).append(k)
    t = contract_simple(tree)

    def key(v):
        cs = sorted((t.length[c], key(c)) for c in t.children.get(v, ()))
        mark = t.marked is not None and v in t.marked
        return (tuple(slots.get(v, ())), mark, tuple(cs))

    return key(t.root)


def trees_equivalent(a: PointedTree, b: PointedTree) -> bool:
    return canonical_key(a) == canonical_key(b)


def to_text(tree: PointedTree) -> str:
    """Line-oriented serialization; one vertex per line, DFS order.

    ``id parent length flags`` with '-' placeholders; flags are comma
    separated: p<k> marks pointed slot k, m marks membership in the
    marked subtree.  Planar (child) order is the line order.
    """
    lines = ["#qcsbp-tree v1"]
    if tree.spine_unbounded:
        lines.append("!unbounded")
    slots = {}
    for k, v in enumerate(tree.pointed):
        slots.setdefault(v, []).append(k)

    def flags(v):
        f = [f"p{k}" for k in slots.get(v, ())]
        if tree.marked is not None and v in tree.marked:
            f.append("m")
        return ",".join(f) if f else "-"

    stack = [tree.root]
    while stack:
        v = stack.pop()
        if v == tree.root:
            lines.append(f"{v} - - {flags(v)}")
        else:
            lines.append(f"{v} {tree.parent[v]} {tree.length[v]:.17g} {flags(v)}")
        for c in reversed(tree.children.get(v, ())):
            stack.append(c)
    return "\n".join(lines) + "\n"


def from_text(text: str) -> PointedTree:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#qcsbp-tree"):
        raise ValueError("not a qcsbp tree file")
    unbounded = False
    body = []
    for ln in lines[1:]:
        if ln == "!unbounded":
            unbounded = True
        elif not ln.startswith("#"):
            body.append(ln)
    parent, length, children, slots = {}, {}, {}, {}
    root = None
    any_marked = False
    marked = set()
    for ln in body:
        sid, spar, slen, sflags = ln.split()
        v = int(sid)
        children.setdefault(v, [])
        if spar == "-":
            root = v
        else:
            p = int(spar)
            parent[v] = p
            length[v] = float(slen)
            children.setdefault(p, []).append(v)
        if sflags != "-":
            for tok in sflags.split(","):
                if tok == "m":
                    marked.add(v)
                    any_marked = True
                else:
                    slots.setdefault(int(tok[1:]), []).append(v)
    if root is None:
        raise ValueError("no root line")
    pointed = tuple(slots[k][0] for k in sorted(slots))
    if not pointed or pointed[0] != root:
        pointed = (root,) + pointed if not pointed or slots.get(0, [root])[0] != root \
            else pointed
    return PointedTree(root, parent, length, children, pointed,
                       marked=marked if any_marked else None,
                       spine_unbounded=unbounded)

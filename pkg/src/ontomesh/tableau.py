"""One peer's chunk of the distributed completion graph.

The graph holds this unit's nodes and edges, expands them with the usual
rules (conjunction, disjunction, value and number restrictions, the
internalization rule, transitivity chains), detects clashes, blocks, and
backtracks chronologically through recorded branch points.  Cross-peer
work is emitted as projection obligations: the caller decides how they are
shipped and feeds the outcomes back in.

Link successors are created locally in this chunk (the foreign filler goes
into the foreign part of the new node's label) and reach the neighbor peer
through projection, so a branch expands entirely locally before any
message leaves.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

from .model import (
    And,
    Atom,
    AtLeast,
    AtMost,
    Bottom,
    Concept,
    DistributedKB,
    Exists,
    ForAll,
    Not,
    Or,
    Property,
    Top,
    UnitId,
    neg,
    nnf,
    subconcepts,
)

NodeId = int


class BudgetExceeded(Exception):
    """Node budget ran out; reported as inconclusive, never as a verdict."""


class Aborted(Exception):
    """A stop request cancelled this expansion at a rule boundary."""


class Outcome(Enum):
    COMPLETE = "complete"
    UNSATISFIABLE = "unsatisfiable"


@dataclass
class ClashInfo:
    node: NodeId
    reason: str


@dataclass
class Blocked:
    kind: str  # "direct" | "indirect" | "none"

    def __bool__(self):
        return self.kind != "none"


@dataclass
class CorrState:
    """Projection bookkeeping of one node toward one foreign unit."""

    target_individual: str | None = None  # named individual at the far side
    requester: tuple[str, object] | None = None  # (peer, remote node) for projected nodes
    sent_fragment: tuple[Concept, ...] | None = None

    def clone(self):
        return CorrState(self.target_individual, self.requester,
                         self.sent_fragment)


class Node:
    __slots__ = ("id", "unit", "label", "origin", "parent", "distinct", "corr")

    def __init__(self, id: NodeId, unit: UnitId, origin: tuple,
                 parent: NodeId | None = None):
        self.id = id
        self.unit = unit
        self.label: set[Concept] = set()
        self.origin = origin
        self.parent = parent
        self.distinct: set[NodeId] = set()
        self.corr: dict[UnitId, CorrState] = {}

    @property
    def generated(self) -> bool:
        return self.origin[0] == "generated"

    @property
    def projected(self) -> bool:
        return self.origin[0] == "projected"

    def clone(self) -> "Node":
        n = Node(self.id, self.unit, self.origin, self.parent)
        n.label = set(self.label)
        n.distinct = set(self.distinct)
        n.corr = {u: c.clone() for u, c in self.corr.items()}
        return n

    def sorted_label(self) -> list[Concept]:
        return sorted(self.label, key=lambda c: c.key())


@dataclass
class Obligation:
    node: NodeId
    dest_unit: UnitId
    fragment: tuple[Concept, ...]
    target_individual: str | None


@dataclass
class BranchPoint:
    kind: str
    node: NodeId
    alternatives: list  # remaining actions, canonical order
    snapshot: object


class CompletionGraph:
    def __init__(self, kb: DistributedKB, unit: UnitId, max_nodes: int = 4000,
                 max_branches: int = 100_000):
        self.kb = kb
        self.unit = unit
        self.max_nodes = max_nodes
        self.max_branches = max_branches
        self.nodes: dict[NodeId, Node] = {}
        self.out_e: dict[NodeId, dict[NodeId, set[Property]]] = {}
        self.in_e: dict[NodeId, dict[NodeId, set[Property]]] = {}
        self.next_id = 0
        self.branch_stack: list[BranchPoint] = []
        self.branch_count = 0
        self.abort_event = None
        # optional early-clash callback: (graph, node) -> reason or None.
        # Used by the peer layer to fail branches whose projection is
        # already known to clash, before completing them.
        self.clash_oracle = None
        self._rev = 0
        self._block_cache: dict[NodeId, tuple[int, Blocked]] = {}

    # -- construction and mutation -------------------------------------------

    def new_node(self, origin: tuple, parent: NodeId | None = None) -> Node:
        if len(self.nodes) >= self.max_nodes:
            raise BudgetExceeded(f"more than {self.max_nodes} nodes")
        node = Node(self.next_id, self.unit, origin, parent)
        self.next_id += 1
        self.nodes[node.id] = node
        self.out_e[node.id] = {}
        self.in_e[node.id] = {}
        self._rev += 1
        return node

    def add_label(self, node: NodeId, c: Concept) -> bool:
        if c in self.nodes[node].label:
            return False
        self.nodes[node].label.add(c)
        self._rev += 1
        return True

    def add_edge(self, a: NodeId, b: NodeId, prop: Property) -> bool:
        if prop.inverted:
            a, b, prop = b, a, prop.inverse()
        labels = self.out_e[a].setdefault(b, set())
        if prop in labels:
            return False
        labels.add(prop)
        self.in_e[b].setdefault(a, set()).add(prop)
        self._rev += 1
        return True

    def set_distinct(self, a: NodeId, b: NodeId):
        if a != b:
            self.nodes[a].distinct.add(b)
            self.nodes[b].distinct.add(a)
            self._rev += 1

    # -- snapshots -------------------------------------------------------------

    def snapshot(self):
        return (
            {i: n.clone() for i, n in self.nodes.items()},
            {i: {j: set(s) for j, s in d.items()} for i, d in self.out_e.items()},
            {i: {j: set(s) for j, s in d.items()} for i, d in self.in_e.items()},
            self.next_id,
        )

    def restore(self, snap):
        nodes, out_e, in_e, next_id = snap
        self.nodes = {i: n.clone() for i, n in nodes.items()}
        self.out_e = {i: {j: set(s) for j, s in d.items()} for i, d in out_e.items()}
        self.in_e = {i: {j: set(s) for j, s in d.items()} for i, d in in_e.items()}
        self.next_id = next_id
        self._rev += 1
        self._block_cache.clear()

    def clone(self) -> "CompletionGraph":
        g = CompletionGraph(self.kb, self.unit, self.max_nodes,
                            self.max_branches)
        g.nodes = {i: n.clone() for i, n in self.nodes.items()}
        g.out_e = {i: {j: set(s) for j, s in d.items()}
                   for i, d in self.out_e.items()}
        g.in_e = {i: {j: set(s) for j, s in d.items()}
                  for i, d in self.in_e.items()}
        g.next_id = self.next_id
        g.branch_stack = [BranchPoint(bp.kind, bp.node, list(bp.alternatives),
                                      bp.snapshot)
                          for bp in self.branch_stack]
        g.branch_count = self.branch_count
        g.clash_oracle = self.clash_oracle
        return g

    # -- label parts ------------------------------------------------------------

    def parts(self, node: NodeId) -> dict[UnitId, set[Concept]]:
        out: dict[UnitId, set[Concept]] = {}
        for c in self.nodes[node].label:
            out.setdefault(c.home, set()).add(c)
        return out

    def foreign_part(self, node: NodeId) -> set[Concept]:
        return {c for c in self.nodes[node].label if c.home != self.unit}

    def fragment(self, node: NodeId) -> tuple[Concept, ...]:
        return tuple(sorted(self.foreign_part(node), key=lambda c: c.key()))

    # -- successor machinery ------------------------------------------------------

    def successors(self, x: NodeId, p: Property) -> list[NodeId]:
        """Nodes reachable from x over p: p-successors for links, and
        p-neighbors (inverse traversal included) for roles."""
        out = set()
        for y, labels in self.out_e[x].items():
            for q in labels:
                if p in self.kb.subsumers(q):
                    out.add(y)
        if p.is_role:
            for y, labels in self.in_e[x].items():
                for q in labels:
                    if q.is_role and p in self.kb.subsumers(q.inverse()):
                        out.add(y)
        return sorted(out)

    def forall_targets(self, x: NodeId, p: Property) -> list[NodeId]:
        """Targets of a value restriction on p.  A name punned as role and
        link propagates across both edge kinds; the filler lands in the
        part of the target label matching its own home unit."""
        out = set()
        variants = {p} if p.inverted else self.kb.punned_variants(p)
        for v in variants:
            out.update(self.successors(x, v))
        return sorted(out)

    # -- blocking ------------------------------------------------------------------

    def blocked(self, x: NodeId) -> Blocked:
        cached = self._block_cache.get(x)
        if cached and cached[0] == self._rev:
            return cached[1]
        status = self._blocked_uncached(x)
        self._block_cache[x] = (self._rev, status)
        return status

    def _blocked_uncached(self, x: NodeId) -> Blocked:
        node = self.nodes[x]
        anc = node.parent
        while anc is not None:
            if self._directly_blocked(anc):
                return Blocked("indirect")
            anc = self.nodes[anc].parent
        if self._directly_blocked(x):
            return Blocked("direct")
        return Blocked("none")

    def _directly_blocked(self, x: NodeId) -> bool:
        node = self.nodes[x]
        if node.projected:
            for y, other in sorted(self.nodes.items()):
                if y < x and node.label <= other.label:
                    return True
            return False
        if not node.generated or node.parent is None:
            return False
        xp = node.parent
        x_edge = self._edge_labels(xp, x)
        y = self.nodes[xp].parent
        while y is not None:
            yp = self.nodes[y].parent
            if yp is not None:
                if (self.nodes[y].label == node.label
                        and self.nodes[yp].label == self.nodes[xp].label
                        and self._edge_labels(yp, y) == x_edge):
                    return True
            y = self.nodes[y].parent
        return False

    def _edge_labels(self, a: NodeId, b: NodeId) -> frozenset[Property]:
        return frozenset(self.out_e.get(a, {}).get(b, set()))

    # -- clash detection ---------------------------------------------------------

    def detect_clash(self, x: NodeId) -> ClashInfo | None:
        label = self.nodes[x].label
        for c in label:
            if isinstance(c, Bottom):
                return ClashInfo(x, "bottom in label")
            if isinstance(c, Atom) and Not(c) in label:
                return ClashInfo(x, f"{c.key()} and its negation")
        if self.clash_oracle is not None and not self.blocked(x):
            reason = self.clash_oracle(self, x)
            if reason:
                return ClashInfo(x, reason)
        for c in label:
            if isinstance(c, AtMost):
                witnesses = [y for y in self.successors(x, c.prop)
                             if c.filler in self.nodes[y].label]
                if len(witnesses) > c.n:
                    for combo in itertools.combinations(witnesses, c.n + 1):
                        if all(b in self.nodes[a].distinct
                               for a, b in itertools.combinations(combo, 2)):
                            return ClashInfo(
                                x, f"{c.key()} with {c.n + 1} distinct witnesses")
        return None

    def first_clash(self) -> ClashInfo | None:
        for x in sorted(self.nodes):
            info = self.detect_clash(x)
            if info:
                return info
        return None

    # -- diagnostics ------------------------------------------------------------

    def dump(self) -> str:
        lines = []
        for x in sorted(self.nodes):
            n = self.nodes[x]
            mark = ""
            b = self.blocked(x)
            if b:
                mark = f" [{b.kind}ly blocked]"
            lines.append(f"node {x} ({n.origin[0]}){mark}")
            for c in n.sorted_label():
                lines.append(f"  {c.key()}")
            for j in sorted(n.corr):
                st = n.corr[j]
                tgt = st.target_individual or "?"
                lines.append(f"  corr {j}:{tgt}")
        for x in sorted(self.out_e):
            for y in sorted(self.out_e[x]):
                props = ", ".join(sorted(p.key() for p in self.out_e[x][y]))
                lines.append(f"edge {x} -> {y}: {props}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def init_graph(kb: DistributedKB, unit: UnitId, goal: Concept | None = None,
               max_nodes: int = 4000) -> CompletionGraph:
    """Root node plus the unit's ABox skeleton.

    The goal concept, if any, labels the root.  Link assertions produce a
    local placeholder for the foreign individual wired up for projection;
    individual correspondences pre-name the projection target of the local
    node."""
    if goal is not None and goal.home != unit:
        raise ValueError(f"goal lives in {goal.home}, graph belongs to {unit}")
    g = CompletionGraph(kb, unit, max_nodes)
    root = g.new_node(("root",))
    if goal is not None:
        g.add_label(root.id, nnf(goal))
    ukb = kb.units[unit]
    by_name: dict[str, NodeId] = {}
    for ind in sorted(ukb.individual_names):
        node = g.new_node(("abox", ind))
        by_name[ind] = node.id
    for ind, c in ukb.concept_assertions:
        g.add_label(by_name[ind], nnf(c))
    for a, p, b in ukb.role_assertions:
        g.add_edge(by_name[a], by_name[b], p)
    for a, b in ukb.inequalities:
        g.set_distinct(by_name[a], by_name[b])
    coup = kb.couplings[unit]
    for ic in sorted(coup.individual_correspondences,
                     key=lambda c: (c.local_name, c.foreign_unit, c.foreign_name)):
        node = g.nodes[by_name[ic.local_name]]
        node.corr[ic.foreign_unit] = CorrState(
            target_individual=ic.foreign_name)
    for la in sorted(coup.link_assertions,
                     key=lambda a: (a.local_ind, a.link, a.target_unit,
                                    a.foreign_ind)):
        prop = kb.link_property(unit, la.link)
        placeholder = g.new_node(("foreign", la.target_unit, la.foreign_ind))
        placeholder.corr[la.target_unit] = CorrState(
            target_individual=la.foreign_ind)
        g.add_edge(by_name[la.local_ind], placeholder.id, prop)
    return g


# ---------------------------------------------------------------------------
# the expansion rules
# ---------------------------------------------------------------------------

def apply_ce_rule(g: CompletionGraph, x: NodeId) -> bool:
    """Inject this unit's internalization concept into the label."""
    ck = g.kb.internalization(g.unit)
    return g.add_label(x, ck)


def _and_rule(g: CompletionGraph, x: NodeId):
    for c in g.nodes[x].sorted_label():
        if isinstance(c, And) and not {c.left, c.right} <= g.nodes[x].label:
            return ("add_many", x, [c.left, c.right])
    return None


def branch_order(d: Concept) -> tuple:
    """Canonical exploration order for alternatives: cheapest commitment
    first (literals before anything that can spawn structure), ties broken
    by serialization.  Deterministic, so runs and cache keys reproduce."""
    return (len(subconcepts(d)), d.key())


def _or_rule(g: CompletionGraph, x: NodeId):
    for c in g.nodes[x].sorted_label():
        if isinstance(c, Or) and not {c.left, c.right} & g.nodes[x].label:
            alts = sorted({c.left, c.right}, key=branch_order)
            return ("branch", "or", x, [("add", x, d) for d in alts])
    return None


def _forall_rule(g: CompletionGraph, x: NodeId):
    for c in g.nodes[x].sorted_label():
        if isinstance(c, ForAll):
            for y in g.forall_targets(x, c.prop):
                if c.filler not in g.nodes[y].label:
                    return ("add", y, c.filler)
    return None


def _trans_rule(g: CompletionGraph):
    """Chains over a transitive property collapse into a direct edge; a
    punned transitive name also collapses role chains ending in one link
    step into a direct link edge."""
    for t in sorted(g.kb.transitive_properties(), key=lambda p: p.key()):
        if t.is_role:
            step = {x: g.successors(x, t) for x in g.nodes}
        else:
            role_side = Property(t.name, t.home, t.home)
            step = {x: g.successors(x, role_side) for x in g.nodes}
        for x in sorted(g.nodes):
            reach = set()
            frontier = [(x, 0)]
            seen = {x}
            while frontier:
                cur, depth = frontier.pop()
                for y in step.get(cur, ()):
                    if t.is_role:
                        if depth + 1 >= 2 and y not in reach:
                            reach.add(y)
                        if y not in seen:
                            seen.add(y)
                            frontier.append((y, depth + 1))
                    else:
                        # role chain so far; the final step is a link hop
                        for z in g.successors(y, t):
                            if depth + 1 >= 1:
                                reach.add(z)
                        if y not in seen:
                            seen.add(y)
                            frontier.append((y, depth + 1))
            if not t.is_role:
                # direct link successors need no new edge
                reach -= set(g.successors(x, t))
            for y in sorted(reach):
                if t not in g.out_e.get(x, {}).get(y, set()):
                    return ("edge", x, y, t)
    return None


def _exists_rule(g: CompletionGraph, x: NodeId):
    for c in g.nodes[x].sorted_label():
        if isinstance(c, Exists):
            if not any(c.filler in g.nodes[y].label
                       for y in g.successors(x, c.prop)):
                return ("generate", x, c.prop, [c.filler], False)
    return None


def _atleast_rule(g: CompletionGraph, x: NodeId):
    for c in g.nodes[x].sorted_label():
        if isinstance(c, AtLeast):
            found = [y for y in g.successors(x, c.prop)
                     if c.filler in g.nodes[y].label]
            distinct_count = _max_pairwise_distinct(g, found)
            if distinct_count < c.n:
                return ("generate", x, c.prop, [c.filler] * c.n, True)
    return None


def _max_pairwise_distinct(g: CompletionGraph, nodes: list[NodeId]) -> int:
    best = 0
    for r in range(len(nodes), 0, -1):
        for combo in itertools.combinations(nodes, r):
            if all(b in g.nodes[a].distinct
                   for a, b in itertools.combinations(combo, 2)):
                return r
    return best


def _choose_rule(g: CompletionGraph, x: NodeId):
    for c in g.nodes[x].sorted_label():
        if isinstance(c, (AtLeast, AtMost)):
            for y in g.successors(x, c.prop):
                if not {c.filler, neg(c.filler)} & g.nodes[y].label:
                    alts = sorted({c.filler, neg(c.filler)}, key=branch_order)
                    return ("branch", "choose", y, [("add", y, d) for d in alts])
    return None


def _atmost_rule(g: CompletionGraph, x: NodeId):
    for c in g.nodes[x].sorted_label():
        if isinstance(c, AtMost):
            witnesses = [y for y in g.successors(x, c.prop)
                         if c.filler in g.nodes[y].label]
            if len(witnesses) <= c.n:
                continue
            pairs = []
            for keep, gone in itertools.permutations(witnesses, 2):
                if gone in g.nodes[keep].distinct:
                    continue
                if not _mergeable_away(g, gone):
                    continue
                pairs.append((keep, gone))
            pairs.sort(key=lambda p: (-p[1], p[0]))
            if pairs:
                return ("branch", "merge", x,
                        [("merge", k, m) for k, m in pairs])
    return None


def _mergeable_away(g: CompletionGraph, y: NodeId) -> bool:
    """Merges are confined to nodes that have no projection partner yet
    and are not roots or named individuals."""
    node = g.nodes[y]
    return node.generated and not node.corr


def _merge(g: CompletionGraph, keep: NodeId, gone: NodeId):
    gnode = g.nodes[gone]
    knode = g.nodes[keep]
    knode.label |= gnode.label
    for z in list(gnode.distinct):
        g.nodes[z].distinct.discard(gone)
        g.set_distinct(z, keep)
    for y, labels in list(g.out_e[gone].items()):
        for p in labels:
            if y != gone:
                g.add_edge(keep, y, p)
    for y, labels in list(g.in_e[gone].items()):
        for p in labels:
            if y != gone:
                g.add_edge(y, keep, p)
    for child in g.nodes.values():
        if child.parent == gone:
            child.parent = keep
            child.origin = ("generated", keep)
    for y in list(g.out_e[gone]):
        g.in_e[y].pop(gone, None)
    for y in list(g.in_e[gone]):
        g.out_e[y].pop(gone, None)
    del g.out_e[gone]
    del g.in_e[gone]
    del g.nodes[gone]
    g._rev += 1


# ---------------------------------------------------------------------------
# the engine
# ---------------------------------------------------------------------------

def _find_action(g: CompletionGraph):
    ids = sorted(g.nodes)
    for x in ids:
        if not g.blocked(x) and apply_ce_could(g, x):
            return ("ce", x)
    for x in ids:
        b = g.blocked(x)
        if not b:
            act = _and_rule(g, x)
            if act:
                return act
        if b.kind != "indirect":
            act = _forall_rule(g, x)
            if act:
                return act
    act = _trans_rule(g)
    if act:
        return act
    for x in ids:
        if g.blocked(x):
            continue
        act = _exists_rule(g, x) or _atleast_rule(g, x)
        if act:
            return act
    for x in ids:
        b = g.blocked(x)
        if not b:
            act = _or_rule(g, x) or _choose_rule(g, x)
            if act:
                return act
        if b.kind != "indirect":
            act = _atmost_rule(g, x)
            if act:
                return act
    return None


def apply_ce_could(g: CompletionGraph, x: NodeId) -> bool:
    return g.kb.internalization(g.unit) not in g.nodes[x].label


def _apply_action(g: CompletionGraph, action) -> None:
    kind = action[0]
    if kind == "ce":
        apply_ce_rule(g, action[1])
    elif kind == "add":
        g.add_label(action[1], action[2])
    elif kind == "add_many":
        for c in action[2]:
            g.add_label(action[1], c)
    elif kind == "edge":
        g.add_edge(action[1], action[2], action[3])
    elif kind == "generate":
        _, x, prop, fillers, distinct = action
        created = []
        for filler in fillers:
            node = g.new_node(("generated", x), parent=x)
            g.add_label(node.id, filler)
            g.add_edge(x, node.id, prop)
            created.append(node.id)
        if distinct:
            for a, b in itertools.combinations(created, 2):
                g.set_distinct(a, b)
    elif kind == "merge":
        _merge(g, action[1], action[2])
    elif kind == "branch":
        _, rule, x, alternatives = action
        bp = BranchPoint(rule, x, list(alternatives), g.snapshot())
        first = bp.alternatives.pop(0)
        g.branch_stack.append(bp)
        g.branch_count += 1
        if g.branch_count > g.max_branches:
            raise BudgetExceeded(f"more than {g.max_branches} branches")
        _apply_action(g, first)
    else:
        raise AssertionError(f"unknown action {kind}")


def _backtrack(g: CompletionGraph) -> bool:
    while g.branch_stack:
        bp = g.branch_stack[-1]
        if bp.alternatives:
            g.restore(bp.snapshot)
            nxt = bp.alternatives.pop(0)
            g.branch_count += 1
            if g.branch_count > g.max_branches:
                raise BudgetExceeded(f"more than {g.max_branches} branches")
            _apply_action(g, nxt)
            return True
        g.branch_stack.pop()
    return False


def expand_local(g: CompletionGraph) -> bool:
    """Apply rules to fixpoint with chronological backtracking.  True when
    a clash-free, locally complete state is reached; False when every
    branch closes."""
    while True:
        if g.abort_event is not None and g.abort_event.is_set():
            raise Aborted("expansion abandoned by a stop request")
        clash = g.first_clash()
        if clash is not None:
            if not _backtrack(g):
                return False
            continue
        action = _find_action(g)
        if action is None:
            return True
        _apply_action(g, action)


def collect_obligations(g: CompletionGraph) -> list[Obligation]:
    """Projection duties of the current branch: any unblocked node whose
    label grew a foreign part since the last send.  A named correspondence
    ships the full foreign fragment; an anonymous projection to unit j
    needs a nonempty j-part.  Each obligation carries the full fragment."""
    out = []
    for x in sorted(g.nodes):
        node = g.nodes[x]
        if g.blocked(x):
            continue
        fragment = g.fragment(x)
        if not fragment:
            continue
        parts = g.parts(x)
        dests = {c.home for c in fragment}
        dests.update(u for u, st in node.corr.items()
                     if st.target_individual is not None)
        for j in sorted(dests):
            if j == g.unit:
                continue
            st = node.corr.get(j)
            named = st is not None and st.target_individual is not None
            if not named and not parts.get(j):
                continue
            if st is not None and st.requester is not None:
                continue  # this node mirrors a remote node of unit j already
            if st is not None and st.sent_fragment == fragment:
                continue
            out.append(Obligation(
                x, j, fragment,
                st.target_individual if named else None))
    return out


def apply_pi_update(g: CompletionGraph, node: NodeId,
                    additions: tuple[Concept, ...], direction: str) -> bool:
    """Label maintenance along a correspondence.  Forward feeds a grown
    fragment into the mirrored node; reverse feeds a partner's foreign
    literals back into the source node."""
    assert direction in ("forward", "reverse")
    changed = False
    for c in additions:
        changed |= g.add_label(node, c)
    return changed


def mark_sent(g: CompletionGraph, ob: Obligation):
    node = g.nodes[ob.node]
    st = node.corr.setdefault(ob.dest_unit, CorrState())
    st.sent_fragment = ob.fragment


def poison(g: CompletionGraph, node: NodeId):
    """Force a clash on the node: its projection reported an unsatisfiable
    correspondent, so this branch cannot stand."""
    g.add_label(node, Bottom(g.unit))


def expand_to_completion(g: CompletionGraph, projection_hook=None,
                         reverse_updates: bool = True) -> Outcome:
    """Local fixpoint, then flush projection obligations through the hook
    and fold the responses back in, until nothing changes anywhere.

    The hook takes a list of Obligations and returns a list of
    ('clash', None) or ('additions', tuple-of-literals) outcomes aligned
    with it.  Clash poisons the obligation's source node, which sends the
    engine back into chronological backtracking."""
    while True:
        if not expand_local(g):
            return Outcome.UNSATISFIABLE
        obligations = collect_obligations(g)
        if not obligations or projection_hook is None:
            return Outcome.COMPLETE
        outcomes = projection_hook(obligations)
        clashed = False
        for ob, (verdict, payload) in zip(obligations, outcomes):
            if ob.node not in g.nodes or verdict == "skipped":
                continue
            mark_sent(g, ob)
            if verdict == "clash":
                poison(g, ob.node)
                clashed = True
                break
            if verdict == "additions" and reverse_updates:
                apply_pi_update(g, ob.node, payload, "reverse")
        if clashed:
            continue
        # loop again: new foreign content may have produced new obligations


# ---------------------------------------------------------------------------
# the tableau-property audit
# ---------------------------------------------------------------------------

def audit_complete_graph(g: CompletionGraph, goal: Concept | None = None) -> list[str]:
    """Mechanical check of the distributed-tableau properties on one
    locally complete, clash-free chunk.  Returns human-readable failures;
    empty means the audit passed.

    The cross-peer sharing property is checked against the projection
    bookkeeping: every node with a foreign fragment must have flushed
    exactly its current fragment."""
    kb = g.kb
    problems: list[str] = []
    universe = kb.label_universe(goal)

    def complain(prop: str, msg: str):
        problems.append(f"property {prop}: {msg}")

    for x in sorted(g.nodes):
        node = g.nodes[x]
        label = node.label
        blocked = g.blocked(x)
        for c in label:
            if c not in universe and not isinstance(c, (Top, Bottom)):
                complain("universe", f"{c.key()} outside the label universe")
        for c in label:
            if isinstance(c, Atom) and Not(c) in label:
                complain("1", f"node {x} holds {c.key()} and its negation")
            if isinstance(c, And) and not blocked:
                if not {c.left, c.right} <= label:
                    complain("2", f"node {x}: unexpanded conjunction {c.key()}")
            if isinstance(c, Or) and not blocked:
                if not {c.left, c.right} & label:
                    complain("3", f"node {x}: unexpanded disjunction {c.key()}")
            if isinstance(c, ForAll) and blocked.kind != "indirect":
                for y in g.forall_targets(x, c.prop):
                    if c.filler not in g.nodes[y].label:
                        complain("4/6", f"node {x}: {c.key()} missed node {y}")
            if isinstance(c, Exists) and not blocked:
                if not any(c.filler in g.nodes[y].label
                           for y in g.successors(x, c.prop)):
                    complain("5", f"node {x}: no witness for {c.key()}")
            if isinstance(c, AtLeast) and not blocked:
                found = [y for y in g.successors(x, c.prop)
                         if c.filler in g.nodes[y].label]
                if _max_pairwise_distinct(g, found) < c.n:
                    complain("9", f"node {x}: too few witnesses for {c.key()}")
            if isinstance(c, AtMost) and blocked.kind != "indirect":
                found = [y for y in g.successors(x, c.prop)
                         if c.filler in g.nodes[y].label]
                if len(found) > c.n:
                    complain("8", f"node {x}: at-most bound exceeded for {c.key()}")
            if isinstance(c, (AtLeast, AtMost)) and not blocked:
                for y in g.successors(x, c.prop):
                    if not {c.filler, neg(c.filler)} & g.nodes[y].label:
                        complain("10", f"node {x}: choose missed node {y}")
    # property 7: edge labels upward closed under the hierarchy, by
    # construction of `successors`; verify on a sample
    for x in sorted(g.out_e):
        for y, labels in g.out_e[x].items():
            for p in labels:
                for sup in kb.subsumers(p):
                    if y not in g.successors(x, sup):
                        complain("7", f"edge {x}->{y}: {sup.key()} not visible")
    # property 11: foreign fragments flushed
    for x in sorted(g.nodes):
        node = g.nodes[x]
        if g.blocked(x):
            continue
        fragment = g.fragment(x)
        if not fragment:
            continue
        parts = g.parts(x)
        for j in sorted({c.home for c in fragment}):
            if j == g.unit or not parts.get(j):
                continue
            st = node.corr.get(j)
            if st is None:
                complain("11", f"node {x}: no correspondence toward {j}")
            elif st.requester is None and st.sent_fragment != fragment:
                complain("11", f"node {x}: stale fragment toward {j}")
    return problems

"""Peer lifecycle and the distributed reasoning services.

A peer owns one unit.  It initializes by checking its own knowledge in
isolation (everything foreign read as the universal concept); consistent
peers freeze their ABox skeleton and join the communication phase, while
inconsistent ones declare a hole and drop out.  Reasoning tasks run a goal
graph at the goal's home peer; projection packages flow between peers
through a router, are answered against working copies, and are cached by
the sender.
"""

from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass, field

from .model import And, Atom, Concept, DistributedKB, UnitId, neg, nnf
from .protocol import (
    ADDITIONS,
    CLASH,
    INCONCLUSIVE,
    JOINT,
    ProjectionCache,
    ProjectionPackage,
    ProjectionItem,
    ProtocolError,
    StopRegistry,
    build_packages,
    handle_hole,
    serve_package,
    substitute_holes,
    simplify,
)
from .tableau import (
    BudgetExceeded,
    Obligation,
    Outcome,
    audit_complete_graph,
    expand_to_completion,
    init_graph,
)

LOADING = "loading"
INITIALIZING = "initializing"
READY = "ready"
HOLED = "holed"
FAILED = "failed"

SKIPPED = "skipped"


class InconclusiveError(Exception):
    """A budget ran out; the question is open, not answered."""


class PhaseError(Exception):
    """An operation arrived in the wrong lifecycle phase."""


@dataclass
class PeerConfig:
    max_nodes: int = 4000
    use_cache: bool = True
    reverse_updates: bool = True
    audit: bool = False
    serve_depth_limit: int = 64


@dataclass
class Metrics:
    projections_triggered: int = 0
    packages_sent: int = 0
    packages_received: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    wall_ms: int = 0
    branch_count: int = 0

    def reset(self):
        self.projections_triggered = 0
        self.packages_sent = 0
        self.packages_received = 0
        self.cache_hits = 0
        self.cache_misses = 0
        self.wall_ms = 0
        self.branch_count = 0

    def as_dict(self):
        return {
            "projections_triggered": self.projections_triggered,
            "packages_sent": self.packages_sent,
            "packages_received": self.packages_received,
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
            "wall_ms": self.wall_ms,
            "branch_count": self.branch_count,
        }


@dataclass
class Taxonomy:
    unit: UnitId
    classes: dict[str, tuple[str, ...]]       # representative -> members
    edges: set[tuple[str, str]]               # reduced (sub rep, sup rep)
    subsumptions: set[tuple[str, str]]        # full, reflexive closure left out

    def is_below(self, sub: str, sup: str) -> bool:
        return sub == sup or (sub, sup) in self.subsumptions

    def roots(self) -> list[str]:
        non_roots = {a for a, _ in self.edges}
        return sorted(r for r in self.classes if r not in non_roots
                      or all(a != r for a, _ in self.edges))


class Peer:
    def __init__(self, kb: DistributedKB, unit: UnitId,
                 config: PeerConfig | None = None):
        self.kb_full = kb
        self.unit = unit
        self.config = config or PeerConfig()
        self.phase = LOADING
        self.holes: set[str] = set()
        self.kb: DistributedKB = kb          # hole-adjusted view
        self.skeleton = None                 # frozen post-initialization
        self.metrics = Metrics()
        self.cache = ProjectionCache()
        self.stops = StopRegistry()
        self.router = None                   # injected by the session
        self._pkg_counter = itertools.count(1)
        self._serving: dict[tuple[str, bytes], int] = {}
        self._serve_depth = 0
        self._lock = threading.RLock()
        # fragments whose projection is known to clash at a destination;
        # monotone labels make any superset fragment clash as well, so the
        # engine can fail such branches before completing them
        self._doomed: dict[str, list[tuple[frozenset, str | None]]] = {}

    def _record_doom(self, dest: str, fragment, target: str | None):
        entry = (frozenset(fragment), target)
        bucket = self._doomed.setdefault(dest, [])
        if entry not in bucket:
            bucket.append(entry)

    def doom_oracle(self, graph, node_id) -> str | None:
        """Early-clash check wired into this peer's graphs: a node whose
        eventual projection covers a fragment that already clashed cannot
        stand."""
        if not self._doomed:
            return None
        node = graph.nodes[node_id]
        foreign = graph.foreign_part(node_id)
        if not foreign:
            return None
        parts = graph.parts(node_id)
        for dest, entries in self._doomed.items():
            st = node.corr.get(dest)
            named = st.target_individual if st is not None else None
            will_project = bool(parts.get(dest)) or named is not None
            if not will_project:
                continue
            for frag, target in entries:
                if target == named and frag <= foreign:
                    return f"projection to {dest} is known to clash"
        return None

    # -- lifecycle -------------------------------------------------------------

    def initialize(self) -> str:
        """Isolated consistency check: every other unit is read as a hole.
        Returns the resulting phase."""
        self.phase = INITIALIZING
        others = set(self.kb_full.unit_order) - {self.unit}
        isolated = handle_hole(self.kb_full, others)
        graph = init_graph(isolated, self.unit, max_nodes=self.config.max_nodes)
        try:
            outcome = expand_to_completion(graph)
        except BudgetExceeded:
            self.phase = FAILED
            return self.phase
        if outcome is Outcome.UNSATISFIABLE:
            self.phase = HOLED
        else:
            self.phase = READY
        return self.phase

    def adopt_holes(self, holed: set[str]):
        """Freeze the working view and skeleton once the hole set is known."""
        if self.phase != READY:
            return
        self.holes = set(holed)
        self.kb = handle_hole(self.kb_full, self.holes)
        self.skeleton = init_graph(self.kb, self.unit,
                                   max_nodes=self.config.max_nodes)
        self.skeleton.clash_oracle = self.doom_oracle

    # -- outbound projections ----------------------------------------------------

    def projection_hook(self, origin: str, parent_request: str | None = None):
        """The hook a graph expansion uses to flush its obligations.  It
        packages them per neighbor, consults the cache, ships what is left
        through the router and realigns the outcomes per obligation.  After
        a clash for some node, that node's remaining packages are skipped:
        the branch is closing anyway, which is the stop-request economy."""

        def hook(obligations: list[Obligation]):
            packages, slots = self._package(obligations, origin)
            results: dict[int, tuple] = {}
            clashed_nodes: set[int] = set()
            for p_idx, pkg in enumerate(packages):
                members = [i for i, slot in enumerate(slots)
                           if slot is not None and slot[0] == p_idx]
                if any(obligations[i].node in clashed_nodes for i in members):
                    for i in members:
                        results[i] = (SKIPPED, None)
                    self.router.notify_skip(self.unit, pkg)
                    continue
                outcomes = self._send_package(pkg, parent_request)
                for i in members:
                    verdict, payload = outcomes[slots[i][1]]
                    if verdict == INCONCLUSIVE:
                        raise InconclusiveError(
                            f"projection to {pkg.to} was inconclusive")
                    results[i] = (verdict, payload)
                    if verdict == CLASH:
                        ob = obligations[i]
                        clashed_nodes.add(ob.node)
                        if payload != JOINT:
                            self._record_doom(ob.dest_unit, ob.fragment,
                                              ob.target_individual)
            out = []
            for i, ob in enumerate(obligations):
                if i in results:
                    out.append(results[i])
                else:  # dropped, destination holed
                    out.append((ADDITIONS, ()))
            return out

        return hook

    def _package(self, obligations, origin):
        packages = build_packages(obligations, self.unit, origin,
                                  self._pkg_counter, self.holes)
        slots: list[tuple[int, int] | None] = [None] * len(obligations)
        for i, ob in enumerate(obligations):
            for p_idx, pkg in enumerate(packages):
                if pkg.to != ob.dest_unit:
                    continue
                for it_idx, item in enumerate(pkg.items):
                    if (item.source_node == ob.node
                            and item.fragment == ob.fragment):
                        slots[i] = (p_idx, it_idx)
                        break
                if slots[i] is not None:
                    break
        return packages, slots

    def _send_package(self, pkg: ProjectionPackage, parent_request):
        if self.config.use_cache:
            cached = self.cache.lookup(pkg.to, pkg)
            if cached is not None:
                self.metrics.cache_hits += 1
                return cached
            self.metrics.cache_misses += 1
        self.metrics.packages_sent += 1
        origin = pkg.items[0].trigger_origin or self.unit
        self.metrics.projections_triggered += 0  # attributed via router
        outcomes, final = self.router.dispatch(pkg, parent_request)
        if self.config.use_cache and final:
            self.cache.store(pkg.to, pkg, outcomes)
        return outcomes

    # -- inbound serving ------------------------------------------------------------

    def serve(self, pkg: ProjectionPackage,
              parent_request: str | None = None) -> tuple[tuple, bool]:
        """Answer one projection package.  Returns (outcomes, final):
        non-final answers are provisional snapshots given to re-entrant
        copies of a request this peer is already serving, and must not be
        cached."""
        if self.phase != READY:
            raise PhaseError(f"peer {self.unit} cannot serve in phase {self.phase}")
        self.metrics.packages_received += 1
        key = (pkg.frm, pkg.content_bytes())
        with self._lock:
            if key in self._serving or self._serve_depth >= self.config.serve_depth_limit:
                if self._serve_depth >= self.config.serve_depth_limit:
                    return tuple((INCONCLUSIVE, None) for _ in pkg.items), False
                return tuple((ADDITIONS, ()) for _ in pkg.items), False
            self._serving[key] = 1
            self._serve_depth += 1
        ctx = self.stops.open(pkg.id, parent_request)
        origin = pkg.items[0].trigger_origin or pkg.frm
        hook = self.projection_hook(origin, parent_request=pkg.id)
        try:
            outcomes = serve_package(pkg, self.skeleton, self.kb, hook,
                                     abort_event=ctx.abort,
                                     reverse_updates=self.config.reverse_updates)
        finally:
            self.stops.close(pkg.id)
            with self._lock:
                self._serving.pop(key, None)
                self._serve_depth -= 1
        return outcomes, True


class LoopbackRouter:
    """Direct in-process routing between peers; deterministic and
    synchronous.  Records a transcript of reasoning messages."""

    def __init__(self, session: "LoopbackSession"):
        self.session = session

    def dispatch(self, pkg: ProjectionPackage, parent_request):
        session = self.session
        session.log.append(("projection_request", pkg.frm, pkg.to, pkg.id,
                            len(pkg.items)))
        origin = pkg.items[0].trigger_origin or pkg.frm
        session.triggered[origin] = session.triggered.get(origin, 0) \
            + len(pkg.items)
        receiver = session.peers[pkg.to]
        outcomes, final = receiver.serve(pkg, parent_request)
        session.log.append(("projection_response", pkg.to, pkg.frm, pkg.id,
                            "final" if final else "provisional"))
        return outcomes, final

    def notify_skip(self, frm: str, pkg: ProjectionPackage):
        self.session.log.append(("stop", frm, pkg.to, pkg.id, "skipped"))

    def broadcast_hole(self, peer_id: str):
        self.session.log.append(("hole", peer_id, "*", "-", 0))


class LoopbackSession:
    """All peers in one process, talking through direct calls.

    The task API mirrors the wire task payloads: consistency, concept
    satisfiability, subsumption and per-unit classification."""

    def __init__(self, kb: DistributedKB, config: PeerConfig | None = None):
        self.kb = kb
        self.config = config or PeerConfig()
        self.peers = {u: Peer(kb, u, self.config) for u in kb.unit_order}
        router = LoopbackRouter(self)
        for p in self.peers.values():
            p.router = router
        self.log: list[tuple] = []
        self.triggered: dict[str, int] = {}
        self.holes: set[str] = set()
        self._initialized = False
        self._consistency: tuple | None = None

    # -- lifecycle ------------------------------------------------------------

    def initialize(self) -> set[str]:
        """Run every peer's isolated initialization; returns the hole set."""
        if self._initialized:
            return set(self.holes)
        for u in self.kb.unit_order:
            phase = self.peers[u].initialize()
            if phase == HOLED:
                self.holes.add(u)
                self.peers[u].router.broadcast_hole(u)
            elif phase == FAILED:
                raise InconclusiveError(f"peer {u} failed to initialize")
        for u in self.kb.unit_order:
            self.peers[u].adopt_holes(self.holes)
        self._initialized = True
        return set(self.holes)

    def _begin_task(self):
        self.initialize()
        for p in self.peers.values():
            p.metrics.reset()
        self.triggered = {}

    def _ready_peers(self):
        return [self.peers[u] for u in self.kb.unit_order
                if self.peers[u].phase == READY]

    # -- tasks -----------------------------------------------------------------

    def check_consistency(self):
        """Every ready peer expands its ABox skeleton with the projection
        machinery live.  Returns ('consistent', None) or
        ('inconsistent', (peer, detail))."""
        self._begin_task()
        started = time.monotonic()
        verdict = ("consistent", None)
        for peer in self._ready_peers():
            graph = peer.skeleton.clone()
            hook = peer.projection_hook(origin=peer.unit)
            try:
                outcome = expand_to_completion(
                    graph, hook, reverse_updates=peer.config.reverse_updates)
            except BudgetExceeded:
                raise InconclusiveError(f"peer {peer.unit} ran out of nodes")
            peer.metrics.branch_count += graph.branch_count
            if outcome is Outcome.UNSATISFIABLE:
                verdict = ("inconsistent",
                           (peer.unit, "no clash-free completion"))
                break
        self._consistency = verdict
        self._record_wall(started)
        return verdict

    def ensure_consistent(self):
        if self._consistency is None:
            self.check_consistency()
        if self._consistency[0] != "consistent":
            raise ProtocolError(
                f"distributed KB is inconsistent: {self._consistency[1]}")

    def is_satisfiable(self, goal: Concept, _task: bool = True) -> bool:
        self.ensure_consistent()
        if _task:
            self._begin_task()
        started = time.monotonic()
        goal = simplify(substitute_holes(nnf(goal), self.holes))
        home = goal.home
        if home in self.holes or home not in self.peers \
                or self.peers[home].phase != READY:
            raise ProtocolError(f"unit {home} is not available for reasoning")
        peer = self.peers[home]
        graph = peer.skeleton.clone()
        graph.add_label(0, goal)
        hook = peer.projection_hook(origin=peer.unit)
        try:
            outcome = expand_to_completion(
                graph, hook, reverse_updates=peer.config.reverse_updates)
        except BudgetExceeded:
            raise InconclusiveError("satisfiability ran out of nodes")
        peer.metrics.branch_count += graph.branch_count
        if _task:
            self._record_wall(started)
        if outcome is Outcome.COMPLETE and self.config.audit:
            problems = audit_complete_graph(graph, goal)
            if problems:
                raise AssertionError("tableau property audit failed: "
                                     + "; ".join(problems))
        return outcome is Outcome.COMPLETE

    def is_subsumed(self, sub: Atom, sup: Atom, _task: bool = True) -> bool:
        if sub.unit != sup.unit:
            raise ProtocolError("subsumption queries stay within one unit")
        goal = And(sub, neg(sup), sub.unit)
        return not self.is_satisfiable(goal, _task=_task)

    def classify(self, unit: UnitId) -> Taxonomy:
        """Pairwise subsumption over the unit's named concepts, reduced to
        a hierarchy with equivalence classes collapsed."""
        self.ensure_consistent()
        self._begin_task()
        started = time.monotonic()
        if unit in self.holes:
            raise ProtocolError(f"unit {unit} is holed")
        names = sorted(self.kb.units[unit].concept_names)
        below: dict[str, set[str]] = {a: set() for a in names}
        for a in names:
            for b in names:
                if a != b and self.is_subsumed(Atom(unit, a), Atom(unit, b),
                                               _task=False):
                    below[a].add(b)
        self._record_wall(started)
        return _build_taxonomy(unit, names, below)

    def metrics_snapshot(self) -> dict[str, dict]:
        out = {}
        for u in self.kb.unit_order:
            d = self.peers[u].metrics.as_dict()
            d["projections_triggered"] = self.triggered.get(u, 0)
            out[u] = d
        return out

    def _record_wall(self, started: float):
        ms = int((time.monotonic() - started) * 1000)
        for p in self.peers.values():
            p.metrics.wall_ms += ms


def _build_taxonomy(unit: UnitId, names: list[str],
                    below: dict[str, set[str]]) -> Taxonomy:
    # equivalence classes by mutual subsumption, lexicographic representative
    rep_of: dict[str, str] = {}
    classes: dict[str, tuple[str, ...]] = {}
    for a in names:
        if a in rep_of:
            continue
        members = sorted({a} | {b for b in below[a] if a in below[b]})
        rep = members[0]
        for m in members:
            rep_of[m] = rep
        classes[rep] = tuple(members)
    strict: set[tuple[str, str]] = set()
    for a in names:
        for b in below[a]:
            ra, rb = rep_of[a], rep_of[b]
            if ra != rb:
                strict.add((ra, rb))
    # transitive reduction: drop (a, c) when (a, b) and (b, c) exist
    reduced = set(strict)
    for a, c in strict:
        for b in classes:
            if b not in (a, c) and (a, b) in strict and (b, c) in strict:
                reduced.discard((a, c))
                break
    return Taxonomy(unit=unit, classes=classes, edges=reduced,
                    subsumptions=strict)

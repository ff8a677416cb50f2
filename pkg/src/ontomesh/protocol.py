"""Collaboration layer between tableau engines.

Carries label fragments between peers as packaged projection requests,
serves inbound packages against a working copy of the local graph, caches
responses for byte-identical packages, honors stop requests, and applies
hole notices by rewriting the affected unit's vocabulary away.

Peers are identified by the unit they own, so peer ids and unit ids
coincide throughout.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field

from .model import (
    And,
    Atom,
    AtLeast,
    AtMost,
    Bottom,
    Concept,
    Coupling,
    DistributedKB,
    Exists,
    ForAll,
    LinkDecl,
    Not,
    Or,
    Property,
    Top,
    UnitKB,
    nnf,
)
from .tableau import (
    Aborted,
    BudgetExceeded,
    CompletionGraph,
    CorrState,
    Obligation,
    Outcome,
    expand_to_completion,
)


class ProtocolError(Exception):
    pass


class CacheOverflow(ProtocolError):
    """The projection cache hit its byte budget; it never evicts."""


# ---------------------------------------------------------------------------
# wire-able concept encoding
# ---------------------------------------------------------------------------

def concept_to_obj(c: Concept):
    if isinstance(c, Top):
        return {"op": "top", "unit": c.unit}
    if isinstance(c, Bottom):
        return {"op": "bot", "unit": c.unit}
    if isinstance(c, Atom):
        return {"op": "atom", "unit": c.unit, "name": c.name}
    if isinstance(c, Not):
        return {"op": "not", "arg": concept_to_obj(c.operand)}
    if isinstance(c, (And, Or)):
        return {"op": "and" if isinstance(c, And) else "or", "unit": c.unit,
                "left": concept_to_obj(c.left), "right": concept_to_obj(c.right)}
    prop = {"name": c.prop.name, "home": c.prop.home,
            "target": c.prop.target, "inverted": c.prop.inverted}
    ops = {Exists: "some", ForAll: "all", AtLeast: "min", AtMost: "max"}
    obj = {"op": ops[type(c)], "prop": prop, "filler": concept_to_obj(c.filler)}
    if isinstance(c, (AtLeast, AtMost)):
        obj["n"] = c.n
    return obj


def concept_from_obj(obj) -> Concept:
    op = obj["op"]
    if op == "top":
        return Top(obj["unit"])
    if op == "bot":
        return Bottom(obj["unit"])
    if op == "atom":
        return Atom(obj["unit"], obj["name"])
    if op == "not":
        return Not(concept_from_obj(obj["arg"]))
    if op in ("and", "or"):
        cls = And if op == "and" else Or
        return cls(concept_from_obj(obj["left"]),
                   concept_from_obj(obj["right"]), obj["unit"])
    p = obj["prop"]
    prop = Property(p["name"], p["home"], p["target"], p["inverted"])
    filler = concept_from_obj(obj["filler"])
    if op == "some":
        return Exists(prop, filler)
    if op == "all":
        return ForAll(prop, filler)
    if op == "min":
        return AtLeast(obj["n"], prop, filler)
    if op == "max":
        return AtMost(obj["n"], prop, filler)
    raise ProtocolError(f"unknown concept op {op!r}")


# ---------------------------------------------------------------------------
# message types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectionItem:
    source_node: int
    fragment: tuple[Concept, ...]       # canonically ordered, never empty
    target_individual: str | None = None
    trigger_origin: str | None = None

    def content_key(self) -> str:
        frag = ",".join(c.key() for c in self.fragment)
        return f"{self.target_individual or ''}|{frag}"

    def to_payload(self):
        return {"source_node": self.source_node,
                "fragment": [concept_to_obj(c) for c in self.fragment],
                "target_individual": self.target_individual,
                "trigger_origin": self.trigger_origin}

    @classmethod
    def from_payload(cls, obj):
        return cls(source_node=obj["source_node"],
                   fragment=tuple(concept_from_obj(c) for c in obj["fragment"]),
                   target_individual=obj.get("target_individual"),
                   trigger_origin=obj.get("trigger_origin"))


@dataclass(frozen=True)
class ProjectionPackage:
    id: str
    frm: str
    to: str
    items: tuple[ProjectionItem, ...]

    def content_bytes(self) -> bytes:
        """Cache and dedup key: the item payload without provenance."""
        return ";".join(sorted(i.content_key() for i in self.items)).encode()

    def to_payload(self):
        return {"id": self.id, "from": self.frm, "to": self.to,
                "items": [i.to_payload() for i in self.items]}

    @classmethod
    def from_payload(cls, obj):
        return cls(id=obj["id"], frm=obj["from"], to=obj["to"],
                   items=tuple(ProjectionItem.from_payload(i)
                               for i in obj["items"]))


CLASH = "clash"
ADDITIONS = "additions"
INCONCLUSIVE = "inconclusive"

# payload marker on a clash outcome that was attributed to a whole package
# rather than confirmed for the item alone
JOINT = "joint"


@dataclass(frozen=True)
class ProjectionResponse:
    request_id: str
    outcomes: tuple[tuple, ...]  # (CLASH, None) | (ADDITIONS, literals) | (INCONCLUSIVE, None)

    def to_payload(self):
        out = []
        for verdict, payload in self.outcomes:
            if verdict == ADDITIONS:
                out.append({"verdict": verdict,
                            "additions": [concept_to_obj(c) for c in payload]})
            else:
                out.append({"verdict": verdict})
        return {"request_id": self.request_id, "outcomes": out}

    @classmethod
    def from_payload(cls, obj):
        outcomes = []
        for o in obj["outcomes"]:
            if o["verdict"] == ADDITIONS:
                outcomes.append((ADDITIONS, tuple(concept_from_obj(c)
                                                  for c in o["additions"])))
            else:
                outcomes.append((o["verdict"], None))
        return cls(obj["request_id"], tuple(outcomes))


@dataclass(frozen=True)
class StopRequest:
    request_id: str

    def to_payload(self):
        return {"request_id": self.request_id}

    @classmethod
    def from_payload(cls, obj):
        return cls(obj["request_id"])


@dataclass(frozen=True)
class HoleNotice:
    peer: str

    def to_payload(self):
        return {"peer": self.peer}

    @classmethod
    def from_payload(cls, obj):
        return cls(obj["peer"])


# ---------------------------------------------------------------------------
# projection cache
# ---------------------------------------------------------------------------

class ProjectionCache:
    """Exact-match, write-once store of packaged requests and their
    responses.  No eviction: an overall byte budget aborts loudly instead,
    keeping runs deterministic."""

    def __init__(self, byte_budget: int = 64 * 1024 * 1024):
        self._store: dict[tuple[str, bytes], tuple] = {}
        self._bytes = 0
        self._budget = byte_budget
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def lookup(self, to: str, pkg: ProjectionPackage):
        key = (to, pkg.content_bytes())
        with self._lock:
            found = self._store.get(key)
            if found is None:
                self.misses += 1
            else:
                self.hits += 1
            return found

    def store(self, to: str, pkg: ProjectionPackage, outcomes: tuple):
        key = (to, pkg.content_bytes())
        with self._lock:
            if key in self._store:
                return
            self._bytes += len(key[1]) + 64 * len(outcomes)
            if self._bytes > self._budget:
                raise CacheOverflow("projection cache exceeded its byte budget")
            self._store[key] = outcomes

    def reset_counters(self):
        with self._lock:
            self.hits = 0
            self.misses = 0


# ---------------------------------------------------------------------------
# packaging
# ---------------------------------------------------------------------------

def build_packages(obligations: list[Obligation], frm: str, origin: str,
                   id_counter: itertools.count,
                   holes: set[str] = frozenset()) -> list[ProjectionPackage]:
    """One package per destination peer, items canonically sorted.  Items
    destined for holed peers are dropped: a holed unit's vocabulary has
    already been rewritten away."""
    by_dest: dict[str, list[ProjectionItem]] = {}
    for ob in obligations:
        if ob.dest_unit in holes:
            continue
        by_dest.setdefault(ob.dest_unit, []).append(ProjectionItem(
            source_node=ob.node,
            fragment=ob.fragment,
            target_individual=ob.target_individual,
            trigger_origin=origin))
    out = []
    for dest in sorted(by_dest):
        items = tuple(sorted(by_dest[dest], key=ProjectionItem.content_key))
        out.append(ProjectionPackage(
            id=f"{frm}-{next(id_counter)}", frm=frm, to=dest, items=items))
    return out


def response_literals(graph: CompletionGraph, node: int,
                      sent: tuple[Concept, ...]) -> tuple[Concept, ...]:
    """What flows back to the requester: the foreign literals of the
    served node's final label that the request did not already carry."""
    out = []
    known = set(sent)
    for c in graph.nodes[node].label:
        if c.home == graph.unit or c in known:
            continue
        if isinstance(c, Atom) or (isinstance(c, Not)
                                   and isinstance(c.operand, Atom)):
            out.append(c)
    return tuple(sorted(out, key=lambda c: c.key()))


# ---------------------------------------------------------------------------
# serving
# ---------------------------------------------------------------------------

@dataclass
class ServeContext:
    request_id: str
    abort: threading.Event = field(default_factory=threading.Event)
    children: list[str] = field(default_factory=list)


def serve_package(pkg: ProjectionPackage, skeleton: CompletionGraph,
                  kb: DistributedKB, downstream_hook=None,
                  abort_event: threading.Event | None = None,
                  reverse_updates: bool = True) -> tuple:
    """Serve one package against a fresh working copy of the local graph.

    Each item either updates the node of its named target individual or
    opens a new node labelled with the fragment.  The copy is expanded to
    completion; downstream obligations leave through the hook.  Per item
    the outcome is a clash or the set of foreign literals to add back at
    the requester, and the copy is discarded afterwards.

    When the joint expansion closes every branch and the package has
    several items, items are retried individually so the requester can
    close exactly the branches that are truly doomed; if no single item
    clashes on its own, the joint clash is reported on all of them.
    """
    outcome = _serve_items(pkg.items, pkg.frm, skeleton, kb, downstream_hook,
                           abort_event, reverse_updates)
    if outcome is not None:
        return outcome
    if len(pkg.items) == 1:
        return ((CLASH, None),)
    singles = []
    any_clash = False
    for item in pkg.items:
        one = _serve_items((item,), pkg.frm, skeleton, kb, downstream_hook,
                           abort_event, reverse_updates)
        if one is None:
            singles.append((CLASH, None))
            any_clash = True
        else:
            singles.append(one[0])
    if not any_clash:
        return tuple((CLASH, JOINT) for _ in pkg.items)
    return tuple(singles)


def _serve_items(items, requester: str, skeleton: CompletionGraph,
                 kb: DistributedKB, downstream_hook, abort_event,
                 reverse_updates):
    copy = skeleton.clone()
    if abort_event is not None:
        copy.abort_event = abort_event
    placed: list[int] = []
    for item in items:
        node_id = None
        if item.target_individual is not None:
            for x, node in sorted(copy.nodes.items()):
                if node.origin == ("abox", item.target_individual):
                    node_id = x
                    break
            if node_id is None:
                raise ProtocolError(
                    f"projection names unknown individual "
                    f"{item.target_individual!r} of {copy.unit}")
        if node_id is None:
            node = copy.new_node(("projected", requester, item.source_node))
            node_id = node.id
        st = copy.nodes[node_id].corr.setdefault(requester, CorrState())
        st.requester = (requester, item.source_node)
        for c in item.fragment:
            copy.add_label(node_id, c)
        placed.append(node_id)
    try:
        result = expand_to_completion(copy, downstream_hook, reverse_updates)
    except BudgetExceeded:
        return tuple((INCONCLUSIVE, None) for _ in items)
    if result is Outcome.UNSATISFIABLE:
        return None
    outcomes = []
    for item, node_id in zip(items, placed):
        if node_id not in copy.nodes:
            outcomes.append((ADDITIONS, ()))
            continue
        outcomes.append((ADDITIONS,
                         response_literals(copy, node_id, item.fragment)))
    return tuple(outcomes)


# ---------------------------------------------------------------------------
# stop requests
# ---------------------------------------------------------------------------

class StopRegistry:
    """Abandonment of in-flight work.  Stops cascade to downstream
    requests a serve has spawned; unknown ids acknowledge as no-ops."""

    def __init__(self):
        self._contexts: dict[str, ServeContext] = {}
        self._lock = threading.Lock()

    def open(self, request_id: str, parent_id: str | None = None) -> ServeContext:
        ctx = ServeContext(request_id)
        with self._lock:
            self._contexts[request_id] = ctx
            if parent_id and parent_id in self._contexts:
                self._contexts[parent_id].children.append(request_id)
        return ctx

    def close(self, request_id: str):
        with self._lock:
            self._contexts.pop(request_id, None)

    def handle_stop(self, request_id: str) -> bool:
        """Returns True (acknowledged) always; aborts the context and its
        descendants when the id is known."""
        with self._lock:
            stack = [request_id]
            while stack:
                rid = stack.pop()
                ctx = self._contexts.get(rid)
                if ctx is not None:
                    ctx.abort.set()
                    stack.extend(ctx.children)
        return True

    def is_aborted(self, request_id: str) -> bool:
        with self._lock:
            ctx = self._contexts.get(request_id)
            return ctx is not None and ctx.abort.is_set()


# ---------------------------------------------------------------------------
# hole notices
# ---------------------------------------------------------------------------

def substitute_holes(c: Concept, holed: set[str]) -> Concept:
    """Rewrite every constraint that talks about a holed unit into the
    universal concept.  A full hole interprets every concept of the unit,
    negations included, as the whole domain, so the literal as a whole
    trivializes rather than flipping polarity."""
    if isinstance(c, (Top, Bottom, Atom)):
        return Top(c.unit) if c.unit in holed and not isinstance(c, Top) else c
    if isinstance(c, Not):
        if c.operand.home in holed:
            return Top(c.operand.home)
        return Not(substitute_holes(c.operand, holed))
    if isinstance(c, (And, Or)):
        cls = And if isinstance(c, And) else Or
        return cls(substitute_holes(c.left, holed),
                   substitute_holes(c.right, holed), c.unit)
    if c.prop.target in holed or c.prop.home in holed:
        return Top(c.prop.home)
    cls = type(c)
    if isinstance(c, (AtLeast, AtMost)):
        return cls(c.n, c.prop, substitute_holes(c.filler, holed))
    return cls(c.prop, substitute_holes(c.filler, holed))


def simplify(c: Concept) -> Concept:
    """Boolean identity simplification, used after hole substitution."""
    if isinstance(c, And):
        l, r = simplify(c.left), simplify(c.right)
        if isinstance(l, Top):
            return r
        if isinstance(r, Top):
            return l
        if isinstance(l, Bottom) or isinstance(r, Bottom):
            return Bottom(c.unit)
        return And(l, r, c.unit)
    if isinstance(c, Or):
        l, r = simplify(c.left), simplify(c.right)
        if isinstance(l, Top) or isinstance(r, Top):
            return Top(c.unit)
        if isinstance(l, Bottom):
            return r
        if isinstance(r, Bottom):
            return l
        return Or(l, r, c.unit)
    if isinstance(c, (Exists, AtLeast)):
        filler = simplify(c.filler)
        if isinstance(filler, Bottom):
            return Bottom(c.prop.home)
        if isinstance(c, Exists):
            return Exists(c.prop, filler)
        return AtLeast(c.n, c.prop, filler)
    if isinstance(c, ForAll):
        filler = simplify(c.filler)
        if isinstance(filler, Top):
            return Top(c.prop.home)
        return ForAll(c.prop, filler)
    if isinstance(c, AtMost):
        return AtMost(c.n, c.prop, simplify(c.filler))
    return c


def handle_hole(kb: DistributedKB, holed: set[str]) -> DistributedKB:
    """The KB as seen once the holed peers dropped out: their units are
    gone, every mention of their vocabulary is the universal concept, and
    couplings toward them vanish."""
    if not holed:
        return kb

    def rewrite(c: Concept) -> Concept:
        return simplify(substitute_holes(nnf(c), holed))

    units = {}
    for u, ukb in kb.units.items():
        if u in holed:
            continue
        units[u] = UnitKB(
            unit=u,
            concept_names=set(ukb.concept_names),
            role_names=set(ukb.role_names),
            individual_names=set(ukb.individual_names),
            gcis=[(rewrite(l), rewrite(r)) for l, r in ukb.gcis],
            role_inclusions=list(ukb.role_inclusions),
            transitive_roles=set(ukb.transitive_roles),
            concept_assertions=[(i, rewrite(c))
                                for i, c in ukb.concept_assertions],
            role_assertions=list(ukb.role_assertions),
            inequalities=list(ukb.inequalities),
        )
    couplings = {}
    for u, coup in kb.couplings.items():
        if u in holed:
            continue
        couplings[u] = Coupling(
            holder=u,
            bridge_rules=[br for br in coup.bridge_rules
                          if br.source.unit not in holed],
            links=[ld for ld in coup.links if ld.target_unit not in holed],
            individual_correspondences=[
                ic for ic in coup.individual_correspondences
                if ic.foreign_unit not in holed],
            link_assertions=[la for la in coup.link_assertions
                             if la.target_unit not in holed],
        )
    return DistributedKB.build(units, couplings)

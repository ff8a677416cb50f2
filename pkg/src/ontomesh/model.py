"""Core model of a distributed knowledge base built from coupled ontology units.

Every concept and property name is owned by exactly one unit.  A unit couples
itself to neighbors through subjective concept correspondences (onto/into
bridge rules), through cross-unit link relations, and through individual
correspondences.  All of that, plus the usual TBox/RBox/ABox content, lives
here as immutable data, together with the derived machinery the reasoner
needs: negation normal form, sub-expression closures, per-unit
internalization concepts and the property hierarchy.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

UnitId = str

ONTO = "onto"
INTO = "into"


class ModelError(Exception):
    """Raised for malformed concepts or KB construction errors."""


# ---------------------------------------------------------------------------
# Properties (roles and link relations)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Property:
    """A role (home == target) or a link relation (home != target).

    The same name may be declared both as a role of a unit and as a link
    from that unit to another; occurrences are told apart by the filler's
    home unit.  Only roles have inverses.
    """

    name: str
    home: UnitId
    target: UnitId
    inverted: bool = False

    def __post_init__(self):
        if self.inverted and self.home != self.target:
            raise ModelError(f"link relation {self.name} cannot be inverted")

    @property
    def is_role(self) -> bool:
        return self.home == self.target

    def inverse(self) -> "Property":
        if not self.is_role:
            raise ModelError(f"no inverse for link relation {self.name}")
        return Property(self.name, self.home, self.target, not self.inverted)

    def key(self) -> str:
        inv = "inv " if self.inverted else ""
        if self.is_role:
            return f"{inv}{self.home}:{self.name}"
        return f"{self.home}:{self.name}->{self.target}"

    def __repr__(self):
        return self.key()


# ---------------------------------------------------------------------------
# Concepts
# ---------------------------------------------------------------------------

class Concept:
    """Base class; all concrete concepts are frozen dataclasses."""

    @property
    def home(self) -> UnitId:
        raise NotImplementedError

    def key(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return self.key()

    def __lt__(self, other: "Concept"):
        return self.key() < other.key()


@dataclass(frozen=True, repr=False)
class Top(Concept):
    unit: UnitId

    @property
    def home(self):
        return self.unit

    def key(self):
        return f"{self.unit}:*top*"


@dataclass(frozen=True, repr=False)
class Bottom(Concept):
    unit: UnitId

    @property
    def home(self):
        return self.unit

    def key(self):
        return f"{self.unit}:*bot*"


@dataclass(frozen=True, repr=False)
class Atom(Concept):
    unit: UnitId
    name: str

    @property
    def home(self):
        return self.unit

    def key(self):
        return f"{self.unit}:{self.name}"


@dataclass(frozen=True, repr=False)
class Not(Concept):
    operand: Concept

    @property
    def home(self):
        return self.operand.home

    def key(self):
        return f"(not {self.operand.key()})"


@dataclass(frozen=True, repr=False)
class And(Concept):
    left: Concept
    right: Concept
    unit: UnitId

    @property
    def home(self):
        return self.unit

    def key(self):
        return f"(and@{self.unit} {self.left.key()} {self.right.key()})"


@dataclass(frozen=True, repr=False)
class Or(Concept):
    left: Concept
    right: Concept
    unit: UnitId

    @property
    def home(self):
        return self.unit

    def key(self):
        return f"(or@{self.unit} {self.left.key()} {self.right.key()})"


@dataclass(frozen=True, repr=False)
class Exists(Concept):
    prop: Property
    filler: Concept

    @property
    def home(self):
        return self.prop.home

    def key(self):
        return f"(some {self.prop.key()} {self.filler.key()})"


@dataclass(frozen=True, repr=False)
class ForAll(Concept):
    prop: Property
    filler: Concept

    @property
    def home(self):
        return self.prop.home

    def key(self):
        return f"(all {self.prop.key()} {self.filler.key()})"


@dataclass(frozen=True, repr=False)
class AtLeast(Concept):
    n: int
    prop: Property
    filler: Concept

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("at-least restriction needs n >= 1")

    @property
    def home(self):
        return self.prop.home

    def key(self):
        return f"(min {self.n} {self.prop.key()} {self.filler.key()})"


@dataclass(frozen=True, repr=False)
class AtMost(Concept):
    n: int
    prop: Property
    filler: Concept

    def __post_init__(self):
        if self.n < 0:
            raise ModelError("at-most restriction needs n >= 0")

    @property
    def home(self):
        return self.prop.home

    def key(self):
        return f"(max {self.n} {self.prop.key()} {self.filler.key()})"


def make_and(operands: list[Concept], unit: UnitId) -> Concept:
    """Canonical right-nested conjunction; flattens and sorts operands."""
    flat: list[Concept] = []
    for c in operands:
        if isinstance(c, And):
            flat.extend(_flatten(c, And))
        else:
            flat.append(c)
    flat = sorted(set(flat), key=lambda c: c.key())
    if not flat:
        return Top(unit)
    out = flat[-1]
    for c in reversed(flat[:-1]):
        out = And(c, out, unit)
    return out


def make_or(operands: list[Concept], unit: UnitId) -> Concept:
    flat: list[Concept] = []
    for c in operands:
        if isinstance(c, Or):
            flat.extend(_flatten(c, Or))
        else:
            flat.append(c)
    flat = sorted(set(flat), key=lambda c: c.key())
    if not flat:
        return Bottom(unit)
    out = flat[-1]
    for c in reversed(flat[:-1]):
        out = Or(c, out, unit)
    return out


def _flatten(c: Concept, cls) -> list[Concept]:
    out = []
    stack = [c]
    while stack:
        cur = stack.pop()
        if isinstance(cur, cls):
            stack.append(cur.right)
            stack.append(cur.left)
        else:
            out.append(cur)
    return out


# ---------------------------------------------------------------------------
# Negation normal form
# ---------------------------------------------------------------------------

def nnf(c: Concept) -> Concept:
    """Push negation down to atoms; idempotent."""
    if isinstance(c, (Top, Bottom, Atom)):
        return c
    if isinstance(c, And):
        return And(nnf(c.left), nnf(c.right), c.unit)
    if isinstance(c, Or):
        return Or(nnf(c.left), nnf(c.right), c.unit)
    if isinstance(c, Exists):
        return Exists(c.prop, nnf(c.filler))
    if isinstance(c, ForAll):
        return ForAll(c.prop, nnf(c.filler))
    if isinstance(c, AtLeast):
        return AtLeast(c.n, c.prop, nnf(c.filler))
    if isinstance(c, AtMost):
        return AtMost(c.n, c.prop, nnf(c.filler))
    if isinstance(c, Not):
        inner = c.operand
        if isinstance(inner, Atom):
            return c
        if isinstance(inner, Top):
            return Bottom(inner.unit)
        if isinstance(inner, Bottom):
            return Top(inner.unit)
        if isinstance(inner, Not):
            return nnf(inner.operand)
        if isinstance(inner, And):
            return Or(nnf(Not(inner.left)), nnf(Not(inner.right)), inner.unit)
        if isinstance(inner, Or):
            return And(nnf(Not(inner.left)), nnf(Not(inner.right)), inner.unit)
        if isinstance(inner, Exists):
            return ForAll(inner.prop, nnf(Not(inner.filler)))
        if isinstance(inner, ForAll):
            return Exists(inner.prop, nnf(Not(inner.filler)))
        if isinstance(inner, AtLeast):
            # n >= 1 is enforced, so n-1 >= 0 is a legal at-most bound
            return AtMost(inner.n - 1, inner.prop, nnf(inner.filler))
        if isinstance(inner, AtMost):
            return AtLeast(inner.n + 1, inner.prop, nnf(inner.filler))
    raise ModelError(f"cannot normalize {c!r}")


def neg(c: Concept) -> Concept:
    """NNF of the complement of c."""
    return nnf(Not(c))


def is_nnf(c: Concept) -> bool:
    if isinstance(c, Not):
        return isinstance(c.operand, Atom)
    if isinstance(c, (And, Or)):
        return is_nnf(c.left) and is_nnf(c.right)
    if isinstance(c, (Exists, ForAll, AtLeast, AtMost)):
        return is_nnf(c.filler)
    return True


def subconcepts(c: Concept) -> set[Concept]:
    """The sub-expression set of c: c itself, the operands of any boolean
    connective, and the fillers of any restriction, recursively."""
    out: set[Concept] = set()
    stack = [c]
    while stack:
        cur = stack.pop()
        if cur in out:
            continue
        out.add(cur)
        if isinstance(cur, (And, Or)):
            stack.append(cur.left)
            stack.append(cur.right)
        elif isinstance(cur, (Exists, ForAll, AtLeast, AtMost)):
            stack.append(cur.filler)
    return out


# ---------------------------------------------------------------------------
# Unit content and couplings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BridgeRule:
    """A subjective concept correspondence held by one unit.

    kind onto: source-onto-target, every instance of the local target atom
    has a correspondent inside the foreign source atom.  kind into: the
    correspondents of the foreign source atom all fall inside the local
    target atom.  Both sides are atoms.
    """

    kind: str  # ONTO | INTO
    source: Atom  # foreign
    target: Atom  # local to the holder

    def key(self):
        return f"({self.kind} {self.source.key()} {self.target.key()})"


@dataclass(frozen=True)
class LinkDecl:
    name: str
    target_unit: UnitId
    transitive: bool = False
    parents: tuple[str, ...] = ()


@dataclass(frozen=True)
class IndividualCorrespondence:
    """foreign_unit:foreign_name corresponds-equally to local_name, held locally."""

    foreign_unit: UnitId
    foreign_name: str
    local_name: str


@dataclass(frozen=True)
class LinkAssertion:
    local_ind: str
    link: str
    target_unit: UnitId
    foreign_ind: str


@dataclass
class Coupling:
    holder: UnitId
    bridge_rules: list[BridgeRule] = field(default_factory=list)
    links: list[LinkDecl] = field(default_factory=list)
    individual_correspondences: list[IndividualCorrespondence] = field(default_factory=list)
    link_assertions: list[LinkAssertion] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.bridge_rules or self.links
                    or self.individual_correspondences or self.link_assertions)


@dataclass
class UnitKB:
    unit: UnitId
    concept_names: set[str] = field(default_factory=set)
    role_names: set[str] = field(default_factory=set)
    individual_names: set[str] = field(default_factory=set)
    gcis: list[tuple[Concept, Concept]] = field(default_factory=list)
    role_inclusions: list[tuple[str, str]] = field(default_factory=list)  # sub, super
    transitive_roles: set[str] = field(default_factory=set)
    concept_assertions: list[tuple[str, Concept]] = field(default_factory=list)
    role_assertions: list[tuple[str, Property, str]] = field(default_factory=list)
    inequalities: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class Violation:
    code: str
    message: str
    unit: UnitId | None = None

    def __str__(self):
        where = f" [{self.unit}]" if self.unit else ""
        return f"{self.code}{where}: {self.message}"


# ---------------------------------------------------------------------------
# The distributed KB
# ---------------------------------------------------------------------------

@dataclass
class DistributedKB:
    """All units plus all couplings, with derived lookup tables.

    Immutable after construction; share freely between threads.
    """

    units: dict[UnitId, UnitKB]
    couplings: dict[UnitId, Coupling]
    unit_order: list[UnitId] = field(default_factory=list)
    # derived
    _neighbors: dict[UnitId, set[UnitId]] = field(default_factory=dict)
    _subsumers: dict[Property, set[Property]] = field(default_factory=dict)
    _transitive: set[Property] = field(default_factory=set)
    _internalizations: dict[UnitId, Concept] = field(default_factory=dict)

    @classmethod
    def build(cls, units: dict[UnitId, UnitKB],
              couplings: dict[UnitId, Coupling] | None = None) -> "DistributedKB":
        couplings = dict(couplings or {})
        for u in units:
            couplings.setdefault(u, Coupling(holder=u))
        kb = cls(units=units, couplings=couplings,
                 unit_order=sorted(units))
        kb._index(units, couplings)
        return kb

    def _index(self, units, couplings):
        self._neighbors = {u: set() for u in units}
        for u, coup in couplings.items():
            touched = set()
            for br in coup.bridge_rules:
                touched.add(br.source.unit)
            for ld in coup.links:
                touched.add(ld.target_unit)
            for ic in coup.individual_correspondences:
                touched.add(ic.foreign_unit)
            for la in coup.link_assertions:
                touched.add(la.target_unit)
            touched.discard(u)
            for v in touched:
                if u in self._neighbors:
                    self._neighbors[u].add(v)
                if v in self._neighbors:
                    self._neighbors[v].add(u)

        # property hierarchy: reflexive-transitive closure per (home, target)
        # pair, with role inclusions mirrored onto inverses
        direct: dict[Property, set[Property]] = {}

        def add_incl(sub: Property, sup: Property):
            direct.setdefault(sub, set()).add(sup)

        for u, ukb in units.items():
            for sub_name, sup_name in ukb.role_inclusions:
                sub = Property(sub_name, u, u)
                sup = Property(sup_name, u, u)
                add_incl(sub, sup)
                add_incl(sub.inverse(), sup.inverse())
        for u, coup in couplings.items():
            for ld in coup.links:
                child = Property(ld.name, u, ld.target_unit)
                for parent in ld.parents:
                    add_incl(child, Property(parent, u, ld.target_unit))

        self._subsumers = {}
        all_props = set(direct)
        for sups in direct.values():
            all_props |= sups
        for p in all_props:
            seen = {p}
            frontier = [p]
            while frontier:
                q = frontier.pop()
                for r in direct.get(q, ()):
                    if r not in seen:
                        seen.add(r)
                        frontier.append(r)
            self._subsumers[p] = seen

        # transitivity: Trans(R) on roles, Trans(E,(i,j)) on punned links.
        # a transitive punned link also makes its role side transitive,
        # because the union of the two extensions must be transitive
        self._transitive = set()
        for u, ukb in units.items():
            for r in ukb.transitive_roles:
                self._transitive.add(Property(r, u, u))
        for u, coup in couplings.items():
            for ld in coup.links:
                if ld.transitive:
                    self._transitive.add(Property(ld.name, u, ld.target_unit))
                    self._transitive.add(Property(ld.name, u, u))

        self._internalizations = {
            u: self._internalize(u) for u in units
        }

    # -- queries ------------------------------------------------------------

    def neighbors(self, unit: UnitId) -> set[UnitId]:
        """Units this unit exchanges reasoning messages with: any coupling
        in either direction connects the two peers."""
        return set(self._neighbors[unit])

    def subsumers(self, p: Property) -> set[Property]:
        """All Q with p included in Q under the reflexive-transitive closure
        of the property hierarchy, restricted to p's (home, target) pair."""
        return set(self._subsumers.get(p, {p}))

    def sub_properties(self, p: Property) -> set[Property]:
        """All Q included in p, reflexively."""
        out = {p}
        for q, sups in self._subsumers.items():
            if p in sups:
                out.add(q)
        return out

    def is_transitive(self, p: Property) -> bool:
        if p.inverted:
            p = p.inverse()
        return p in self._transitive

    def transitive_properties(self) -> set[Property]:
        return set(self._transitive)

    def is_simple(self, p: Property) -> bool:
        """No transitive property below p in the hierarchy."""
        return not any(self.is_transitive(q) for q in self.sub_properties(p))

    def is_punned(self, p: Property) -> bool:
        """True when p's name doubles as role and link for its home unit."""
        home = self.units.get(p.home)
        if home is None:
            return False
        as_role = p.name in home.role_names
        as_link = any(ld.name == p.name
                      for ld in self.couplings[p.home].links)
        return as_role and as_link

    def punned_variants(self, p: Property) -> set[Property]:
        """All properties sharing p's name and home unit (role and links)."""
        if p.inverted:
            return {p}
        out = {p}
        home = self.units.get(p.home)
        if home is not None and p.name in home.role_names:
            out.add(Property(p.name, p.home, p.home))
        for ld in self.couplings.get(p.home, Coupling(p.home)).links:
            if ld.name == p.name:
                out.add(Property(ld.name, p.home, ld.target_unit))
        return out

    def declared_links(self, unit: UnitId) -> list[LinkDecl]:
        return list(self.couplings[unit].links)

    def link_property(self, unit: UnitId, name: str) -> Property | None:
        for ld in self.couplings[unit].links:
            if ld.name == name:
                return Property(name, unit, ld.target_unit)
        return None

    def internalization(self, unit: UnitId) -> Concept:
        """The single conjunction encoding a unit's TBox and bridge rules.

        Every GCI C subsumed-by D contributes (not C) or D.  An onto rule
        with foreign source F and local target E contributes (not E) or F:
        an E instance must have a correspondent in F.  An into rule with
        foreign source H and local target G contributes (not H) or G: a
        node whose correspondent falls in H must itself be in G.
        """
        return self._internalizations[unit]

    def _internalize(self, unit: UnitId) -> Concept:
        disjunctions = []
        ukb = self.units[unit]
        for lhs, rhs in ukb.gcis:
            disjunctions.append(make_or([neg(lhs), nnf(rhs)], unit))
        for br in self.couplings[unit].bridge_rules:
            if br.kind == ONTO:
                disjunctions.append(make_or([neg(br.target), br.source], unit))
            else:
                disjunctions.append(make_or([neg(br.source), br.target], unit))
        return make_and(disjunctions, unit)

    def tbox_concept(self, unit: UnitId) -> Concept:
        """The internalized TBox alone, without bridge disjunctions."""
        ukb = self.units[unit]
        return make_and([make_or([neg(l), nnf(r)], unit) for l, r in ukb.gcis],
                        unit)

    def closure(self, c: Concept, unit: UnitId) -> set[Concept]:
        """All sub-expressions of c and of every unit's internalized TBox,
        in NNF.  This bounds what a node label may contain, up to the
        internalization conjunctions themselves."""
        c = nnf(c)
        out = subconcepts(c)
        for u in self.unit_order:
            if self.units[u].gcis:
                out |= subconcepts(self.tbox_concept(u))
        return out

    def label_universe(self, goal: Concept | None = None) -> set[Concept]:
        """Closure extended with internalization conjunctions (bridges
        included) and the NNF complements of every member.  Used by the
        audit and the termination bound."""
        out: set[Concept] = set()
        for u in self.unit_order:
            out |= subconcepts(self.internalization(u))
        if goal is not None:
            out |= subconcepts(nnf(goal))
        out |= {neg(c) for c in list(out)}
        return out

    # -- validation ----------------------------------------------------------

    def validate(self) -> list[Violation]:
        """Structural checks; reasoning never starts on a KB with violations."""
        out: list[Violation] = []

        def check_concept(c: Concept, unit: UnitId):
            for sc in subconcepts(nnf(c)):
                if isinstance(sc, Atom):
                    if sc.unit not in self.units:
                        out.append(Violation("unknown-unit",
                                             f"{sc.key()} names unit {sc.unit}",
                                             unit))
                    elif sc.name not in self.units[sc.unit].concept_names:
                        out.append(Violation("unknown-concept",
                                             f"{sc.key()} is not declared", unit))
                elif isinstance(sc, (Exists, ForAll, AtLeast, AtMost)):
                    p = sc.prop
                    if sc.filler.home != p.target:
                        out.append(Violation(
                            "filler-home",
                            f"filler of {sc.key()} lives in {sc.filler.home}, "
                            f"property targets {p.target}", unit))
                    if not self._property_declared(p):
                        out.append(Violation("unknown-property",
                                             f"{p.key()} is not declared", unit))
                    if isinstance(sc, (AtLeast, AtMost)) and not self.is_simple(p):
                        out.append(Violation(
                            "non-simple",
                            f"non-simple property in number restriction {sc.key()}",
                            unit))

        for u, ukb in self.units.items():
            for lhs, rhs in ukb.gcis:
                check_concept(lhs, u)
                check_concept(rhs, u)
            for sub_name, sup_name in ukb.role_inclusions:
                for nm in (sub_name, sup_name):
                    if nm not in ukb.role_names:
                        out.append(Violation("unknown-property",
                                             f"role {nm} is not declared", u))
            for r in ukb.transitive_roles:
                if r not in ukb.role_names:
                    out.append(Violation("unknown-property",
                                         f"transitive role {r} is not declared", u))
            for ind, c in ukb.concept_assertions:
                self._check_individual(ind, u, out)
                check_concept(c, u)
            for a, p, b in ukb.role_assertions:
                self._check_individual(a, u, out)
                self._check_individual(b, u, out)
                if p.name not in ukb.role_names:
                    out.append(Violation("unknown-property",
                                         f"role {p.name} is not declared", u))
            for a, b in ukb.inequalities:
                self._check_individual(a, u, out)
                self._check_individual(b, u, out)

        for u, coup in self.couplings.items():
            if u not in self.units:
                out.append(Violation("unknown-unit",
                                     f"coupling held by undeclared unit {u}"))
                continue
            for br in coup.bridge_rules:
                if br.target.unit != u:
                    out.append(Violation("bridge-target",
                                         f"{br.key()} target is not local", u))
                if br.source.unit == u:
                    out.append(Violation("bridge-source",
                                         f"{br.key()} source is not foreign", u))
                for atom in (br.source, br.target):
                    if atom.unit not in self.units:
                        out.append(Violation("unknown-unit",
                                             f"{atom.key()} names unit {atom.unit}", u))
                    elif atom.name not in self.units[atom.unit].concept_names:
                        out.append(Violation("unknown-concept",
                                             f"{atom.key()} is not declared", u))
            for ld in coup.links:
                if ld.target_unit not in self.units:
                    out.append(Violation("unknown-unit",
                                         f"link {ld.name} targets {ld.target_unit}", u))
                if ld.transitive and ld.name not in self.units[u].role_names:
                    out.append(Violation(
                        "transitive-link",
                        f"Trans({ld.name},({u},{ld.target_unit})) needs {ld.name} "
                        f"declared as a role of {u} as well", u))
            for ic in coup.individual_correspondences:
                if ic.foreign_unit not in self.units:
                    out.append(Violation("unknown-unit",
                                         f"correspondence names unit {ic.foreign_unit}", u))
                elif ic.foreign_name not in self.units[ic.foreign_unit].individual_names:
                    out.append(Violation("unknown-individual",
                                         f"{ic.foreign_unit}:{ic.foreign_name}", u))
                self._check_individual(ic.local_name, u, out)
            for la in coup.link_assertions:
                self._check_individual(la.local_ind, u, out)
                if self.link_property(u, la.link) is None:
                    out.append(Violation("unknown-property",
                                         f"link {la.link} is not declared", u))
                if la.target_unit not in self.units:
                    out.append(Violation("unknown-unit",
                                         f"link assertion names unit {la.target_unit}", u))
                elif la.foreign_ind not in self.units[la.target_unit].individual_names:
                    out.append(Violation("unknown-individual",
                                         f"{la.target_unit}:{la.foreign_ind}", u))
        return out

    def _check_individual(self, name: str, unit: UnitId, out: list[Violation]):
        if name not in self.units[unit].individual_names:
            out.append(Violation("unknown-individual", name, unit))

    def _property_declared(self, p: Property) -> bool:
        home = self.units.get(p.home)
        if home is None:
            return False
        if p.is_role:
            return p.name in home.role_names
        return self.link_property(p.home, p.name) is not None


def fresh_unit(unit: UnitId, **kw) -> UnitKB:
    return UnitKB(unit=unit, **kw)

"""Brute-force finite-model oracle for distributed KBs.

Enumerates every distributed interpretation up to a domain-size bound: one
finite domain per unit, local atom and role extensions, link extensions,
individual assignments, and one partial one-to-one correspondence relation
per unit pair.  A KB (plus optional goal concept) is satisfiable iff some
enumerated interpretation satisfies every unit's axioms, every coupling,
and makes the goal nonempty.

Semantics of the coupling constructs, as exercised by the worked examples:

* A correspondence pair states subjective equality, so corresponding
  elements must satisfy the same constraints.  Mechanically: for a pair
  (d, d') between units i and j, and any atom A of a third unit k, d has a
  k-correspondent inside A exactly when d' has one.
* A positive foreign atom k:A holds at d iff d has a k-correspondent that
  is in A; a negated foreign atom holds iff no k-correspondent of d is in
  A.  Foreign compounds follow the positive reading.
* An onto rule (foreign F over local E) forces every E element to have a
  correspondent inside F; an into rule (foreign H into local G) forces
  every element whose correspondent lies in H to be in G.
* A name punned as both a role of i and a link from i to j denotes one
  relation seen two ways: the link extension is exactly the role extension
  composed with the correspondence relation.

Constraints are compiled into three stages by what they depend on, so the
enumeration can discard most of the space before the expensive inner loops:
stage 0 needs one unit's local structure, stage 1 additionally needs plain
link extensions, stage 2 needs correspondences.

This module is deliberately independent of the tableau code: it shares only
the KB model types.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

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
    INTO,
    Not,
    Or,
    Property,
    Top,
    nnf,
)


class OracleOverflow(Exception):
    """The enumeration budget ran out before the search completed."""


@dataclass
class _Candidate:
    sizes: dict[str, int]
    atoms: dict[str, dict[str, frozenset[int]]] = field(default_factory=dict)
    roles: dict[str, dict[str, frozenset[tuple[int, int]]]] = field(default_factory=dict)
    inds: dict[str, dict[str, int]] = field(default_factory=dict)
    links: dict[tuple[str, str, str], frozenset[tuple[int, int]]] = field(default_factory=dict)
    corr: dict[tuple[str, str], frozenset[tuple[int, int]]] = field(default_factory=dict)

    def corr_of(self, i: str, d: int, j: str) -> int | None:
        pairs = self.corr.get((i, j))
        if pairs is not None:
            for a, b in pairs:
                if a == d:
                    return b
            return None
        pairs = self.corr.get((j, i))
        if pairs is not None:
            for a, b in pairs:
                if b == d:
                    return a
        return None


class _Eval:
    def __init__(self, kb: DistributedKB, m: _Candidate):
        self.kb = kb
        self.m = m

    def holds(self, d: int, unit: str, c: Concept) -> bool:
        home = c.home
        if home != unit:
            if isinstance(c, Top):
                return True
            if isinstance(c, Bottom):
                return False
            partner = self.m.corr_of(unit, d, home)
            if isinstance(c, Not):
                return partner is None or not self.holds(partner, home, c.operand)
            return partner is not None and self.holds(partner, home, c)
        if isinstance(c, Top):
            return True
        if isinstance(c, Bottom):
            return False
        if isinstance(c, Atom):
            return d in self.m.atoms[unit][c.name]
        if isinstance(c, Not):
            return not self.holds(d, unit, c.operand)
        if isinstance(c, And):
            return self.holds(d, unit, c.left) and self.holds(d, unit, c.right)
        if isinstance(c, Or):
            return self.holds(d, unit, c.left) or self.holds(d, unit, c.right)
        succ = self.successors(unit, d, c.prop)
        if isinstance(c, Exists):
            return any(self.holds(e, c.prop.target, c.filler) for e in succ)
        if isinstance(c, ForAll):
            return all(self.holds(e, c.prop.target, c.filler) for e in succ)
        count = sum(1 for e in succ if self.holds(e, c.prop.target, c.filler))
        if isinstance(c, AtLeast):
            return count >= c.n
        return count <= c.n

    def extension(self, p: Property) -> frozenset[tuple[int, int]]:
        if p.is_role:
            ext = self.m.roles[p.home].get(p.name, frozenset())
            if p.inverted:
                return frozenset((b, a) for a, b in ext)
            return ext
        if self.kb.is_punned(p):
            role = self.m.roles[p.home].get(p.name, frozenset())
            pairs = set()
            for a, b in role:
                w = self.m.corr_of(p.home, b, p.target)
                if w is not None:
                    pairs.add((a, w))
            return frozenset(pairs)
        return self.m.links.get((p.home, p.name, p.target), frozenset())

    def successors(self, unit: str, d: int, p: Property):
        return [b for a, b in self.extension(p) if a == d]


# ---------------------------------------------------------------------------
# constraint staging
# ---------------------------------------------------------------------------

def _stage_of(c: Concept, unit: str, kb: DistributedKB) -> int:
    if isinstance(c, (Top, Bottom)):
        return 0
    if c.home != unit:
        return 2
    if isinstance(c, Atom):
        return 0
    if isinstance(c, Not):
        return _stage_of(c.operand, unit, kb)
    if isinstance(c, (And, Or)):
        return max(_stage_of(c.left, unit, kb), _stage_of(c.right, unit, kb))
    p = c.prop
    inner = _stage_of(c.filler, p.target, kb)
    if p.is_role:
        return inner
    if kb.is_punned(p):
        return 2
    return max(1, inner)


@dataclass
class _Check:
    stage: int
    units: set[str]  # units whose local structure the check reads
    fn: object       # callable(_Eval) -> bool


def _compile_checks(kb: DistributedKB, goal: Concept | None):
    checks: list[_Check] = []

    def element_check(unit: str, concept: Concept):
        stage = _stage_of(concept, unit, kb)
        us = _touched_units(concept, unit, kb)

        def fn(ev: _Eval, unit=unit, concept=concept):
            return all(ev.holds(d, unit, concept)
                       for d in range(ev.m.sizes[unit]))
        checks.append(_Check(stage, us, fn))

    for u in kb.unit_order:
        ukb = kb.units[u]
        for lhs, rhs in ukb.gcis:
            element_check(u, Or(nnf(Not(lhs)), nnf(rhs), u))
        for ind, c in ukb.concept_assertions:
            stage = _stage_of(c, u, kb)
            us = _touched_units(c, u, kb)

            def fn(ev: _Eval, u=u, ind=ind, c=c):
                return ev.holds(ev.m.inds[u][ind], u, c)
            checks.append(_Check(stage, us, fn))

        coup = kb.couplings[u]
        for br in coup.bridge_rules:
            if br.kind == INTO:
                def fn(ev: _Eval, u=u, br=br):
                    src = br.source.unit
                    for y in range(ev.m.sizes[src]):
                        if ev.holds(y, src, br.source):
                            partner = ev.m.corr_of(src, y, u)
                            if partner is not None and not ev.holds(
                                    partner, u, br.target):
                                return False
                    return True
            else:
                def fn(ev: _Eval, u=u, br=br):
                    src = br.source.unit
                    for d in range(ev.m.sizes[u]):
                        if ev.holds(d, u, br.target):
                            partner = ev.m.corr_of(u, d, src)
                            if partner is None or not ev.holds(
                                    partner, src, br.source):
                                return False
                    return True
            checks.append(_Check(2, {u, br.source.unit}, fn))

        for ic in coup.individual_correspondences:
            def fn(ev: _Eval, u=u, ic=ic):
                local = ev.m.inds[u][ic.local_name]
                foreign = ev.m.inds[ic.foreign_unit][ic.foreign_name]
                return ev.m.corr_of(u, local, ic.foreign_unit) == foreign
            checks.append(_Check(2, {u, ic.foreign_unit}, fn))

        for la in coup.link_assertions:
            prop = kb.link_property(u, la.link)
            stage = 2 if kb.is_punned(prop) else 1

            def fn(ev: _Eval, u=u, la=la, prop=prop):
                pair = (ev.m.inds[u][la.local_ind],
                        ev.m.inds[la.target_unit][la.foreign_ind])
                return pair in ev.extension(prop)
            checks.append(_Check(stage, {u, la.target_unit}, fn))

        for ld in coup.links:
            child = Property(ld.name, u, ld.target_unit)
            stage = 2 if kb.is_punned(child) else 1
            for parent_name in ld.parents:
                parent = Property(parent_name, u, ld.target_unit)
                pstage = max(stage, 2 if kb.is_punned(parent) else 1)

                def fn(ev: _Eval, child=child, parent=parent):
                    return ev.extension(child) <= ev.extension(parent)
                checks.append(_Check(pstage, {u, ld.target_unit}, fn))
            if ld.transitive:
                def fn(ev: _Eval, u=u, child=child):
                    role = ev.m.roles[u].get(child.name, frozenset())
                    link = ev.extension(child)
                    for (a, b) in role:
                        for (c, d) in link:
                            if b == c and (a, d) not in link:
                                return False
                    return True
                checks.append(_Check(stage, {u, ld.target_unit}, fn))

    # constraint sharing between correspondents, third-party atoms
    if len(kb.unit_order) > 2:
        def fn(ev: _Eval):
            for (i, j), pairs in ev.m.corr.items():
                for d, e in pairs:
                    for k in ev.kb.unit_order:
                        if k in (i, j):
                            continue
                        for name in ev.kb.units[k].concept_names:
                            atom = Atom(k, name)
                            if ev.holds(d, i, atom) != ev.holds(e, j, atom):
                                return False
            return True
        checks.append(_Check(2, set(kb.unit_order), fn))

    goal_check = None
    if goal is not None:
        g = nnf(goal)
        stage = _stage_of(g, g.home, kb)

        def fn(ev: _Eval, g=g):
            return any(ev.holds(d, g.home, g) for d in range(ev.m.sizes[g.home]))
        goal_check = _Check(stage, _touched_units(g, g.home, kb), fn)

    return checks, goal_check


def _touched_units(c: Concept, unit: str, kb: DistributedKB) -> set[str]:
    out = {unit, c.home}
    if isinstance(c, Not):
        out |= _touched_units(c.operand, unit, kb)
    elif isinstance(c, (And, Or)):
        out |= _touched_units(c.left, unit, kb)
        out |= _touched_units(c.right, unit, kb)
    elif isinstance(c, (Exists, ForAll, AtLeast, AtMost)):
        out.add(c.prop.target)
        out |= _touched_units(c.filler, c.prop.target, kb)
    return out


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------

class _Budget:
    def __init__(self, steps: int):
        self.left = steps

    def spend(self, n: int = 1):
        self.left -= n
        if self.left < 0:
            raise OracleOverflow("interpretation search exceeded its budget")


def _subsets(items):
    sets = []
    for bits in range(1 << len(items)):
        sets.append(frozenset(x for i, x in enumerate(items)
                              if bits >> i & 1))
    return sets


def _partial_injections(n: int, m: int):
    out = []
    for k in range(0, min(n, m) + 1):
        for chosen in itertools.combinations(range(n), k):
            for image in itertools.permutations(range(m), k):
                out.append(frozenset(zip(chosen, image)))
    return out


def _local_structures(kb: DistributedKB, unit: str, n: int,
                      stage0, budget: _Budget):
    """All (atoms, roles, individuals) triples for one unit that pass the
    unit's purely local constraints."""
    ukb = kb.units[unit]
    atom_names = sorted(ukb.concept_names)
    role_names = sorted(ukb.role_names)
    ind_names = sorted(ukb.individual_names)
    elements = list(range(n))
    all_pairs = [(a, b) for a in elements for b in elements]

    transitive = set(ukb.transitive_roles)
    for ld in kb.couplings[unit].links:
        if ld.transitive and ld.name in ukb.role_names:
            transitive.add(ld.name)

    role_exts = []
    for combo in itertools.product(*[_subsets(all_pairs) for _ in role_names]):
        ext = dict(zip(role_names, combo))
        ok = all(ext[sub] <= ext[sup] for sub, sup in ukb.role_inclusions)
        if ok:
            for r in transitive:
                pairs = ext[r]
                if any(b == c and (a, d) not in pairs
                       for (a, b) in pairs for (c, d) in pairs):
                    ok = False
                    break
        if ok:
            role_exts.append(ext)

    out = []
    for atom_combo in itertools.product(*[_subsets(elements)
                                          for _ in atom_names]):
        atoms = dict(zip(atom_names, atom_combo))
        for roles in role_exts:
            for ind_combo in itertools.product(elements,
                                               repeat=len(ind_names)):
                budget.spend()
                inds = dict(zip(ind_names, ind_combo))
                if any(inds[a] == inds[b] for a, b in ukb.inequalities):
                    continue
                bad = False
                for a, p, b in ukb.role_assertions:
                    pair = (inds[a], inds[b])
                    if p.inverted:
                        pair = (pair[1], pair[0])
                    if pair not in roles[p.name]:
                        bad = True
                        break
                if bad:
                    continue
                m = _Candidate(sizes={unit: n}, atoms={unit: atoms},
                               roles={unit: roles}, inds={unit: inds})
                ev = _Eval(kb, m)
                if all(chk.fn(ev) for chk in stage0):
                    out.append((atoms, roles, inds))
    return out


def oracle_satisfiable(kb: DistributedKB, goal: Concept | None = None,
                       domain_bound: int = 2,
                       budget: int = 20_000_000) -> bool:
    """Exhaustive satisfiability up to the domain bound.

    With goal=None this decides consistency of the KB itself.  Raises
    OracleOverflow when the search spends more than `budget` enumeration
    steps, never silently truncates.
    """
    checks, goal_check = _compile_checks(kb, goal)
    if goal_check is not None:
        checks = checks + [goal_check]
    units = kb.unit_order
    b = _Budget(budget)

    stage0_by_unit = {
        u: [c for c in checks if c.stage == 0 and c.units == {u}]
        for u in units
    }
    staged0_global = [c for c in checks
                      if c.stage == 0 and len(c.units) > 1]
    stage1 = [c for c in checks if c.stage == 1] + staged0_global
    stage2 = [c for c in checks if c.stage == 2]

    free_links = [
        (u, ld.name, ld.target_unit)
        for u in units for ld in kb.couplings[u].links
        if ld.name not in kb.units[u].role_names
    ]
    pair_list = list(itertools.combinations(units, 2))

    for sizes_tuple in itertools.product(range(1, domain_bound + 1),
                                         repeat=len(units)):
        sizes = dict(zip(units, sizes_tuple))
        per_unit = []
        empty = False
        for u in units:
            structures = _local_structures(kb, u, sizes[u],
                                           stage0_by_unit[u], b)
            if not structures:
                empty = True
                break
            per_unit.append(structures)
        if empty:
            continue

        link_spaces = [
            _subsets([(x, y) for x in range(sizes[h]) for y in range(sizes[t])])
            for h, _n, t in free_links
        ]
        corr_spaces = [_partial_injections(sizes[a], sizes[b2])
                       for a, b2 in pair_list]

        for locals_combo in itertools.product(*per_unit):
            base = _Candidate(
                sizes=sizes,
                atoms={u: lc[0] for u, lc in zip(units, locals_combo)},
                roles={u: lc[1] for u, lc in zip(units, locals_combo)},
                inds={u: lc[2] for u, lc in zip(units, locals_combo)},
            )
            for link_combo in itertools.product(*link_spaces):
                b.spend()
                base.links = {slot: ext for slot, ext
                              in zip(free_links, link_combo)}
                ev = _Eval(kb, base)
                if not all(chk.fn(ev) for chk in stage1):
                    continue
                for corr_combo in itertools.product(*corr_spaces):
                    b.spend()
                    base.corr = {pair: ext for pair, ext
                                 in zip(pair_list, corr_combo)}
                    ev = _Eval(kb, base)
                    if all(chk.fn(ev) for chk in stage2):
                        return True
                base.corr = {}
    return False

import pytest

from ontomesh.io import load_kb, parse_concept
from ontomesh.oracle import OracleOverflow, oracle_satisfiable

from figures import (
    articles_linked_kb, articles_overlap_kb, conference_square_kb,
    conference_triangle_kb,
)


def _kb(*units, couplings=()):
    return load_kb(list(units), list(couplings))


def test_subsumption_transitivity_unsat():
    kb = _kb("""
(unit u1)
(concept A)
(concept B)
(concept C)
(sub A B)
(sub B C)
""")
    goal = parse_concept("(and A (not C))", "u1")
    assert oracle_satisfiable(kb, goal, domain_bound=1) is False


def test_exists_satisfiable():
    kb = _kb("(unit u1)\n(concept A)\n(role r)")
    goal = parse_concept("(some r A)", "u1")
    assert oracle_satisfiable(kb, goal, domain_bound=2) is True


def test_fresh_atom_satisfiable():
    kb = _kb("(unit u1)\n(concept A)")
    assert oracle_satisfiable(kb, parse_concept("A", "u1"), domain_bound=1)


def test_plain_contradiction_unsat():
    kb = _kb("(unit u1)\n(concept A)")
    goal = parse_concept("(and A (not A))", "u1")
    assert oracle_satisfiable(kb, goal, domain_bound=2) is False


def test_triangle_entailment_unsat_at_bound_two():
    kb = conference_triangle_kb()
    goal = parse_concept("(and PediatricConference (not HumanActivity))", "u3")
    assert oracle_satisfiable(kb, goal, domain_bound=2) is False


def test_triangle_positive_side_satisfiable():
    kb = conference_triangle_kb()
    goal = parse_concept("(and PediatricConference HumanActivity)", "u3")
    assert oracle_satisfiable(kb, goal, domain_bound=2) is True


def test_triangle_without_central_bridge_satisfiable():
    # dropping u2's onto rule breaks the propagation chain
    kb = load_kb([
        "(unit u2)\n(concept Conference)\n(concept MedicalConference)\n"
        "(sub MedicalConference Conference)",
        "(unit u3)\n(concept PediatricConference)\n(concept HumanActivity)",
        "(unit u4)\n(concept Event)",
    ], [{"unit": "u3", "mappings": [
        {"source_unit": "u2", "bridge_rules": [
            {"kind": "onto", "source": "u2:MedicalConference",
             "target": "u3:PediatricConference"}]},
        {"source_unit": "u4", "bridge_rules": [
            {"kind": "into", "source": "u4:Event",
             "target": "u3:HumanActivity"}]}]}])
    goal = parse_concept("(and PediatricConference (not HumanActivity))", "u3")
    assert oracle_satisfiable(kb, goal, domain_bound=2) is True


def test_linked_articles_entailment():
    kb = articles_linked_kb()
    goal = parse_concept("(and MedicalArticle (not Article))", "u1")
    assert oracle_satisfiable(kb, goal, domain_bound=2) is False
    # the reverse subsumption is not implied
    rev = parse_concept("(and Article (not MedicalArticle))", "u1")
    assert oracle_satisfiable(kb, rev, domain_bound=2) is True


def test_overlap_articles_entailment_needs_bridge():
    kb = articles_overlap_kb()
    goal = parse_concept("(and MathArticle (not Article))", "u1")
    assert oracle_satisfiable(kb, goal, domain_bound=2) is False


def test_square_kb_consistent():
    # four units strain the oracle for refutations, but a model is found
    # quickly at small domain sizes
    kb = conference_square_kb()
    assert oracle_satisfiable(kb, None, domain_bound=2) is True


def test_correspondence_clash_detected():
    # u2 holds a:C; u1 holds b with constraints forcing not C on b's
    # u2-correspondent, plus the correspondence itself
    u1 = """
(unit u1)
(concept D)
(individual b)
(instance b D)
(sub D (not u2:C))
"""
    u2 = """
(unit u2)
(concept C)
(individual a)
(instance a C)
"""
    c1 = {"unit": "u1", "mappings": [{"source_unit": "u2",
                                      "individual_correspondences": [
                                          {"foreign": "u2:a", "local": "u1:b"}]}]}
    kb = load_kb([u1, u2], [c1])
    assert oracle_satisfiable(kb, None, domain_bound=2) is False


def test_link_assertion_propagates_value_restriction():
    u1 = """
(unit u1)
(concept A)
(individual a)
(instance a (all e u2:G))
"""
    u2 = """
(unit u2)
(concept G)
(concept H)
(individual b)
(instance b (and H (not G)))
"""
    c1 = {"unit": "u1",
          "links": [{"name": "e", "target_unit": "u2"}],
          "link_assertions": [{"from": "u1:a", "link": "e", "to": "u2:b"}]}
    kb = load_kb([u1, u2], [c1])
    assert oracle_satisfiable(kb, None, domain_bound=2) is False


def test_transitive_role_forces_propagation():
    kb = _kb("""
(unit u1)
(concept A)
(role r)
(transitive r)
(individual x)
(individual y)
(individual z)
(related x r y)
(related y r z)
(instance x (all r A))
(instance z (not A))
""")
    assert oracle_satisfiable(kb, None, domain_bound=3) is False


def test_overflow_raised_when_budget_exhausted():
    kb = conference_triangle_kb()
    goal = parse_concept("(and PediatricConference (not HumanActivity))", "u3")
    with pytest.raises(OracleOverflow):
        oracle_satisfiable(kb, goal, domain_bound=2, budget=50)

from fractions import Fraction as F

import pytest

import reference as ref
from mixfair.fairness import (
    EF,
    EF1,
    EF_ALPHA,
    EFM,
    PROP,
    PROP1,
    PROP_ALPHA,
    PROPMM,
    Criterion,
    check,
    check_fpo_two_agents,
    check_po_two_agents,
    compute_mms,
    pareto_improve_two_agents,
    effa,
    mms,
    propfa,
    reverify,
)
from mixfair.model import ModelError, bundle_value, make_allocation, make_instance, validate_allocation
from mixfair.oracle import build_template, random_instance

ALL = [EF, EF1, EF_ALPHA, EFM, PROP, PROP1, PROP_ALPHA, PROPMM, Criterion("PROPmM", literal=True)]


def test_intro_example():
    t = build_template("intro")
    rep = check(t.instance, t.allocation, EF_ALPHA)
    assert not rep.satisfied
    worst = min(rep.violations, key=lambda c: c.slack)
    assert (worst.lhs, worst.rhs) == (F(1, 4), F(3, 8))
    assert {(c.agent, c.other) for c in rep.violations} == {(0, 2), (1, 2)}
    assert check(t.instance, t.allocation, EFM).satisfied
    assert reverify(t.instance, t.allocation, rep)


def test_invalid_allocation_rejected():
    inst = make_instance([[1, 1], [1, 1]])
    with pytest.raises(ModelError):
        check(inst, make_allocation([([0], []), ([], [])]), EF)


@pytest.mark.parametrize("token", ["ef", "prop", "ef1", "prop1", "efm", "efalpha", "propalpha",
                                   "effa:3/2", "propfa:2/3", "mms", "mms:4/5", "propmm", "propmm-literal"])
def test_criterion_tokens_round_trip(token):
    assert Criterion.parse(token).token == token


@pytest.mark.parametrize("token", ["", "efx", "effa", "propfa:x", "mms:0", "mms:3/2", "effa:-1", "ef:1"])
def test_bad_tokens(token):
    with pytest.raises(ModelError):
        Criterion.parse(token)


def test_checkers_match_reference(rng):
    pairs = [(EF, lambda i, a: ref.ef_relaxed(i, a, lambda _: 0)),
             (EF1, lambda i, a: ref.ef_relaxed(i, a, lambda _: 1)),
             (EF_ALPHA, ref.efalpha),
             (effa(F(3, 2)), lambda i, a: ref.efalpha(i, a, F(3, 2))),
             (EFM, ref.efm),
             (PROP, lambda i, a: ref.prop_relaxed(i, a, lambda _: 0)),
             (PROP1, lambda i, a: ref.prop_relaxed(i, a, lambda _: 1)),
             (PROP_ALPHA, ref.propalpha),
             (propfa(F(1, 2)), lambda i, a: ref.propalpha(i, a, F(1, 2)))]
    seen = {c.token: set() for c, _ in pairs}
    for _ in range(400):
        inst = random_instance(rng, rng.randint(2, 4), rng.randint(0, 5), rng.randint(1, 3))
        alloc = ref.random_allocation(rng, inst)
        for crit, oracle in pairs:
            rep = check(inst, alloc, crit)
            assert rep.satisfied == oracle(inst, alloc), (crit.token, inst, alloc)
            assert reverify(inst, alloc, rep)
            seen[crit.token].add(rep.satisfied)
    # the sample must exercise both verdicts for the relaxed notions
    for token in ("ef1", "efalpha", "efm", "prop1", "propalpha"):
        assert seen[token] == {True, False}


def test_implications(rng):
    for _ in range(400):
        inst = random_instance(rng, rng.randint(2, 4), rng.randint(0, 5), rng.randint(0, 2) or 1)
        alloc = ref.random_allocation(rng, inst)
        s = {c.token: check(inst, alloc, c).satisfied for c in ALL}
        assert not s["ef"] or (s["efalpha"] and s["efm"] and s["prop"])
        assert not s["efalpha"] or s["ef1"]
        assert not s["efm"] or s["ef1"]
        assert not s["prop"] or s["propalpha"]
        assert not s["propalpha"] or s["prop1"]


def test_degenerate_reductions(rng):
    for _ in range(200):
        goods_only = random_instance(rng, 3, 4, 0)
        alloc = ref.random_allocation(rng, goods_only)
        assert check(goods_only, alloc, EF_ALPHA).satisfied == check(goods_only, alloc, EF1).satisfied
        assert check(goods_only, alloc, PROP_ALPHA).satisfied == check(goods_only, alloc, PROP1).satisfied
        assert check(goods_only, alloc, EFM).satisfied == check(goods_only, alloc, EF1).satisfied
        cake_only = random_instance(rng, 3, 0, 3)
        alloc = ref.random_allocation(rng, cake_only)
        assert check(cake_only, alloc, EF_ALPHA).satisfied == check(cake_only, alloc, EF).satisfied
        assert check(cake_only, alloc, PROP_ALPHA).satisfied == check(cake_only, alloc, PROP).satisfied
        assert check(cake_only, alloc, EFM).satisfied == check(cake_only, alloc, EF).satisfied


def test_propmm_readings_differ():
    inst = make_instance([[F(1, 20), F(9, 20), F(9, 20)], [F(1, 4)] * 3], [0, 1], [[F(1, 20)], [F(1, 4)]])
    alloc = make_allocation([([0], [(0, 1)]), ([1, 2], [])])
    prose = check(inst, alloc, PROPMM)
    literal = check(inst, alloc, Criterion.parse("propmm-literal"))
    assert prose.satisfied and prose.conditions[0].lhs == F(11, 20)
    assert not literal.satisfied and literal.conditions[0].lhs == F(3, 20)
    assert reverify(inst, alloc, prose) and reverify(inst, alloc, literal)


# -- maximin share --------------------------------------------------------


def test_mms_examples():
    inst = make_instance([[F(1, 2), F(3, 10)], [F(1, 2), F(3, 10)]], [0, 1], [[F(1, 5)], [F(1, 5)]])
    cert = compute_mms(inst, 0)
    assert cert.value == F(1, 2)
    assert min(cert.bundle_values(inst)) == F(1, 2)
    for n in (2, 3, 5):
        cake = make_instance([[]] * n, [0, F(1, 3), 1], [[3, 0]] * n)
        assert compute_mms(cake, 0).value == F(1, n)
    single = make_instance([[1], [1]])
    assert compute_mms(single, 1).value == 0


def test_mms_matches_brute_force(rng):
    for _ in range(150):
        n = rng.randint(2, 4)
        inst = random_instance(rng, n, rng.randint(1, 6), rng.randint(0, 2))
        for i in range(n):
            cert = compute_mms(inst, i)
            assert cert.value == ref.mms(inst, i)
            assert min(cert.bundle_values(inst)) == cert.value
            assert sum(cert.cake_shares) == inst.cake_value(i)
            assert sorted(g for p in cert.partition for g in p) == list(range(inst.m))


def test_mms_check_and_limits():
    inst = make_instance([[F(1, 2), F(3, 10)], [F(1, 2), F(3, 10)]], [0, 1], [[F(1, 5)], [F(1, 5)]])
    alloc = make_allocation([([0], []), ([1], [(0, 1)])])
    assert check(inst, alloc, mms()).satisfied
    worse = make_allocation([([0, 1], []), ([], [(0, 1)])])
    rep = check(inst, worse, mms())
    assert [c.agent for c in rep.violations] == [1]
    assert check(inst, worse, mms(F(2, 5))).satisfied
    big = make_instance([[1]] * 7)
    with pytest.raises(ModelError):
        compute_mms(big, 0)


# -- Pareto optimality for two agents --------------------------------------


def test_fpo_exchange_certificate():
    inst = make_instance([[1, 3], [3, 1]])
    bad = make_allocation([([0], []), ([1], [])])
    res = check_fpo_two_agents(inst, bad)
    assert not res.satisfied and res.exchange.is_improvement(inst)
    assert check_fpo_two_agents(inst, make_allocation([([1], []), ([0], [])])).satisfied


def test_fpo_with_cake_segments():
    inst = make_instance([[], []], [0, F(1, 2), 1], [[2, 0], [1, 1]])
    bad = make_allocation([([], [(F(1, 2), 1)]), ([], [(0, F(1, 2))])])
    res = check_fpo_two_agents(inst, bad)
    assert not res.satisfied and res.exchange.is_improvement(inst)
    good = make_allocation([([], [(0, F(1, 2))]), ([], [(F(1, 2), 1)])])
    assert check_fpo_two_agents(inst, good).satisfied


def test_po_check(rng):
    for _ in range(150):
        inst = random_instance(rng, 2, rng.randint(1, 5), rng.randint(1, 2))
        alloc = ref.random_allocation(rng, inst)
        fpo = check_fpo_two_agents(inst, alloc)
        po = check_po_two_agents(inst, alloc)
        if fpo.satisfied:
            assert po.satisfied
        if not fpo.satisfied:
            assert fpo.exchange.is_improvement(inst)
        if not po.satisfied:
            own0, (u0, u1) = po.dominating
            assert u0 >= bundle_value(inst, 0, alloc[0]) and u1 >= bundle_value(inst, 1, alloc[1])
            assert (u0, u1) != (bundle_value(inst, 0, alloc[0]), bundle_value(inst, 1, alloc[1]))


def test_po_dominating_is_realisable():
    # whole-goods swap: both agents prefer the other's good
    inst = make_instance([[1, 2], [2, 1]], [0, 1], [[1], [1]])
    alloc = make_allocation([([0], [(0, F(1, 2))]), ([1], [(F(1, 2), 1)])])
    po = check_po_two_agents(inst, alloc)
    assert not po.satisfied and po.dominating[0] == frozenset({1})


def test_pareto_improvement_is_po_and_dominates(rng):
    for _ in range(100):
        inst = random_instance(rng, 2, rng.randint(0, 5), rng.randint(1, 3))
        alloc = ref.random_allocation(rng, inst)
        better = pareto_improve_two_agents(inst, alloc)
        assert validate_allocation(inst, better) == []
        for i in range(2):
            assert ref.value(inst, i, better[i]) >= ref.value(inst, i, alloc[i])
        assert check_po_two_agents(inst, better).satisfied

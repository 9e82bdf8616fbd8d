import json
from fractions import Fraction as F

import pytest

import reference as ref
from mixfair.cake import eval_query
from mixfair.model import (
    Allocation,
    Bundle,
    ModelError,
    PieceSet,
    as_rational,
    indivisibility_ratio,
    make_allocation,
    make_instance,
    normalize,
    parse_allocation,
    parse_instance,
    serialize_allocation,
    serialize_instance,
    utility,
    validate_allocation,
)
from mixfair.oracle import gen_instance, random_instance

INTRO = {
    "agents": 3,
    "goods": [["1/4", "1/4"]] * 3,
    "cake": {"breakpoints": ["0", "1"], "densities": [["1/2"]] * 3},
}


def test_parse_intro_instance():
    inst = parse_instance(json.dumps(INTRO))
    assert (inst.n, inst.m, inst.segments) == (3, 2, 1)
    assert all(inst.total(i) == 1 for i in range(3))


def test_parse_cake_only_single_agent():
    inst = parse_instance('{"agents": 1, "goods": [[]], "cake": {"breakpoints": ["0", "1"], "densities": [["1"]]}}')
    assert inst.m == 0
    assert inst.cake_value(0) == 1


def test_non_monotone_breakpoints_reported_with_path():
    data = {"agents": 1, "goods": [[]], "cake": {"breakpoints": ["0", "1/2", "1/3", "1"], "densities": [["1", "1", "1"]]}}
    with pytest.raises(ModelError) as exc:
        parse_instance(json.dumps(data))
    assert "non-monotone breakpoints" in str(exc.value)
    assert exc.value.path == "cake.breakpoints[2]"


@pytest.mark.parametrize("bad, path", [
    ({"agents": 1, "goods": [["1/0"]]}, "goods[0][0]"),
    ({"agents": 1, "goods": [["-1", "2"]]}, "goods[0][0]"),
    ({"agents": 2, "goods": [["1"]]}, "goods"),
])
def test_malformed_fields_have_paths(bad, path):
    with pytest.raises(ModelError) as exc:
        parse_instance(json.dumps(bad))
    assert exc.value.path == path


def test_floats_are_rejected():
    with pytest.raises(ModelError):
        as_rational(0.5)
    assert as_rational("0.25") == F(1, 4)


def test_zero_total_agent_needs_degenerate_flag():
    with pytest.raises(ModelError):
        make_instance([[0, 0], [1, 1]])
    inst = make_instance([[0, 0], [1, 1]], degenerate=True)
    with pytest.raises(ModelError):
        normalize(inst)


def test_normalize_examples():
    inst = make_instance([[3, 1], [3, 1]])
    assert normalize(inst).goods[0] == (F(3, 4), F(1, 4))
    t9 = gen_instance("t9", n=3, eps=F(3, 10))
    assert t9.total(0) == 3 - 2 * F(1, 10)
    norm = normalize(t9)
    assert all(norm.total(i) == 1 for i in range(3))
    assert normalize(norm) == norm


def test_indivisibility_ratio_examples():
    assert indivisibility_ratio(parse_instance(json.dumps(INTRO)), 0) == F(1, 2)
    assert indivisibility_ratio(make_instance([[]], [0, 1], [[1]]), 0) == 0
    for n in (3, 4, 7):
        assert indivisibility_ratio(gen_instance("t3", n=n), 1) == F(2, n)


def test_utility_examples():
    inst = parse_instance(json.dumps(INTRO))
    assert utility(inst, 0, {0, 1}) == F(1, 2)
    assert utility(inst, 0) == 0
    uni = make_instance([[]], [0, 1], [[F(2, 5)]])
    piece = PieceSet.of((0, F(1, 20)))
    assert utility(uni, 0, (), piece) == F(1, 50) == eval_query(uni, 0, 0, F(1, 20))
    with pytest.raises(ModelError):
        utility(inst, 0, {5})


def test_validate_allocation_cases():
    inst = make_instance([[1] * 6, [1] * 6], [0, 1], [[1], [1]])
    half = [(0, F(1, 2))]
    overlap = make_allocation([(range(3), half), (range(3, 6), half)])
    kinds = {v.kind: v for v in validate_allocation(inst, overlap)}
    assert kinds["overlap"].interval == (0, F(1, 2))
    assert "gap" in kinds
    ok = make_allocation([(range(3), half), (range(3, 6), [(F(1, 2), 1)])])
    assert validate_allocation(inst, ok) == []
    dup = make_allocation([([0, 1, 2, 5], half), ([3, 4, 5], [(F(1, 2), 1)])])
    assert [v.kind for v in validate_allocation(inst, dup)] == ["duplicate-good"]


def test_piece_set_is_canonical():
    p = PieceSet.of((F(1, 2), 1), (0, F(1, 4)), (F(1, 4), F(1, 2)))
    assert p.intervals == ((0, 1),)
    with pytest.raises(ModelError):
        PieceSet.of((0, F(1, 2)), (F(1, 3), 1))


def test_round_trip(rng):
    for _ in range(50):
        inst = random_instance(rng, rng.randint(1, 4), rng.randint(0, 5), rng.randint(1, 3))
        assert parse_instance(serialize_instance(inst)) == inst
    alloc = Allocation((Bundle({1}, PieceSet.of((0, F(1, 3)))), Bundle({0}, PieceSet.of((F(1, 3), 1)))))
    assert parse_allocation(serialize_allocation(alloc)) == alloc


def test_normalize_preserves_comparisons_and_ratio(rng):
    for _ in range(40):
        inst = random_instance(rng, 3, 4, 2)
        norm = normalize(inst)
        pieces = [PieceSet.of((0, F(1, 3))), PieceSet.of((F(1, 3), 1))]
        for i in range(3):
            assert indivisibility_ratio(norm, i) == indivisibility_ratio(inst, i)
            a = utility(inst, i, {0, 1}, pieces[0])
            b = utility(inst, i, {2, 3}, pieces[1])
            na = utility(norm, i, {0, 1}, pieces[0])
            nb = utility(norm, i, {2, 3}, pieces[1])
            assert (a < b) == (na < nb) and (a == b) == (na == nb)


def test_utility_additive_and_matches_reference(rng):
    for _ in range(40):
        inst = random_instance(rng, 2, 5, 3)
        cut = F(rng.randint(1, 99), 100)
        p1, p2 = PieceSet.of((0, cut)), PieceSet.of((cut, 1))
        whole = utility(inst, 1, range(5), PieceSet.of((0, 1)))
        assert whole == utility(inst, 1, {0, 2}, p1) + utility(inst, 1, {1, 3, 4}, p2)
        assert utility(inst, 1, {0}, p1) == ref.value(inst, 1, Bundle({0}, p1))

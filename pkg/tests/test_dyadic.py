import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoskit.dyadic import (
    CellTuple,
    DyadicMap,
    GroupSpec,
    apply_point,
    compose,
    degree,
    diagonal_apply,
    from_permutation,
    identity,
    inverse,
    is_transitive_on,
    orbits,
    periodic_shift,
    refine,
    restricted_group,
    restricted_group_generators,
    shift_group,
    transposition,
    trivial_group,
)
from chaoskit.errors import (
    ClosureCapExceeded,
    EmptySet,
    GeneratorMovesComplement,
    LevelMismatch,
    LevelTooCoarse,
    NotABijection,
)

HALF_SWAP = from_permutation(1, [1, 0])


@st.composite
def maps(draw, max_level=4):
    d = draw(st.integers(0, max_level))
    perm = draw(st.permutations(list(range(1 << d))))
    return from_permutation(d, perm)


def midpoint_oracle(g, d):
    """Images of level-d cells by evaluating the point map at cell midpoints."""
    mids = (np.arange(1 << d) + 0.5) / (1 << d)
    return np.floor(np.asarray(apply_point(g, mids)) * (1 << d)).astype(int)


def test_from_permutation_examples():
    assert from_permutation(0, [0]) == identity()
    g = from_permutation(3, range(8))
    assert g.level == 0 and g.is_identity()
    assert HALF_SWAP.level == 1 and HALF_SWAP.perm == (1, 0)


def test_from_permutation_rejects_non_bijection():
    with pytest.raises(NotABijection):
        from_permutation(2, [0, 0, 1, 2])
    with pytest.raises(NotABijection):
        from_permutation(2, [0, 1, 2])


def test_apply_point_examples():
    assert apply_point(HALF_SWAP, 0.25) == pytest.approx(0.75)
    assert apply_point(identity(), 0.6) == pytest.approx(0.6)
    assert apply_point(periodic_shift(2), 0.1) == pytest.approx(0.35)


def test_apply_point_grid_boundary():
    g = from_permutation(2, [2, 0, 3, 1])
    for k in range(4):
        # right endpoint of cell k goes to the right endpoint of cell perm[k]
        assert apply_point(g, (k + 1) / 4) == pytest.approx((g.perm[k] + 1) / 4)


def test_compose_and_inverse_examples():
    assert compose(HALF_SWAP, HALF_SWAP) == identity()
    g = from_permutation(2, [3, 1, 0, 2])
    assert compose(g, identity()) == g
    for d in range(1, 5):
        s = periodic_shift(d)
        power = identity()
        for _ in range((1 << d) - 1):
            power = compose(s, power)
        assert inverse(s) == power


def test_refine_examples():
    assert refine(identity(), 2).tolist() == [0, 1, 2, 3]
    assert refine(HALF_SWAP, 2).tolist() == [2, 3, 0, 1]
    assert refine(periodic_shift(2), 3).tolist() == [2, 3, 4, 5, 6, 7, 0, 1]
    assert refine(periodic_shift(2), 3).tolist() == midpoint_oracle(periodic_shift(2), 3).tolist()
    with pytest.raises(LevelTooCoarse):
        refine(periodic_shift(3), 2)


def test_degree_examples():
    assert degree(identity()) == 0
    assert degree(HALF_SWAP) == 1
    t = transposition(3, 0, 1)
    assert degree(t) == 3
    # not representable at a coarser level: refining a coarser candidate never matches
    for d in range(3):
        for perm in itertools.permutations(range(1 << d)):
            assert refine(from_permutation(d, perm), 3).tolist() != refine(t, 3).tolist()


def test_periodic_shift_examples():
    assert periodic_shift(1) == HALF_SWAP
    assert periodic_shift(2).perm == (1, 2, 3, 0)
    with pytest.raises(ValueError):
        periodic_shift(0)


def test_restricted_group_generators_examples():
    gens = restricted_group_generators({0}, 1, 2)
    assert gens == [transposition(2, 0, 1)]
    full = restricted_group_generators({0}, 0, 2)
    assert len(full) == 3
    assert len(GroupSpec(tuple(full)).elements) == 24
    assert restricted_group_generators({1}, 1, 1) == [identity()]
    with pytest.raises(EmptySet):
        restricted_group_generators(set(), 1, 2)


def test_diagonal_apply_examples():
    x = CellTuple((0, 1), (0, 1))
    assert diagonal_apply(identity(), x, 1) == x
    assert diagonal_apply(HALF_SWAP, x, 1) == CellTuple((1, 0), (0, 1))
    assert diagonal_apply(periodic_shift(2), CellTuple((3,), (0,)), 2) == CellTuple((0,), (0,))
    with pytest.raises(LevelMismatch):
        diagonal_apply(periodic_shift(3), x, 2)


def test_orbits_examples():
    part = orbits(trivial_group(), 2, 2, 1)
    assert part.n_orbits == len(part.labels)
    full = restricted_group([[0]], 0, 2)
    assert orbits(full, 1, 2, 1).n_orbits == 1
    half = restricted_group([[0]], 1, 2)
    part = orbits(half, 1, 2, 1)
    blocks = sorted(sorted(c.cells[0] for c in b) for b in part.blocks())
    assert blocks == [[0, 1], [2], [3]]


def test_orbits_full_group_indexed_by_atoms():
    full = restricted_group([[0]], 0, 2)
    part = orbits(full, 2, 2, 2)
    # off-diagonal pairs under S_4: one orbit per atom pair
    assert part.n_orbits == 4
    for block in part.blocks():
        assert len({c.atoms for c in block}) == 1


def test_orbits_generator_closed():
    group = restricted_group([[0, 1], [3]], 2, 3)
    part = orbits(group, 2, 3, 2)
    for block in part.blocks():
        members = set(block)
        for g in group.generators:
            assert {diagonal_apply(g, x, 3) for x in block} == members


def test_orbits_closure_cap():
    group = GroupSpec(restricted_group([[0]], 0, 3).generators, closure_cap=100)
    with pytest.raises(ClosureCapExceeded):
        group.elements


def test_group_order_via_schreier_sims():
    assert restricted_group([[0]], 0, 5).order() == math.factorial(32)
    assert shift_group(4).order() == 16


def test_is_transitive_on_examples():
    gens = tuple(transposition(2, i, i + 1) for i in range(3))
    assert is_transitive_on(GroupSpec(gens), range(4), 2)
    assert not is_transitive_on(trivial_group(), [0, 1], 1)
    split = GroupSpec((transposition(2, 0, 1), transposition(2, 2, 3)))
    assert not is_transitive_on(split, range(4), 2)
    with pytest.raises(GeneratorMovesComplement):
        is_transitive_on(split, [0, 1], 2)


def test_json_round_trip():
    g = from_permutation(2, [2, 0, 3, 1])
    assert DyadicMap.from_json(g.to_json()) == g
    group = restricted_group([[0, 1]], 2, 3)
    assert GroupSpec.from_json(group.to_json()).generators == group.generators


@settings(max_examples=60, deadline=None)
@given(maps(), maps(), maps())
def test_group_laws(f, g, h):
    assert compose(compose(f, g), h) == compose(f, compose(g, h))
    assert inverse(compose(g, h)) == compose(inverse(h), inverse(g))
    assert compose(inverse(g), g) == identity()


@settings(max_examples=60, deadline=None)
@given(maps(), st.floats(min_value=1e-6, max_value=1.0))
def test_composition_is_pointwise(g, t):
    h = periodic_shift(2)
    assert apply_point(compose(g, h), t) == pytest.approx(apply_point(g, apply_point(h, t)))


@settings(max_examples=60, deadline=None)
@given(maps(), st.integers(0, 2))
def test_refine_canonical_and_measure_preserving(g, extra):
    d = g.level + extra
    img = refine(g, d)
    assert sorted(img.tolist()) == list(range(1 << d))
    assert from_permutation(d, img) == g
    assert img.tolist() == midpoint_oracle(g, d).tolist()


@settings(max_examples=40, deadline=None)
@given(maps(3), maps(3), st.lists(st.integers(0, 7), min_size=1, max_size=3, unique=True))
def test_diagonal_apply_is_action(g, h, cells):
    x = CellTuple(tuple(cells), tuple(range(len(cells))))
    assert diagonal_apply(g, diagonal_apply(h, x, 3), 3) == diagonal_apply(compose(g, h), x, 3)


def test_orbit_partition_refines_when_group_shrinks():
    big = restricted_group([[0, 1, 2, 3]], 3, 3)
    small = restricted_group([[0, 1]], 3, 3)
    pb, ps = orbits(big, 2, 3, 1), orbits(small, 2, 3, 1)
    # every small orbit sits inside one big orbit
    for lab in np.unique(ps.labels):
        assert len(np.unique(pb.labels[ps.labels == lab])) == 1
    assert ps.n_orbits > pb.n_orbits

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoskit.dyadic import (
    compose,
    from_permutation,
    identity,
    inverse,
    periodic_shift,
    restricted_group,
    trivial_group,
)
from chaoskit.errors import EmptyInterval, IndexOutOfRange, LevelTooCoarse, ModelMismatch
from chaoskit.kernel import (
    ChaosVector,
    GridKernel,
    contraction,
    cuboid_average,
    dolean_kernel,
    invariance_defect,
    is_cuboid_constant,
    is_invariant,
    l2_inner,
    l2_norm_sq,
    orbit_project,
    pullback,
    restrict_time,
    symmetrize,
    tensor,
)
from chaoskit.levy import LevyModel

MODEL = LevyModel(1.0, ((1.0, 2.0), (-0.5, 1.0)))
ONE = LevyModel(1.0)


def rand_kernel(rng, n, d=2, A=3):
    P = (1 << d) * A
    return GridKernel(d, A, rng.normal(size=(P,) * n))


def brute_norm_sq(f, model):
    """Sum over explicit off-diagonal tuples of value^2 times product weights."""
    w = model.cell_weights(f.level)
    total = 0.0
    for idx in itertools.product(range(f.n_points), repeat=f.n):
        cells = [p // f.atom_count for p in idx]
        if len(set(cells)) < f.n:
            continue
        total += f.values[idx] ** 2 * np.prod(w[list(idx)])
    return total


def test_diagonal_is_dropped():
    vals = np.ones((4, 4))
    f = GridKernel(1, 2, vals)
    assert f.values[0, 1] == 0 and f.values[0, 2] == 1
    with pytest.raises(ValueError):
        GridKernel.from_entries(2, 1, 1, [((0, 0), (0, 0), 1.0)])


def test_l2_norm_examples():
    f = GridKernel.from_entries(1, 3, 1, [((0,), (0,), 1.0)])
    assert l2_norm_sq(f, ONE) == pytest.approx(1 / 8)
    assert l2_norm_sq(GridKernel.zeros(2, 2, 3), MODEL) == 0.0
    m = LevyModel(1.0, ((1.0, 0.5),))
    f = GridKernel.from_entries(2, 1, 2, [((0, 1), (0, 1), 1.0)])
    assert l2_norm_sq(f, m) == pytest.approx(0.5 * 0.5 * 1.0 * 0.5)
    with pytest.raises(ModelMismatch):
        l2_norm_sq(f, MODEL)


def test_l2_norm_matches_brute_force():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3):
        f = rand_kernel(rng, n, 1, 3)
        assert l2_norm_sq(f, MODEL) == pytest.approx(brute_norm_sq(f, MODEL))


def test_symmetrize_examples():
    f = GridKernel.from_entries(2, 1, 2, [((0, 1), (0, 1), 2.0)])
    s = symmetrize(f)
    assert s.value_at((0, 1), (0, 1)) == 1.0 and s.value_at((1, 0), (1, 0)) == 1.0
    assert symmetrize(s).max_abs_diff(s) == 0.0


def test_pullback_examples():
    rng = np.random.default_rng(1)
    f = rand_kernel(rng, 2)
    assert pullback(f, identity()).max_abs_diff(f) == 0.0
    g = from_permutation(2, [2, 0, 3, 1])
    assert pullback(pullback(f, g), inverse(g)).max_abs_diff(f) == 0.0
    assert l2_norm_sq(pullback(f, g), MODEL) == pytest.approx(l2_norm_sq(f, MODEL), rel=1e-14)
    with pytest.raises(LevelTooCoarse):
        pullback(f, periodic_shift(3))


def test_pullback_pointwise_definition():
    f = GridKernel.from_entries(2, 2, 1, [((1, 3), (0, 0), 5.0)])
    g = from_permutation(2, [1, 3, 0, 2])
    # (S_g f)(x) = f(g x): entry at (0, 1) reads f at (g(0), g(1)) = (1, 3)
    assert pullback(f, g).value_at((0, 1), (0, 0)) == 5.0


def test_tensor_examples():
    a = GridKernel.from_entries(1, 2, 1, [((0,), (0,), 1.0)])
    b = GridKernel.from_entries(1, 2, 1, [((2,), (0,), 1.0)])
    t = tensor(a, b)
    assert t.entries() == [((0, 2), (0, 0), 1.0)]
    assert tensor(a, a).entries() == []
    rng = np.random.default_rng(2)
    f = GridKernel(2, 3, rng.normal(size=12) * np.repeat([1, 1, 0, 0], 3))
    h = GridKernel(2, 3, rng.normal(size=12) * np.repeat([0, 0, 1, 1], 3))
    assert l2_norm_sq(tensor(f, h), MODEL) == pytest.approx(l2_norm_sq(f, MODEL) * l2_norm_sq(h, MODEL))


def test_contraction_examples():
    rng = np.random.default_rng(3)
    f, h = rand_kernel(rng, 2), rand_kernel(rng, 1)
    assert contraction(f, h, 0, 0, MODEL).max_abs_diff(tensor(f, h)) < 1e-15
    a, b = rand_kernel(rng, 1), rand_kernel(rng, 1)
    assert contraction(a, b, 1, 0, MODEL) == pytest.approx(l2_inner(a, b, MODEL))
    with pytest.raises(IndexOutOfRange):
        contraction(a, b, 1, 1, MODEL)
    with pytest.raises(IndexOutOfRange):
        contraction(a, b, 2, 0, MODEL)


def test_contraction_against_loop_oracle():
    rng = np.random.default_rng(4)
    d, A = 1, 3
    f, h = rand_kernel(rng, 3, d, A), rand_kernel(rng, 2, d, A)
    w = MODEL.cell_weights(d)
    xs = np.tile(MODEL.state_values, 1 << d)
    P = f.n_points
    # k = 1, r = 1: f(alpha, gamma, rho) h(rho, gamma) -> (alpha, gamma)
    out = contraction(f, h, 1, 1, MODEL)
    expect = np.zeros((P, P))
    for al, ga in itertools.product(range(P), repeat=2):
        expect[al, ga] = xs[ga] * sum(f.values[al, ga, r] * h.values[r, ga] * w[r] for r in range(P))
    assert out.max_abs_diff(GridKernel(d, A, expect)) < 1e-13


def test_contraction_preserves_invariance():
    rng = np.random.default_rng(5)
    group = restricted_group([[0, 1], [2, 3]], 2, 2)
    for k, r in [(0, 0), (1, 0), (0, 1), (1, 1)]:
        f = orbit_project(rand_kernel(rng, 2), group)
        h = orbit_project(rand_kernel(rng, 3), group)
        out = contraction(f, h, k, r, MODEL)
        if isinstance(out, GridKernel):
            assert invariance_defect(out, group) < 1e-13


def test_orbit_project_examples():
    rng = np.random.default_rng(6)
    f = rand_kernel(rng, 2)
    assert orbit_project(f, trivial_group()).max_abs_diff(f) == 0.0
    group = restricted_group([[0, 1, 2]], 2, 2)
    p = orbit_project(f, group)
    assert orbit_project(p, group).max_abs_diff(p) < 1e-14
    assert is_invariant(p, group)
    # n = 1 under the full group: time average per atom
    g = GridKernel(1, 2, np.array([1.0, 10.0, 3.0, 20.0]))
    full = restricted_group([[0]], 0, 1)
    assert orbit_project(g, full).values.tolist() == [2.0, 15.0, 2.0, 15.0]


def test_orbit_project_two_routes_agree():
    rng = np.random.default_rng(7)
    for blocks in ([[0, 1, 2, 3]], [[0, 2], [1, 3]]):
        group = restricted_group(blocks, 2, 2)
        for n in (1, 2, 3):
            f = rand_kernel(rng, n)
            assert orbit_project(f, group).max_abs_diff(orbit_project(f, group, "average")) < 1e-13


def test_orbit_project_properties():
    rng = np.random.default_rng(8)
    group = restricted_group([[0, 1], [2, 3]], 2, 2)
    f = rand_kernel(rng, 2)
    p = orbit_project(f, group)
    assert l2_norm_sq(p, MODEL) <= l2_norm_sq(f, MODEL) + 1e-14
    assert symmetrize(p).max_abs_diff(orbit_project(symmetrize(f), group)) < 1e-14
    # Pythagoras for an orthogonal projection
    assert l2_norm_sq(f, MODEL) == pytest.approx(l2_norm_sq(p, MODEL) + l2_norm_sq(f - p, MODEL))
    assert orbit_project(symmetrize(f), group).is_symmetric()


def test_is_invariant_spike():
    f = GridKernel.from_entries(1, 2, 1, [((0,), (0,), 1.0)])
    assert not is_invariant(f, restricted_group([[0, 1]], 2, 2))


def test_is_cuboid_constant_examples():
    f = GridKernel(2, 2, np.ones((8, 8)))
    assert is_cuboid_constant(f, [[0, 1], [2, 3]])
    g = GridKernel(2, 1, np.array([1.0, 2.0, 0.0, 0.0]))
    assert not is_cuboid_constant(g, [[0, 1]])
    assert is_cuboid_constant(g, [[0], [1]])


def test_cuboid_outside_cells_are_free_but_not_averaged():
    # cell 3 is outside every block; its own value may differ from the block's
    vals = np.array([[0, 1, 1, 5], [1, 0, 1, 5], [1, 1, 0, 5], [5, 5, 5, 0]], dtype=float)
    f = GridKernel(2, 1, vals)
    assert is_cuboid_constant(f, [[0, 1, 2]])
    vals[0, 3] = 6.0
    assert not is_cuboid_constant(GridKernel(2, 1, vals), [[0, 1, 2]])


def test_projection_under_block_groups_is_cuboid_constant():
    rng = np.random.default_rng(9)
    blocks = [[0, 3, 5], [1, 2], [6, 7]]
    group = restricted_group(blocks, 3, 3)
    for n in (1, 2, 3):
        p = orbit_project(rand_kernel(rng, n, 3, 2), group)
        assert is_cuboid_constant(p, blocks)
        assert cuboid_average(p, blocks).max_abs_diff(p) < 1e-13


def test_restrict_time_examples():
    rng = np.random.default_rng(10)
    f = rand_kernel(rng, 2)
    assert restrict_time(f, 4).max_abs_diff(f) == 0.0
    assert not restrict_time(f, 0).values.any()
    for a, b in [(1, 3), (3, 2), (2, 2)]:
        assert restrict_time(restrict_time(f, a), b).max_abs_diff(restrict_time(f, min(a, b))) == 0.0


def test_restrict_commutes_with_maps_fixing_the_future():
    rng = np.random.default_rng(11)
    f = rand_kernel(rng, 2, 3, 2)
    g = from_permutation(3, [2, 0, 1, 4, 3, 5, 6, 7])
    t = 5
    assert restrict_time(pullback(f, g), t).max_abs_diff(pullback(restrict_time(f, t), g)) == 0.0


def test_dolean_kernel_examples():
    k1 = dolean_kernel(0, 4, 1, 2, MODEL)
    assert np.all(k1.values == 1.0)
    k2 = dolean_kernel(0, 4, 2, 2, MODEL)
    assert k2.value_at((1, 1), (0, 2)) == 0.0 and k2.value_at((1, 2), (0, 2)) == 0.5
    k3 = dolean_kernel(1, 4, 3, 2, MODEL)
    assert k3.value_at((1, 2, 3), (2, 0, 1)) == pytest.approx(1 / 6)
    assert k3.value_at((0, 2, 3), (0, 0, 0)) == 0.0
    with pytest.raises(EmptyInterval):
        dolean_kernel(2, 2, 1, 2, MODEL)


def test_kernel_json_round_trip():
    rng = np.random.default_rng(12)
    f = rand_kernel(rng, 2)
    g = GridKernel.from_json(f.to_json())
    assert g.max_abs_diff(f) == 0.0 and g.content_hash() == f.content_hash()
    cv = ChaosVector(2, 3, 1.5, (rand_kernel(rng, 1), f))
    back = ChaosVector.from_json(cv.to_json())
    assert back.max_abs_diff(cv) == 0.0


def test_chaos_vector_norm_and_inner():
    rng = np.random.default_rng(13)
    a = ChaosVector(2, 3, 1.0, (rand_kernel(rng, 1), rand_kernel(rng, 2)))
    b = ChaosVector(2, 3, -2.0, (rand_kernel(rng, 1),))
    expect = 1.0 + l2_norm_sq(a.kernels[0], MODEL) + 2 * l2_norm_sq(symmetrize(a.kernels[1]), MODEL)
    assert a.norm_sq(MODEL) == pytest.approx(expect)
    assert (a + b).constant == -1.0 and (a + b).degree == 2
    assert a.inner(b, MODEL) == pytest.approx(-2.0 + l2_inner(a.kernels[0], b.kernels[0], MODEL))
    with pytest.raises(ModelMismatch):
        ChaosVector(2, 3, 0.0, (rand_kernel(rng, 2),))


def test_restrict_time_is_orthogonal_projection():
    rng = np.random.default_rng(14)
    t = 2
    F = ChaosVector(2, 3, 0.3, (rand_kernel(rng, 1), rand_kernel(rng, 2), rand_kernel(rng, 3)))
    G = ChaosVector(2, 3, 1.1, (rand_kernel(rng, 1), rand_kernel(rng, 2))).restrict_time(t)
    assert (F - F.restrict_time(t)).inner(G, MODEL) == pytest.approx(0.0, abs=1e-13)


@st.composite
def kernels_and_maps(draw):
    n = draw(st.integers(1, 3))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    f = rand_kernel(rng, n, 2, 2)
    g = from_permutation(2, rng.permutation(4))
    h = from_permutation(1, rng.permutation(2))
    return f, g, h


@settings(max_examples=40, deadline=None)
@given(kernels_and_maps())
def test_pullback_is_right_action_and_isometry(args):
    f, g, h = args
    m = LevyModel(1.0, ((2.0, 1.0),))
    assert pullback(f, compose(g, h)).max_abs_diff(pullback(pullback(f, g), h)) == 0.0
    assert l2_norm_sq(pullback(f, g), m) == pytest.approx(l2_norm_sq(f, m), rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(kernels_and_maps())
def test_symmetrize_is_projection(args):
    f, _, _ = args
    m = LevyModel(1.0, ((2.0, 1.0),))
    s = symmetrize(f)
    assert symmetrize(s).max_abs_diff(s) < 1e-14
    assert l2_norm_sq(s, m) <= l2_norm_sq(f, m) + 1e-12
    if f.n == 3:
        assert math.isclose(l2_inner(s, f, m), l2_norm_sq(s, m), rel_tol=1e-12, abs_tol=1e-14)

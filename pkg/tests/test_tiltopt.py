import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiltshape.forceset import HfsQuery, RfsSpec, count_included, membership
from tiltshape.platform import PlatformParams
from tiltshape.tiltopt import (
    SYMMETRIES,
    GridSpec,
    OptimConfig,
    PsoConfig,
    TiltTable,
    _plan_cells,
    build_table,
    canonical_gamma,
    is_certified,
    objective,
    objective_terms,
    optimize,
    pso_minimize,
    rotate_center,
    rotate_gamma,
    search_box,
)

P = PlatformParams()
MG = P.weight
CFG = OptimConfig()
RFS = RfsSpec.cuboid([0, 0, MG], 1.0)
SMALL = dataclasses.replace(CFG, pso=PsoConfig(particles=12, iterations=15, seed=3))


def test_objective_examples():
    assert objective(P, np.zeros(4), RFS, CFG) == 0.0
    g = np.full(4, -math.pi / 6)
    expected = -8 + 4 * (math.pi / 6) ** 2 / (4 * (math.pi / 4) ** 2 + 1e-6)
    assert objective(P, g, RFS, CFG) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-8 + 0.4444, abs=1e-4)


def test_objective_rejects_out_of_box():
    with pytest.raises(ValueError):
        objective(P, np.full(4, 1.0), RFS, CFG)


def test_penalty_bounds_random():
    rng = np.random.default_rng(0)
    for g in rng.uniform(-CFG.gamma_max, CFG.gamma_max, (1000, 4)):
        pen = float(g @ g) / (4 * CFG.gamma_max**2 + CFG.eps)
        assert 0.0 <= pen < 1.0
    corner = np.full(4, CFG.gamma_max)
    assert objective_terms(P, corner, RfsSpec.cuboid([0, 0, MG], 0.0), CFG).penalty < 1.0


def test_certificate_threshold():
    assert is_certified(-7.5, 8) and not is_certified(-7.0, 8) and not is_certified(-6.9, 8)


def test_single_vertex_gives_zero_tilt():
    cfg = dataclasses.replace(SMALL, rfs_half_width=0.0)
    res = optimize(P, RfsSpec.cuboid([0, 0, MG], 0.0), cfg)
    np.testing.assert_array_equal(res.gamma, 0.0)
    assert res.certified and res.objective == -1.0


def test_small_box_cannot_certify():
    cfg = dataclasses.replace(SMALL, gamma_max=math.pi / 48)
    lo, hi = -cfg.gamma_max, cfg.gamma_max
    # Exhaustive count over a dense grid in the whole box.
    for g in itertools.product(np.linspace(lo, hi, 5), repeat=4):
        assert count_included(HfsQuery.at(P, np.array(g)), RFS) < 8
    res = optimize(P, RFS, cfg)
    assert not res.certified and res.objective > -7


def test_optimize_certifies_with_small_swarm():
    res = optimize(P, RFS, dataclasses.replace(SMALL, pso=PsoConfig(particles=16, iterations=30, seed=1)))
    assert res.certified
    assert count_included(HfsQuery.at(P, res.gamma), RFS) == 8
    assert np.all(res.gamma <= 0) and np.all(res.gamma >= -CFG.gamma_max)


def test_optimize_deterministic():
    a = optimize(P, RFS, SMALL)
    b = optimize(P, RFS, SMALL)
    assert a.gamma.tobytes() == b.gamma.tobytes() and a.objective == b.objective


def test_default_optimum_beats_uniform_reference(ci_table):
    g = ci_table.at(0.0, 0.0)
    assert ci_table.certified[ci_table.index(0.0, 0.0)]
    assert np.abs(g).max() < math.pi / 6
    assert objective(P, g, RFS, CFG) < objective(P, np.full(4, -math.pi / 6), RFS, CFG)


def test_pso_respects_box_and_ties():
    seen = []
    lo, hi = np.array([-1.0, 0.0]), np.array([0.5, 2.0])

    def fun(x):
        seen.append(x.copy())
        return float((x - 5) @ (x - 5))

    x, f = pso_minimize(fun, lo, hi, PsoConfig(particles=10, iterations=30, seed=2))
    arr = np.array(seen)
    assert np.all(arr >= lo) and np.all(arr <= hi)
    np.testing.assert_allclose(x, hi, atol=1e-9)
    # A flat objective keeps the earliest best: the first seeded particle.
    x, f = pso_minimize(lambda z: 1.0, lo, hi, PsoConfig(particles=5, iterations=3), seeds=[np.array([0.1, 1.0])])
    np.testing.assert_array_equal(x, [0.1, 1.0])


def test_search_box_branches():
    lo, hi = search_box(4, CFG)
    assert np.all(lo == -CFG.gamma_max) and np.all(hi == 0)
    lo, hi = search_box(4, dataclasses.replace(CFG, branch="free"))
    assert np.all(lo == -CFG.gamma_max) and np.all(hi == CFG.gamma_max)
    lo, hi = search_box(4, dataclasses.replace(CFG, branch="positive"))
    assert np.all(lo == 0) and np.all(hi == CFG.gamma_max)


@pytest.mark.parametrize(
    "kwargs", [{"gamma_max": 0.0}, {"gamma_max": 2.0}, {"eps": 0.0}, {"branch": "up"}, {"rfs_half_width": -1.0}]
)
def test_bad_optim_config(kwargs):
    with pytest.raises(ValueError):
        OptimConfig(**kwargs)
    with pytest.raises(ValueError):
        PsoConfig(particles=0)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-0.6, 0.6), min_size=4, max_size=4),
    st.sampled_from([0.0, 0.5, 1.0, -0.5]),
    st.sampled_from([0.0, 0.5, 1.0, -1.0]),
)
def test_symmetries_preserve_inclusion(g, x, y):
    g = np.array(g)
    base = count_included(HfsQuery.at(P, g), RfsSpec.cuboid([x, y, MG], 1.0))
    for sym in SYMMETRIES:
        sx, sy = sym.apply_center(x, y)
        mapped = count_included(HfsQuery.at(P, sym.apply_gamma(g)), RfsSpec.cuboid([sx, sy, MG], 1.0))
        assert mapped == base, sym.name


def test_symmetry_group_structure():
    names = {s.name for s in SYMMETRIES}
    assert len(names) == 8
    actions = {(s.perm, s.force) for s in SYMMETRIES}
    assert len(actions) == 8
    np.testing.assert_array_equal(rotate_gamma([1, 2, 3, 4], 1), [4, 1, 2, 3])
    assert rotate_center(1.0, 0.0, 1) == (0.0, 1.0)


def test_single_force_mapped_by_symmetry():
    # A force reachable at g is reachable at the mirrored force under the mapped g.
    g = np.array([-0.3, -0.1, -0.2, -0.25])
    v = np.array([0.6, 0.3, MG])
    for sym in SYMMETRIES:
        sx, sy = sym.apply_center(v[0], v[1])
        a = membership(HfsQuery.at(P, g), v).linf
        b = membership(HfsQuery.at(P, sym.apply_gamma(g)), [sx, sy, MG]).linf
        assert a == pytest.approx(b, abs=1e-8)


def test_canonical_twin_is_lexicographic_max():
    g = np.array([-0.3, -0.1, -0.2, -0.25])
    c = canonical_gamma(P, g, (0.0, 0.0, MG), CFG)
    twins = [tuple(s.apply_gamma(g)) for s in SYMMETRIES]
    assert tuple(c) == max(twins)


def test_plan_cells_quadrant_grid():
    axis = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    reps, filled = _plan_cells(axis, axis, True)
    assert sorted(reps) == [(0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (1.0, 0.0), (1.0, 0.5), (1.0, 1.0)]
    assert len(reps) + len(filled) == 25
    for cell, (src, sym) in filled.items():
        assert np.allclose(sym.apply_center(*src), cell)
    reps, filled = _plan_cells(axis, axis, False)
    assert len(reps) == 25 and not filled


def test_grid_spec():
    np.testing.assert_allclose(GridSpec.parse("0:1:0.5").values(), [0, 0.5, 1])
    assert GridSpec(0, 0, 1).values().tolist() == [0.0]
    with pytest.raises(ValueError):
        GridSpec(0, 1, 0.3).values()
    with pytest.raises(ValueError):
        GridSpec.parse("0:1")


def test_table_rejects_nonuniform_axis():
    with pytest.raises(ValueError):
        TiltTable(
            fx=[0, 1, 3], fy=[0], fz=MG, gamma=np.zeros((3, 1, 4)), objective=np.zeros((3, 1)),
            certified=np.zeros((3, 1), bool), params_digest="", gamma_max=1, eps=1e-6, branch="negative",
            half_width=1, n_vertices=8,
        )


def test_small_table_build_round_trip_and_mirror():
    cfg = dataclasses.replace(SMALL, pso=PsoConfig(particles=12, iterations=20, seed=0))
    t = build_table(P, GridSpec(0, 0.5, 0.5), GridSpec(0, 0, 1), cfg)
    np.testing.assert_allclose(t.fx, [-0.5, 0, 0.5])
    np.testing.assert_allclose(t.fy, [0.0])
    assert t.all_certified
    # Mirrored cell holds the permuted tilt and is certified by direct counting.
    left, right = t.at(-0.5, 0), t.at(0.5, 0)
    np.testing.assert_array_equal(left, right[[2, 1, 0, 3]])
    for ix in range(3):
        c = t.center(ix, 0)
        assert count_included(HfsQuery.at(P, t.gamma[ix, 0]), RfsSpec.cuboid(c, 1.0)) == 8
    text = t.to_json()
    back = TiltTable.from_json(text)
    assert back.to_json() == text
    assert back.gamma.tobytes() == t.gamma.tobytes()
    assert back.branch == "negative" and back.params_digest == P.digest()


def test_from_json_rejects_foreign_documents():
    with pytest.raises(ValueError):
        TiltTable.from_json('{"header": {"format": "other"}, "entries": []}')


def test_fixed_point_twins_agree(ci_table):
    g = ci_table.at(0.0, 0.0)
    for sym in SYMMETRIES:
        mapped = sym.apply_gamma(g)
        assert count_included(HfsQuery.at(P, mapped), RFS) == 8


def test_ci_table_certified_cells_have_full_inclusion(ci_table):
    for ix, iy in itertools.product(range(len(ci_table.fx)), range(len(ci_table.fy))):
        expected = objective(P, ci_table.gamma[ix, iy], RfsSpec.cuboid(ci_table.center(ix, iy), 1.0), CFG)
        assert ci_table.objective[ix, iy] == pytest.approx(expected, abs=1e-12)
        assert ci_table.certified[ix, iy] == is_certified(expected, 8)

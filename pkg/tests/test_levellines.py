import math

import numpy as np
import pytest

from soswall.errors import ConfigError, EmptyGeometryError
from soswall.lattice import field_from_array, rotate
from soswall.levellines import (
    LevelLoop,
    densify,
    edge_set,
    extract_ensemble,
    hausdorff,
    macroscopic_cutoff,
    nesting_forest,
    rescale,
    rho,
    sup_rho,
    trace_loops,
)


def _loops(heights, h=1):
    return trace_loops(edge_set(field_from_array(np.asarray(heights)), h))


def _loop_edges(loop):
    edges = set()
    for (x0, y0), (x1, y1) in loop.edges:
        axis = "v" if x0 == x1 else "h"
        edges.add((((x0 + x1) / 2, (y0 + y1) / 2), axis))
    return edges


def test_constant_field_has_one_boundary_loop():
    loops = _loops(np.full((5, 5), 2))
    assert len(loops) == 1
    assert loops[0].area == 25
    assert loops[0].length == 20
    assert loops[0].sign == 1
    assert _loops(np.full((5, 5), 2), h=3) == []


def test_single_raised_site():
    heights = np.zeros((3, 3))
    heights[1, 1] = 1
    (loop,) = _loops(heights)
    assert loop.area == 1
    assert loop.length == 4
    assert loop.bounds == (1.5, 1.5, 2.5, 2.5)


def test_diagonal_touching_northeast_splits():
    # Cells (1, 1) and (2, 2) meet only at a corner
    loops = _loops([[1, 0], [0, 1]])
    assert sorted(loop.area for loop in loops) == [1, 1]


def test_diagonal_touching_northwest_joins():
    # Cells (2, 1) and (1, 2) meet only at a corner
    loops = _loops([[0, 1], [1, 0]])
    assert len(loops) == 1
    assert loops[0].area == 2
    assert loops[0].length == 8


def test_hole_has_negative_sign():
    heights = np.ones((5, 5))
    heights[2, 2] = 0
    loops = _loops(heights)
    assert sorted((loop.sign, loop.area) for loop in loops) == [(-1, 1), (1, 25)]


def test_edge_set_rejects_level_zero():
    with pytest.raises(ConfigError):
        edge_set(field_from_array(np.ones((2, 2))), 0)


def test_random_fields_decompose_into_loops():
    rng = np.random.default_rng(5)
    for _ in range(200):
        L = int(rng.integers(1, 13))
        field = field_from_array(rng.integers(0, 4, size=(L, L)), height_cap=3)
        for h in range(1, 4):
            edges = edge_set(field, h)
            assert np.all(edges.vertex_degrees() % 2 == 0)
            loops = trace_loops(edges)
            traced = [_loop_edges(loop) for loop in loops]
            assert sum(loop.length for loop in loops) == len(edges)
            assert set().union(*traced) == set(edges.edges)
            assert sum(loop.sign * loop.area for loop in loops) == np.count_nonzero(field.heights >= h)


def test_extract_ensemble_flags_macroscopic_loops():
    heights = np.zeros((20, 20))
    heights[2:10, 2:10] = 1
    heights[15, 15] = 1
    ensemble = extract_ensemble(field_from_array(heights), beta=0.3)
    assert ensemble.cutoff == pytest.approx(math.log(20) ** 2)
    assert ensemble.floor_H == 2
    assert len(ensemble.levels[1]) == 2
    (big,) = ensemble.macroscopic(1)
    assert big.area == 64
    assert ensemble.collection(1) == [big]
    assert ensemble.collection(0) == []
    assert ensemble.signed_area(1) == 65


def test_collection_needs_a_top_level():
    ensemble = extract_ensemble(field_from_array(np.ones((4, 4))))
    with pytest.raises(ConfigError):
        ensemble.collection(0)
    assert len(ensemble.collection(0, top=1)) == 1


def test_nesting_forest():
    heights = np.ones((7, 7))
    heights[2:5, 2:5] = 2
    ensemble = extract_ensemble(field_from_array(heights))
    forest = nesting_forest(ensemble)
    outer = next(k for k, loop in enumerate(forest.loops) if loop.level == 1)
    inner = next(k for k, loop in enumerate(forest.loops) if loop.level == 2)
    assert forest.roots == [outer]
    assert forest.parents[inner] == outer
    assert forest.ancestors(inner) == [outer]
    assert forest.children(outer) == [inner]


def test_rho_of_a_loop_along_the_bottom():
    loops = _loops(np.ones((8, 8)))
    assert sup_rho(loops, 8) == 0.5
    assert rho(loops[0], 4.0) == 0.5
    assert rho(loops[0], 20.0) is None


def test_sup_rho_takes_the_highest_column():
    heights = np.ones((8, 8))
    heights[3, 0:3] = 0
    loops = _loops(heights)
    # Column x = 4 is dented up to y = 3.5
    assert sup_rho(loops, 8) == 3.5
    assert sup_rho([], 8) is None


def test_densify_spacing():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]])
    points = densify(square, 0.1)
    steps = np.hypot(*np.diff(points[1:], axis=0).T)
    assert len(points) == 41
    assert steps.max() <= 0.1 + 1e-12


def test_hausdorff():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]])
    assert hausdorff(square, square) == 0.0
    assert hausdorff(square, square + [0.1, 0.0]) == pytest.approx(0.1)
    assert hausdorff([square], [square, square + [0.0, 2.0]]) == pytest.approx(2.0)
    with pytest.raises(EmptyGeometryError):
        hausdorff([], square)
    with pytest.raises(ConfigError):
        hausdorff(square, square, resolution=0.0)


def test_rescale_maps_the_box_to_the_unit_square():
    (loop,) = _loops(np.ones((4, 4)))
    (curve,) = rescale([loop], 4)
    assert curve.min() == 0.0
    assert curve.max() == 1.0


def test_loop_record_round_trip():
    (loop,) = _loops([[0, 1], [1, 0]])
    loop.macroscopic = True
    again = LevelLoop.from_record(loop.to_record())
    assert again.area == loop.area
    assert again.sign == loop.sign
    assert again.macroscopic
    np.testing.assert_array_equal(again.vertices, loop.vertices)


def test_macroscopic_cutoff():
    assert macroscopic_cutoff(100) == pytest.approx(math.log(100) ** 2)


def _rotate_edge(edge, L):
    # Quarter turn of the box: cell (x, y) moves to (L + 1 - y, x)
    (px, py), axis = edge
    return (L + 1 - py, px), "h" if axis == "v" else "v"


def _loop_key(loop, L=None, turns=0):
    edges = _loop_edges(loop)
    for _ in range(turns):
        edges = {_rotate_edge(edge, L) for edge in edges}
    return frozenset(edges), loop.sign, loop.area


def test_loops_are_closed_and_nested():
    rng = np.random.default_rng(17)
    for _ in range(100):
        L = int(rng.integers(2, 11))
        field = field_from_array(rng.integers(0, 4, size=(L, L)), height_cap=3)
        by_level = {h: trace_loops(edge_set(field, h)) for h in range(1, 5)}
        for h, loops in by_level.items():
            for loop in loops:
                np.testing.assert_array_equal(loop.vertices[0], loop.vertices[-1])
                assert loop.length >= 4
            # Even-odd parity over the level-h loops recovers {height >= h} cell by cell
            for x in range(1, L + 1):
                for y in range(1, L + 1):
                    parity = sum(loop.contains_point(x, y) for loop in loops) % 2
                    assert parity == int(field.heights[x - 1, y - 1] >= h)
        for h in range(1, 4):
            for loop in by_level[h + 1]:
                if loop.sign < 0:
                    continue
                cx, cy = loop.representative_cell()
                assert sum(outer.contains_point(cx, cy) for outer in by_level[h]) % 2 == 1


def test_edge_sets_rotate_with_the_field():
    rng = np.random.default_rng(23)
    for _ in range(100):
        L = int(rng.integers(1, 10))
        field = field_from_array(rng.integers(0, 3, size=(L, L)), height_cap=2)
        turned = rotate(field)
        for h in (1, 2):
            expected = {_rotate_edge(edge, L) for edge in edge_set(field, h).edges}
            assert set(edge_set(turned, h).edges) == expected


def test_loops_rotate_with_the_field():
    rng = np.random.default_rng(29)
    checked = 0
    for _ in range(300):
        L = int(rng.integers(1, 7))
        field = field_from_array(rng.integers(0, 2, size=(L, L)), height_cap=1)
        edges = edge_set(field, 1)
        loops = trace_loops(edges)
        # A half turn keeps the north-west diagonal, so loops map onto loops
        half = trace_loops(edge_set(rotate(field, 2), 1))
        assert {_loop_key(loop) for loop in half} == {_loop_key(loop, L, 2) for loop in loops}
        if np.any(edges.vertex_degrees() == 4):
            continue
        quarter = trace_loops(edge_set(rotate(field), 1))
        assert {_loop_key(loop) for loop in quarter} == {_loop_key(loop, L, 1) for loop in loops}
        checked += 1
    assert checked > 20


def test_nesting_forest_with_a_hole():
    heights = np.ones((7, 7))
    heights[1:6, 1:6] = 0
    heights[3, 3] = 1
    forest = nesting_forest(extract_ensemble(field_from_array(heights)))
    by_shape = {(loop.sign, loop.area): k for k, loop in enumerate(forest.loops)}
    outer, hole, island = by_shape[(1, 49)], by_shape[(-1, 25)], by_shape[(1, 1)]
    assert forest.roots == [outer]
    assert forest.parents[hole] == outer
    assert forest.parents[island] == hole
    assert forest.ancestors(island) == [hole, outer]

import math

import numpy as np
import pytest

from elastmortar import geometry


def test_coarsest_checkerboard_matches_reference_layout():
    d = geometry.build_checkerboard(0, (2, 2))
    assert d.n_subdomains == 4
    assert len(d.interfaces) == 4
    assert all(abs(seg.length - 0.5) < 1e-15 for seg in d.interfaces)
    assert [m.nx for m in d.meshes] == [2, 3, 3, 2]
    assert [m.ny for m in d.meshes] == [2, 3, 3, 2]
    assert d.nominal_h == 0.25


def test_single_subdomain_degenerate_case():
    d = geometry.build_checkerboard(0, (1, 1))
    assert d.n_subdomains == 1
    assert d.interfaces == []
    assert all(k == "dirichlet" for k in d.meshes[0].side_kind.values())


def test_two_level_refinement_doubles_cells():
    d = geometry.build_checkerboard(2, (2, 2))
    counts = sorted({(m.nx, m.ny) for m in d.meshes})
    assert counts == [(8, 8), (12, 12)]
    assert d.nominal_h == 1 / 16


def test_rejects_bad_patterns():
    with pytest.raises(ValueError):
        geometry.build_checkerboard(0, (0, 2))
    with pytest.raises(ValueError):
        geometry.build_checkerboard(0, "2x2x2")
    with pytest.raises(ValueError):
        geometry.build_checkerboard(-1, (2, 2))
    with pytest.raises(ValueError):
        geometry.build_checkerboard(
            0, (2, 2), neumann_sides=("left", "right", "top", "bottom"))


def test_cell_areas_tile_domain():
    for shape, cells in (((2, 2), (2, 3)), ((3, 3), (2, 3)), ((2, 4), (2, 2))):
        d = geometry.build_checkerboard(1, shape, cells=cells)
        area = sum(m.ncell * m.cell_area for m in d.meshes)
        assert abs(area - d.domain.area) < 1e-14


def test_interface_sides_agree_between_neighbors():
    d = geometry.build_checkerboard(1, (3, 2))
    for seg in d.interfaces:
        spans = []
        for sub in (seg.i, seg.j):
            mesh = d.meshes[sub]
            side = next(s for s in mesh.interface_sides()
                        if mesh.side_interface[s] == seg.index)
            spans.append(mesh.side_span(side))
        (lo_i, hi_i, pos_i), (lo_j, hi_j, pos_j) = spans
        assert (lo_i, hi_i) == (lo_j, hi_j) == (seg.lo, seg.hi)
        assert pos_i == pos_j == seg.pos


def test_neumann_side_classification():
    d = geometry.build_checkerboard(0, (2, 2), neumann_sides=("top", "bottom"))
    top_right = d.meshes[3]
    assert top_right.side_kind["top"] == "neumann"
    assert top_right.side_kind["right"] == "dirichlet"
    assert top_right.side_kind["left"] == "interface"


def test_mortar_2h_and_counts():
    d = geometry.build_checkerboard(0, (2, 2))
    grids = geometry.build_mortar_grids(d, "2h", 2)
    assert all(g.H == 0.5 and g.n_seg == 1 for g in grids)


def test_mortar_sqrt_scaling():
    d = geometry.build_checkerboard(2, (2, 2))  # h = 1/16
    grids = geometry.build_mortar_grids(d, "sqrt(h)", 3)
    assert all(abs(g.H - 0.25) < 1e-15 and g.n_seg == 2 for g in grids)


def test_mortar_incommensurate_size_rejected():
    d = geometry.build_checkerboard(0, (2, 2))  # interfaces of length 1/2
    with pytest.raises(ValueError):
        geometry.build_mortar_grids(d, 1.0 / 3.0, 2)


def test_mortar_sqrt_rejected_off_ladder():
    d = geometry.build_checkerboard(1, (2, 2))  # h = 1/8, sqrt irrational
    with pytest.raises(ValueError):
        geometry.build_mortar_grids(d, "sqrt(h)", 3)


def test_mortar_finer_than_traces_warns():
    d = geometry.build_checkerboard(0, (2, 2))
    with pytest.warns(UserWarning):
        geometry.build_mortar_grids(d, 1 / 16, 1)


def test_breakpoints_tile_interface():
    d = geometry.build_checkerboard(1, (2, 2))
    for g in geometry.build_mortar_grids(d, "2h", 2):
        b = g.breakpoints
        assert math.isclose(b[0], g.interface.lo)
        assert math.isclose(b[-1], g.interface.hi)
        assert np.allclose(np.diff(b), g.H)

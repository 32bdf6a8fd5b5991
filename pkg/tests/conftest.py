"""Shared fixtures: manufactured cases and the expensive reference runs.

Session-scoped so the refinement ladders used by several acceptance criteria
are computed once.
"""

import numpy as np
import pytest

import elastmortar as em
from elastmortar import geometry


@pytest.fixture(scope="session")
def ex1_case():
    return em.make_case("ex1")


@pytest.fixture(scope="session")
def ex2_case():
    return em.make_case("ex2")


@pytest.fixture(scope="session")
def patch_case():
    return em.make_case("patch")


@pytest.fixture(scope="session")
def rigid_case():
    return em.make_case("rigid")


def checkerboard(level, shape=(2, 2), cells=(2, 3), neumann=()):
    return geometry.build_checkerboard(level, shape, cells=cells,
                                       neumann_sides=neumann)


def mortar_run(case, level, scaling, degree, shape=(2, 2), cells=(2, 3),
               **kw):
    decomp = checkerboard(level, shape, cells, neumann=case.neumann_sides)
    mortars = em.build_mortar_grids(decomp, scaling, degree)
    return em.solve_mortar(case, decomp, mortars, **kw)


@pytest.fixture(scope="session")
def ex1_lev2_m2_2h(ex1_case):
    """Example 1 at nominal h=1/16 with quadratic mortars, H=2h."""
    return mortar_run(ex1_case, 2, "2h", 2)


@pytest.fixture(scope="session")
def ex1_lev2_m2_sqrt(ex1_case):
    """Example 1 at nominal h=1/16 with quadratic mortars, H=sqrt(h)."""
    return mortar_run(ex1_case, 2, "sqrt(h)", 2)


@pytest.fixture(scope="session")
def ex1_m2_2h_ladder(ex1_case):
    """Example 1, m=2, H=2h, levels 0..4 (h = 1/4 .. 1/64)."""
    return em.convergence_study("ex1", range(5), degree=2, scaling="2h")


@pytest.fixture(scope="session")
def ex1_m3_sqrt_ladder(ex1_case):
    """Example 1, m=3, H=sqrt(h), levels 0, 2, 4 (h = 1/4, 1/16, 1/64)."""
    return em.convergence_study("ex1", (0, 2, 4), degree=3, scaling="sqrt(h)")


@pytest.fixture(scope="session")
def ex2_m2_2h_ladder(ex2_case):
    return em.convergence_study("ex2", range(5), degree=2, scaling="2h")


@pytest.fixture(scope="session")
def porosity_field():
    return em.synthesize_porosity(128, 128, seed=2018)


@pytest.fixture(scope="session")
def ex5_runs(porosity_field):
    """Example-5-style 8x8 multiscale runs, quadratic mortars H=1/8."""
    case = em.make_case("ex5", raster=porosity_field)
    decomp = checkerboard(3, (8, 8), cells=(2, 2), neumann=case.neumann_sides)
    mortars = em.build_mortar_grids(decomp, 0.125, 2)
    direct = em.solve_mortar(case, decomp, mortars)
    with_msb = em.solve_mortar(case, decomp, mortars, use_msb=True)
    return {"case": case, "decomp": decomp, "direct": direct,
            "msb": with_msb}


def rel_close(value, reference, tol):
    return abs(value - reference) <= tol * abs(reference)


def raw_trace_jump(result):
    """L2(Gamma) norm of the unprojected normal-stress jump.

    Evaluates both sides' normal traces on the overlay partition of each
    interface; nonzero for non-matching grids even when the mortar-weighted
    jump vanishes.
    """
    from elastmortar.spaces import edge_nodal_values, gauss_rule

    total = 0.0
    decomp = result.decomp
    for seg in decomp.interfaces:
        sides = []
        for sub in (seg.i, seg.j):
            space = result.systems[sub].space
            mesh = space.mesh
            side = next(s for s in mesh.interface_sides()
                        if mesh.side_interface[s] == seg.index)
            breaks = space.side_edge_breaks(side)
            vals = result.fields[sub].side_trace(side)  # (nedge, 2, 2)
            sides.append((breaks, vals))
        cuts = np.unique(np.concatenate([sides[0][0], sides[1][0]]))
        for a, b in zip(cuts[:-1], cuts[1:]):
            x, w = gauss_rule(4, a, b)
            traces = []
            for breaks, vals in sides:
                e = min(int(np.searchsorted(breaks, 0.5 * (a + b)) - 1),
                        len(breaks) - 2)
                ell = edge_nodal_values((x - breaks[e]) / (breaks[e + 1] - breaks[e]))
                traces.append(np.einsum("rk,qk->qr", vals[e], ell))
            jump = traces[0] - traces[1]
            total += float(np.sum(w[:, None] * jump**2))
    return np.sqrt(total)

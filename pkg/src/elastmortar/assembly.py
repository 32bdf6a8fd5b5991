"""Assembly of the per-subdomain saddle systems and load functionals.

Each subdomain contributes a symmetric indefinite block system

    [ A   B_u^T  B_g^T ] [ sigma ]   [ r_sigma ]
    [ B_u   0      0   ] [   u   ] = [ r_u     ]
    [ B_g   0      0   ] [ gamma ]   [   0     ]

with A the compliance form (A sigma, tau), B_u the divergence coupling
(div sigma, v) and B_g the weak-symmetry coupling (sigma, xi) against the
continuous-bilinear rotation space.  Volume terms use a 3x3 tensor Gauss
rule per cell (exact for the polynomial integrands, accurate for analytic
coefficients); analytic boundary data is integrated with 7-point Gauss per
fine edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import SIDE_SIGN
from .spaces import (GAUSS_EDGE, SubdomainSpace, edge_nodal_values,
                     eval_stress_basis, gauss_rule)

__all__ = [
    "SaddleSystem",
    "RhsFunctional",
    "assemble_subdomain",
    "assemble_star_rhs",
    "assemble_bar_rhs",
    "trace_rhs_from_nodal",
]

VOLUME_GAUSS = 3
BOUNDARY_GAUSS = 7


def volume_rule():
    """3x3 tensor Gauss points and weights on the reference cell."""
    x, w = gauss_rule(VOLUME_GAUSS, 0.0, 1.0)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return np.stack([X.ravel(), Y.ravel()], axis=1), W.ravel()


def q1_values(pts):
    """Bilinear vertex basis at reference points, vertex order LL, LR, UL, UR."""
    x, y = pts[:, 0], pts[:, 1]
    return np.stack([(1 - x) * (1 - y), x * (1 - y), (1 - x) * y, x * y], axis=1)


@dataclass
class SaddleSystem:
    """Assembled saddle-point matrix of one subdomain plus quadrature caches."""

    space: SubdomainSpace
    material: object
    matrix: sp.csc_matrix
    constrained: np.ndarray          # zero-trace dofs on the traction boundary
    ref_pts: np.ndarray = field(repr=False, default=None)
    ref_wts: np.ndarray = field(repr=False, default=None)
    basis_vals: np.ndarray = field(repr=False, default=None)   # (nq, 16, 2, 2)
    basis_divs: np.ndarray = field(repr=False, default=None)   # (16, 2)
    quad_points: np.ndarray = field(repr=False, default=None)  # (ncell, nq, 2)

    @property
    def n_total(self):
        return self.space.n_total


def cell_quad_points(space, ref_pts):
    mesh = space.mesh
    origins = np.array([space.cell_origin(c) for c in range(mesh.ncell)])
    scale = np.array([mesh.hx, mesh.hy])
    return origins[:, None, :] + ref_pts[None, :, :] * scale[None, None, :]


def assemble_subdomain(mesh, material, space=None):
    """Assemble the saddle system of one subdomain."""
    space = space or SubdomainSpace(mesh)
    ref_pts, ref_wts = volume_rule()
    nq = len(ref_wts)
    svals, sdivs = eval_stress_basis(mesh.hx, mesh.hy, ref_pts)
    qpts = cell_quad_points(space, ref_pts)
    lam, mu = material.evaluate(qpts[..., 0], qpts[..., 1])  # (ncell, nq)

    w = ref_wts * mesh.cell_area
    # compliance form: (1/2mu) sig:tau - lam/(2mu(2mu+2lam)) tr(sig) tr(tau)
    dot = np.einsum("qiab,qjab->qij", svals, svals)         # (nq, 16, 16)
    tr = svals[:, :, 0, 0] + svals[:, :, 1, 1]              # (nq, 16)
    trtr = np.einsum("qi,qj->qij", tr, tr)
    c1 = w[None, :] / (2.0 * mu)
    c2 = -w[None, :] * lam / (2.0 * mu * (2.0 * mu + 2.0 * lam))
    A_cells = np.einsum("cq,qij->cij", c1, dot) + np.einsum("cq,qij->cij", c2, trtr)

    # divergence coupling, constant per cell: (div sig_b, e_comp) = |cell| div_b
    Bu_cell = mesh.cell_area * sdivs.T                       # (2, 16)
    # weak symmetry against Q1 vertex functions: (sig_b, xi) with
    # asym(sig_b) = sig_b[1,0] - sig_b[0,1]
    asym = svals[:, :, 1, 0] - svals[:, :, 0, 1]             # (nq, 16)
    qv = q1_values(ref_pts)                                  # (nq, 4)
    Bg_cell = mesh.cell_area * np.einsum("q,qa,qj->aj", ref_wts, qv, asym)

    ncell = mesh.ncell
    sc, uc, gc = space.sigma_conn, space.u_conn, space.gamma_conn

    def coo(rows_conn, cols_conn, vals):
        r = np.repeat(rows_conn, cols_conn.shape[1], axis=1).ravel()
        c = np.tile(cols_conn, (1, rows_conn.shape[1])).ravel()
        return r, c, vals.ravel()

    rows, cols, vals = [], [], []
    r, c, v = coo(sc, sc, A_cells)
    rows.append(r); cols.append(c); vals.append(v)
    Bu_all = np.broadcast_to(Bu_cell, (ncell, 2, 16))
    Bg_all = np.broadcast_to(Bg_cell, (ncell, 4, 16))
    for blk_conn, blk_vals in ((uc, Bu_all), (gc, Bg_all)):
        r, c, v = coo(blk_conn, sc, blk_vals)
        rows.append(r); cols.append(c); vals.append(v)
        rows.append(c); cols.append(r); vals.append(v)

    n = space.n_total
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsc()

    constrained = neumann_trace_dofs(space)
    return SaddleSystem(space=space, material=material, matrix=K,
                        constrained=constrained, ref_pts=ref_pts, ref_wts=ref_wts,
                        basis_vals=svals, basis_divs=sdivs, quad_points=qpts)


def neumann_trace_dofs(space):
    """Stress dofs with essential zero normal trace (traction boundary)."""
    dofs = []
    for side, kind in space.mesh.side_kind.items():
        if kind == "neumann":
            dofs.append(space.side_trace_dofs(side).ravel())
    if not dofs:
        return np.empty(0, dtype=int)
    return np.unique(np.concatenate(dofs))


@dataclass
class RhsFunctional:
    """Right-hand side with stress, displacement, and rotation blocks.

    The rotation block is identically zero (the weak-symmetry equation is
    homogeneous); it is kept in the full-length vector for direct use with
    the factorized saddle system.
    """

    space: SubdomainSpace
    vector: np.ndarray

    @classmethod
    def zeros(cls, space):
        return cls(space, np.zeros(space.n_total))

    @property
    def stress(self):
        return self.vector[:self.space.n_sigma]

    @property
    def displacement(self):
        return self.vector[self.space.u_offset:self.space.gamma_offset]

    @property
    def rotation(self):
        return self.vector[self.space.gamma_offset:]

    def __add__(self, other):
        return RhsFunctional(self.space, self.vector + other.vector)


def trace_rhs_from_nodal(space, side, nodal):
    """<g, tau n_i> on one side for a trace function given nodally.

    nodal has shape (nedge, 2, 2): rows x Gauss points, values taken against
    the global edge normal.  The Gauss-point nodal functions are
    L2-orthogonal, so the pairing is diagonal with weight |e|/2, and the
    outward-normal sign of the side multiplies everything.
    """
    rhs = RhsFunctional.zeros(space)
    dofs = space.side_trace_dofs(side)
    mass = 0.5 * space.side_edge_length(side)
    rhs.vector[dofs.ravel()] = SIDE_SIGN[side] * mass * np.asarray(nodal).ravel()
    return rhs


def assemble_star_rhs(source, space, couplings=None):
    """Interface load <lam, tau n_i> over all interface sides.

    source is either a global mortar coefficient vector paired with the
    subdomain's trace couplings, or a dict side -> nodal trace data for
    direct trace-space loads.
    """
    rhs = RhsFunctional.zeros(space)
    if isinstance(source, dict):
        for side, nodal in source.items():
            rhs = rhs + trace_rhs_from_nodal(space, side, nodal)
        return rhs
    if couplings is None:
        raise ValueError("mortar source requires the subdomain's trace couplings")
    mortar, lam = source
    for k, cpl in couplings:
        block = lam[mortar.slice_of(k)]
        for comp in range(2):
            vals = cpl.sign * (cpl.C @ cpl.mortar_component(block, comp))
            rhs.vector[cpl.trace_dofs[:, comp, :].ravel()] += vals
    return rhs


def assemble_bar_rhs(f, g_D, system):
    """Physical loads: (f, v) per cell and <g_D, tau n_i> on Dirichlet sides."""
    space = system.space
    mesh = space.mesh
    rhs = RhsFunctional.zeros(space)
    if f is not None:
        qp = system.quad_points
        fv = np.asarray(f(qp[..., 0], qp[..., 1]), dtype=float)  # (2, ncell, nq)
        cell_loads = np.einsum("q,rcq->cr", system.ref_wts, fv) * mesh.cell_area
        rhs.vector[space.u_conn.ravel()] += cell_loads.ravel()
    if g_D is not None:
        for side, kind in mesh.side_kind.items():
            if kind != "dirichlet":
                continue
            rhs.vector += dirichlet_side_rhs(space, side, g_D).vector
    return rhs


def dirichlet_side_rhs(space, side, g_D):
    """<g_D, tau n_i> on one Dirichlet side via 7-point Gauss per edge."""
    mesh = space.mesh
    rhs = RhsFunctional.zeros(space)
    breaks = space.side_edge_breaks(side)
    length = space.side_edge_length(side)
    _, _, pos = mesh.side_span(side)
    dofs = space.side_trace_dofs(side)
    t, w = gauss_rule(BOUNDARY_GAUSS, 0.0, 1.0)
    ell = edge_nodal_values(t)  # (ng, 2)
    for e in range(len(breaks) - 1):
        s = breaks[e] + t * length
        if side in ("left", "right"):
            x, y = np.full_like(s, pos), s
        else:
            x, y = s, np.full_like(s, pos)
        g = np.asarray(g_D(x, y), dtype=float)  # (2, ng)
        moments = (g[:, :, None] * (w[:, None] * ell)[None, :, :]).sum(axis=1)
        rhs.vector[dofs[e].ravel()] += SIDE_SIGN[side] * length * moments.ravel()
    return rhs

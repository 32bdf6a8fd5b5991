"""Finite element spaces on one subdomain and the mortar space on interfaces.

The discrete triple is, per subdomain,

  stress      -- each of the two matrix rows a BDM1 vector field on the
                 rectangular grid (span of full vector P1 plus curl(x^2 y)
                 and curl(x y^2) per cell), H(div)-conforming inside the
                 subdomain, discontinuous across interfaces;
  displacement -- piecewise-constant vectors (two dofs per cell);
  rotation    -- continuous bilinear scalars on the subdomain grid.

Stress dofs are nodal values of the edge-normal component at the two Gauss
points of each edge, taken against the global edge normal (+x on vertical,
+y on horizontal edges).  With this choice the normal trace of a stress
field on any edge is the linear interpolant of its two dof values, the
1-D trace mass matrix is diagonal (the Gauss-point nodal functions are
L2-orthogonal on an edge), and no sign bookkeeping is needed inside a
subdomain.

The mortar space carries discontinuous piecewise polynomials of degree m
per vector component, represented in an L2-orthonormal Legendre basis per
segment so that mortar coefficient vectors are L2(Gamma)-orthonormal
coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import legval

from .geometry import SIDE_SIGN

__all__ = [
    "GAUSS_EDGE",
    "StressElement",
    "SubdomainSpace",
    "MaterialField",
    "MortarSpace",
    "TraceCoupling",
    "project_mortar_to_trace",
    "project_trace_to_mortar",
    "check_mortar_solvability",
]

# Edge dof nodes: the two Gauss points of [0, 1].
GAUSS_EDGE = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def gauss_rule(n, a=0.0, b=1.0):
    """n-point Gauss-Legendre rule on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w


def edge_nodal_values(t):
    """The two Gauss-point nodal P1 basis functions evaluated at t in [0,1]."""
    t = np.asarray(t, dtype=float)
    g0, g1 = GAUSS_EDGE
    return np.stack([(g1 - t) / (g1 - g0), (t - g0) / (g1 - g0)], axis=-1)


class StressElement:
    """Reference BDM1 row element on [0,1]^2 with global-normal edge dofs.

    Local edge-function order: left(2), right(2), bottom(2), top(2), each
    pair ordered by increasing coordinate along the edge.  Dof j is the
    value of v.x on vertical edges / v.y on horizontal edges at the edge
    Gauss points, regardless of which side is outward.
    """

    def __init__(self):
        g = GAUSS_EDGE
        # Monomial basis: (1,0),(x,0),(y,0),(0,1),(0,x),(0,y),
        # curl(x^2 y) = (x^2, -2xy), curl(x y^2) = (2xy, -y^2).
        def mono(p):
            x, y = p
            return np.array([
                [1, 0], [x, 0], [y, 0], [0, 1], [0, x], [0, y],
                [x * x, -2 * x * y], [2 * x * y, -y * y],
            ], dtype=float)

        nodes = [
            ((0.0, g[0]), 0), ((0.0, g[1]), 0),   # left, v.x
            ((1.0, g[0]), 0), ((1.0, g[1]), 0),   # right
            ((g[0], 0.0), 1), ((g[1], 0.0), 1),   # bottom, v.y
            ((g[0], 1.0), 1), ((g[1], 1.0), 1),   # top
        ]
        V = np.zeros((8, 8))
        for i, (p, comp) in enumerate(nodes):
            V[i] = mono(p)[:, comp]
        self._coef = np.linalg.inv(V)  # columns: monomial coeffs of basis fns
        self._mono = mono
        # div of the monomials: only (x,0) and (0,y) contribute.
        self._mono_div = np.array([0, 1, 0, 0, 0, 1, 0, 0], dtype=float)

    def tabulate(self, pts):
        """Values of the 8 basis functions at reference points, (npts, 8, 2)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        vals = np.empty((len(pts), 8, 2))
        for q, p in enumerate(pts):
            vals[q] = (self._coef.T @ self._mono(p))
        return vals

    def divergences(self):
        """Constant reference divergence of each basis function, (8,)."""
        return self._coef.T @ self._mono_div


_ELEMENT = StressElement()


def stress_tabulation(hx, hy, ref_pts):
    """Physical tabulation of the 8 edge functions on an hx x hy cell.

    Functions are scaled so that the physical edge-normal trace remains
    nodal at the physical edge Gauss points.  Returns (vals, divs) with
    vals (npts, 8, 2) and divs (8,).
    """
    vals = _ELEMENT.tabulate(ref_pts).copy()
    divs = _ELEMENT.divergences().copy()
    # left/right functions: indices 0..3, bottom/top: 4..7
    vals[:, :4, 1] *= hy / hx
    vals[:, 4:, 0] *= hx / hy
    divs[:4] /= hx
    divs[4:] /= hy
    return vals, divs


def eval_stress_basis(hx, hy, ref_pts):
    """Matrix values and divergences of the 16 stress basis functions.

    Basis b = 8*r + j places edge function j in matrix row r.  Returns
    (npts, 16, 2, 2) values and (16, 2) constant divergence vectors.
    """
    ref_pts = np.asarray(ref_pts, dtype=float).reshape(-1, 2)
    v, d = stress_tabulation(hx, hy, ref_pts)
    npts = len(ref_pts)
    vals = np.zeros((npts, 16, 2, 2))
    divs = np.zeros((16, 2))
    for r in range(2):
        vals[:, 8 * r:8 * (r + 1), r, :] = v
        divs[8 * r:8 * (r + 1), r] = d
    return vals, divs


class SubdomainSpace:
    """Dof layout of the stress/displacement/rotation triple on one mesh.

    Global vector order: all stress dofs, then displacement, then rotation.
    Stress dofs: 4 per edge (2 matrix rows x 2 Gauss points), vertical edges
    first (column-major: edge (ix, iy) -> ix*ny + iy), then horizontal
    (row-major: ix + iy*nx).
    """

    def __init__(self, mesh):
        self.mesh = mesh
        nx, ny = mesh.nx, mesh.ny
        self.n_vedge = (nx + 1) * ny
        self.n_hedge = nx * (ny + 1)
        self.n_edges = self.n_vedge + self.n_hedge
        self.n_sigma = 4 * self.n_edges
        self.n_u = 2 * mesh.ncell
        self.n_gamma = (nx + 1) * (ny + 1)
        self.n_total = self.n_sigma + self.n_u + self.n_gamma
        self.u_offset = self.n_sigma
        self.gamma_offset = self.n_sigma + self.n_u
        self._build_connectivity()

    def vedge_id(self, ix, iy):
        return ix * self.mesh.ny + iy

    def hedge_id(self, ix, iy):
        return self.n_vedge + ix + iy * self.mesh.nx

    def edge_sigma_dofs(self, edge_id):
        """Global stress dofs (2 rows x 2 points) of one edge, shape (2, 2)."""
        base = 4 * edge_id
        return np.arange(base, base + 4).reshape(2, 2)

    def _build_connectivity(self):
        nx, ny = self.mesh.nx, self.mesh.ny
        cx, cy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        cx = cx.ravel()
        cy = cy.ravel()
        # cell ordering: cell (cx, cy) -> cx*ny + cy
        self.cell_ids = cx * ny + cy
        edges = np.stack([
            self.vedge_id(cx, cy), self.vedge_id(cx + 1, cy),
            self.hedge_id(cx, cy), self.hedge_id(cx, cy + 1),
        ], axis=1)  # (ncell, 4): L, R, B, T
        dofs = (4 * edges[:, :, None] + np.arange(4)).reshape(-1, 16)
        # local edge-function order per row: L0 L1 R0 R1 B0 B1 T0 T1;
        # edge dof order is (row, point), so reshuffle to rows-major.
        perm = np.empty(16, dtype=int)
        for r in range(2):
            for e in range(4):
                for k in range(2):
                    perm[8 * r + 2 * e + k] = 4 * e + 2 * r + k
        order = np.argsort(self.cell_ids)
        self.sigma_conn = dofs[:, perm][order]
        cxo, cyo = cx[order], cy[order]
        self.u_conn = self.u_offset + np.stack(
            [2 * self.cell_ids[order], 2 * self.cell_ids[order] + 1], axis=1)
        vert = lambda ix, iy: ix * (ny + 1) + iy
        self.gamma_conn = self.gamma_offset + np.stack([
            vert(cxo, cyo), vert(cxo + 1, cyo),
            vert(cxo, cyo + 1), vert(cxo + 1, cyo + 1),
        ], axis=1)
        self.cell_xy = np.stack([cxo, cyo], axis=1)

    def cell_origin(self, conn_row):
        """Lower-left corner of cell #conn_row in the connectivity order."""
        r = self.mesh.rect
        cx, cy = self.cell_xy[conn_row]
        return r.x0 + cx * self.mesh.hx, r.y0 + cy * self.mesh.hy

    def side_edges(self, side):
        """Edge ids along one side, ordered by increasing coordinate."""
        nx, ny = self.mesh.nx, self.mesh.ny
        if side == "left":
            return np.array([self.vedge_id(0, iy) for iy in range(ny)])
        if side == "right":
            return np.array([self.vedge_id(nx, iy) for iy in range(ny)])
        if side == "bottom":
            return np.array([self.hedge_id(ix, 0) for ix in range(nx)])
        return np.array([self.hedge_id(ix, ny) for ix in range(nx)])

    def side_trace_dofs(self, side):
        """Stress dofs on a side, shape (nedge, 2 rows, 2 points)."""
        edges = self.side_edges(side)
        return np.stack([self.edge_sigma_dofs(e) for e in edges])

    def side_edge_length(self, side):
        return self.mesh.hy if side in ("left", "right") else self.mesh.hx

    def side_edge_breaks(self, side):
        lo, hi, _ = self.mesh.side_span(side)
        n = self.mesh.side_edge_count(side)
        return np.linspace(lo, hi, n + 1)


class MaterialField:
    """Pointwise Lame pair (lambda, mu) and the compliance action.

    Either analytic callables lam(x, y), mu(x, y) (vectorized over numpy
    arrays) or per-cell constant arrays attached to a decomposition's global
    cell grid.  The compliance acts on 2x2 matrices as

        A sig = (sig - lam/(2mu + 2lam) tr(sig) I) / (2 mu).
    """

    def __init__(self, lam, mu):
        self.lam = lam
        self.mu = mu

    @classmethod
    def from_constants(cls, lam, mu):
        return cls(lambda x, y: np.full_like(np.asarray(x, dtype=float), lam),
                   lambda x, y: np.full_like(np.asarray(x, dtype=float), mu))

    def evaluate(self, x, y):
        lam = np.asarray(self.lam(x, y), dtype=float)
        mu = np.asarray(self.mu(x, y), dtype=float)
        if np.any(mu <= 0.0):
            raise ValueError("shear modulus must be positive everywhere sampled")
        if np.any(lam < 0.0):
            raise ValueError("first Lame parameter must be nonnegative")
        return lam, mu

    def compliance(self, sig, x, y):
        """Apply the compliance tensor to 2x2 matrices sig (..., 2, 2)."""
        lam, mu = self.evaluate(x, y)
        sig = np.asarray(sig, dtype=float)
        tr = sig[..., 0, 0] + sig[..., 1, 1]
        eye = np.eye(2)
        coef = (lam / (2 * mu + 2 * lam))[..., None, None]
        return (sig - coef * tr[..., None, None] * eye) / (2 * mu)[..., None, None]


def legendre_orthonormal(a, deg_max, t):
    """Orthonormal Legendre values phi_0..phi_m on a segment of length a.

    t holds local coordinates in [0, 1]; returns (len(t), deg_max + 1).
    """
    t = np.asarray(t, dtype=float)
    xi = 2.0 * t - 1.0
    out = np.empty((t.size, deg_max + 1))
    for d in range(deg_max + 1):
        c = np.zeros(d + 1)
        c[d] = 1.0
        out[:, d] = legval(xi, c) * np.sqrt((2 * d + 1) / a)
    return out


def _continuous_basis(n_seg, degree):
    """C0 piecewise-P_degree basis in per-segment orthonormal Legendre coords.

    Columns are L2-orthonormalized; the span is the continuous subspace of
    the discontinuous space on the same partition.
    """
    nm = degree + 1
    n_nodes = n_seg * degree + 1
    B = np.zeros((n_seg * nm, n_nodes))
    t, w = gauss_rule(nm + 1, 0.0, 1.0)
    phi = legendre_orthonormal(1.0, degree, t)  # unit segment, rescaled later
    local_nodes = np.linspace(0.0, 1.0, degree + 1)
    lagr = np.empty((len(t), degree + 1))
    for j in range(degree + 1):
        c = np.ones(len(t))
        for i in range(degree + 1):
            if i != j:
                c *= (t - local_nodes[i]) / (local_nodes[j] - local_nodes[i])
        lagr[:, j] = c
    # exact representation: Lagrange fns lie in P_degree
    local = phi.T @ (w[:, None] * lagr)  # (nm, degree+1), unit-length basis
    for s in range(n_seg):
        for j in range(degree + 1):
            B[s * nm:(s + 1) * nm, s * degree + j] = local[:, j]
    q, _ = np.linalg.qr(B)
    return q


class MortarSpace:
    """Vector-valued mortar space over all interfaces of a decomposition.

    Per interface and component the scalar space is spanned by columns of a
    basis matrix expressed in per-segment L2-orthonormal Legendre
    coordinates; the columns themselves are orthonormal, so coefficient
    vectors double as L2(Gamma) coordinates for both the discontinuous
    (basis = identity) and continuous variants.  Dof order within an
    interface is component-major.
    """

    def __init__(self, grids):
        self.grids = list(grids)
        self.bases = []
        self.offsets = []
        n = 0
        for g in self.grids:
            nm = g.degree + 1
            if g.continuous and g.degree >= 1 and g.n_seg > 1:
                B = _continuous_basis(g.n_seg, g.degree)
            else:
                B = np.eye(g.n_seg * nm)
            self.bases.append(B)
            self.offsets.append(n)
            n += 2 * B.shape[1]
        self.dim = n

    def interface_dim(self, k):
        return 2 * self.bases[k].shape[1]

    def scalar_dim(self, k):
        return self.bases[k].shape[1]

    def zeros(self):
        return np.zeros(self.dim)

    def slice_of(self, k):
        return slice(self.offsets[k], self.offsets[k] + self.interface_dim(k))

    def grid_index(self, interface_index):
        for k, g in enumerate(self.grids):
            if g.interface.index == interface_index:
                return k
        raise KeyError(f"no mortar grid for interface {interface_index}")

    def project_function(self, func, n_gauss=None):
        """L2(Gamma) projection of a vector field given as func(x, y)->(2,).

        With orthonormal bases the projection coefficients are plain inner
        products, evaluated segment-by-segment with Gauss quadrature.
        """
        coeffs = self.zeros()
        for k, g in enumerate(self.grids):
            nm = g.degree + 1
            npts = n_gauss or max(2 * g.degree + 2, 8)
            raw = np.empty((2, g.n_seg * nm))
            for s in range(g.n_seg):
                s0 = g.interface.lo + s * g.H
                t, w = gauss_rule(npts, 0.0, 1.0)
                pts_1d = s0 + t * g.H
                if g.interface.axis == "v":
                    x, y = np.full_like(pts_1d, g.interface.pos), pts_1d
                else:
                    x, y = pts_1d, np.full_like(pts_1d, g.interface.pos)
                vals = np.asarray(func(x, y), dtype=float)  # (2, npts)
                phi = legendre_orthonormal(g.H, g.degree, t)  # (npts, nm)
                raw[:, s * nm:(s + 1) * nm] = (w * g.H) * vals @ phi
            block = coeffs[self.slice_of(k)]
            nsc = self.scalar_dim(k)
            for comp in range(2):
                block[comp * nsc:(comp + 1) * nsc] = self.bases[k].T @ raw[comp]
        return coeffs


class TraceCoupling:
    """1-D coupling between one mortar interface and one subdomain side.

    Holds the unsigned overlap matrix C with C[(e,k),j] = int over e of
    ell_{e,k} phi_j for the interface's scalar mortar basis, the diagonal
    trace mass (|e|/2 per dof), the subdomain stress-dof ids of the side,
    and the outward-normal sign of the side.  All mortar/trace interactions
    reduce to products with C:

      star rhs        <lam, tau n_i>      = sign * C lam         (per comp)
      operator output <sig n_i, phi>      = sign * C^T t         (per comp)
      Q_{h,i} lam     (L2 proj to trace)  = C lam / mass
      Q_{h,i}^T g     (L2 proj to mortar) = C^T (mass-weighted g coeffs)
    """

    def __init__(self, space, side, grid, basis=None):
        self.space = space
        self.side = side
        self.grid = grid
        self.sign = SIDE_SIGN[side]
        self.trace_dofs = space.side_trace_dofs(side)  # (nedge, 2, 2)
        self.edge_len = space.side_edge_length(side)
        self.mass = 0.5 * self.edge_len
        self.C = self._overlap_matrix()
        if basis is not None and basis.shape[1] != basis.shape[0]:
            self.C = self.C @ basis
        self.n_scalar = self.C.shape[1]

    def _overlap_matrix(self):
        g = self.grid
        breaks_tr = self.space.side_edge_breaks(self.side)
        breaks_mo = np.asarray(g.breakpoints)
        cuts = np.unique(np.concatenate([breaks_tr, breaks_mo]))
        n_edge = len(breaks_tr) - 1
        nm = g.degree + 1
        C = np.zeros((2 * n_edge, nm * g.n_seg))
        npts = (g.degree + 3) // 2 + 1  # exact for degree m+1 integrands
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a < 1e-14:
                continue
            e = min(int(np.searchsorted(breaks_tr, 0.5 * (a + b)) - 1), n_edge - 1)
            s = min(int(np.searchsorted(breaks_mo, 0.5 * (a + b)) - 1), g.n_seg - 1)
            x, w = gauss_rule(npts, a, b)
            ell = edge_nodal_values((x - breaks_tr[e]) / self.edge_len)
            phi = legendre_orthonormal(g.H, g.degree, (x - breaks_mo[s]) / g.H)
            C[2 * e:2 * e + 2, nm * s:nm * (s + 1)] += ell.T @ (w[:, None] * phi)
        return C

    def mortar_component(self, lam_iface, comp):
        """Component comp of an interface coefficient block, (n_scalar,)."""
        return lam_iface[comp * self.n_scalar:(comp + 1) * self.n_scalar]

    def scatter_component(self, out_iface, comp, vals):
        out_iface[comp * self.n_scalar:(comp + 1) * self.n_scalar] += vals


def trace_couplings(decomp, space, mortar):
    """All TraceCoupling objects of one subdomain, keyed by mortar index."""
    mesh = space.mesh
    out = []
    for side in mesh.interface_sides():
        k = mortar.grid_index(mesh.side_interface[side])
        out.append((k, TraceCoupling(space, side, mortar.grids[k],
                                     mortar.bases[k])))
    return out


def project_mortar_to_trace(coupling, lam_iface):
    """Q_{h,i}: L2 projection of a mortar function onto one side's trace.

    Returns nodal trace coefficients shaped like coupling.trace_dofs.
    """
    out = np.empty_like(coupling.trace_dofs, dtype=float)
    for comp in range(2):
        q = coupling.C @ coupling.mortar_component(lam_iface, comp) / coupling.mass
        out[:, comp, :] = q.reshape(-1, 2)
    return out


def project_trace_to_mortar(coupling, trace_vals):
    """Q_{h,i}^T: L2 projection of a side trace function onto the mortar.

    trace_vals holds nodal coefficients shaped (nedge, 2, 2); returns an
    interface coefficient block.
    """
    out = np.zeros(2 * coupling.n_scalar)
    for comp in range(2):
        w = trace_vals[:, comp, :].ravel()
        coupling.scatter_component(out, comp, coupling.C.T @ w)
    return out


@dataclass
class SolvabilityReport:
    ok: bool
    violated: list
    sigma_min: dict

    def __bool__(self):
        return self.ok


def check_mortar_solvability(decomp, mortar, spaces, rel_tol=1e-10):
    """Rank check of the stacked trace projections per interface.

    For each interface the stacked operator [Q_{h,i}; Q_{h,j}] restricted to
    the interface's mortar block must have full column rank; the smallest
    singular value of its L2-scaled matrix is the norm-equivalence constant
    of the mortar space against the traces.
    """
    sub_spaces = {s.mesh.index: s for s in spaces}
    violated = []
    sigma_min = {}
    for k, g in enumerate(mortar.grids):
        seg = g.interface
        blocks = []
        for sub in (seg.i, seg.j):
            space = sub_spaces[sub]
            mesh = space.mesh
            side = next(s for s in mesh.interface_sides()
                        if mesh.side_interface[s] == seg.index)
            cpl = TraceCoupling(space, side, g, mortar.bases[k])
            # rows scaled by sqrt(mass): singular values are L2 quantities
            blocks.append(cpl.C / np.sqrt(cpl.mass))
        stacked = np.vstack(blocks)
        sv = np.linalg.svd(stacked, compute_uv=False)
        sigma_min[seg.index] = sv[-1]
        if sv[-1] < rel_tol * sv[0]:
            violated.append(seg.index)
    return SolvabilityReport(ok=not violated, violated=violated, sigma_min=sigma_min)

"""Rectangular domain decompositions, subdomain grids, and mortar grids.

The decomposition is a tensor pattern of axis-aligned rectangular subdomains
covering the unit square (or another rectangle), each carrying a uniform
cell grid.  Adjacent subdomain grids are allowed to be non-matching across
the shared interface; the checkerboard builder alternates 2*2^l and 3*2^l
cells per side to produce the standard non-matching configuration.

Orientation convention used throughout the package: vertical edges carry the
global normal +x, horizontal edges the global normal +y.  The unit normal of
an interface points from the lower-indexed subdomain to the higher-indexed
one, which for tensor patterns is always the +x / +y direction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

__all__ = [
    "Rect",
    "InterfaceSegment",
    "SubdomainMesh",
    "MortarGrid",
    "Decomposition",
    "build_checkerboard",
    "build_mortar_grids",
]

DOMAIN_SIDES = ("left", "right", "bottom", "top")

# Outward-normal sign of each subdomain side relative to the global
# (+x for vertical, +y for horizontal) edge normals.
SIDE_SIGN = {"left": -1.0, "right": 1.0, "bottom": -1.0, "top": 1.0}


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [x0,x1] x [y0,y1]."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height


@dataclass(frozen=True)
class InterfaceSegment:
    """1-D interface between subdomains i < j.

    axis 'v' means a vertical segment x = pos, span (lo, hi) in y, with unit
    normal +x pointing from i into j.  axis 'h' is the horizontal analogue
    with normal +y.
    """

    index: int
    i: int
    j: int
    axis: str
    pos: float
    lo: float
    hi: float

    @property
    def length(self):
        return self.hi - self.lo


@dataclass
class SubdomainMesh:
    """Uniform nx x ny cell grid on one subdomain rectangle.

    side_kind classifies each of the four sides as 'dirichlet', 'neumann'
    or 'interface'; side_interface maps interface sides to the segment index.
    """

    index: int
    rect: Rect
    nx: int
    ny: int
    side_kind: dict = field(default_factory=dict)
    side_interface: dict = field(default_factory=dict)

    @property
    def hx(self):
        return self.rect.width / self.nx

    @property
    def hy(self):
        return self.rect.height / self.ny

    @property
    def h(self):
        return math.hypot(self.hx, self.hy)

    @property
    def ncell(self):
        return self.nx * self.ny

    @property
    def cell_area(self):
        return self.hx * self.hy

    def interface_sides(self):
        return [s for s in DOMAIN_SIDES if self.side_kind[s] == "interface"]

    def side_edge_count(self, side):
        return self.ny if side in ("left", "right") else self.nx

    def side_span(self, side):
        """(lo, hi, fixed coordinate) of a side as a 1-D segment."""
        r = self.rect
        if side == "left":
            return r.y0, r.y1, r.x0
        if side == "right":
            return r.y0, r.y1, r.x1
        if side == "bottom":
            return r.x0, r.x1, r.y0
        return r.x0, r.x1, r.y1


@dataclass
class Decomposition:
    """Subdomain tiling of the domain plus per-subdomain meshes."""

    domain: Rect
    subdomains: list
    meshes: list
    interfaces: list
    shape: tuple
    level: int
    nominal_h: float
    neumann_sides: frozenset = frozenset()

    @property
    def n_subdomains(self):
        return len(self.subdomains)

    def interfaces_of(self, i):
        return [g for g in self.interfaces if i in (g.i, g.j)]

    def touches_dirichlet(self, i):
        mesh = self.meshes[i]
        return any(k == "dirichlet" for k in mesh.side_kind.values())


def _checkerboard_cells(row, col, level, cells):
    base = cells[0] if (row + col) % 2 == 0 else cells[1]
    return base * 2**level


def build_checkerboard(levels, shape, cells=(2, 3), neumann_sides=(), domain=None):
    """Build the alternating-refinement tensor decomposition.

    Subdomain (r, c) of the shape[0] x shape[1] pattern receives a uniform
    grid with cells[0]*2^levels cells per side when r + c is even and
    cells[1]*2^levels when odd.  cells=(2, 2) gives globally matching grids.
    neumann_sides lists domain sides ('left', 'right', 'bottom', 'top') that
    form the traction boundary; everything else is Dirichlet.
    """
    if levels < 0:
        raise ValueError(f"levels must be >= 0, got {levels}")
    try:
        nrow, ncol = (int(s) for s in shape)
    except (TypeError, ValueError):
        raise ValueError(f"pattern shape must be a (rows, cols) pair, got {shape!r}")
    if nrow < 1 or ncol < 1:
        raise ValueError(f"pattern shape must be positive, got {shape}")
    neumann_sides = frozenset(neumann_sides)
    unknown = neumann_sides - set(DOMAIN_SIDES)
    if unknown:
        raise ValueError(f"unknown domain sides: {sorted(unknown)}")
    if neumann_sides == set(DOMAIN_SIDES):
        raise ValueError("at least one domain side must remain Dirichlet")

    dom = domain or Rect(0.0, 0.0, 1.0, 1.0)
    wx = dom.width / ncol
    wy = dom.height / nrow

    subdomains = []
    meshes = []
    for r in range(nrow):
        for c in range(ncol):
            rect = Rect(dom.x0 + c * wx, dom.y0 + r * wy,
                        dom.x0 + (c + 1) * wx, dom.y0 + (r + 1) * wy)
            n = _checkerboard_cells(r, c, levels, cells)
            subdomains.append(rect)
            meshes.append(SubdomainMesh(index=r * ncol + c, rect=rect, nx=n, ny=n))

    interfaces = []

    def add_iface(i, j, axis, pos, lo, hi):
        seg = InterfaceSegment(len(interfaces), i, j, axis, pos, lo, hi)
        interfaces.append(seg)
        return seg

    for r in range(nrow):
        for c in range(ncol):
            i = r * ncol + c
            if c + 1 < ncol:
                seg = add_iface(i, i + 1, "v", subdomains[i].x1,
                                subdomains[i].y0, subdomains[i].y1)
                meshes[i].side_kind["right"] = "interface"
                meshes[i].side_interface["right"] = seg.index
                meshes[i + 1].side_kind["left"] = "interface"
                meshes[i + 1].side_interface["left"] = seg.index
            if r + 1 < nrow:
                seg = add_iface(i, i + ncol, "h", subdomains[i].y1,
                                subdomains[i].x0, subdomains[i].x1)
                meshes[i].side_kind["top"] = "interface"
                meshes[i].side_interface["top"] = seg.index
                meshes[i + ncol].side_kind["bottom"] = "interface"
                meshes[i + ncol].side_interface["bottom"] = seg.index

    for mesh in meshes:
        for side in DOMAIN_SIDES:
            if side in mesh.side_kind:
                continue
            mesh.side_kind[side] = "neumann" if side in neumann_sides else "dirichlet"

    # Nominal h reported for the pattern is that of the coarser subdomains.
    nominal_h = wx / (cells[0] * 2**levels)
    return Decomposition(
        domain=dom,
        subdomains=subdomains,
        meshes=meshes,
        interfaces=interfaces,
        shape=(nrow, ncol),
        level=levels,
        nominal_h=nominal_h,
        neumann_sides=neumann_sides,
    )


@dataclass
class MortarGrid:
    """Uniform 1-D partition of one interface carrying degree-m polynomials."""

    interface: InterfaceSegment
    n_seg: int
    degree: int
    continuous: bool = False

    @property
    def H(self):
        return self.interface.length / self.n_seg

    @property
    def breakpoints(self):
        lo, n = self.interface.lo, self.n_seg
        return [lo + k * self.H for k in range(n + 1)]


def _resolve_mortar_h(scaling, nominal_h):
    if isinstance(scaling, (int, float)):
        return float(scaling)
    if scaling == "2h":
        return 2.0 * nominal_h
    if scaling in ("sqrt(h)", "sqrt_h"):
        H = math.sqrt(nominal_h)
        if abs(round(1.0 / H) * H - 1.0) > 1e-12:
            raise ValueError(
                f"sqrt scaling of h={nominal_h} gives H={H}, not a unit-fraction size"
            )
        return H
    raise ValueError(f"unknown mortar scaling {scaling!r}")


def build_mortar_grids(decomp, scaling, degree, continuous=False):
    """Partition every interface uniformly with element size H.

    scaling is '2h', 'sqrt(h)', or an explicit element size.  H must tile
    each interface length evenly.  A mortar grid finer than both adjacent
    traces is permitted but triggers a warning; the downstream solvability
    check is the authoritative guard.
    """
    if degree < 0:
        raise ValueError(f"mortar degree must be >= 0, got {degree}")
    H = _resolve_mortar_h(scaling, decomp.nominal_h)
    grids = []
    for seg in decomp.interfaces:
        n = seg.length / H
        n_seg = round(n)
        if n_seg < 1 or abs(n - n_seg) > 1e-9:
            raise ValueError(
                f"mortar size H={H} does not tile interface {seg.index} "
                f"of length {seg.length}"
            )
        trace_h = []
        for sub in (seg.i, seg.j):
            mesh = decomp.meshes[sub]
            trace_h.append(seg.length / mesh.side_edge_count(
                _side_of(mesh, seg)))
        if H < max(trace_h) - 1e-12:
            warnings.warn(
                f"mortar grid on interface {seg.index} (H={H}) is finer than "
                f"the coarser trace (h={max(trace_h)}); the space may be too "
                "rich for unique solvability",
                stacklevel=2,
            )
        grids.append(MortarGrid(seg, n_seg, degree, continuous))
    return grids


def _side_of(mesh, seg):
    """Which side of the mesh's rectangle lies on interface seg."""
    if seg.axis == "v":
        return "right" if mesh.index == seg.i else "left"
    return "top" if mesh.index == seg.i else "bottom"

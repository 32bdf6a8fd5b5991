"""Manufactured solutions, solution drivers, error norms, and rate studies.

Closed-form displacement fields are differentiated symbolically into the
stress, rotation, and body-force fields the solver needs; a finite
difference cross-check guards the generated derivatives.  The drivers wire
geometry, assembly, factorization, and the interface solve together and
return everything the error computation and the cost accounting need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import sympy as sym

from . import assembly, geometry
from .assembly import RhsFunctional, assemble_bar_rhs, assemble_subdomain
from .interface import (CgReport, InterfaceOperatorM1, InterfaceOperatorM2,
                        build_msb, cg_solve)
from .spaces import (MaterialField, MortarSpace, SubdomainSpace,
                     check_mortar_solvability)
from .subdomain import factorize

__all__ = [
    "ManufacturedCase",
    "make_case",
    "ErrorReport",
    "RunResult",
    "SolvabilityError",
    "solve_mortar",
    "solve_method2",
    "recover_global",
    "compute_errors",
    "convergence_study",
    "fit_exponent",
    "load_porosity",
    "save_porosity",
    "synthesize_porosity",
]

X, Y = sym.symbols("x y", real=True)

# Lame parameters from (E, nu) as used for the convergence examples.
LAME_LAMBDA = lambda E, nu: E * nu / ((1 - nu) * (1 - 2 * nu))
LAME_MU = lambda E, nu: E / (2 * (1 + 2 * nu))


class SolvabilityError(RuntimeError):
    """Mortar space too rich for the adjacent traces."""


def _scalar_fun(expr):
    f = sym.lambdify((X, Y), expr, modules="numpy")

    def call(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape).copy()

    return call


def _vector_fun(exprs):
    comps = [_scalar_fun(e) for e in exprs]

    def call(x, y):
        return np.stack([c(x, y) for c in comps])

    return call


def _matrix_fun(exprs):
    comps = [_scalar_fun(e) for e in np.asarray(exprs).ravel()]

    def call(x, y):
        x = np.asarray(x, dtype=float)
        vals = np.stack([c(x, y) for c in comps], axis=-1)
        return vals.reshape(x.shape + (2, 2))

    return call


@dataclass
class ManufacturedCase:
    """Closed-form solution data plus material law and boundary partition."""

    name: str
    material: MaterialField
    u: object = None
    sigma: object = None
    gamma: object = None
    f: object = None
    g_D: object = None
    neumann_sides: tuple = ()
    fd_exclusion: tuple = ()   # x-bands the FD self-check must avoid

    @property
    def has_exact(self):
        return self.u is not None

    def self_check(self, n=100, tol=1e-6, seed=7):
        """f must match centered finite differences of sigma (Richardson)."""
        if not self.has_exact:
            return
        rng = np.random.default_rng(seed)
        pts = []
        while len(pts) < n:
            x, y = rng.uniform(0.05, 0.95, size=2)
            if any(abs(x - c) < w for c, w in self.fd_exclusion):
                continue
            pts.append((x, y))
        pts = np.array(pts)
        x, y = pts[:, 0], pts[:, 1]

        def div_sigma(h):
            dx = (self.sigma(x + h, y) - self.sigma(x - h, y)) / (2 * h)
            dy = (self.sigma(x, y + h) - self.sigma(x, y - h)) / (2 * h)
            return np.stack([dx[..., 0, 0] + dy[..., 0, 1],
                             dx[..., 1, 0] + dy[..., 1, 1]])

        h = 1e-4
        fd = (4.0 * div_sigma(h / 2) - div_sigma(h)) / 3.0
        err = np.max(np.abs(fd - self.f(x, y)))
        scale = max(1.0, np.max(np.abs(self.f(x, y))))
        if err > tol * scale:
            raise AssertionError(
                f"{self.name}: manufactured f deviates from FD divergence "
                f"of sigma by {err:.3e}")


def _case_from_displacement(name, u_expr, lam_expr, mu_expr,
                            neumann_sides=(), fd_exclusion=()):
    grad = [[sym.diff(u_expr[r], v) for v in (X, Y)] for r in range(2)]
    eps = [[sym.Rational(1, 2) * (grad[r][c] + grad[c][r]) for c in range(2)]
           for r in range(2)]
    tr_eps = eps[0][0] + eps[1][1]
    sigma = [[sym.expand(2 * mu_expr * eps[r][c])
              + (sym.expand(lam_expr * tr_eps) if r == c else 0)
              for c in range(2)] for r in range(2)]
    # rotation scalar: gamma = (d_x u2 - d_y u1) / 2, so that the skew part
    # of grad(u) is [[0, -gamma], [gamma, 0]]
    gamma = sym.Rational(1, 2) * (grad[1][0] - grad[0][1])
    f = [sym.diff(sigma[r][0], X) + sym.diff(sigma[r][1], Y) for r in range(2)]

    material = MaterialField(_scalar_fun(lam_expr), _scalar_fun(mu_expr))
    u_fun = _vector_fun(u_expr)
    return ManufacturedCase(
        name=name,
        material=material,
        u=u_fun,
        sigma=_matrix_fun(sigma),
        gamma=_scalar_fun(gamma),
        f=_vector_fun(f),
        g_D=u_fun,
        neumann_sides=tuple(neumann_sides),
        fd_exclusion=tuple(fd_exclusion),
    )


def make_case(name, raster=None, nu=0.2, porosity_floor=0.5):
    """Construct a verification case by id.

    ex1/ex4: smooth solution with oscillatory Young's modulus; ex2:
    discontinuous Lame parameters with a solution whose strain vanishes on
    the material jump line; patch/rigid: exactness probes; ex5: heterogeneous
    compression driven by a porosity raster (no exact solution).
    """
    if name in ("ex1", "ex4"):
        E = sym.sin(3 * sym.pi * X) * sym.sin(3 * sym.pi * Y) + 5
        u = (X**3 * Y**4 + X**2 + sym.sin(X * Y) * sym.cos(Y),
             X**4 * Y**3 + Y**2 + sym.cos(X * Y) * sym.sin(X))
        return _case_from_displacement(name, u, LAME_LAMBDA(E, nu),
                                       LAME_MU(E, nu))
    if name == "ex2":
        lam = sym.Piecewise((1, X < sym.Rational(1, 2)), (10, True))
        u1 = X**2 * Y**3 - X**2 * Y**3 * sym.sin(sym.pi * X)
        return _case_from_displacement(name, (u1, u1), lam, lam,
                                       fd_exclusion=((0.5, 5e-3),))
    if name == "patch":
        return _case_from_displacement(name, (X, Y), sym.Integer(1),
                                       sym.Integer(1))
    if name == "rigid":
        return _case_from_displacement(name, (-Y, X), sym.Integer(1),
                                       sym.Integer(1))
    if name == "ex5":
        if raster is None:
            raise ValueError("ex5 requires a porosity raster")
        phi = raster if isinstance(raster, np.ndarray) else load_porosity(raster)
        material = material_from_porosity(phi, nu=nu, c=porosity_floor)

        def g_D(x, y):
            x = np.asarray(x, dtype=float)
            left = x < 0.5
            return np.stack([np.where(left, 0.1, 0.0), np.zeros_like(x)])

        case = ManufacturedCase(name=name, material=material, g_D=g_D,
                                neumann_sides=("top", "bottom"))
        case.raster_shape = phi.shape
        return case
    raise ValueError(f"unknown case {name!r}")


# -- porosity raster ----------------------------------------------------------

def load_porosity(path):
    """Read an 'NX NY' header plus row-major cell values (bottom row first)."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("porosity raster must start with 'NX NY'")
        nx, ny = int(header[0]), int(header[1])
        data = np.array(fh.read().split(), dtype=float)
    if data.size != nx * ny:
        raise ValueError(f"expected {nx * ny} porosity values, got {data.size}")
    return data.reshape(ny, nx)


def save_porosity(path, phi):
    phi = np.asarray(phi)
    with open(path, "w") as fh:
        fh.write(f"{phi.shape[1]} {phi.shape[0]}\n")
        for row in phi:
            fh.write(" ".join(repr(v) for v in row) + "\n")


def synthesize_porosity(nx=128, ny=128, seed=2018):
    """Correlated heterogeneous porosity field standing in for a core sample.

    A spectrally filtered Gaussian field is squashed into (0, 0.5) with a
    long upper tail so the derived Young's modulus spans roughly two orders
    of magnitude, mimicking strongly heterogeneous porous media.
    """
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((ny, nx))
    kx = np.fft.fftfreq(nx)[None, :]
    ky = np.fft.fftfreq(ny)[:, None]
    k2 = kx**2 + ky**2
    filt = 1.0 / (1.0 + (k2 / 0.004) ** 1.2)
    z = np.real(np.fft.ifft2(np.fft.fft2(noise) * filt))
    z = (z - z.mean()) / z.std()
    phi = 0.22 + 0.11 * z
    return np.clip(phi, 0.02, 0.44)


def material_from_porosity(phi, nu=0.2, c=0.5, domain=None):
    """Per-cell Lame parameters from E = 100 (1 - phi/c)^2.1 on a raster."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0.0) or np.any(phi >= c):
        raise ValueError(
            f"porosity values must lie in [0, {c}): the effective Young's "
            "modulus vanishes at the packing limit")
    E = 100.0 * (1.0 - phi / c) ** 2.1
    lam_cells = float(LAME_LAMBDA(1, nu)) * E
    mu_cells = float(LAME_MU(1, nu)) * E
    dom = domain or geometry.Rect(0.0, 0.0, 1.0, 1.0)
    ny, nx = phi.shape

    def lookup(cells):
        def call(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            i = np.clip(((x - dom.x0) / dom.width * nx).astype(int), 0, nx - 1)
            j = np.clip(((y - dom.y0) / dom.height * ny).astype(int), 0, ny - 1)
            return cells[j, i]

        return call

    return MaterialField(lookup(lam_cells), lookup(mu_cells))


# -- drivers ------------------------------------------------------------------

@dataclass
class ErrorReport:
    """Relative errors in the paper's six norms plus solver statistics."""

    err_sigma: float = math.nan
    err_div: float = math.nan
    err_u: float = math.nan
    err_Phu: float = math.nan
    err_gamma: float = math.nan
    err_mortar: float = math.nan
    cg_iterations: int = 0
    cond_estimate: float = math.nan
    solves_per_subdomain: int = 0

    def norms(self):
        return (self.err_sigma, self.err_div, self.err_u,
                self.err_Phu, self.err_gamma, self.err_mortar)


@dataclass
class RunResult:
    case: ManufacturedCase
    decomp: geometry.Decomposition
    mortar: object
    systems: list
    factorizations: list
    op: object
    bar_fields: list
    fields: list
    lam: np.ndarray
    cg: CgReport
    solves_per_subdomain: int
    errors: ErrorReport = None


def _setup_systems(case, decomp):
    systems = []
    for mesh in decomp.meshes:
        space = SubdomainSpace(mesh)
        systems.append(assemble_subdomain(mesh, case.material, space))
    return systems


def recover_global(lam, op, bar_fields):
    """Subdomain solutions sigma* (lam) + sigma_bar after the interface solve."""
    if op is None or getattr(op.mortar, "dim", 0) == 0:
        return list(bar_fields)
    star = op.star_fields(lam)
    return [s + b for s, b in zip(star, bar_fields)]


def solve_mortar(case, decomp, mortars, tol=1e-14, use_msb=False, threads=1,
                 compute_err=True, check_solvability=True):
    """Full displacement-multiplier (mortar) solve of one configuration."""
    systems = _setup_systems(case, decomp)
    mortar = MortarSpace(mortars)
    if check_solvability and mortar.dim:
        report = check_mortar_solvability(decomp, mortar,
                                          [s.space for s in systems])
        if not report.ok:
            raise SolvabilityError(
                "mortar space is too rich for the subdomain traces on "
                f"interfaces {report.violated}")
    factorizations = [factorize(s, mode="dirichlet") for s in systems]
    bar_fields = [
        factorizations[i].solve(assemble_bar_rhs(case.f, case.g_D, systems[i]))
        for i in range(decomp.n_subdomains)
    ]
    op = InterfaceOperatorM1(decomp, mortar, systems, factorizations,
                             threads=threads)
    if mortar.dim == 0:
        lam = mortar.zeros()
        cg = CgReport(0, 0.0, True, 1.0, 0.0)
        fields = list(bar_fields)
    else:
        g = op.rhs_from_bar(bar_fields)
        if use_msb:
            build_msb(op)
        # the initial residual always goes through the exact operator, so
        # the accounting is (#iterations + 3) without the basis and
        # (mortar dofs per subdomain + 3) with it
        lam, cg = cg_solve(op.apply, g, tol=tol, apply0=op.apply_exact,
                           maxiter=mortar.dim + 50)
        fields = recover_global(lam, op, bar_fields)
    solves = max(f.solve_count for f in factorizations)
    result = RunResult(case, decomp, mortar, systems, factorizations, op,
                       bar_fields, fields, lam, cg, solves)
    if compute_err and case.has_exact:
        result.errors = compute_errors(result)
    return result


def solve_method2(case, decomp, tol=1e-14, threads=1, compute_err=True):
    """Normal-stress-multiplier solve on matching grids."""
    systems = _setup_systems(case, decomp)
    op = InterfaceOperatorM2(decomp, systems, threads=threads)
    bar_fields = [
        op.factorizations[i].solve(
            assemble_bar_rhs(case.f, case.g_D, systems[i]))
        for i in range(decomp.n_subdomains)
    ]
    h = op.rhs_from_bar(bar_fields)
    lam, cg = cg_solve(op.apply, h, tol=tol, maxiter=op.dim + 50)
    star = op.star_fields(lam)
    fields = [s + b for s, b in zip(star, bar_fields)]
    solves = max(f.solve_count for f in op.factorizations)
    result = RunResult(case, decomp, None, systems, op.factorizations, op,
                       bar_fields, fields, lam, cg, solves)
    if compute_err and case.has_exact:
        result.errors = compute_errors(result)
    return result


# -- error norms --------------------------------------------------------------

def _accumulate(result):
    """Squared errors and reference norms over all subdomains."""
    case = result.case
    acc = dict.fromkeys(
        ["sig_e", "sig_r", "div_e", "div_r", "u_e", "u_r",
         "phu_e", "phu_r", "gam_e", "gam_r"], 0.0)
    for system, field in zip(result.systems, result.fields):
        space = system.space
        mesh = space.mesh
        qp = system.quad_points
        w = system.ref_wts * mesh.cell_area

        sig_h = np.einsum("cb,qbij->cqij", field.sigma[space.sigma_conn],
                          system.basis_vals)
        sig_ex = case.sigma(qp[..., 0], qp[..., 1])
        acc["sig_e"] += np.einsum("q,cqij->", w, (sig_ex - sig_h) ** 2)
        acc["sig_r"] += np.einsum("q,cqij->", w, sig_ex**2)

        div_h = field.sigma[space.sigma_conn] @ system.basis_divs
        f_ex = case.f(qp[..., 0], qp[..., 1])  # (2, ncell, nq)
        diff = f_ex - np.moveaxis(div_h, -1, 0)[:, :, None]
        acc["div_e"] += np.einsum("q,rcq->", w, diff**2)
        acc["div_r"] += np.einsum("q,rcq->", w, f_ex**2)

        u_ex = case.u(qp[..., 0], qp[..., 1])
        u_h = np.moveaxis(field.u, -1, 0)[:, :, None]
        acc["u_e"] += np.einsum("q,rcq->", w, (u_ex - u_h) ** 2)
        acc["u_r"] += np.einsum("q,rcq->", w, u_ex**2)

        centers = np.array([space.cell_origin(c) for c in range(mesh.ncell)])
        centers += 0.5 * np.array([mesh.hx, mesh.hy])
        u_mid = case.u(centers[:, 0], centers[:, 1])  # (2, ncell)
        du = u_mid - field.u.T
        acc["phu_e"] += mesh.cell_area * np.sum(du**2)
        acc["phu_r"] += mesh.cell_area * np.sum(u_mid**2)

        gam_conn = space.gamma_conn - space.gamma_offset
        gam_h = np.einsum("ca,qa->cq", field.gamma[gam_conn],
                          assembly.q1_values(system.ref_pts))
        gam_ex = case.gamma(qp[..., 0], qp[..., 1])
        acc["gam_e"] += np.einsum("q,cq->", w, (gam_ex - gam_h) ** 2)
        acc["gam_r"] += np.einsum("q,cq->", w, gam_ex**2)
    return acc


def _rel(err2, ref2):
    err = math.sqrt(max(err2, 0.0))
    ref = math.sqrt(max(ref2, 0.0))
    return err / ref if ref > 0 else err


def compute_errors(result):
    """Relative error norms of a finished run against its exact solution."""
    acc = _accumulate(result)
    report = ErrorReport(
        err_sigma=_rel(acc["sig_e"], acc["sig_r"]),
        err_div=_rel(acc["div_e"], acc["div_r"]),
        err_u=_rel(acc["u_e"], acc["u_r"]),
        err_Phu=_rel(acc["phu_e"], acc["phu_r"]),
        err_gamma=_rel(acc["gam_e"], acc["gam_r"]),
        cg_iterations=result.cg.iterations,
        cond_estimate=result.cg.cond_estimate,
        solves_per_subdomain=result.solves_per_subdomain,
    )
    if result.mortar is not None and result.mortar.dim:
        u_H = result.mortar.project_function(result.case.u)
        e = u_H - result.lam
        op = result.op
        err_a = math.sqrt(max(op.apply_exact(e) @ e, 0.0))
        ref_a = math.sqrt(max(op.apply_exact(u_H) @ u_H, 0.0))
        report.err_mortar = err_a / ref_a if ref_a > 0 else err_a
    return report


# -- convergence ladders ------------------------------------------------------

def convergence_study(case_name, levels, degree=2, scaling="2h", shape=(2, 2),
                      cells=(2, 3), tol=1e-14, use_msb=False, threads=1,
                      case_kwargs=None):
    """Run a refinement ladder and tabulate errors, rates, and iterations.

    Returns a list of row dicts in level order; rates are log-ratios against
    the previous level, adjusted for the actual h ratio.
    """
    rows = []
    prev = None
    case = make_case(case_name, **(case_kwargs or {}))
    for lev in levels:
        decomp = geometry.build_checkerboard(lev, shape, cells=cells,
                                             neumann_sides=case.neumann_sides)
        mortars = geometry.build_mortar_grids(decomp, scaling, degree)
        res = solve_mortar(case, decomp, mortars, tol=tol, use_msb=use_msb,
                           threads=threads)
        err = res.errors or ErrorReport(
            cg_iterations=res.cg.iterations,
            cond_estimate=res.cg.cond_estimate,
            solves_per_subdomain=res.solves_per_subdomain)
        row = {
            "level": lev,
            "h": decomp.nominal_h,
            "H": mortars[0].H if mortars else math.nan,
            "errors": err,
            "rates": (math.nan,) * 6,
            "result": res,
        }
        if prev is not None:
            ratio = math.log(prev["h"] / row["h"])
            row["rates"] = tuple(
                math.log(pe / ce) / ratio if pe > 0 and ce > 0 else math.nan
                for pe, ce in zip(prev["errors"].norms(), err.norms()))
        rows.append(row)
        prev = row
    return rows


def fit_exponent(x, y):
    """Least-squares slope of log y against log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])

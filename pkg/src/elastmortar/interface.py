"""Interface operators, the CG solver, and the multiscale stress basis.

Method 1 reduces the coupled problem to an SPD system on the mortar
displacement space: the operator maps mortar coefficients lam to the dual
vector of  -sum_i <sigma*_i(lam) n_i, phi>_Gamma  over the mortar basis phi,
one Dirichlet-type subdomain solve per subdomain per application.  Because
the mortar basis is L2(Gamma)-orthonormal, dual vectors and coefficient
vectors live in the same coordinates and plain conjugate gradients applies.

Method 2 poses the interface problem on the single-valued normal-stress
trace dofs of matching grids; the operator action is the reaction of
Neumann-type subdomain solves at the constrained interface dofs.

The multiscale stress basis precomputes the operator image of every mortar
basis function of a subdomain (one solve each), after which operator
applications on that subdomain reduce to a dense matrix-vector product.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .assembly import RhsFunctional, assemble_star_rhs
from .spaces import trace_couplings
from .subdomain import FloatingSubdomainError, factorize

__all__ = [
    "CgReport",
    "ConvergenceError",
    "cg_solve",
    "InterfaceOperatorM1",
    "MultiscaleBasis",
    "build_msb",
    "InterfaceOperatorM2",
]


class ConvergenceError(RuntimeError):
    """Interface iteration failed to reach the requested tolerance."""


@dataclass
class CgReport:
    iterations: int
    residual: float
    converged: bool
    cond_estimate: float
    rhs_norm: float

    def __str__(self):
        return (f"cg: {self.iterations} iterations, relres {self.residual:.2e}, "
                f"cond~{self.cond_estimate:.3g}")


def lanczos_condition(alphas, betas):
    """Condition estimate from the CG-Lanczos tridiagonal matrix.

    diag_k = 1/alpha_k + beta_{k-1}/alpha_{k-1}, off_k = sqrt(beta_k)/alpha_k.
    """
    m = len(alphas)
    if m == 0:
        return 1.0
    diag = np.empty(m)
    diag[0] = 1.0 / alphas[0]
    for k in range(1, m):
        diag[k] = 1.0 / alphas[k] + betas[k - 1] / alphas[k - 1]
    off = np.array([np.sqrt(betas[k]) / alphas[k] for k in range(m - 1)])
    ev = eigh_tridiagonal(diag, off, eigvals_only=True)
    lo, hi = ev[0], ev[-1]
    if lo <= 0:
        return np.inf
    return hi / lo


def cg_solve(apply_op, rhs, tol=1e-14, x0=None, maxiter=None, apply0=None):
    """Conjugate gradients with relative-residual stopping and Lanczos cond.

    apply0, when given, is used for the initial residual only (the exact
    operator under a multiscale-basis run).  Raises ConvergenceError after
    dim + 50 iterations and on loss of positive definiteness.
    """
    b = np.asarray(rhs, dtype=float)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if n == 0 or bnorm == 0.0:
        return x, CgReport(0, 0.0, True, 1.0, bnorm)
    maxiter = maxiter if maxiter is not None else n + 50

    r = b - (apply0 or apply_op)(x)
    p = r.copy()
    rs = r @ r
    alphas, betas = [], []
    it = 0
    res = np.sqrt(rs) / bnorm
    while res > tol:
        if it >= maxiter:
            raise ConvergenceError(
                f"no convergence in {maxiter} iterations "
                f"(relative residual {res:.3e}, dim {n})")
        Ap = apply_op(p)
        pAp = p @ Ap
        if pAp <= 0.0:
            raise ConvergenceError(
                f"operator not positive definite: p'Ap = {pAp:.3e} "
                f"at iteration {it}")
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        rs_new = r @ r
        alphas.append(alpha)
        res = np.sqrt(rs_new) / bnorm
        it += 1
        if res <= tol:
            break
        beta = rs_new / rs
        betas.append(beta)
        p = r + beta * p
        rs = rs_new
    return x, CgReport(it, res, True, lanczos_condition(alphas, betas), bnorm)


class InterfaceOperatorM1:
    """Mortar interface operator of the displacement-multiplier method."""

    def __init__(self, decomp, mortar, systems, factorizations, threads=1):
        self.decomp = decomp
        self.mortar = mortar
        self.systems = systems
        self.factorizations = factorizations
        self.threads = max(1, int(threads))
        self.couplings = [
            trace_couplings(decomp, systems[i].space, mortar)
            for i in range(decomp.n_subdomains)
        ]
        self.msb = None

    # -- per-subdomain pieces -------------------------------------------------

    def star_rhs(self, i, lam):
        return assemble_star_rhs((self.mortar, lam), self.systems[i].space,
                                 self.couplings[i])

    def project_interface(self, i, field, out, sign=1.0):
        """Accumulate sign * <sigma n_i, phi>_Gamma_i into the dual vector."""
        for k, cpl in self.couplings[i]:
            block = out[self.mortar.slice_of(k)]
            trace = field.vector[cpl.trace_dofs]  # (nedge, 2, 2)
            for comp in range(2):
                vals = cpl.C.T @ trace[:, comp, :].ravel()
                cpl.scatter_component(block, comp, sign * cpl.sign * vals)

    def _star_solve(self, i, lam):
        return self.factorizations[i].solve(self.star_rhs(i, lam))

    def star_fields(self, lam):
        """One Dirichlet star solve per subdomain, in index order."""
        idx = range(self.decomp.n_subdomains)
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(lambda i: self._star_solve(i, lam), idx))
        return [self._star_solve(i, lam) for i in idx]

    # -- operator actions -----------------------------------------------------

    def apply_exact(self, lam):
        """A lam via subdomain solves: the dual vector of the star-field
        interface pairing sum_i <sigma*_i(lam) n_i, phi>_Gamma_i.

        Testing the subdomain problem of sigma*(mu) with sigma*(lam) shows
        this form equals sum_i (A sigma*_i(mu), sigma*_i(lam)), the
        compliance energy, hence the operator is SPD; the right-hand side
        carries the compensating minus sign on the bar fields.
        """
        out = self.mortar.zeros()
        for i, field in enumerate(self.star_fields(lam)):
            self.project_interface(i, field, out, sign=1.0)
        return out

    def apply(self, lam):
        if self.msb is not None:
            return self.msb.apply(lam)
        return self.apply_exact(lam)

    def rhs_from_bar(self, bar_fields):
        """g: dual vector of -sum_i <sigma_bar_i n_i, phi>_Gamma_i, so that
        A lam = g reproduces the zero-jump condition on the total stress."""
        out = self.mortar.zeros()
        for i, field in enumerate(bar_fields):
            self.project_interface(i, field, out, sign=-1.0)
        return out

    def energy(self, lam, mu=None):
        """<A lam, mu>_Gamma through one exact application."""
        mu = lam if mu is None else mu
        return self.apply_exact(lam) @ mu

    def dense_matrix(self):
        """Explicit operator matrix (test oracle; one solve round per column)."""
        n = self.mortar.dim
        A = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = 1.0
            A[:, k] = self.apply_exact(e)
        return A


class MultiscaleBasis:
    """Operator images of all per-subdomain mortar basis functions.

    For subdomain i with mortar dofs idx_i the stored block Psi_i has
    column k equal to A_{H,i} e_k restricted to idx_i; applying the operator
    becomes out[idx_i] += Psi_i @ lam[idx_i].
    """

    def __init__(self, op):
        self.mortar = op.mortar
        self.index_sets = []
        self.blocks = []
        self.construction_solves = 0
        for i in range(op.decomp.n_subdomains):
            idx = np.concatenate([
                np.arange(op.mortar.slice_of(k).start, op.mortar.slice_of(k).stop)
                for k, _ in op.couplings[i]
            ]) if op.couplings[i] else np.empty(0, dtype=int)
            psi = np.empty((len(idx), len(idx)))
            for col, dof in enumerate(idx):
                lam = op.mortar.zeros()
                lam[dof] = 1.0
                field = op.factorizations[i].solve(op.star_rhs(i, lam))
                out = op.mortar.zeros()
                op.project_interface(i, field, out, sign=1.0)
                psi[:, col] = out[idx]
            self.index_sets.append(idx)
            self.blocks.append(psi)
            self.construction_solves += len(idx)

    def apply(self, lam):
        out = self.mortar.zeros()
        for idx, psi in zip(self.index_sets, self.blocks):
            if len(idx):
                out[idx] += psi @ lam[idx]
        return out

    def dofs_per_subdomain(self):
        return [len(idx) for idx in self.index_sets]


def build_msb(op):
    """Precompute the multiscale stress basis and attach it to the operator."""
    msb = MultiscaleBasis(op)
    op.msb = msb
    return msb


class InterfaceOperatorM2:
    """Normal-stress-multiplier interface operator on matching trace dofs.

    The interface unknown is one value per fine interface edge, matrix row
    and edge Gauss point, taken against the global edge normal; both
    adjacent subdomains impose the same value as their essential normal
    trace, which encodes continuity of the normal stress.  Requires the
    traces of the two subdomain grids to coincide on every interface and
    every subdomain to touch the Dirichlet boundary.
    """

    def __init__(self, decomp, systems, threads=1):
        self.decomp = decomp
        self.systems = systems
        self.threads = max(1, int(threads))
        for i in range(decomp.n_subdomains):
            if not decomp.touches_dirichlet(i):
                raise FloatingSubdomainError(
                    f"subdomain {i} has no Dirichlet boundary: the Neumann "
                    "interface problem is singular up to rigid motions; a "
                    "FETI-style coarse space would be needed and is not "
                    "implemented")

        offsets = {}
        n = 0
        for seg in decomp.interfaces:
            counts = []
            for sub in (seg.i, seg.j):
                mesh = decomp.meshes[sub]
                side = next(s for s in mesh.interface_sides()
                            if mesh.side_interface[s] == seg.index)
                counts.append(mesh.side_edge_count(side))
            if counts[0] != counts[1]:
                raise ValueError(
                    f"interface {seg.index}: traces do not match "
                    f"({counts[0]} vs {counts[1]} edges); the normal-stress "
                    "multiplier method needs matching grids")
            offsets[seg.index] = n
            n += 4 * counts[0]
        self.dim = n

        self.local_dofs = []   # subdomain stress dofs on its interfaces
        self.global_dofs = []  # matching interface dof ids
        self.factorizations = []
        for i in range(decomp.n_subdomains):
            mesh = decomp.meshes[i]
            space = systems[i].space
            loc, glb = [], []
            for side in mesh.interface_sides():
                seg = decomp.interfaces[mesh.side_interface[side]]
                dofs = space.side_trace_dofs(side)  # (nedge, 2, 2)
                loc.append(dofs.ravel())
                base = offsets[seg.index]
                glb.append(base + np.arange(dofs.size))
            loc = np.concatenate(loc) if loc else np.empty(0, dtype=int)
            glb = np.concatenate(glb) if glb else np.empty(0, dtype=int)
            self.local_dofs.append(loc)
            self.global_dofs.append(glb)
            self.factorizations.append(
                factorize(systems[i], mode="neumann", extra_constrained=loc))

    def zeros(self):
        return np.zeros(self.dim)

    def _essential(self, i, w):
        ess = np.zeros(self.systems[i].space.n_total)
        ess[self.local_dofs[i]] = w[self.global_dofs[i]]
        return ess

    def _reaction_positions(self, i):
        fact = self.factorizations[i]
        return np.searchsorted(fact.constrained, self.local_dofs[i])

    def star_fields(self, w):
        """One Neumann star solve per subdomain with trace data w."""
        zero = [RhsFunctional.zeros(self.systems[i].space)
                for i in range(self.decomp.n_subdomains)]

        def one(i):
            return self.factorizations[i].solve(zero[i], essential=self._essential(i, w))

        idx = range(self.decomp.n_subdomains)
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(one, idx))
        return [one(i) for i in idx]

    def apply(self, w):
        """B w: summed subdomain reactions at the interface dofs."""
        out = self.zeros()
        for i, field in enumerate(self.star_fields(w)):
            reac = self.factorizations[i].reaction(field)
            out[self.global_dofs[i]] += reac[self._reaction_positions(i)]
        return out

    def rhs_from_bar(self, bar_fields):
        """h: minus the summed reactions of the zero-trace bar solves."""
        out = self.zeros()
        for i, field in enumerate(bar_fields):
            reac = self.factorizations[i].reaction(field)
            out[self.global_dofs[i]] -= reac[self._reaction_positions(i)]
        return out

    def dense_matrix(self):
        n = self.dim
        B = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = 1.0
            B[:, k] = self.apply(e)
        return B

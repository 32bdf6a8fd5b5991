"""Factorization and repeated solution of the subdomain saddle systems.

Each subdomain is factorized once per boundary-condition mode and the
factorization is reused for every interface iteration and every basis
construction solve.  Two modes exist:

  'dirichlet' -- all interface stress dofs are free; interface data enters
                 through the natural boundary functional (Method 1 solves);
  'neumann'   -- interface stress dofs are essential unknowns set per solve
                 (Method 2 solves); singular for floating subdomains.

Essential dofs (traction boundary, Neumann-mode interface traces) are
removed by symmetric elimination, which preserves the exact block symmetry
of the reduced system.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import RhsFunctional

__all__ = [
    "FloatingSubdomainError",
    "SubdomainFactorization",
    "MixedField",
    "factorize",
]


class FloatingSubdomainError(RuntimeError):
    """Neumann-mode subdomain without any Dirichlet boundary contact."""


class MixedField:
    """Solution triple of one subdomain stored as a flat coefficient vector."""

    def __init__(self, space, vector):
        self.space = space
        self.vector = vector

    @classmethod
    def zeros(cls, space):
        return cls(space, np.zeros(space.n_total))

    @property
    def sigma(self):
        return self.vector[:self.space.n_sigma]

    @property
    def u(self):
        return self.vector[self.space.u_offset:self.space.gamma_offset].reshape(-1, 2)

    @property
    def gamma(self):
        return self.vector[self.space.gamma_offset:]

    def side_trace(self, side):
        """Nodal normal-trace values on a side, shape (nedge, 2, 2)."""
        return self.vector[self.space.side_trace_dofs(side)]

    def cell_divergence(self):
        """div sigma per cell (constant), shape (ncell, 2)."""
        space = self.space
        vals = self.sigma[space.sigma_conn]         # (ncell, 16)
        return vals @ self._divs()

    def _divs(self):
        from .spaces import eval_stress_basis
        _, divs = eval_stress_basis(self.space.mesh.hx, self.space.mesh.hy,
                                    np.zeros((1, 2)))
        return divs

    def __add__(self, other):
        return MixedField(self.space, self.vector + other.vector)

    def __sub__(self, other):
        return MixedField(self.space, self.vector - other.vector)


class SubdomainFactorization:
    """Reusable sparse LU of one subdomain system in one mode.

    Tracks the number of solves for the interface cost accounting.  Solving
    twice with the same data reproduces the solution bitwise: the
    factorization is fixed and SuperLU triangular solves are deterministic.
    """

    def __init__(self, system, mode="dirichlet", extra_constrained=None):
        if mode not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown mode {mode!r}")
        self.system = system
        self.space = system.space
        self.mode = mode
        self.solve_count = 0

        constrained = [system.constrained]
        if extra_constrained is not None:
            constrained.append(np.asarray(extra_constrained, dtype=int))
        self.constrained = np.unique(np.concatenate(constrained)) if any(
            len(c) for c in constrained) else np.empty(0, dtype=int)
        n = system.n_total
        mask = np.ones(n, dtype=bool)
        mask[self.constrained] = False
        self.free = np.flatnonzero(mask)

        K = system.matrix
        self.K_ff = K[self.free][:, self.free].tocsc()
        self.K_fc = K[self.free][:, self.constrained].tocsc()
        self.K_cf = K[self.constrained][:, self.free].tocsc()
        self.K_cc = K[self.constrained][:, self.constrained].tocsc()
        try:
            self.lu = spla.splu(self.K_ff)
        except RuntimeError as err:
            raise FloatingSubdomainError(
                f"subdomain {self.space.mesh.index}: singular system in "
                f"neumann mode ({err}); a subdomain without Dirichlet "
                "boundary needs a FETI-style coarse space, which is not "
                "implemented") from err
        self._probe_residual()

    def _probe_residual(self, tol=1e-11):
        n = self.K_ff.shape[0]
        if n == 0:
            return
        b = np.sin(0.7 * np.arange(n) + 0.3) + 1e-3
        x = self.lu.solve(b)
        res = np.linalg.norm(self.K_ff @ x - b) / np.linalg.norm(b)
        if not np.isfinite(res) or res > tol:
            raise FloatingSubdomainError(
                f"subdomain {self.space.mesh.index}: factorization residual "
                f"{res:.2e} exceeds {tol:.0e}; the {self.mode} problem is "
                "singular (floating subdomain) or severely ill-conditioned")

    def solve(self, rhs, essential=None):
        """Solve the saddle system for one right-hand side.

        rhs is an RhsFunctional or a raw vector over all dofs; entries at
        constrained dofs are ignored.  essential is a full-length vector
        supplying values at constrained dofs (Neumann-mode interface
        traces); zero when omitted.
        """
        b = rhs.vector if isinstance(rhs, RhsFunctional) else np.asarray(rhs)
        b_f = b[self.free]
        x = np.zeros(self.space.n_total)
        if essential is not None and len(self.constrained):
            x_c = np.asarray(essential)[self.constrained]
            b_f = b_f - self.K_fc @ x_c
            x[self.constrained] = x_c
        x[self.free] = self.lu.solve(b_f)
        self.solve_count += 1
        return MixedField(self.space, x)

    def reaction(self, field):
        """Rows of the full system at constrained dofs, K_cf x_f + K_cc x_c.

        For a stress dof this equals the three-term form
        (A sigma, tau) + (u, div tau) + (gamma, tau) against that dof's
        basis function, which is exactly the interface pairing needed by
        the normal-stress multiplier method.
        """
        x = field.vector
        return self.K_cf @ x[self.free] + self.K_cc @ x[self.constrained]


def factorize(system, mode="dirichlet", extra_constrained=None):
    """Factor a subdomain saddle system once for repeated solves."""
    return SubdomainFactorization(system, mode, extra_constrained)

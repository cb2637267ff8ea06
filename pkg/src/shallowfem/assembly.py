"""Assembly and solution of the mixed velocity-pressure system.

Discretises

    u + 2 Omega x u = -grad p + F,      div u - p = g

on the spherical annulus with V1 x V2 prism elements.  The weak form gives
the block system [[M + C, -D^T], [D, -M_p]].  Coefficient providers are
functions of the 4D manifold coordinate; vector data (Omega, F) is pushed
into the active 3D frame through the per-cell map chi_e, so the same
providers serve both modes:

  * shallow: hedgehog coordinates, one Jacobian factorization per cell
    (the map is affine);
  * deep: continuous annulus coordinates, one factorization per
    quadrature point.

The div(w) p coupling uses the Piola identity div v = dhat / det J, so the
determinants cancel and D reduces to a single reference matrix shared by
every cell.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import geometry
from .fem import Field, FunctionSpace, quadrature_prism, tabulate
from .geometry import annulus_coordinates, hedgehog_coordinates, manifold_coordinates

__all__ = [
    "ProblemConfig",
    "LinearSystem",
    "SolveResult",
    "SolverError",
    "assemble",
    "apply_inner_bc",
    "solve",
    "weak_residual",
]


class SolverError(Exception):
    """Linear solve failed to meet the residual contract."""


def _default_omega(x4):
    """Traditional-approximation rotation: (0, 0, 0, x3 / 2)."""
    out = np.zeros(x4.shape)
    out[..., 3] = 0.5 * x4[..., 2]
    return out


@dataclass
class ProblemConfig:
    """Coefficients and discretisation choices for one solve.

    ``omega4``, ``f4`` map batches of 4D points to tangent 4-vectors;
    ``g`` maps them to scalars.  ``quadrature_degree`` defaults to 2k + 8,
    generous enough that the manufactured forcing integrates exactly.
    """

    mode: str = "shallow"
    k: int = 1
    coriolis_enabled: bool = True
    omega4: callable = None
    f4: callable = None
    g: callable = None
    solver_tolerance: float = 1e-10
    quadrature_degree: int = None

    def __post_init__(self):
        if self.mode not in ("shallow", "deep"):
            raise ValueError(f"mode must be 'shallow' or 'deep', got {self.mode!r}")
        if self.omega4 is None:
            self.omega4 = _default_omega
        if self.f4 is None:
            self.f4 = lambda x4: np.zeros(x4.shape)
        if self.g is None:
            self.g = lambda x4: np.zeros(x4.shape[:-1])

    @property
    def degree(self) -> int:
        return self.quadrature_degree if self.quadrature_degree is not None else 2 * self.k + 8


@dataclass
class LinearSystem:
    """Assembled block system over [V1 DOFs | V2 DOFs]."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    essential: np.ndarray          # constrained global row indices
    u_space: FunctionSpace
    p_space: FunctionSpace
    stats: dict = field(default_factory=dict)

    @property
    def n_u(self) -> int:
        return self.u_space.n_dofs

    @property
    def n_p(self) -> int:
        return self.p_space.n_dofs


def coordinate_field(config: ProblemConfig, mesh):
    """The coordinate field the mode dictates."""
    if config.mode == "shallow":
        return hedgehog_coordinates(mesh)
    return annulus_coordinates(mesh)


def assemble(config: ProblemConfig, u_space: FunctionSpace, p_space: FunctionSpace) -> LinearSystem:
    """Assemble the block system; see the module docstring for the layout."""
    if u_space.mesh is not p_space.mesh:
        raise ValueError("velocity and pressure spaces built on different meshes")
    mesh = u_space.mesh
    coords = coordinate_field(config, mesh)
    x4 = manifold_coordinates(mesh)

    rule = quadrature_prism(config.degree)
    pts, w = rule.points, rule.weights
    nq = len(w)
    tab1 = tabulate(u_space.element, pts)
    tab2 = tabulate(p_space.element, pts)
    nd1, nd2 = u_space.element.ndofs, p_space.element.ndofs
    nbasis = geometry.nodal_basis(pts)                       # (nq, 6)

    nc = mesh.n_cells
    n_u, n_p = u_space.n_dofs, p_space.n_dofs
    n = n_u + n_p

    # det-free divergence coupling: identical on every cell
    D_ref = np.einsum("q,qa,qd->ad", w, tab2.values, tab1.divergences)

    centroid = np.array([[1.0 / 3.0, 1.0 / 3.0, 0.5]])
    n_fact = 0

    rows, cols, data = [], [], []
    rhs = np.zeros(n)

    chunk = max(1, int(3e6 / (nq * nd1)))
    for start in range(0, nc, chunk):
        cells = np.arange(start, min(start + chunk, nc))
        ch = len(cells)

        if config.mode == "shallow":
            J = geometry.jacobian(coords, cells, centroid)   # (ch, 1, 3, 3)
        else:
            J = geometry.jacobian(coords, cells, pts)        # (ch, nq, 3, 3)
        n_fact += J.n_factorizations
        Jm = np.broadcast_to(J.J, (ch, nq, 3, 3))
        det = np.broadcast_to(J.det, (ch, nq))

        # chi_e pushforward for vector coefficients (affine, so one per cell)
        J4 = geometry.jacobian4(x4, cells, centroid)         # (ch, 1, 4, 3)
        pinv4, _ = geometry.pseudo_inverse_pseudo_det(J4)
        push = np.matmul(Jm, np.broadcast_to(pinv4, (ch, nq, 3, 4)))

        x4q = np.einsum("qv,evi->eqi", nbasis, x4[cells])    # (ch, nq, 4)
        F3 = np.matmul(push, config.f4(x4q)[..., None])[..., 0]
        gq = config.g(x4q)

        # physical basis values scaled by det: L[e,q,i,:] = J phi_i
        L = np.einsum("eqcd,qid->eqic", Jm, tab1.values)
        R = L
        if config.coriolis_enabled:
            Om3 = np.matmul(push, config.omega4(x4q)[..., None])[..., 0]
            R = L + np.cross(2.0 * Om3[:, :, None, :], L)

        wdet = w[None, :] / det                              # (ch, nq)
        A_uu = np.einsum("eqic,eqjc->eij", L * wdet[:, :, None, None], R)
        b_u = np.einsum("q,eqic,eqc->ei", w, L, F3)
        M_p = np.einsum("q,eq,qa,qb->eab", w, det, tab2.values, tab2.values)
        b_p = np.einsum("q,eq,qa,eq->ea", w, det, tab2.values, gq)

        gd1 = u_space.cell_dofs[cells]
        sg1 = u_space.cell_signs[cells]
        gd2 = p_space.cell_dofs[cells] + n_u

        A_uu *= sg1[:, :, None] * sg1[:, None, :]
        rows.append(np.repeat(gd1, nd1, axis=1).ravel())
        cols.append(np.tile(gd1, (1, nd1)).ravel())
        data.append(A_uu.ravel())

        Ds = sg1[:, None, :] * D_ref[None, :, :]             # (ch, nd2, nd1)
        rows.append(np.repeat(gd2, nd1, axis=1).ravel())
        cols.append(np.tile(gd1, (1, nd2)).ravel())
        data.append(Ds.ravel())

        rows.append(np.repeat(gd1, nd2, axis=1).ravel())
        cols.append(np.tile(gd2, (1, nd1)).ravel())
        data.append(-np.swapaxes(Ds, 1, 2).ravel())

        rows.append(np.repeat(gd2, nd2, axis=1).ravel())
        cols.append(np.tile(gd2, (1, nd2)).ravel())
        data.append(-M_p.ravel())

        np.add.at(rhs, gd1.ravel(), (b_u * sg1).ravel())
        np.add.at(rhs, gd2.ravel(), b_p.ravel())

    A = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()

    stats = {
        "n_jacobian_factorizations": n_fact,
        "n_quadrature_points": nq,
        "n_cells": nc,
        "quadrature_degree": config.degree,
    }
    return LinearSystem(
        matrix=A, rhs=rhs, essential=np.empty(0, dtype=np.int64),
        u_space=u_space, p_space=p_space, stats=stats,
    )


def apply_inner_bc(system: LinearSystem) -> LinearSystem:
    """Impose u . n = 0 on the inner boundary (outer boundary stays natural).

    Essential rows become identity rows with zero right-hand side; matching
    columns are cleared (the constrained value is zero, so nothing moves to
    the RHS).
    """
    space = system.u_space
    dofs = np.unique(space.hfacet_dofs[space.facets.inner_boundary].ravel())
    n = system.matrix.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    P = sp.diags(keep)
    ident = sp.coo_matrix((np.ones(len(dofs)), (dofs, dofs)), shape=(n, n))
    A = (P @ system.matrix @ P + ident).tocsr()
    rhs = system.rhs * keep
    return LinearSystem(
        matrix=A, rhs=rhs, essential=dofs,
        u_space=system.u_space, p_space=system.p_space, stats=dict(system.stats),
    )


@dataclass
class SolveResult:
    u: Field
    p: Field
    residual: float


def solve(system: LinearSystem, tolerance: float = 1e-10) -> SolveResult:
    """Sparse direct solve with a relative-residual contract.

    One step of iterative refinement is applied if the first residual
    misses the tolerance; failure past that raises SolverError carrying the
    achieved residual.
    """
    b = system.rhs
    bnorm = np.linalg.norm(b)
    n_u = system.n_u
    if bnorm == 0.0:
        z = np.zeros_like(b)
        return SolveResult(
            u=Field(system.u_space, z[:n_u]), p=Field(system.p_space, z[n_u:]),
            residual=0.0,
        )
    try:
        lu = splu(system.matrix.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    z = lu.solve(b)
    res = np.linalg.norm(system.matrix @ z - b) / bnorm
    if res > tolerance:
        z = z + lu.solve(b - system.matrix @ z)
        res = np.linalg.norm(system.matrix @ z - b) / bnorm
    if not np.isfinite(res) or res > tolerance:
        raise SolverError(f"solve residual {res:.3e} exceeds tolerance {tolerance:.1e}")
    return SolveResult(
        u=Field(system.u_space, z[:n_u]), p=Field(system.p_space, z[n_u:]),
        residual=float(res),
    )


def weak_residual(system: LinearSystem, result: SolveResult) -> float:
    """Max weak-form defect |a(z; w) - L(w)| over non-essential test DOFs."""
    z = np.concatenate([result.u.coeffs, result.p.coeffs])
    r = system.matrix @ z - system.rhs
    if len(system.essential):
        r[system.essential] = 0.0
    return float(np.abs(r).max())

"""Global sparse systems for the staggered elasticity and damage solves.

Displacement dofs are node-major: dof = node * dim + component. The damage
field has one dof per node. Dirichlet conditions are imposed by symmetric
elimination, so both assembled matrices stay symmetric positive definite.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from . import elements, material
from .material import MaterialParams
from .mesh import Mesh


@dataclass(frozen=True)
class SparseSystem:
    """Symmetric sparse system K x = b for one nodal field.

    `components` is the number of dofs per node (dim for displacements, 1
    for damage); `constrained` marks dofs already eliminated by
    `apply_dirichlet`.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    mesh: Mesh
    components: int
    constrained: np.ndarray  # bool mask over dofs

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]

    def dof(self, node: int, component: int = 0) -> int:
        return node * self.components + component


@dataclass(frozen=True)
class _ElementData:
    """Precomputed kinematics of a homogeneous mesh, batched over elements."""

    N: np.ndarray  # (nq, k)
    B_v: np.ndarray  # (nel, nq, nstrain, k*dim)
    B_s: np.ndarray  # (nel, nq, dim, k)
    wdet: np.ndarray  # (nel, nq)
    vec_dofs: np.ndarray  # (nel, k*dim) global displacement dofs
    scalar_dofs: np.ndarray  # (nel, k) global damage dofs
    vec_rows: np.ndarray  # COO pattern for the vector field
    vec_cols: np.ndarray
    scalar_rows: np.ndarray
    scalar_cols: np.ndarray


_element_cache: "weakref.WeakKeyDictionary[Mesh, _ElementData]" = (
    weakref.WeakKeyDictionary()
)


def element_data(mesh: Mesh) -> _ElementData:
    """Batched element matrices for `mesh`, cached on the mesh object."""
    cached = _element_cache.get(mesh)
    if cached is not None:
        return cached
    N, B_v, B_s, wdet = elements.compute_batch_matrices(
        mesh.kind, mesh.nodes[mesh.elements]
    )
    dim = mesh.dim
    k = mesh.elements.shape[1]
    scalar_dofs = mesh.elements
    vec_dofs = (mesh.elements[:, :, None] * dim + np.arange(dim)).reshape(-1, k * dim)

    def coo_pattern(dofs):
        m = dofs.shape[1]
        rows = np.repeat(dofs, m, axis=1).ravel()
        cols = np.tile(dofs, (1, m)).ravel()
        return rows, cols

    vr, vc = coo_pattern(vec_dofs)
    sr, sc = coo_pattern(scalar_dofs)
    data = _ElementData(
        N=N,
        B_v=B_v,
        B_s=B_s,
        wdet=wdet,
        vec_dofs=vec_dofs,
        scalar_dofs=scalar_dofs,
        vec_rows=vr,
        vec_cols=vc,
        scalar_rows=sr,
        scalar_cols=sc,
    )
    _element_cache[mesh] = data
    return data


def _check_nodal(mesh: Mesh, vec: np.ndarray, components: int, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    expected = mesh.n_nodes * components
    if vec.shape != (expected,):
        raise ValueError(f"{name} must have shape ({expected},), got {vec.shape}")
    return vec


def quadrature_strains(mesh: Mesh, u_nodal: np.ndarray) -> np.ndarray:
    """Voigt strains at all quadrature points, shape (nel, nq, nstrain)."""
    data = element_data(mesh)
    u_el = _check_nodal(mesh, u_nodal, mesh.dim, "displacement")[data.vec_dofs]
    return np.einsum("nqsm,nm->nqs", data.B_v, u_el)


def assemble_elasticity(
    mesh: Mesh,
    params: MaterialParams,
    alpha_nodal: np.ndarray,
    u_nodal: np.ndarray | None = None,
) -> SparseSystem:
    """Degraded elastic stiffness system (zero right-hand side).

    The Heaviside tension/compression branch of the constitutive matrix is
    frozen from the strain of `u_nodal` (the previous staggered iterate;
    zero strain, i.e. the compression branch, when omitted). Damage is
    interpolated to the quadrature points before squaring.
    """
    data = element_data(mesh)
    alpha = _check_nodal(mesh, alpha_nodal, 1, "damage")
    if np.any(alpha < 0.0) or np.any(alpha > 1.0):
        raise ValueError("damage must lie in [0, 1]")
    dim = mesh.dim

    alpha_q = np.einsum("qk,nk->nq", data.N, alpha[data.scalar_dofs])
    f = (1.0 - alpha_q) ** 2

    if u_nodal is None:
        tension = np.zeros_like(f, dtype=bool)
    else:
        strains = quadrature_strains(mesh, u_nodal)
        tr = strains[..., : 2 if dim == 2 else 3].sum(axis=-1)
        tension = tr > 0.0

    P_V = material.volumetric_projector(dim)
    P_D = material.deviatoric_projector(dim)
    vol_factor = params.bulk_modulus * np.where(tension, f, 1.0)
    dev_factor = 2.0 * params.mu * f
    # D per quadrature point, (nel, nq, ns, ns)
    D = vol_factor[..., None, None] * P_V + dev_factor[..., None, None] * P_D

    K_el = np.einsum(
        "nqsm,nqst,nqtl,nq->nml", data.B_v, D, data.B_v, data.wdet, optimize=True
    )
    n_dofs = mesh.n_nodes * dim
    K = sp.coo_matrix(
        (K_el.ravel(), (data.vec_rows, data.vec_cols)), shape=(n_dofs, n_dofs)
    ).tocsr()
    return SparseSystem(
        matrix=K,
        rhs=np.zeros(n_dofs),
        mesh=mesh,
        components=dim,
        constrained=np.zeros(n_dofs, dtype=bool),
    )


def assemble_damage(
    mesh: Mesh, params: MaterialParams, u_nodal: np.ndarray
) -> SparseSystem:
    """Damage evolution system driven by the tensile elastic energy.

    LHS couples a driving-force-weighted mass operator with eta^2 diffusion;
    the RHS carries the driving force minus the threshold. For the
    no-threshold model (w = w0*alpha^2) the threshold leaves the RHS and a
    2*w0 mass term enters the LHS, keeping the solve linear.
    """
    data = element_data(mesh)
    strains = quadrature_strains(mesh, u_nodal)
    state = material.split(strains, params)
    drive = material.driving_force(state, strains)  # (nel, nq)

    if params.dissipation_model == "threshold":
        mass_weight = drive
        rhs_weight = drive - params.w0
    else:
        mass_weight = drive + 2.0 * params.w0
        rhs_weight = drive

    NtN = np.einsum("qk,ql->qkl", data.N, data.N)
    K_el = np.einsum("nq,qkl,nq->nkl", mass_weight, NtN, data.wdet, optimize=True)
    K_el += params.eta**2 * np.einsum(
        "nqdk,nqdl,nq->nkl", data.B_s, data.B_s, data.wdet, optimize=True
    )
    b_el = np.einsum("nq,qk,nq->nk", rhs_weight, data.N, data.wdet, optimize=True)

    n_dofs = mesh.n_nodes
    K = sp.coo_matrix(
        (K_el.ravel(), (data.scalar_rows, data.scalar_cols)), shape=(n_dofs, n_dofs)
    ).tocsr()
    rhs = np.zeros(n_dofs)
    np.add.at(rhs, data.scalar_dofs.ravel(), b_el.ravel())
    return SparseSystem(
        matrix=K,
        rhs=rhs,
        mesh=mesh,
        components=1,
        constrained=np.zeros(n_dofs, dtype=bool),
    )


def apply_dirichlet(
    system: SparseSystem, boundary_set: str, component: int, value: float
) -> SparseSystem:
    """Impose a prescribed value on one component of a boundary node set.

    Constrained rows and columns are eliminated symmetrically: the
    right-hand side absorbs the coupling terms, the diagonal is set to one
    and the rhs entry to the prescribed value.
    """
    nodes = system.mesh.boundary_set(boundary_set)
    if not 0 <= component < system.components:
        raise ValueError(
            f"component {component} invalid for a {system.components}-component field"
        )
    dofs = nodes * system.components + component

    n = system.n_dofs
    keep = np.ones(n)
    keep[dofs] = 0.0
    x_c = np.zeros(n)
    x_c[dofs] = value

    K = system.matrix
    rhs = system.rhs - K @ x_c
    P = sp.diags(keep)
    K = P @ K @ P
    fixed = np.zeros(n)
    fixed[dofs] = 1.0
    rhs[dofs] = value
    constrained = system.constrained.copy()
    constrained[dofs] = True
    K = (K + sp.diags(fixed)).tocsr()
    return replace(system, matrix=K, rhs=rhs, constrained=constrained)


def reaction_force(
    mesh: Mesh,
    params: MaterialParams,
    alpha_nodal: np.ndarray,
    u_nodal: np.ndarray,
    boundary_set: str,
    component: int,
) -> float:
    """Internal-force resultant on a constrained boundary set.

    Sum over the set of the chosen component of K(u, alpha) u, i.e. the
    reaction conjugate to the prescribed displacement. Units: N per unit
    thickness in 2D, N in 3D.
    """
    system = assemble_elasticity(mesh, params, alpha_nodal, u_nodal=u_nodal)
    nodes = mesh.boundary_set(boundary_set)
    if not 0 <= component < mesh.dim:
        raise ValueError(f"component {component} invalid for a {mesh.dim}D mesh")
    internal = system.matrix @ _check_nodal(mesh, u_nodal, mesh.dim, "displacement")
    return float(internal[nodes * mesh.dim + component].sum())

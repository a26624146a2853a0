"""Isoparametric elements: shape functions, quadrature, kinematic matrices.

Supported element kinds are tri3, quad4 (2D) and tet4, hex8 (3D). Strains are
stored in Voigt form with engineering shear components:

    2D (plane strain/stress): (eps_x, eps_y, gamma_xy)
    3D:                       (eps_x, eps_y, eps_z, gamma_xy, gamma_yz, gamma_zx)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# kind -> (spatial dimension, nodes per element)
ELEMENT_KINDS = {
    "tri3": (2, 3),
    "quad4": (2, 4),
    "tet4": (3, 4),
    "hex8": (3, 8),
}

# Voigt components per dimension.
N_STRAIN = {2: 3, 3: 6}


class UnsupportedElementError(ValueError):
    """Raised for element kinds outside tri3/quad4/tet4/hex8."""


class InvertedElementError(ValueError):
    """Raised when an element has non-positive Jacobian determinant."""


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature points (in reference coordinates) and weights."""

    points: np.ndarray  # (nq, dim)
    weights: np.ndarray  # (nq,)


def _gauss_product(dim: int) -> QuadratureRule:
    g = 1.0 / np.sqrt(3.0)
    axes = [np.array([-g, g])] * dim
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([a.ravel() for a in grids], axis=-1)
    return QuadratureRule(points=pts, weights=np.ones(len(pts)))


_RULES = {
    "tri3": QuadratureRule(
        points=np.array([[1.0 / 3.0, 1.0 / 3.0]]), weights=np.array([0.5])
    ),
    "tet4": QuadratureRule(
        points=np.array([[0.25, 0.25, 0.25]]), weights=np.array([1.0 / 6.0])
    ),
    "quad4": _gauss_product(2),
    "hex8": _gauss_product(3),
}

# Corner signs of the tensor-product reference elements.
_QUAD4_SIGNS = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
_HEX8_SIGNS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)


def quadrature_rule(kind: str) -> QuadratureRule:
    """Default rule for a kind: 1-point for simplices, full Gauss otherwise."""
    try:
        return _RULES[kind]
    except KeyError:
        raise UnsupportedElementError(f"unsupported element kind: {kind!r}") from None


def shape_and_gradients(kind: str, ref_point) -> tuple[np.ndarray, np.ndarray]:
    """Shape function values and reference-coordinate gradients at one point.

    Returns (N, dN) with N of shape (nnodes,) and dN of shape (nnodes, dim),
    dN[i, d] = dN_i/dxi_d.
    """
    p = np.asarray(ref_point, dtype=float)
    if kind == "tri3":
        xi, et = p
        N = np.array([1.0 - xi - et, xi, et])
        dN = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    elif kind == "tet4":
        xi, et, ze = p
        N = np.array([1.0 - xi - et - ze, xi, et, ze])
        dN = np.array(
            [[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        )
    elif kind == "quad4":
        s = _QUAD4_SIGNS
        N = 0.25 * (1.0 + s[:, 0] * p[0]) * (1.0 + s[:, 1] * p[1])
        dN = np.empty((4, 2))
        dN[:, 0] = 0.25 * s[:, 0] * (1.0 + s[:, 1] * p[1])
        dN[:, 1] = 0.25 * s[:, 1] * (1.0 + s[:, 0] * p[0])
    elif kind == "hex8":
        s = _HEX8_SIGNS
        f = 1.0 + s * p  # (8, 3)
        N = 0.125 * f[:, 0] * f[:, 1] * f[:, 2]
        dN = np.empty((8, 3))
        dN[:, 0] = 0.125 * s[:, 0] * f[:, 1] * f[:, 2]
        dN[:, 1] = 0.125 * s[:, 1] * f[:, 0] * f[:, 2]
        dN[:, 2] = 0.125 * s[:, 2] * f[:, 0] * f[:, 1]
    else:
        raise UnsupportedElementError(f"unsupported element kind: {kind!r}")
    return N, dN


def reference_shape_data(kind: str, rule: QuadratureRule | None = None):
    """Stacked (N, dN) over all quadrature points: shapes (nq, k) and (nq, k, dim)."""
    rule = rule or quadrature_rule(kind)
    Ns, dNs = zip(*(shape_and_gradients(kind, p) for p in rule.points))
    return np.stack(Ns), np.stack(dNs), rule.weights


@dataclass(frozen=True)
class ElementMatrices:
    """Per-quadrature-point kinematic matrices of one element.

    Attributes
    ----------
    N : (nq, k) shape values.
    B_v : (nq, nstrain, k*dim) Voigt strain-displacement matrices.
    B_s : (nq, dim, k) scalar gradient matrices.
    wdet : (nq,) jacobian determinant times quadrature weight.
    """

    N: np.ndarray
    B_v: np.ndarray
    B_s: np.ndarray
    wdet: np.ndarray


def _voigt_from_gradients(grads: np.ndarray) -> np.ndarray:
    """Build B_v from spatial shape gradients.

    grads has shape (..., k, dim); the result has shape (..., nstrain, k*dim)
    with dof ordering (node0_x, node0_y[, node0_z], node1_x, ...).
    """
    *lead, k, dim = grads.shape
    ns = N_STRAIN[dim]
    B = np.zeros((*lead, ns, k * dim))
    gx = grads[..., 0]
    gy = grads[..., 1]
    if dim == 2:
        B[..., 0, 0::2] = gx
        B[..., 1, 1::2] = gy
        B[..., 2, 0::2] = gy
        B[..., 2, 1::2] = gx
    else:
        gz = grads[..., 2]
        B[..., 0, 0::3] = gx
        B[..., 1, 1::3] = gy
        B[..., 2, 2::3] = gz
        B[..., 3, 0::3] = gy
        B[..., 3, 1::3] = gx
        B[..., 4, 1::3] = gz
        B[..., 4, 2::3] = gy
        B[..., 5, 0::3] = gz
        B[..., 5, 2::3] = gx
    return B


def compute_batch_matrices(
    kind: str, coords: np.ndarray, rule: QuadratureRule | None = None
):
    """Kinematic matrices for a batch of elements of one kind.

    Parameters
    ----------
    coords : (nel, k, dim) nodal coordinates per element.

    Returns (N, B_v, B_s, wdet) with a leading (nel, nq) batch on everything
    except N, which is (nq, k) (identical for all elements).
    """
    if kind not in ELEMENT_KINDS:
        raise UnsupportedElementError(f"unsupported element kind: {kind!r}")
    dim, k = ELEMENT_KINDS[kind]
    coords = np.asarray(coords, dtype=float)
    if coords.shape[-2:] != (k, dim):
        raise ValueError(
            f"expected coordinates of shape (nel, {k}, {dim}), got {coords.shape}"
        )
    N, dN, w = reference_shape_data(kind, rule)
    # J[n, q, d, e] = d x_e / d xi_d
    J = np.einsum("qkd,nke->nqde", dN, coords)
    detJ = np.linalg.det(J)
    if np.any(detJ <= 0.0):
        bad = int(np.argwhere(np.any(detJ <= 0.0, axis=1))[0, 0])
        raise InvertedElementError(
            f"non-positive Jacobian determinant in element {bad}"
        )
    Jinv = np.linalg.inv(J)
    # dN/dx_e = dN/dxi_d * dxi_d/dx_e; with J[d, e] = dx_e/dxi_d the inverse
    # entry needed is Jinv[e, d]
    grads = np.einsum("qkd,nqed->nqke", dN, Jinv)
    B_v = _voigt_from_gradients(grads)
    B_s = np.swapaxes(grads, -1, -2)  # (nel, nq, dim, k)
    wdet = detJ * w[None, :]
    return N, B_v, B_s, wdet


def compute_element_matrices(
    kind: str, node_coords, rule: QuadratureRule | None = None
) -> ElementMatrices:
    """Kinematic matrices of a single element."""
    coords = np.asarray(node_coords, dtype=float)[None]
    N, B_v, B_s, wdet = compute_batch_matrices(kind, coords, rule)
    return ElementMatrices(N=N, B_v=B_v[0], B_s=B_s[0], wdet=wdet[0])

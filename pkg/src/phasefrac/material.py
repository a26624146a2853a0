"""Constitutive model for gradient-damage brittle fracture.

Isotropic elasticity with a volumetric-deviatoric tension/compression split,
quadratic stiffness degradation (1 - alpha)^2, and two local dissipation
functions: w = w0*alpha (with an elastic stage, the default) and
w = w0*alpha^2 (without one).

All stresses are in MPa, lengths in mm. Voigt strain vectors carry
engineering shear (gamma); the deviatoric projector compensates with its
1/2 shear entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DISSIPATION_MODELS = ("threshold", "no_threshold")


@dataclass(frozen=True)
class MaterialParams:
    """Elastic and damage parameters.

    Parameters
    ----------
    bulk_modulus : K in MPa.
    poisson : Poisson ratio.
    w0 : critical damage dissipation in MPa (energy per unit volume).
    eta : damage-gradient coefficient in (MPa mm)^(1/2) mm.
    dissipation_model : "threshold" (w = w0*alpha) or "no_threshold"
        (w = w0*alpha^2).
    """

    bulk_modulus: float
    poisson: float
    w0: float
    eta: float
    dissipation_model: str = "threshold"

    def __post_init__(self):
        if self.bulk_modulus <= 0.0:
            raise ValueError("bulk modulus must be positive")
        if not -1.0 < self.poisson < 0.5:
            raise ValueError("Poisson ratio must lie in (-1, 0.5)")
        if self.w0 <= 0.0:
            raise ValueError("w0 must be positive")
        if self.eta <= 0.0:
            raise ValueError("eta must be positive")
        if self.dissipation_model not in DISSIPATION_MODELS:
            raise ValueError(
                f"dissipation model must be one of {DISSIPATION_MODELS}, "
                f"got {self.dissipation_model!r}"
            )

    @property
    def mu(self) -> float:
        """Shear modulus (MPa)."""
        K, nu = self.bulk_modulus, self.poisson
        return 3.0 * K * (1.0 - 2.0 * nu) / (2.0 * (1.0 + nu))

    @property
    def lam(self) -> float:
        """First Lame parameter (MPa)."""
        return self.bulk_modulus - 2.0 * self.mu / 3.0

    @property
    def internal_length(self) -> float:
        """Localization length l = eta / sqrt(w0) (mm)."""
        return self.eta / math.sqrt(self.w0)

    @property
    def fracture_toughness(self) -> float:
        """Dissipated energy per unit crack surface G_c (MPa mm).

        Threshold model: G_c = (4*sqrt(2)/3) * w0 * l.
        No-threshold model: G_c = sqrt(2) * w0 * l.
        """
        w0l = self.w0 * self.internal_length
        if self.dissipation_model == "threshold":
            return 4.0 * math.sqrt(2.0) / 3.0 * w0l
        return math.sqrt(2.0) * w0l


def plane_stress_equivalent(params: MaterialParams) -> MaterialParams:
    """Parameters whose plane-strain response reproduces plane stress.

    Keeps mu and replaces lambda by 2*lambda*mu/(lambda + 2*mu), the standard
    thin-sheet reduction. Exact for the undamaged isotropic response; used as
    an approximation once damage degrades the stiffness.
    """
    mu = params.mu
    lam = 2.0 * params.lam * mu / (params.lam + 2.0 * mu)
    K = lam + 2.0 * mu / 3.0
    nu = lam / (2.0 * (lam + mu))
    return MaterialParams(
        bulk_modulus=K,
        poisson=nu,
        w0=params.w0,
        eta=params.eta,
        dissipation_model=params.dissipation_model,
    )


# Voigt volumetric and deviatoric projectors. The 3D forms act on
# (eps_x, eps_y, eps_z, gamma_xy, gamma_yz, gamma_zx); the 2D forms are the
# plane-strain restriction to (eps_x, eps_y, gamma_xy).
_P_V_3 = np.zeros((6, 6))
_P_V_3[:3, :3] = 1.0
_P_D_3 = np.diag([2.0 / 3.0] * 3 + [0.5] * 3)
_P_D_3[:3, :3] -= 1.0 / 3.0
_P_D_3[np.diag_indices(3)] = 2.0 / 3.0

_P_V_2 = np.zeros((3, 3))
_P_V_2[:2, :2] = 1.0
_P_D_2 = np.array([[2.0 / 3.0, -1.0 / 3.0, 0.0], [-1.0 / 3.0, 2.0 / 3.0, 0.0], [0.0, 0.0, 0.5]])


def volumetric_projector(dim: int) -> np.ndarray:
    return {2: _P_V_2, 3: _P_V_3}[dim].copy()


def deviatoric_projector(dim: int) -> np.ndarray:
    return {2: _P_D_2, 3: _P_D_3}[dim].copy()


@dataclass(frozen=True)
class SplitState:
    """Tension/compression split of the undamaged elastic state.

    All fields may carry leading batch dimensions when `split` is called on a
    batch of strain vectors.
    """

    psi_pos: np.ndarray  # degradable energy density (MPa)
    psi_neg: np.ndarray  # protected energy density (MPa)
    stress_pos: np.ndarray  # sigma_0^+ in Voigt form (MPa)
    stress_neg: np.ndarray  # sigma_0^- in Voigt form (MPa)
    vol_strain: np.ndarray  # tr(eps)/3
    dev_strain: np.ndarray  # deviatoric Voigt strain (tensor shear, gamma/2)


def split(strain, params: MaterialParams) -> SplitState:
    """Volumetric-deviatoric tension/compression split of a Voigt strain.

    Accepts strain vectors of length 3 (2D plane strain, eps_z = 0 implied)
    or 6 (3D), with optional leading batch dimensions. The zero-trace state
    is assigned to the compression branch; the volumetric term vanishes there
    so both branches coincide.
    """
    eps = np.asarray(strain, dtype=float)
    m = eps.shape[-1]
    if m not in (3, 6):
        raise ValueError(f"expected Voigt strain of length 3 or 6, got {m}")
    K, mu = params.bulk_modulus, params.mu

    if m == 3:
        tr = eps[..., 0] + eps[..., 1]
        ev = tr / 3.0
        dev = np.empty_like(eps)
        dev[..., 0] = eps[..., 0] - ev
        dev[..., 1] = eps[..., 1] - ev
        dev[..., 2] = eps[..., 2] / 2.0
        # out-of-plane deviatoric component eps_dev_zz = -ev
        dev_sq = dev[..., 0] ** 2 + dev[..., 1] ** 2 + ev**2 + 2.0 * dev[..., 2] ** 2
    else:
        tr = eps[..., 0] + eps[..., 1] + eps[..., 2]
        ev = tr / 3.0
        dev = eps.copy()
        dev[..., :3] -= ev[..., None]
        dev[..., 3:] /= 2.0
        dev_sq = np.sum(dev[..., :3] ** 2, axis=-1) + 2.0 * np.sum(
            dev[..., 3:] ** 2, axis=-1
        )

    tension = tr > 0.0
    tr_pos = np.where(tension, tr, 0.0)
    tr_neg = np.where(tension, 0.0, tr)

    psi_pos = 0.5 * K * tr_pos**2 + mu * dev_sq
    psi_neg = 0.5 * K * tr_neg**2

    nvol = 2 if m == 3 else 3
    stress_pos = 2.0 * mu * dev
    stress_pos[..., :nvol] += (K * tr_pos)[..., None]
    stress_neg = np.zeros_like(eps)
    stress_neg[..., :nvol] = (K * tr_neg)[..., None]

    return SplitState(
        psi_pos=psi_pos,
        psi_neg=psi_neg,
        stress_pos=stress_pos,
        stress_neg=stress_neg,
        vol_strain=ev,
        dev_strain=dev,
    )


def _check_alpha(alpha):
    a = np.asarray(alpha, dtype=float)
    if np.any(a < 0.0) or np.any(a > 1.0):
        raise ValueError("damage must lie in [0, 1]")
    return a


def degradation(alpha):
    """Stiffness degradation f(alpha) = (1 - alpha)^2."""
    a = _check_alpha(alpha)
    return (1.0 - a) ** 2


def degradation_derivative(alpha):
    """f'(alpha) = -2 (1 - alpha)."""
    a = _check_alpha(alpha)
    return -2.0 * (1.0 - a)


def local_dissipation(alpha, params: MaterialParams):
    """Local dissipation (w(alpha), w'(alpha)) for the configured model."""
    a = _check_alpha(alpha)
    w0 = params.w0
    if params.dissipation_model == "threshold":
        return w0 * a, np.full_like(a, w0)
    return w0 * a**2, 2.0 * w0 * a


def constitutive_matrix(
    params: MaterialParams, alpha, vol_strain_sign, dim: int
) -> np.ndarray:
    """Damaged Voigt elastic matrix at one material point.

    D = K [H(ev) f(alpha) + H(-ev)] P_V + 2 mu f(alpha) P_D, with the
    Heaviside evaluated on the sign of the volumetric strain (zero assigned
    to the compression branch).
    """
    f = degradation(alpha)
    vol_factor = f if vol_strain_sign > 0.0 else 1.0
    return (
        params.bulk_modulus * vol_factor * volumetric_projector(dim)
        + 2.0 * params.mu * f * deviatoric_projector(dim)
    )


def driving_force(state: SplitState, strain) -> np.ndarray:
    """Damage driving force eps : sigma_0^+ (= 2 psi_0^+)."""
    eps = np.asarray(strain, dtype=float)
    return np.einsum("...i,...i->...", eps, state.stress_pos)

"""2D fourth-order tensor algebra in Mandel form.

Every fourth-order tensor with minor symmetries is stored as a 3x3 matrix over
the index pairs (xx, yy, xy) with a factor sqrt(2) on each shear index::

    M[I, J] = w_I * w_J * T[i, j, k, l],    w = (1, 1, sqrt(2))

Strains and stresses map to 3-vectors the same way: e = (Exx, Eyy, sqrt(2) Exy).
With this convention double contraction is a plain matrix product, the
symmetrised identity is the 3x3 identity and the inverse on symmetric tensors is
the matrix inverse. Leading axes broadcast (``(..., 3, 3)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidMaterial, SingularTensor

SQRT2 = np.sqrt(2.0)
PAIRS = ((0, 0), (1, 1), (0, 1))
WEIGHTS = np.array([1.0, 1.0, SQRT2])

PHASES = ("V", "I", "F")
PHASE_INDEX = {p: k for k, p in enumerate(PHASES)}


def to_mandel(T):
    """Full ``(..., 2, 2, 2, 2)`` tensor to ``(..., 3, 3)`` Mandel matrix."""
    T = np.asarray(T, dtype=float)
    out = np.empty(T.shape[:-4] + (3, 3))
    for I, (i, j) in enumerate(PAIRS):
        for J, (k, l) in enumerate(PAIRS):
            out[..., I, J] = WEIGHTS[I] * WEIGHTS[J] * T[..., i, j, k, l]
    return out


def from_mandel(M):
    """Mandel ``(..., 3, 3)`` matrix to a full tensor with minor symmetries."""
    M = np.asarray(M, dtype=float)
    T = np.empty(M.shape[:-2] + (2, 2, 2, 2))
    for I, (i, j) in enumerate(PAIRS):
        for J, (k, l) in enumerate(PAIRS):
            v = M[..., I, J] / (WEIGHTS[I] * WEIGHTS[J])
            T[..., i, j, k, l] = v
            T[..., j, i, k, l] = v
            T[..., i, j, l, k] = v
            T[..., j, i, l, k] = v
    return T


def strain_to_mandel(E):
    E = np.asarray(E, dtype=float)
    return np.stack([E[..., 0, 0], E[..., 1, 1], SQRT2 * 0.5 * (E[..., 0, 1] + E[..., 1, 0])], axis=-1)


def mandel_to_strain(e):
    e = np.asarray(e, dtype=float)
    out = np.empty(e.shape[:-1] + (2, 2))
    out[..., 0, 0] = e[..., 0]
    out[..., 1, 1] = e[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = e[..., 2] / SQRT2
    return out


def double_dot(e1, A, e2):
    """Scalar ``E1 : A : E2`` for Mandel strain vectors (broadcasting)."""
    return np.einsum("...i,...ij,...j->...", e1, A, e2)


def identity():
    """Symmetrised fourth-order identity."""
    return np.eye(3)


def rotation_matrix(theta):
    """2x2 rotation by ``theta`` (counter-clockwise)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def mandel_rotation(theta):
    """Mandel image of ``E -> R E R^T``; orthogonal, shape ``theta.shape + (3, 3)``."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    cc, ss, cs = c * c, s * s, c * s
    Q = np.empty(theta.shape + (3, 3))
    Q[..., 0, 0] = cc
    Q[..., 0, 1] = ss
    Q[..., 0, 2] = -SQRT2 * cs
    Q[..., 1, 0] = ss
    Q[..., 1, 1] = cc
    Q[..., 1, 2] = SQRT2 * cs
    Q[..., 2, 0] = SQRT2 * cs
    Q[..., 2, 1] = -SQRT2 * cs
    Q[..., 2, 2] = cc - ss
    return Q


def rotate_tensor(C, theta):
    """Rotate a tensor so that its material x-axis points along ``(cos theta, sin theta)``.

    For the fibre base tensor this places the fibres at angle ``theta``. ``theta``
    may be an array; the result then has shape ``theta.shape + (3, 3)``.
    """
    Q = mandel_rotation(theta)
    return Q @ np.asarray(C) @ np.swapaxes(Q, -1, -2)


def invert_tensor4(T, max_cond=1e12):
    """Inverse on the space of symmetric 2x2 tensors.

    Raises SingularTensor when any 3x3 Mandel block has condition number above
    ``max_cond``.
    """
    T = np.asarray(T, dtype=float)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(T)
    if not np.all(np.isfinite(cond)) or np.any(cond > max_cond):
        raise SingularTensor(f"tensor condition number {np.max(cond):.3g} exceeds {max_cond:.3g}")
    return np.linalg.inv(T)


def acoustic_tensor(C, alpha):
    """Return ``N = (C_ijkl a_j a_l)^-1`` for unit direction(s) ``alpha``.

    ``alpha`` has shape ``(..., 2)``; the result has shape ``(..., 2, 2)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    T = from_mandel(C)
    K = np.einsum("ijkl,...j,...l->...ik", T, alpha, alpha)
    det = K[..., 0, 0] * K[..., 1, 1] - K[..., 0, 1] * K[..., 1, 0]
    scale = np.max(np.abs(K), axis=(-1, -2))
    if np.any(np.abs(det) <= 1e-14 * scale**2):
        raise SingularTensor("acoustic tensor is singular")
    return np.linalg.inv(K)


def isotropic_plane_stress(E, nu):
    """Plane-stress isotropic stiffness in Mandel form."""
    a = E / (1.0 - nu * nu)
    mu = E / (2.0 * (1.0 + nu))
    return np.array([[a, a * nu, 0.0], [a * nu, a, 0.0], [0.0, 0.0, 2.0 * mu]])


def fiber_plane_stress(E_fib, E_back, nu):
    """Fibre base tensor: ``E_fib`` along x, background modulus elsewhere."""
    d = 1.0 - nu * nu
    mu = E_back / (2.0 * (1.0 + nu))
    return np.array([
        [E_fib / d, E_back * nu / d, 0.0],
        [E_back * nu / d, E_back / d, 0.0],
        [0.0, 0.0, 2.0 * mu],
    ])


def is_positive_definite(C, tol=0.0):
    C = np.asarray(C)
    return bool(np.all(np.linalg.eigvalsh(0.5 * (C + np.swapaxes(C, -1, -2))) > tol))


@dataclass(frozen=True)
class MaterialCatalog:
    """Elastic tensors and densities of the void, isotropic and fibre phases.

    Moduli are in GPa, densities are normalised mass per unit area.
    """

    E_I: float = 80.0
    E_V: float = 0.01
    E_fib: float = 100.0
    back_ratio: float = 0.2
    nu_I: float = 0.3
    nu_V: float = 0.3
    nu_F: float = 0.3
    rho_V: float = 0.0
    rho_I: float = 1.0
    rho_F: float = 0.5
    C_V: np.ndarray = field(init=False, repr=False, compare=False)
    C_I: np.ndarray = field(init=False, repr=False, compare=False)
    C_Fx: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "C_V", isotropic_plane_stress(self.E_V, self.nu_V))
        object.__setattr__(self, "C_I", isotropic_plane_stress(self.E_I, self.nu_I))
        object.__setattr__(self, "C_Fx", fiber_plane_stress(self.E_fib, self.E_back, self.nu_F))

    @property
    def E_back(self):
        return self.back_ratio * self.E_fib

    def tensor(self, phase, theta=0.0):
        if phase == "V":
            return self.C_V
        if phase == "I":
            return self.C_I
        if phase == "F":
            return rotate_tensor(self.C_Fx, theta)
        raise KeyError(phase)

    def density(self, phase):
        return {"V": self.rho_V, "I": self.rho_I, "F": self.rho_F}[phase]

    @property
    def densities(self):
        return np.array([self.rho_V, self.rho_I, self.rho_F])

    def key(self):
        """Tuple of every scalar parameter, used for cache keys."""
        return (self.E_I, self.E_V, self.E_fib, self.back_ratio, self.nu_I, self.nu_V,
                self.nu_F, self.rho_V, self.rho_I, self.rho_F)


def build_catalog(E_I=80.0, E_V=0.01, E_fib=100.0, back_ratio=0.2, nu_I=0.3, nu_V=0.3,
                  nu_F=0.3, rho_V=0.0, rho_I=1.0, rho_F=0.5):
    """Validate the material scalars and build the plane-stress catalog."""
    for name, value in (("E_I", E_I), ("E_V", E_V), ("E_fib", E_fib)):
        if not value > 0:
            raise InvalidMaterial(f"{name} must be positive, got {value}")
    if not 0 < back_ratio <= 1:
        raise InvalidMaterial(f"back_ratio must lie in (0, 1], got {back_ratio}")
    for name, value in (("nu_I", nu_I), ("nu_V", nu_V), ("nu_F", nu_F)):
        if not -1 < value < 0.5:
            raise InvalidMaterial(f"{name} must lie in (-1, 0.5), got {value}")
    if min(rho_V, rho_I, rho_F) < 0:
        raise InvalidMaterial("densities must be nonnegative")
    if rho_V > rho_I or rho_V > rho_F:
        raise InvalidMaterial("void density must not exceed the solid densities")
    return MaterialCatalog(E_I=E_I, E_V=E_V, E_fib=E_fib, back_ratio=back_ratio, nu_I=nu_I,
                           nu_V=nu_V, nu_F=nu_F, rho_V=rho_V, rho_I=rho_I, rho_F=rho_F)

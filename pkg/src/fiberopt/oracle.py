"""Brute-force reference computations used to check the sensitivity machinery.

Nothing here imports :mod:`fiberopt.topoderiv`. The moment tensor is rebuilt
from full four-index arrays with a trapezoid rule (spectrally accurate for the
periodic Eshelby integrand), and finite-size insertions re-solve the FE model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem2d import assemble_and_solve
from .tensor2d import from_mandel, rotate_tensor, strain_to_mandel, to_mandel


@dataclass(frozen=True)
class InsertionSpec:
    center: tuple
    radius: float
    source: str
    target: str
    target_angle: float = 0.0


def eshelby_closed_form(nu):
    """Circular-inclusion Eshelby tensor of an isotropic plane-stress matrix.

    Plane stress with Poisson ratio ``nu`` behaves like plane strain with
    ``nu / (1 + nu)``, for which the classical result is used. Mandel form.
    """
    v = nu / (1.0 + nu)
    d = 8.0 * (1.0 - v)
    S = np.zeros((2, 2, 2, 2))
    S[0, 0, 0, 0] = S[1, 1, 1, 1] = (5.0 - 4.0 * v) / d
    S[0, 0, 1, 1] = S[1, 1, 0, 0] = (4.0 * v - 1.0) / d
    S[0, 1, 0, 1] = S[0, 1, 1, 0] = S[1, 0, 0, 1] = S[1, 0, 1, 0] = (3.0 - 4.0 * v) / d
    return to_mandel(S)


def eshelby_trapezoid(C, npts=256):
    """Full-index Eshelby tensor by the periodic trapezoid rule over ``[0, 2 pi)``."""
    T = from_mandel(C)
    S = np.zeros((2, 2, 2, 2))
    for t in 2.0 * np.pi * np.arange(npts) / npts:
        a = np.array([np.cos(t), np.sin(t)])
        N = np.linalg.inv(np.einsum("ijkl,j,l->ik", T, a, a))
        G = np.einsum("ik,l,j->ijkl", N, a, a)  # G[i, j, k, l] = N_ik a_l a_j
        S += np.einsum("klmn,ijkl->ijmn", T, G)
    S *= 1.0 / (2.0 * np.pi) * (2.0 * np.pi / npts)
    S = 0.5 * (S + S.transpose(1, 0, 2, 3))
    return to_mandel(S)


def moment_tensor_full(Ca, Cb, npts=256):
    """Polarisation of a disc of ``Cb`` in background ``Ca`` via full-index algebra."""
    Ta, Tb = from_mandel(Ca), from_mandel(Cb)
    S = from_mandel(eshelby_trapezoid(Ca, npts))
    dC = Tb - Ta
    X = Ta + np.einsum("ijmn,mnkl->ijkl", dC, S)
    # inverse on symmetric tensors through the 3x3 Mandel block
    Xinv = from_mandel(np.linalg.inv(to_mandel(X)))
    A = np.einsum("ijmn,mnpq,pqkl->ijkl", Ta, Xinv, dC)
    return to_mandel(A)


def dense_theta_argmin(catalog, E, a, resolution=3600, theta=0.0, npts=128):
    """Exact grid argmin over ``resolution`` inserted-fibre angles in ``[0, pi)``.

    Background ``a`` (fibre at ``theta`` when ``a == "F"``); the derivative is
    the compliance part ``-E : A : E``.
    """
    if resolution < 360:
        raise ValueError("resolution must be at least 360")
    e = strain_to_mandel(E) if np.shape(E)[-2:] == (2, 2) else np.asarray(E, dtype=float)
    Ca = catalog.tensor(a, theta)
    Ta = from_mandel(Ca)
    S = from_mandel(eshelby_trapezoid(Ca, npts))
    angles = np.arange(resolution) * np.pi / resolution
    Cb = from_mandel(rotate_tensor(catalog.C_Fx, angles))  # (r, 2, 2, 2, 2)
    dC = Cb - Ta
    X = Ta + np.einsum("rijmn,mnkl->rijkl", dC, S)
    Xinv = from_mandel(np.linalg.inv(to_mandel(X)))
    A = to_mandel(np.einsum("ijmn,rmnpq,rpqkl->rijkl", Ta, Xinv, dC))
    values = -np.einsum("i,rij,j->r", e, A, e)
    return float(angles[np.argmin(values)]), values


def _circle_cell_overlap(cx, cy, r, x0, x1, y0, y1, n=64):
    """Area of a disc inside an axis-aligned cell (midpoint rule in x, exact chord in y)."""
    xs = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    half = np.sqrt(np.maximum(r * r - (xs - cx) ** 2, 0.0))
    lo = np.maximum(cy - half, y0)
    hi = np.minimum(cy + half, y1)
    return float(np.sum(np.maximum(hi - lo, 0.0)) * (x1 - x0) / n)


def disc_fractions(mesh, center, radius, n=64):
    """Fraction of each element covered by the disc."""
    cx, cy = center
    frac = np.zeros(mesh.n_elements)
    near = np.flatnonzero(np.hypot(mesh.centroids[:, 0] - cx, mesh.centroids[:, 1] - cy)
                          <= radius + mesh.h)
    for k in near:
        x0, y0 = mesh.coords[mesh.elements[k, 0]]
        frac[k] = _circle_cell_overlap(cx, cy, radius, x0, x0 + mesh.dx, y0, y0 + mesh.dy, n)
    return frac / mesh.element_area


def fd_topological_derivative(mesh, C, baseline, spec, catalog, traction=(0.0, -1.0)):
    """Finite-radius quotient ``(J(disc) - J) / (pi eps^2)``.

    ``C`` is the baseline per-element stiffness and ``baseline`` its solved
    state. Elements under the disc get ``(1 - f) C + f C^b`` with ``f`` the exact
    covered fraction.
    """
    cx, cy = spec.center
    r = spec.radius
    if r < 2.0 * mesh.h * (1 - 1e-12):
        raise ValueError("disc radius must be at least two element sizes")
    if cx - r <= 0 or cy - r <= 0 or cx + r >= mesh.width or cy + r >= mesh.height:
        raise ValueError("disc must lie strictly inside the domain")
    Cb = catalog.tensor(spec.target, spec.target_angle)
    C = np.array(np.broadcast_to(C, (mesh.n_elements, 3, 3)))
    frac = disc_fractions(mesh, spec.center, r)
    # elements already made of the target phase are left untouched, so b == a is bitwise exact
    hit = (frac > 0) & np.any(C != Cb, axis=(1, 2))
    C_new = C.copy()
    C_new[hit] = (1.0 - frac[hit, None, None]) * C[hit] + frac[hit, None, None] * Cb
    if np.array_equal(C_new, C):
        return 0.0
    J = assemble_and_solve(mesh, C_new, traction).compliance
    return (J - baseline.compliance) / (np.pi * r * r)

"""Topological derivatives for compliance and weight, with fibre orientation.

Naming follows the direction of the phase change: ``D_{a->b}`` is the
sensitivity of replacing background phase ``a`` by a small disc of phase ``b``.
For compliance it is ``-E : A^{ab} : E`` with the elastic moment tensor
``A^{ab} = C^a (C^a + (C^b - C^a) S^a)^-1 (C^b - C^a)``, where ``S^a`` is the
interior Eshelby tensor of a circular inclusion in the background ``C^a``.

Anisotropic phases are handled through a precomputed table over ``n`` angles
``theta_i = i pi / n`` and piecewise quadratic interpolation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import QuadratureFailure, SingularTensor
from .tensor2d import PHASES, from_mandel, invert_tensor4, strain_to_mandel, to_mandel

TABLE_VERSION = 1
ISOTROPIC = ("V", "I")


def _eshelby_quadrature(T, npts):
    x, w = np.polynomial.legendre.leggauss(npts)
    t = 0.5 * np.pi * x
    w = 0.5 * np.pi * w
    alpha = np.stack([np.cos(t), np.sin(t)], axis=-1)  # (q, 2)
    K = np.einsum("...ijkl,qj,ql->...qik", T, alpha, alpha)
    N = np.linalg.inv(K)
    # J[i, k, l, j] = int N_ik a_l a_j
    J = np.einsum("q,...qik,ql,qj->...iklj", w, N, alpha, alpha)
    S = np.einsum("...klmn,...iklj->...ijmn", T, J) / np.pi
    return 0.5 * (S + np.swapaxes(S, -4, -3))


def eshelby_interior(Cb, base_points=64, tol=1e-10, max_doublings=6):
    """Interior Eshelby tensor of a circular inclusion in the background ``Cb``.

    Gauss-Legendre quadrature of the angular integral over ``[-pi/2, pi/2]``,
    doubling the point count until successive results agree to ``tol``.
    Accepts a batch ``(..., 3, 3)`` and returns Mandel matrices of the same shape.
    """
    T = from_mandel(Cb)
    npts = base_points
    prev = _eshelby_quadrature(T, npts)
    for _ in range(max_doublings):
        npts *= 2
        cur = _eshelby_quadrature(T, npts)
        if np.max(np.abs(cur - prev)) < tol:
            return to_mandel(cur)
        prev = cur
    raise QuadratureFailure(f"Eshelby quadrature did not converge with {npts} points")


def elastic_moment(Ca, Cb, S=None):
    """Elastic moment tensor for a disc of ``Cb`` inserted into background ``Ca``.

    ``S`` may pass a precomputed Eshelby tensor of ``Ca``. Vanishes identically
    when ``Ca == Cb``.
    """
    Ca = np.asarray(Ca, dtype=float)
    Cb = np.asarray(Cb, dtype=float)
    dC = Cb - Ca
    if not np.any(dC):
        return np.zeros(np.broadcast_shapes(Ca.shape, Cb.shape))
    if S is None:
        S = eshelby_interior(Ca)
    X = Ca + dC @ S
    return Ca @ invert_tensor4(X) @ dC


def _mandel_strain(E):
    E = np.asarray(E, dtype=float)
    if E.shape[-2:] == (2, 2):
        return strain_to_mandel(E)
    return E


def td_compliance(E, A):
    """Compliance topological derivative ``-E : A : E``.

    ``E`` is a full 2x2 strain or a Mandel 3-vector (leading axes broadcast).
    """
    e = _mandel_strain(E)
    return -np.einsum("...i,...ij,...j->...", e, A, e)


def td_weight(a, b, catalog):
    return catalog.density(b) - catalog.density(a)


def angle_grid(n):
    return np.arange(n) * np.pi / n


@dataclass
class DerivativeTable:
    """Moment tensors ``A[(a, b)]`` of shape ``(n_bg, n_inc, 3, 3)``.

    The background axis has length ``n`` when ``a == "F"`` (angle ``theta_i``) and
    1 otherwise; the inclusion axis likewise for ``b``.
    """

    n: int
    catalog: object
    A: dict = field(repr=False)

    @property
    def angles(self):
        return angle_grid(self.n)

    @property
    def spacing(self):
        return np.pi / self.n

    def entry(self, a, b, i=0, j=0):
        return self.A[(a, b)][i, j]


def _table_pairs():
    for a in PHASES:
        for b in PHASES:
            if a != b or a == "F":
                yield a, b


def build_table(catalog, n=36):
    """Precompute every moment tensor on the angle grid."""
    if n < 8 or n % 2:
        raise ValueError("n must be an even integer >= 8")
    grid = angle_grid(n)
    tensors = {p: [catalog.tensor(p, t) for t in (grid if p == "F" else [0.0])] for p in PHASES}
    eshelby = {p: [eshelby_interior(C) for C in tensors[p]] for p in PHASES}
    A = {}
    for a, b in _table_pairs():
        out = np.empty((len(tensors[a]), len(tensors[b]), 3, 3))
        for i, (Ca, Sa) in enumerate(zip(tensors[a], eshelby[a])):
            for j, Cb in enumerate(tensors[b]):
                try:
                    out[i, j] = elastic_moment(Ca, Cb, Sa)
                except SingularTensor as exc:
                    raise SingularTensor(f"pair {a}->{b}, i={i}, j={j}: {exc}") from exc
        A[(a, b)] = out
    return DerivativeTable(n=n, catalog=catalog, A=A)


def table_key(catalog, n):
    text = repr((TABLE_VERSION, n, tuple(float(v) for v in catalog.key())))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def save_table(table, path):
    arrays = {f"A_{a}{b}": v for (a, b), v in table.A.items()}
    np.savez(path, version=TABLE_VERSION, n=table.n, key=table_key(table.catalog, table.n), **arrays)


def load_table(path, catalog, n):
    """Load a cached table; returns None when the file is stale or missing."""
    try:
        data = np.load(path)
    except (OSError, ValueError):
        return None
    with data:
        if int(data["version"]) != TABLE_VERSION or str(data["key"]) != table_key(catalog, n):
            return None
        A = {(k[2], k[3]): data[k] for k in data.files if k.startswith("A_")}
    return DerivativeTable(n=n, catalog=catalog, A=A)


def cached_table(catalog, n, cache_dir=None):
    """Build the table, reusing ``<cache_dir>/table_<key>.npz`` when present."""
    if cache_dir is None:
        return build_table(catalog, n)
    from pathlib import Path

    path = Path(cache_dir) / f"table_{table_key(catalog, n)}.npz"
    table = load_table(path, catalog, n) if path.exists() else None
    if table is None:
        table = build_table(catalog, n)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_table(table, path)
    return table


# -- interpolation --------------------------------------------------------------


def quadratic_weights(theta, n):
    """Indices (..., 3) and Lagrange weights of the three grid angles nearest ``theta``."""
    s = np.asarray(theta, dtype=float) / (np.pi / n)
    i0 = np.rint(s)
    t = s - i0
    idx = np.stack([i0 - 1, i0, i0 + 1], axis=-1).astype(int) % n
    w = np.stack([0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)], axis=-1)
    return idx, w


def quadratic_min(values):
    """Refined minimum of periodic samples ``values[..., n]`` on the angle grid.

    Returns ``(minimum, argmin_angle, degenerate)``. The grid argmin (first
    occurrence, i.e. smallest angle) is refined by the vertex of the parabola
    through it and its two periodic neighbours.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    j = np.argmin(values, axis=-1)
    take = lambda k: np.take_along_axis(values, (k % n)[..., None], axis=-1)[..., 0]
    gm, g0, gp = take(j - 1), take(j), take(j + 1)
    curv = gm - 2.0 * g0 + gp
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(curv > 0, 0.5 * (gm - gp) / curv, 0.0)
    s = np.clip(s, -0.5, 0.5)
    vmin = g0 - 0.25 * (gm - gp) * s
    angle = np.mod((j + s) * np.pi / n, np.pi)
    angle = np.where(angle >= np.pi, 0.0, angle)
    degenerate = (values.max(axis=-1) - values.min(axis=-1)) < 1e-12
    return vmin, angle, degenerate


def _forms(e, A):
    """``-e . A . e`` for strains (m, 3) against a stack of tensors (..., 3, 3) -> (m, ...)."""
    q = np.einsum("mi,mj->mij", e, e).reshape(e.shape[0], 9)
    flat = A.reshape(-1, 9)
    return -(q @ flat.T).reshape((e.shape[0],) + A.shape[:-2])


def _compliance_samples(table, e, theta, a, b):
    """Compliance derivative samples ``(m, n_inc)`` for background ``a`` at angle ``theta``."""
    A = table.A[(a, b)]
    if a != "F":
        return _forms(e, A[0])
    idx, w = quadratic_weights(theta, table.n)
    out = np.zeros((e.shape[0], A.shape[1]))
    chunk = max(1, 4_000_000 // (A.shape[0] * A.shape[1]))
    for s in range(0, e.shape[0], chunk):
        sl = slice(s, s + chunk)
        G = _forms(e[sl], A)  # (c, n_bg, n_inc)
        rows = np.arange(G.shape[0])[:, None]
        out[sl] = np.einsum("ck,ckj->cj", w[sl], G[rows, idx[sl]])
    return out


@dataclass(frozen=True)
class PointDerivatives:
    per_angle: np.ndarray  # D_{a->F, theta_j} L on the grid
    d_star: float  # interpolated minimum over inserted angles
    to_isotropic: dict  # D_{a->b} L for b in {V, I}, b != a


def interp_td(table, a, E, theta=0.0, lam=0.0, obj_scale=1.0):
    """Lagrangian derivatives at one point with background ``a`` at angle ``theta``."""
    e = _mandel_strain(E).reshape(1, 3)
    th = np.array([theta], dtype=float)
    cat = table.catalog
    per_angle = obj_scale * _compliance_samples(table, e, th, a, "F")[0]
    per_angle = per_angle + lam * td_weight(a, "F", cat)
    d_star = float(quadratic_min(per_angle)[0])
    iso = {}
    for b in ISOTROPIC:
        if b != a:
            d = obj_scale * _compliance_samples(table, e, th, a, b)[0, 0]
            iso[b] = float(d + lam * td_weight(a, b, cat))
    return PointDerivatives(per_angle=per_angle, d_star=d_star, to_isotropic=iso)


def td_at_angle(table, a, b, E, theta=0.0, theta_inc=0.0):
    """Table-interpolated compliance derivative at arbitrary background and inserted angles."""
    e = _mandel_strain(E).reshape(1, 3)
    samples = _compliance_samples(table, e, np.array([theta]), a, b)[0]
    if b != "F":
        return float(samples[0])
    idx, w = quadratic_weights(theta_inc, table.n)
    return float(samples[idx] @ w)


def estimate_theta_star(table, E, theta=0.0, a="F"):
    """Inserted-fibre angle that lowers compliance the most; ``(angle, degenerate)``.

    The current ``theta`` is returned unchanged when every orientation is
    equivalent to within 1e-12.
    """
    e = _mandel_strain(E).reshape(1, 3)
    g = _compliance_samples(table, e, np.array([theta]), a, "F")
    _, angle, degenerate = quadratic_min(g)
    if degenerate[0]:
        return float(theta), True
    return float(angle[0]), False


# -- element fields ---------------------------------------------------------------


@dataclass(frozen=True)
class SensitivityField:
    d_star: dict  # (a, b) -> (m,) optimally oriented derivative, masked by chi_a
    theta_star: np.ndarray
    degenerate: np.ndarray
    extended: dict  # (a, b) for the three stored pairs -> (m,)

    def pair(self, a, b):
        if (a, b) in self.extended:
            return self.extended[(a, b)]
        return -self.extended[(b, a)]


def extended_td(d_star):
    """Pairwise derivatives ``D_ab = D*_{a->b} - D*_{b->a} + D*_{c->b} - D*_{c->a}``."""
    out = {}
    for a, b in (("V", "I"), ("V", "F"), ("I", "F")):
        (c,) = set(PHASES) - {a, b}
        out[(a, b)] = d_star[(a, b)] - d_star[(b, a)] + d_star[(c, b)] - d_star[(c, a)]
    return out


def element_sensitivities(table, strain, theta, fractions, lam=0.0, obj_scale=1.0):
    """Optimally oriented, fraction-masked derivatives of ``obj_scale * J_C + lam * g_W``.

    ``strain`` is (m, 2, 2) or Mandel (m, 3); ``theta`` the current fibre angle per
    element; ``fractions`` the (3, m) smoothed phase fractions in V, I, F order.
    The estimated optimal angle minimises the fraction-weighted per-angle
    compliance derivative of inserting fibre; elements where every angle is
    equivalent keep their current angle.
    """
    e = _mandel_strain(strain)
    theta = np.asarray(theta, dtype=float)
    cat = table.catalog
    frac = dict(zip(PHASES, fractions))
    raw = {}
    combined = np.zeros((e.shape[0], table.n))
    for a in PHASES:
        g = obj_scale * _compliance_samples(table, e, theta, a, "F")
        combined += frac[a][:, None] * g
        if a != "F":
            raw[(a, "F")] = quadratic_min(g)[0] + lam * td_weight(a, "F", cat)
        for b in ISOTROPIC:
            if b != a:
                d = obj_scale * _compliance_samples(table, e, theta, a, b)[:, 0]
                raw[(a, b)] = d + lam * td_weight(a, b, cat)
    _, theta_star, degenerate = quadratic_min(combined)
    theta_star = np.where(degenerate, theta, theta_star)
    d_star = {k: frac[k[0]] * v for k, v in raw.items()}
    return SensitivityField(d_star=d_star, theta_star=theta_star, degenerate=degenerate,
                            extended=extended_td(d_star))

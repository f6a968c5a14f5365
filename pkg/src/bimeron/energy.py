"""Discrete chiral easy-plane energies, exact gradients and diagnostics.

Discretisation on a lattice of spacing ``h``:

* exchange   ``1/2 sum_edges |m_i - m_j|^2``  (forward differences; the
  ``h^2`` of the quadrature cancels the ``1/h^2`` of the difference),
* DMI        ``(lam/eps) h^2 sum_i (div m)_i m3_i`` with centred divergence,
* anisotropy ``h^2/(2 eps^2) sum_i m3_i^2``.

The gradient is the exact derivative of this sum, projected onto the tangent
spaces and zeroed on pinned Dirichlet nodes.  On the disk the rim and the
exterior all hold ``(c, 0)``, so edges touching them cost nothing beyond the
rim itself and ``m3 = 0`` kills their DMI/anisotropy weight.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .grid import DISK, TORUS, CircleField, SphereField

FULL_S2 = "FullS2"
EASY_PLANE_S1 = "EasyPlaneS1"

NEAREST = "nn"
CORRECTED = "nnn"
# (offset, weight) pairs: sum_k w_k |m(x + k h) - m(x)|^2 = h^2 |d m|^2 + O(h^4) (nn) or O(h^6) (nnn)
STENCILS = {NEAREST: ((1, 1.0),), CORRECTED: ((1, 4.0 / 3.0), (2, -1.0 / 12.0))}


def _stencil(name: str):
    try:
        return STENCILS[name]
    except KeyError:
        raise ValueError(f"unknown exchange stencil {name!r}; expected one of {tuple(STENCILS)}") from None


class ExceptionalConfiguration(ValueError):
    """A lattice triangle is (near-)antipodally degenerate."""


@dataclass(frozen=True)
class EnergyParams:
    lam: float
    eps: float = 1.0
    functional: str = FULL_S2
    domain: Optional[str] = None
    stencil: str = NEAREST

    def __post_init__(self):
        if not abs(self.lam) < 1.0:
            raise ValueError(f"loss of coercivity: |λ| = {abs(self.lam)} >= 1")
        if self.functional not in (FULL_S2, EASY_PLANE_S1):
            raise ValueError(f"unknown functional {self.functional!r}")
        _stencil(self.stencil)
        if self.functional == FULL_S2 and not (self.eps > 0 and math.isfinite(self.eps)):
            raise ValueError(f"invalid ε={self.eps}: need a finite positive anisotropy length")


@dataclass
class EnergyBreakdown:
    exchange: float
    dmi: float
    anisotropy: float
    total: float
    degree: int
    degree_real: float
    grad_sup: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, grid=None, **extra) -> str:
        d = self.to_dict()
        if grid is not None:
            d["grid"] = grid.metadata()
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True)


# --- finite-difference kernels -----------------------------------------------
#
# All shifts are periodic rolls.  On the disk the wrapped neighbours of the
# first/last rows and columns are exterior or rim nodes holding the same rim
# value, so wrapped edges contribute nothing.

def forward_differences(v: np.ndarray, k: int = 1):
    """Differences ``m(x + k h) - m(x)`` along x and y."""
    return np.roll(v, -k, axis=0) - v, np.roll(v, -k, axis=1) - v


def exchange_energy(v: np.ndarray, stencil: str = NEAREST) -> float:
    """``1/2 sum_k w_k sum_edges |m_i - m_j|^2`` over edges of length ``k h``."""
    total = 0.0
    for k, w in _stencil(stencil):
        dx, dy = forward_differences(v, k)
        total += 0.5 * w * (np.sum(dx * dx) + np.sum(dy * dy))
    return total


def exchange_gradient(v: np.ndarray, stencil: str = NEAREST) -> np.ndarray:
    """Exact derivative of :func:`exchange_energy` (minus the unscaled stencil Laplacian)."""
    g = np.zeros_like(v)
    for k, w in _stencil(stencil):
        for ax in (0, 1):
            g += w * (2.0 * v - np.roll(v, -k, axis=ax) - np.roll(v, k, axis=ax))
    return g


def centered_divergence(m1: np.ndarray, m2: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(m1, -1, 0) - np.roll(m1, 1, 0) + np.roll(m2, -1, 1) - np.roll(m2, 1, 1)) / (2.0 * h)


def centered_gradient(v: np.ndarray, h: float):
    gx = (np.roll(v, -1, 0) - np.roll(v, 1, 0)) / (2.0 * h)
    gy = (np.roll(v, -1, 1) - np.roll(v, 1, 1)) / (2.0 * h)
    return gx, gy


def nodal_gradient_squared(v: np.ndarray, h: float, stencil: str = NEAREST) -> np.ndarray:
    """``|grad m|^2`` per node, each edge split evenly between its ends.

    ``h^2 * sum`` equals twice :func:`exchange_energy` with the same stencil.
    """
    out = np.zeros(v.shape[:-1])
    for k, w in _stencil(stencil):
        for ax in (0, 1):
            e = np.sum((np.roll(v, -k, axis=ax) - v) ** 2, axis=-1)
            out += 0.5 * w * (e + np.roll(e, k, axis=ax))
    return out / (h * h)


# --- S2 functional ------------------------------------------------------------


def _check_s2(field: SphereField, p: EnergyParams) -> None:
    if p.functional != FULL_S2:
        raise ValueError(f"domain mismatch: energy_s2 needs the {FULL_S2} functional, got {p.functional}")
    if p.domain is not None and p.domain != field.grid.kind:
        raise ValueError(f"domain mismatch: params for {p.domain}, field on {field.grid.kind}")


def _masked_m3(v: np.ndarray, grid) -> np.ndarray:
    m3 = v[..., 2]
    return m3 if grid.periodic else np.where(grid.active_mask, m3, 0.0)


def _terms_s2(v: np.ndarray, grid, p: EnergyParams):
    h = grid.h
    ex = exchange_energy(v, p.stencil)
    m3 = _masked_m3(v, grid)
    div = centered_divergence(v[..., 0], v[..., 1], h)
    dmi = p.lam / p.eps * h * h * np.sum(div * m3)
    an = 0.5 * h * h / (p.eps * p.eps) * np.sum(m3 * m3)
    return ex, dmi, an


def _raw_gradient_s2(v: np.ndarray, grid, p: EnergyParams) -> np.ndarray:
    h = grid.h
    g = exchange_gradient(v, p.stencil)
    m3 = _masked_m3(v, grid)
    c = p.lam / p.eps * h * h
    gx, gy = centered_gradient(m3, h)
    g[..., 0] -= c * gx
    g[..., 1] -= c * gy
    g[..., 2] += c * centered_divergence(v[..., 0], v[..., 1], h) + h * h / (p.eps * p.eps) * m3
    return g


def project_tangent(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    return g - np.sum(g * v, axis=-1, keepdims=True) * v


def _projected_gradient_s2(v, grid, p: EnergyParams) -> np.ndarray:
    g = project_tangent(v, _raw_gradient_s2(v, grid, p))
    if grid.kind == DISK:
        g[~grid.free_mask] = 0.0
    return g


def energy_terms_s2(field: SphereField, p: EnergyParams) -> tuple[float, float, float]:
    """(exchange, DMI, anisotropy) without degree or gradient."""
    _check_s2(field, p)
    return _terms_s2(field.values, field.grid, p)


def grad_s2(field: SphereField, p: EnergyParams) -> np.ndarray:
    """Tangent-projected exact gradient of the discrete energy, zero on Dirichlet nodes."""
    _check_s2(field, p)
    return _projected_gradient_s2(field.values, field.grid, p)


def energy_s2(field: SphereField, p: EnergyParams) -> EnergyBreakdown:
    _check_s2(field, p)
    ex, dmi, an = _terms_s2(field.values, field.grid, p)
    q, q_real = lattice_degree(field, strict=False)
    g = _projected_gradient_s2(field.values, field.grid, p)
    gsup = float(np.max(np.linalg.norm(g, axis=-1)))
    return EnergyBreakdown(float(ex), float(dmi), float(an), float(ex + dmi + an), q, q_real, gsup)


# --- topological charge ---------------------------------------------------------


def _triangle_angles(a, b, c):
    num = np.sum(a * np.cross(b, c), axis=-1)
    den = 1.0 + np.sum(a * b, axis=-1) + np.sum(b * c, axis=-1) + np.sum(c * a, axis=-1)
    return num, den


def lattice_degree(field: SphereField, strict: bool = True) -> tuple[int, float]:
    """Solid-angle (Berg-Luescher) degree: ``(rounded, real)``.

    Each lattice cell is split into the triangles (00, 10, 11) and
    (00, 11, 01); their signed solid angles ``2 atan2(num, den)`` are summed
    and divided by ``4 pi``.  With ``strict`` a triangle with
    ``den <= 1e-12`` raises :class:`ExceptionalConfiguration`.
    """
    v = field.values
    grid = field.grid
    if grid.periodic:
        p00 = v
        p10 = np.roll(v, -1, axis=0)
        p01 = np.roll(v, -1, axis=1)
        p11 = np.roll(p10, -1, axis=1)
        cells = np.ones(grid.shape, dtype=bool)
    else:
        p00, p10, p01, p11 = v[:-1, :-1], v[1:, :-1], v[:-1, 1:], v[1:, 1:]
        act = grid.active_mask
        cells = act[:-1, :-1] & act[1:, :-1] & act[:-1, 1:] & act[1:, 1:]
        p00, p10, p01, p11 = p00[cells], p10[cells], p01[cells], p11[cells]
    n1, d1 = _triangle_angles(p00, p10, p11)
    n2, d2 = _triangle_angles(p00, p11, p01)
    if strict:
        bad = (d1 <= 1e-12) | (d2 <= 1e-12)
        if np.any(bad):
            raise ExceptionalConfiguration(f"exceptional configuration in {int(np.sum(bad))} lattice cell(s)")
    total = np.sum(2.0 * np.arctan2(n1, d1)) + np.sum(2.0 * np.arctan2(n2, d2))
    q_real = float(total / (4.0 * math.pi))
    return int(round(q_real)), q_real


# --- Euler-Lagrange residual ----------------------------------------------------


def el_residual(field: SphereField, p: Optional[EnergyParams] = None):
    """Tangential Euler-Lagrange residual per node and its norms.

    ``r = -P_m (dE/dm) / h^2`` on interior (free) nodes.  Without ``p`` only
    the exchange is used, and ``r`` is the discrete tension field
    ``Delta m + |grad m|^2 m`` (to second order).  Returns ``(r, norms)`` with
    ``norms = {"l2": ..., "sup": ...}``.
    """
    grid = field.grid
    v = field.values
    if p is None:
        g = project_tangent(v, exchange_gradient(v))
    else:
        _check_s2(field, p)
        g = project_tangent(v, _raw_gradient_s2(v, grid, p))
    r = -g / grid.h**2
    r[~grid.free_mask] = 0.0
    nrm = np.linalg.norm(r, axis=-1)
    return r, {"l2": float(math.sqrt(grid.h**2 * np.sum(nrm * nrm))), "sup": float(nrm.max())}


# --- S1 easy-plane functional -----------------------------------------------------


def energy_s1(field: CircleField, lam: float, stencil: str = NEAREST):
    """``1/2 int |grad m|^2 - lam^2 (div m)^2`` and its tangential gradient."""
    if abs(lam) >= 1.0:
        raise ValueError(f"loss of coercivity: |λ| = {abs(lam)} >= 1")
    grid = field.grid
    if grid.kind != TORUS:
        raise ValueError("domain mismatch: easy-plane functional is defined on the torus")
    v = field.values
    h = grid.h
    ex = exchange_energy(v, stencil)
    div = centered_divergence(v[..., 0], v[..., 1], h)
    e = ex - 0.5 * lam * lam * h * h * np.sum(div * div)
    g = exchange_gradient(v, stencil)
    gx, gy = centered_gradient(div, h)
    c = lam * lam * h * h
    g[..., 0] += c * gx
    g[..., 1] += c * gy
    return float(e), project_tangent(v, g)


def dirichlet_integral(field, stencil: str = NEAREST) -> float:
    """``int |grad m|^2`` (no factor one half)."""
    return 2.0 * exchange_energy(field.values, stencil)


# --- Pohozaev diagnostics -----------------------------------------------------------


def _bilinear(values: np.ndarray, grid, pts: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of nodal data at physical points ``(N, 2)``."""
    h = grid.h
    fx = (pts[:, 0] - grid.x[0]) / h
    fy = (pts[:, 1] - grid.y[0]) / h
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    tx = (fx - i0)[:, None]
    ty = (fy - j0)[:, None]
    n = grid.n
    if grid.periodic:
        i0, j0 = i0 % n, j0 % n
        i1, j1 = (i0 + 1) % n, (j0 + 1) % n
    else:
        i0 = np.clip(i0, 0, n - 2)
        j0 = np.clip(j0, 0, n - 2)
        i1, j1 = i0 + 1, j0 + 1
        tx = (fx - i0)[:, None]
        ty = (fy - j0)[:, None]
    flat = values.reshape(n, n, -1)
    out = (
        (1 - tx) * (1 - ty) * flat[i0, j0]
        + tx * (1 - ty) * flat[i1, j0]
        + (1 - tx) * ty * flat[i0, j1]
        + tx * ty * flat[i1, j1]
    )
    return out.reshape((len(pts),) + values.shape[2:])


def pohozaev_residual_disk(field: SphereField, eps: float, lam: float = 0.0, n_rim: Optional[int] = None,
                           rim_radius: Optional[float] = None) -> float:
    """Rim Pohozaev residual for critical points on the disk.

    On the circle ``|x| = rho`` the identity reads
    ``int_{D_rho} (lam/eps)(div m) m3 + (m3/eps)^2
    = rho^2 oint [1/2 (|d_tau m|^2 - |d_nu m|^2 + (m3/eps)^2) + (lam/eps) m3 (d_tau m . tau)] dtheta``
    (radial stress of the chiral functional).  At ``rho = 1``, where
    ``m3 = 0``, it is ``int_D (m3/eps)^2 = 1/2 oint |d_tau m|^2 - |d_nu m|^2 ds``
    plus the DMI bulk term, which vanishes for ``lam = 0``.

    The lattice rim is a staircase band of pinned nodes about ``h`` to
    ``sqrt(2) h`` wide, so the circle sits just inside the free region,
    ``rho = 1 - 3h`` by default, and tends to the rim as ``h -> 0``.  The
    normal derivative is the one-sided second-order stencil on bilinear
    samples at ``rho``, ``rho - h``, ``rho - 2h``.
    """
    grid = field.grid
    if grid.kind != DISK:
        raise ValueError("disk only: rim Pohozaev residual needs the Dirichlet disk")
    v = field.values
    h = grid.h
    rho = 1.0 - 3.0 * h if rim_radius is None else float(rim_radius)
    if not (2.0 * h < rho <= 1.0):
        raise ValueError(f"rim radius {rho} out of range")
    m3 = np.where(grid.active_mask, v[..., 2], 0.0)
    div = centered_divergence(v[..., 0], v[..., 1], h)
    X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
    inside = np.hypot(X, Y) < rho
    bulk = h * h * np.sum(np.where(inside, lam / eps * div * m3 + (m3 / eps) ** 2, 0.0))

    M = n_rim or 8 * grid.n
    th = 2.0 * np.pi * np.arange(M) / M
    nu = np.stack([np.cos(th), np.sin(th)], axis=-1)
    tau = np.stack([-nu[:, 1], nu[:, 0]], axis=-1)
    m0 = _bilinear(v, grid, nu * rho)
    m1 = _bilinear(v, grid, nu * (rho - h))
    m2 = _bilinear(v, grid, nu * (rho - 2.0 * h))
    dnu = (3.0 * m0 - 4.0 * m1 + m2) / (2.0 * h)
    dth = 2.0 * np.pi / M
    dtau = (np.roll(m0, -1, axis=0) - np.roll(m0, 1, axis=0)) / (2.0 * dth * rho)
    integrand = 0.5 * (np.sum(dtau * dtau, -1) - np.sum(dnu * dnu, -1) + (m0[:, 2] / eps) ** 2)
    integrand += lam / eps * m0[:, 2] * np.sum(dtau[:, :2] * tau, -1)
    rim = rho * rho * np.sum(integrand) * dth
    return float(abs(bulk - rim))


def stress_tensor(field, lam: float) -> np.ndarray:
    """Nodal ``T_ab = e delta_ab - d_a m . d_b m + lam^2 (div m) d_b m_a`` (centred differences)."""
    grid = field.grid
    v = field.values
    gx, gy = centered_gradient(v, grid.h)
    d = (gx, gy)
    div = gx[..., 0] + gy[..., 1]
    e = 0.5 * (np.sum(gx * gx, -1) + np.sum(gy * gy, -1)) - 0.5 * lam * lam * div * div
    T = np.empty(v.shape[:2] + (2, 2))
    for a in range(2):
        for b in range(2):
            T[..., a, b] = -np.sum(d[a] * d[b], -1) + lam * lam * div * d[b][..., a]
        T[..., a, a] += e
    return T


def pohozaev_residual_annulus(field, lam: float, R: float, center=None, n_circle: Optional[int] = None) -> float:
    """``| oint_{dD_R} |d_tau m|^2 - |d_nu m|^2 + lam^2 (div m)(d_nu m . nu - d_tau m . tau) ds |``.

    Nodal centred derivatives are interpolated bilinearly to the circle.  For a
    ``SphereField`` the full 3-vector enters the gradient terms and the in-plane
    part the divergence.
    """
    grid = field.grid
    c = grid.center if center is None else np.asarray(center, dtype=float)
    if grid.periodic:
        if not (0 < R < 0.5):
            raise ValueError(f"circle out of range: need 0 < R < 1/2 on the torus, got {R}")
    else:
        if not (R > 0 and np.hypot(*c) + R <= 1.0 - 2.0 * grid.h):
            raise ValueError("circle out of range: circle leaves the disk interior")
    v = field.values
    gx, gy = centered_gradient(v, grid.h)
    M = n_circle or max(512, 16 * grid.n)
    th = 2.0 * np.pi * np.arange(M) / M
    nu = np.stack([np.cos(th), np.sin(th)], axis=-1)
    tau = np.stack([-np.sin(th), np.cos(th)], axis=-1)
    pts = c + R * nu
    Gx = _bilinear(gx, grid, pts)
    Gy = _bilinear(gy, grid, pts)
    dnu = nu[:, 0:1] * Gx + nu[:, 1:2] * Gy
    dtau = tau[:, 0:1] * Gx + tau[:, 1:2] * Gy
    div = Gx[:, 0] + Gy[:, 1]
    integrand = (
        np.sum(dtau * dtau, -1)
        - np.sum(dnu * dnu, -1)
        + lam * lam * div * (np.sum(dnu[:, :2] * nu, -1) - np.sum(dtau[:, :2] * tau, -1))
    )
    return float(abs(np.sum(integrand) * R * 2.0 * np.pi / M))

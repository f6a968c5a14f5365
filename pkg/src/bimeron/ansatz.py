"""Analytic bimeron trial fields and their closed-form energies.

The prototype is the Moebius map ``f(w) = c (w - a) / (w + a)`` lifted to the
sphere by the stereographic map; it has a vortex (south pole) at ``w = a``
and an antivortex (north pole) at ``w = -a`` and carries degree -1.  The
cut-off field agrees with the prototype on ``|w| <= R`` and is the constant
in-plane state ``(c, 0)`` outside ``|w| >= 2R``; in between the radial
variable is stretched by ``r_R`` so that ``f`` reaches its value at infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

# Gauss-Legendre nodes for integrating g' on the blend interval
_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


@dataclass(frozen=True)
class AnsatzParams:
    a: float
    R_cut: float
    c_phase: float = 0.0
    z0: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"invalid parameter: a={self.a} must be positive")
        if not self.R_cut > 0:
            raise ValueError(f"invalid parameter: R_cut={self.R_cut} must be positive")
        object.__setattr__(self, "c_phase", float(self.c_phase) % (2 * math.pi))
        object.__setattr__(self, "z0", tuple(float(v) for v in self.z0))

    def check_disk(self) -> None:
        if not (0 < self.R_cut < 0.5):
            raise ValueError(f"invalid parameter: disk targets need 0 < R_cut < 1/2, got {self.R_cut}")


# --- stereographic map -------------------------------------------------------


def stereographic(y) -> np.ndarray:
    """``Phi(y) = (2y, |y|^2 - 1) / (|y|^2 + 1)``, vectorised over ``(..., 2)``.

    Evaluated in the inverted chart for ``|y| > 1`` so that large inputs stay
    finite; non-finite inputs map to the north pole.
    """
    y = np.asarray(y, dtype=float)
    r = np.hypot(y[..., 0], y[..., 1])
    out = np.empty(y.shape[:-1] + (3,))
    small = r <= 1.0
    big = ~small & np.isfinite(r)
    ys, rs = y[small], r[small]
    d = rs**2 + 1.0
    out[small, :2] = 2.0 * ys / d[..., None]
    out[small, 2] = (rs**2 - 1.0) / d
    yb, rb = y[big], r[big]
    t = 1.0 / rb
    d = 1.0 + t * t
    out[big, :2] = 2.0 * (yb / rb[..., None]) * (t / d)[..., None]
    out[big, 2] = (1.0 - t * t) / d
    inf = ~np.isfinite(r)
    out[inf] = (0.0, 0.0, 1.0)
    return out


def inverse_stereographic(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return m[..., :2] / (1.0 - m[..., 2:3])


# --- prototype ---------------------------------------------------------------


def _moebius_sphere(w: np.ndarray, a: float, c_phase: float) -> np.ndarray:
    """``Phi(e^{ic}(w - a)/(w + a))`` without ever forming the pole.

    Multiplying through by ``|w + a|^2`` gives
    ``m = (2 e^{ic} (w - a) conj(w + a), |w - a|^2 - |w + a|^2) / (2(|w|^2 + a^2))``.
    """
    wc = w[..., 0] + 1j * w[..., 1]
    den = 2.0 * (np.abs(wc) ** 2 + a * a)
    plane = 2.0 * np.exp(1j * c_phase) * (wc - a) * np.conj(wc + a) / den
    m3 = -4.0 * a * wc.real / den
    return np.stack([plane.real, plane.imag, m3], axis=-1)


def bimeron_prototype(z, p: AnsatzParams) -> np.ndarray:
    """Stereographic lift of ``e^{ic}(w - a)/(w + a)``, ``w = z - z0``."""
    w = np.asarray(z, dtype=float) - np.asarray(p.z0)
    return _moebius_sphere(w, p.a, p.c_phase)


# --- cut-off profile ---------------------------------------------------------


class CutoffProfile:
    """Smooth ``g`` with ``g = ln(1 + s^2)`` on ``[0, 2]`` and constant on ``[4, inf)``.

    On ``[2, 4]`` the derivative is blended down with the quintic smoothstep
    ``b(t) = 1 - t^3 (10 - 15 t + 6 t^2)``, ``t = (s - 2)/2``:
    ``g'(s) = b(t) 2s/(1 + s^2)``.  Since ``0 <= b <= 1`` and ``b' <= 0`` this
    gives ``0 <= g' <= 2s/(1+s^2)`` and ``g'' <= 0`` on ``[2, 4]``, and ``g`` is
    ``C^3`` at both junctions.
    """

    @staticmethod
    def _blend(s):
        t = np.clip((s - 2.0) / 2.0, 0.0, 1.0)
        b = 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
        db = -30.0 * t * t * (1.0 - t) ** 2 / 2.0  # d/ds
        return b, db

    def g_prime(self, s):
        s = np.asarray(s, dtype=float)
        b, _ = self._blend(s)
        return b * 2.0 * s / (1.0 + s * s)

    def g_double_prime(self, s):
        s = np.asarray(s, dtype=float)
        b, db = self._blend(s)
        base = 2.0 * s / (1.0 + s * s)
        dbase = 2.0 * (1.0 - s * s) / (1.0 + s * s) ** 2
        return db * base + b * dbase

    def g(self, s):
        s = np.asarray(s, dtype=float)
        out = np.log1p(np.minimum(s, 2.0) ** 2)
        mid = s > 2.0
        if np.any(mid):
            upper = np.minimum(s[mid], 4.0)
            half = (upper - 2.0) / 2.0
            nodes = 2.0 + half[:, None] * (_GL_X[None, :] + 1.0)
            out[mid] += half * (self.g_prime(nodes) @ _GL_W)
        return out

    def r(self, s):
        """Radius stretch: ``r(s) = s`` on ``[0, 2]``, ``r -> inf`` as ``s -> 4``."""
        s = np.asarray(s, dtype=float)
        out = s.astype(float).copy()
        mid = (s > 2.0) & (s < 4.0)
        gp = self.g_prime(s[mid])
        out[mid] = (1.0 + np.sqrt(1.0 - gp * gp)) / gp
        out[s >= 4.0] = np.inf
        return out

    def r_prime(self, s):
        s = np.asarray(s, dtype=float)
        out = np.ones_like(s, dtype=float)
        mid = (s > 2.0) & (s < 4.0)
        gp = self.g_prime(s[mid])
        gpp = self.g_double_prime(s[mid])
        q = np.sqrt(1.0 - gp * gp)
        out[mid] = -(1.0 + q) / (q * gp * gp) * gpp
        out[s >= 4.0] = np.inf
        return out


PROFILE = CutoffProfile()


def scaled_radius(s, R: float):
    """``r_R`` with identity on ``[0, R]`` and blow-up at ``2R``."""
    half = 0.5 * R
    return half * PROFILE.r(np.asarray(s) / half)


def scaled_radius_prime(s, R: float):
    half = 0.5 * R
    return PROFILE.r_prime(np.asarray(s) / half)


def cutoff_field(z, p: AnsatzParams) -> np.ndarray:
    """Degree -1 trial field equal to the prototype on ``D_R`` and ``(c, 0)`` off ``D_2R``."""
    w = np.asarray(z, dtype=float) - np.asarray(p.z0)
    s = np.hypot(w[..., 0], w[..., 1])
    R = p.R_cut
    out = np.empty(w.shape[:-1] + (3,))
    inner = s <= R
    outer = s >= 2.0 * R
    mid = ~inner & ~outer
    out[inner] = _moebius_sphere(w[inner], p.a, p.c_phase)
    out[outer] = (math.cos(p.c_phase), math.sin(p.c_phase), 0.0)
    sm = s[mid]
    W = w[mid] * (scaled_radius(sm, R) / sm)[:, None]
    out[mid] = _moebius_sphere(W, p.a, p.c_phase)
    return out


def _cutoff_jacobian(w: np.ndarray, p: AnsatzParams):
    """``u = f(W(w))`` and its real 2x2 Jacobian on the annulus ``R < |w| < 2R``."""
    s = np.hypot(w[..., 0], w[..., 1])
    rR = scaled_radius(s, p.R_cut)
    drR = scaled_radius_prime(s, p.R_cut)
    nhat = w / s[..., None]
    W = nhat * rR[..., None]
    Wc = W[..., 0] + 1j * W[..., 1]
    c = np.exp(1j * p.c_phase)
    u = c * (Wc - p.a) / (Wc + p.a)
    fp = c * 2.0 * p.a / (Wc + p.a) ** 2
    Jf = np.empty(s.shape + (2, 2))
    Jf[..., 0, 0] = fp.real
    Jf[..., 0, 1] = -fp.imag
    Jf[..., 1, 0] = fp.imag
    Jf[..., 1, 1] = fp.real
    nn = nhat[..., :, None] * nhat[..., None, :]
    eye = np.eye(2)
    JW = drR[..., None, None] * nn + (rR / s)[..., None, None] * (eye - nn)
    Du = Jf @ JW
    return np.stack([u.real, u.imag], axis=-1), Du


def reduced_density(u: np.ndarray, Du: np.ndarray, lam: float, eps: float) -> np.ndarray:
    """Pulled-back density with the divergence term dropped (components stacked).

    Returns ``(..., 3)``: exchange, DMI and anisotropy parts.
    """
    q = 1.0 + np.sum(u * u, axis=-1)
    grad2 = np.sum(Du * Du, axis=(-2, -1))
    div = Du[..., 0, 0] + Du[..., 1, 1]
    inv_eps = 0.0 if math.isinf(eps) else 1.0 / eps
    ex = 2.0 * grad2 / q**2
    dmi = -2.0 * lam * inv_eps * div / q**2
    an = 0.5 * inv_eps**2 * (q - 2.0) ** 2 / q**2
    return np.stack([ex, dmi, an], axis=-1)


def annulus_energy(p: AnsatzParams, lam: float, eps: float, n_theta: int = 256, epsrel: float = 1e-11) -> np.ndarray:
    """Reduced energy of the cut-off field on ``R < |w| < 2R``.

    Returns the (exchange, DMI, anisotropy) split.  Periodic trapezoid rule in
    the angle, adaptive quadrature in the radius.
    """
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)

    def ring(s):
        w = dirs * s
        u, Du = _cutoff_jacobian(w, p)
        return reduced_density(u, Du, lam, eps).mean(axis=0) * 2.0 * np.pi * s

    R = p.R_cut
    val, _ = integrate.quad_vec(ring, R, 2.0 * R, epsrel=epsrel, epsabs=1e-14, limit=400)
    return val


def cutoff_energy(p: AnsatzParams, lam: float, eps: float) -> dict:
    """Continuum energy of the full cut-off field (closed form + annulus)."""
    a, R = p.a, p.R_cut
    q = R * R / (R * R + a * a)
    inner_ex = 4.0 * math.pi * q
    # the holomorphic DMI density is linear in Re(c f'), hence the cos c factor
    inner_dmi = -2.0 * math.pi * lam * a / eps * q * math.cos(p.c_phase)
    inner_an = math.pi * a * a / eps**2 * (math.log((R * R + a * a) / (a * a)) - q)
    ann = annulus_energy(p, lam, eps)
    out = {
        "exchange": inner_ex + ann[0],
        "dmi": inner_dmi + ann[1],
        "anisotropy": inner_an + ann[2],
    }
    out["total"] = out["exchange"] + out["dmi"] + out["anisotropy"]
    return out


# --- closed forms ------------------------------------------------------------


def disk_energy_closed_form(R: float, a: float, lam: float, eps: float) -> float:
    """Reduced energy of the prototype on ``D_R`` (``eps = inf`` allowed)."""
    if not (R > 0 and a > 0 and eps > 0):
        raise ValueError(f"invalid parameter: need R, a, eps > 0 (got R={R}, a={a}, eps={eps})")
    q = R * R / (R * R + a * a)
    if math.isinf(R):
        q = 1.0
    if math.isinf(eps):
        return 4.0 * math.pi * q
    return 4.0 * math.pi * (1.0 - lam * a / (2.0 * eps)) * q + math.pi * (a / eps) ** 2 * (
        math.log1p((R / a) ** 2) - q
    )


def offset_disk_energy(r: float, z0_mag: float, a: float) -> float:
    """Dirichlet energy of the harmonic bubble of scale ``a`` on ``D_r(z0)``."""
    if not (r > 0 and a > 0 and z0_mag >= 0):
        raise ValueError(f"invalid parameter: need r, a > 0 and |z0| >= 0 (got {r}, {z0_mag}, {a})")
    if math.isinf(r):
        return 4.0 * math.pi
    num = r * r - z0_mag * z0_mag - a * a
    den = math.sqrt((a * a + (r - z0_mag) ** 2) * (a * a + (r + z0_mag) ** 2))
    return 2.0 * math.pi * (1.0 + num / den)


def optimal_upper_bound(lam: float) -> tuple[float, float]:
    """Optimal ``a / eps`` and the leading-order upper bound on the degree -1 energy."""
    if not (0.0 < lam < 1.0):
        raise ValueError(f"invalid λ: {lam} not in (0, 1)")
    L = abs(math.log(lam))
    return lam / (2.0 * L), 4.0 * math.pi * (1.0 - lam * lam / (8.0 * L))


def minimize_trial_energy(lam: float, eps: float, R: float, bracket=None, tol: float = 1e-6):
    """Golden-section search over ``a`` of the full cut-off trial energy at fixed ``R``.

    Without a ``bracket`` one is taken from a coarse log scan around the
    leading-order scale.  Returns ``(a_opt, energy)``.
    """

    def energy(a):
        return cutoff_energy(AnsatzParams(a=a, R_cut=R), lam, eps)["total"]

    if bracket is None:
        a0 = optimal_upper_bound(lam)[0] * eps
        grid = a0 * np.logspace(-2.0, 1.0, 31)
        grid = grid[grid < 0.5 * R]
        vals = [energy(a) for a in grid]
        k = int(np.clip(np.argmin(vals), 1, len(grid) - 2))
        bracket = (grid[k - 1], grid[k], grid[k + 1])
    res = optimize.minimize_scalar(energy, bracket=bracket, method="golden", tol=tol)
    return float(res.x), float(res.fun)


# --- annulus bounds ----------------------------------------------------------


def annulus_bound_check(p: AnsatzParams, samples, step: float = None) -> dict:
    """Empirical constants of the annulus decay bounds of the cut-off field.

    For every sample ``x`` (absolute position) with ``R <= |x - z0| <= 2R``
    computes ``|grad m|^2 |x|^4 / a^2`` and ``m_3^2 |x|^2 / a^2`` with the
    gradient taken by central differences of the analytic map.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    w = x - np.asarray(p.z0)
    s = np.hypot(w[:, 0], w[:, 1])
    R = p.R_cut
    tol = 1e-12 * R
    if np.any((s < R - tol) | (s > 2.0 * R + tol)):
        raise ValueError("out of annulus: samples must satisfy R <= |x - z0| <= 2R")
    dx = step if step is not None else 1e-6 * R
    grad2 = np.zeros(len(x))
    for k in range(2):
        e = np.zeros(2)
        e[k] = dx
        d = (cutoff_field(x + e, p) - cutoff_field(x - e, p)) / (2.0 * dx)
        grad2 += np.sum(d * d, axis=-1)
    m3 = cutoff_field(x, p)[:, 2]
    grad_ratio = grad2 * s**4 / p.a**2
    m3_ratio = m3**2 * s**2 / p.a**2
    return {
        "grad_C": float(grad_ratio.max()),
        "m3_C": float(m3_ratio.max()),
        "C": float(max(grad_ratio.max(), m3_ratio.max())),
        "n_samples": int(len(x)),
    }


def annulus_samples(p: AnsatzParams, count: int, seed: int = 0) -> np.ndarray:
    """Uniform random points in the open annulus ``R < |x - z0| < 2R``."""
    rng = np.random.default_rng(seed)
    R = p.R_cut
    s = np.sqrt(rng.uniform(R * R, 4.0 * R * R, count))
    s = np.clip(s, R * (1 + 1e-9), 2 * R * (1 - 1e-9))
    th = rng.uniform(0.0, 2.0 * np.pi, count)
    return np.asarray(p.z0) + np.stack([s * np.cos(th), s * np.sin(th)], axis=-1)


# --- quadrature cross-checks -------------------------------------------------


def prototype_density(w: np.ndarray, a: float, lam: float, eps: float) -> np.ndarray:
    """Reduced density of the prototype ``f = (w - a) / (w + a)`` (no closed form used)."""
    zc = w[..., 0] + 1j * w[..., 1]
    f = (zc - a) / (zc + a)
    fp = 2.0 * a / (zc + a) ** 2
    u = np.stack([f.real, f.imag], axis=-1)
    Du = np.empty(w.shape[:-1] + (2, 2))
    Du[..., 0, 0], Du[..., 0, 1] = fp.real, -fp.imag
    Du[..., 1, 0], Du[..., 1, 1] = fp.imag, fp.real
    return reduced_density(u, Du, lam, eps).sum(axis=-1)


def disk_energy_quadrature(R: float, a: float, lam: float, eps: float, epsrel: float = 1e-11) -> float:
    """2-D adaptive quadrature of :func:`prototype_density` over ``D_R`` in polar coordinates."""

    def dens(th, s):
        w = np.array([s * math.cos(th), s * math.sin(th)])
        return float(prototype_density(w, a, lam, eps)) * s

    # split at s = a, where the antivortex sits on the ray theta = pi
    cuts = [0.0, min(a, R), R] if a < R else [0.0, R]
    total = 0.0
    for s0, s1 in zip(cuts[:-1], cuts[1:]):
        val, _ = integrate.dblquad(dens, s0, s1, 0.0, 2.0 * math.pi, epsabs=1e-13, epsrel=epsrel)
        total += val
    return total


def offset_disk_quadrature(r: float, z0_mag: float, a: float, epsrel: float = 1e-11) -> float:
    """2-D adaptive quadrature of the bubble density ``4 a^2 / (a^2 + |w|^2)^2`` over ``D_r(z0)``."""

    def dens(th, s):
        x = z0_mag + s * math.cos(th)
        y = s * math.sin(th)
        return 4.0 * a * a / (a * a + x * x + y * y) ** 2 * s

    val, _ = integrate.dblquad(dens, 0.0, r, 0.0, 2.0 * math.pi, epsabs=1e-13, epsrel=epsrel)
    return val


def verification_matrix() -> list:
    """Parameter points for the closed-form checks: 24 disk cases and 24 offset cases."""
    disk = [(R, a, lam, eps) for R in (0.2, 0.4) for a in (0.02, 0.1, 0.3) for lam in (0.0, 0.5) for eps in (0.2, 1.0)]
    offset = [(r, z0, a) for r in (0.1, 0.5, 1.5) for z0 in (0.0, 0.05, 0.3, 1.0) for a in (0.02, 0.2)]
    return [("disk", c) for c in disk] + [("offset", c) for c in offset]


def verify_closed_forms(cases=None) -> list:
    """Closed form vs. quadrature for every case; returns dicts with the relative error."""
    out = []
    for kind, c in cases or verification_matrix():
        if kind == "disk":
            exact, quad = disk_energy_closed_form(*c), disk_energy_quadrature(*c)
        else:
            exact, quad = offset_disk_energy(*c), offset_disk_quadrature(*c)
        out.append({"kind": kind, "params": list(c), "closed_form": exact, "quadrature": quad,
                    "rel_err": abs(exact - quad) / abs(quad)})
    return out

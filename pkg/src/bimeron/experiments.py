"""Sweeps and estimators for the scaling behaviour of minimisers.

* :func:`core_radius` finds the smallest disk (over all lattice centres) that
  carries energy ``delta0^2``.
* :func:`conformal_sweep` and :func:`large_domain_sweep` run the minimiser
  over a list of couplings or anisotropy lengths.
* :func:`neck_energy_profile` measures exchange energy and oscillation on
  annuli around the core.
* :func:`bound_audit` checks sweep rows against the energy bounds.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .ansatz import AnsatzParams, cutoff_field
from .energy import NEAREST, EnergyParams, _bilinear, nodal_gradient_squared
from .grid import DISK, TORUS, DomainGrid, SphereField, make_grid, sample_field
from .minimize import NumericalBlowup, SolveConfig, minimize_s2

SWEEP_SCHEMA = "bimeron-sweep v1"
MIN_CELLS_PER_EPS = 8
UNDER_RESOLVED = "under-resolved"


@dataclass
class CoreReport:
    R_core: float
    x_core: tuple
    core_energy: float
    delta0: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SweepRow:
    lam: float
    eps: float
    total: float
    exchange: float
    m3_sq: float
    R_core: float
    R_core_over_eps: float
    degree: int
    converged: bool
    wall_time: float
    flag: str = ""


SWEEP_FIELDS = [f.name for f in fields(SweepRow)]


# --- core radius -------------------------------------------------------------


def energy_density(field: SphereField, eps: float, stencil: str = NEAREST) -> np.ndarray:
    """Nodal ``e_eps = 1/2 |grad m|^2 + 1/2 (m3/eps)^2``; ``h^2 * sum`` is exchange + anisotropy."""
    g = field.grid
    m3 = field.values[..., 2]
    e = 0.5 * nodal_gradient_squared(field.values, g.h, stencil) + 0.5 * (m3 / eps) ** 2
    if g.kind == DISK:
        e = np.where(g.active_mask, e, 0.0)
    return e


def _offsets(rho_cells: float):
    """Row offsets ``dj`` and half-widths of the lattice disk of radius ``rho_cells``."""
    r = int(math.floor(rho_cells + 1e-9))
    dj = np.arange(-r, r + 1)
    half = np.floor(np.sqrt(np.maximum(rho_cells**2 - dj**2, 0.0)) + 1e-9).astype(int)
    return dj, half


def window_sums(weights: np.ndarray, rho_cells: float, periodic: bool) -> np.ndarray:
    """Sum of ``weights`` over the lattice disk of radius ``rho_cells`` centred at every node.

    Uses prefix sums along ``x``: each disk is a stack of row segments, each
    segment costs two table lookups.
    """
    n = weights.shape[0]
    dj, half = _offsets(rho_cells)
    if periodic:
        pad = int(half.max()) + 1
        w = np.concatenate([weights[-pad:], weights, weights[:pad]], axis=0)
    else:
        pad = int(half.max()) + 1
        w = np.pad(weights, ((pad, pad), (0, 0)))
    csum = np.concatenate([np.zeros((1, n)), np.cumsum(w, axis=0)], axis=0)
    out = np.zeros_like(weights)
    i = np.arange(n) + pad
    for d, hw in zip(dj, half):
        seg = csum[i + hw + 1] - csum[i - hw]  # rows i-hw..i+hw, all columns
        if periodic:
            out += np.roll(seg, -d, axis=1)
        else:
            shifted = np.zeros_like(seg)
            if d >= 0:
                shifted[:, : n - d] = seg[:, d:]
            else:
                shifted[:, -d:] = seg[:, : n + d]
            out += shifted
    return out


def _lattice_radii(max_cells: float) -> np.ndarray:
    """Distinct lattice distances ``sqrt(i^2 + j^2)`` up to ``max_cells``, ascending."""
    m = int(math.ceil(max_cells))
    i, j = np.meshgrid(np.arange(m + 1), np.arange(m + 1))
    d2 = np.unique((i * i + j * j).ravel())
    d = np.sqrt(d2[1:])
    return d[d <= max_cells + 1e-9]


def core_radius(field: SphereField, eps: float, delta0: float = 0.7, stencil: str = NEAREST) -> CoreReport:
    """Smallest lattice radius at which some disk carries energy ``>= delta0^2``.

    Every disk of smaller radius (centred at any node) carries less than
    ``delta0^2``.  Radii are the distinct lattice distances, searched by
    doubling then bisection; the centre search is exhaustive.
    """
    grid = field.grid
    e = energy_density(field, eps, stencil) * grid.h**2
    thr = delta0 * delta0
    if e.sum() < thr:
        raise ValueError(f"no core: total energy {e.sum():.3g} < delta0^2 = {thr:.3g}")
    radii = _lattice_radii(grid.n / 2.0 if grid.periodic else grid.n)

    def best(k):
        s = window_sums(e, radii[k], grid.periodic)
        idx = np.unravel_index(np.argmax(s), s.shape)
        return s[idx], idx

    lo, hi = -1, 0
    while best(hi)[0] < thr:
        lo, hi = hi, min(2 * hi + 1, len(radii) - 1)
        if lo == hi:
            raise ValueError("no core: no disk inside the domain reaches delta0^2")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if best(mid)[0] >= thr:
            hi = mid
        else:
            lo = mid
    val, (i, j) = best(hi)
    return CoreReport(float(radii[hi] * grid.h), (float(grid.x[i]), float(grid.y[j])), float(val), delta0)


# --- sweeps --------------------------------------------------------------------


def default_ansatz(grid: DomainGrid, lam: float, eps: float) -> AnsatzParams:
    """Trial field with the leading-order optimal scale ``a = eps * lam / (2 |ln lam|)``."""
    a = eps * lam / (2.0 * abs(math.log(lam)))
    if grid.kind == DISK:
        return AnsatzParams(a=a, R_cut=0.4)
    R = min(0.24, max(4.0 * a, 0.1))
    return AnsatzParams(a=a, R_cut=R, z0=(0.5, 0.5))


def _run_row(grid, lam, eps, cfg, init=None, stencil=NEAREST, delta0=0.7, keep=None) -> SweepRow:
    t0 = time.perf_counter()
    if init is None:
        p = default_ansatz(grid, lam, eps)
        init = sample_field(grid, lambda z: cutoff_field(z, p), c_phase=p.c_phase if grid.kind == DISK else None)
    try:
        out, rep = minimize_s2(init, EnergyParams(lam, eps, stencil=stencil), cfg)
    except (NumericalBlowup, ValueError) as exc:
        return SweepRow(lam, eps, math.nan, math.nan, math.nan, math.nan, math.nan, 0, False,
                        time.perf_counter() - t0, f"error: {exc}")
    m3_sq = float(grid.h**2 * np.sum(np.where(grid.active_mask, out.values[..., 2], 0.0) ** 2))
    flag = "sector escape" if rep.sector_escape else ""
    try:
        core = core_radius(out, eps, delta0, stencil)
        R = core.R_core
    except ValueError:
        R = math.nan
        flag = (flag + "; no core").strip("; ")
    if keep is not None:
        keep.append((out, rep))
    f = rep.final
    return SweepRow(lam, eps, f.total, f.exchange, m3_sq, R, R / eps, f.degree, rep.converged,
                    time.perf_counter() - t0, flag)


def conformal_sweep(lams: Sequence[float], eps: float, grid: DomainGrid, cfg: SolveConfig,
                    stencil: str = NEAREST, delta0: float = 0.7, keep: Optional[list] = None) -> list:
    """One minimisation per coupling (decreasing), started from the optimal-scale trial field."""
    lams = [float(x) for x in lams]
    if any(not 0 < x < 1 for x in lams) or any(b >= a for a, b in zip(lams, lams[1:])):
        raise ValueError(f"λ list must be decreasing inside (0, 1): {lams}")
    return [_run_row(grid, lam, eps, cfg, stencil=stencil, delta0=delta0, keep=keep) for lam in lams]


def resolvable(eps: float, grid: DomainGrid) -> bool:
    """The anisotropy length must span at least ``MIN_CELLS_PER_EPS`` lattice cells."""
    return eps / grid.h >= MIN_CELLS_PER_EPS


def large_domain_sweep(lam: float, eps_list: Sequence[float], grid: DomainGrid, cfg: SolveConfig,
                       stencil: str = NEAREST, delta0: float = 0.7, keep: Optional[list] = None) -> list:
    """Torus minimisations over decreasing ``eps``; under-resolved rows are flagged, not run."""
    if grid.kind != TORUS:
        raise ValueError("domain mismatch: the large-domain sweep runs on the torus")
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError(f"ε list must be decreasing: {eps_list}")
    rows = []
    for eps in eps_list:
        if not resolvable(eps, grid):
            rows.append(SweepRow(lam, eps, math.nan, math.nan, math.nan, math.nan, math.nan, 0, False, 0.0,
                                 UNDER_RESOLVED))
            if keep is not None:
                keep.append(None)
            continue
        rows.append(_run_row(grid, lam, eps, cfg, stencil=stencil, delta0=delta0, keep=keep))
    return rows


def ratio_spread(rows: Sequence[SweepRow]) -> tuple[float, float]:
    """(min, max) of ``R_core / eps`` over usable rows."""
    r = [row.R_core_over_eps for row in rows if not row.flag and math.isfinite(row.R_core_over_eps)]
    return (min(r), max(r)) if r else (math.nan, math.nan)


def core_profile_distance(field_a: SphereField, core_a: CoreReport, field_b: SphereField, core_b: CoreReport,
                          extent: float = 2.0, samples: int = 64) -> float:
    """Relative L2 distance of two cores after blow-up by their core radii.

    Both fields are sampled bilinearly at ``x_core + R_core * y`` for ``y`` on
    a ``samples x samples`` grid covering ``|y| <= extent``; the in-plane
    phase of ``b`` is aligned to ``a`` at infinity (mean in-plane direction).
    """
    t = np.linspace(-extent, extent, samples)
    Y = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    inside = np.hypot(Y[:, 0], Y[:, 1]) <= extent
    Y = Y[inside]

    def blow(f, c):
        g = f.grid
        pts = np.asarray(c.x_core) + c.R_core * Y
        if g.periodic:
            pts = np.mod(pts, 1.0)
        return _bilinear(f.values, g, pts)

    A, B = blow(field_a, core_a), blow(field_b, core_b)
    A /= np.linalg.norm(A, axis=-1, keepdims=True)
    B /= np.linalg.norm(B, axis=-1, keepdims=True)
    return float(np.sqrt(np.sum((A - B) ** 2) / np.sum(A * A)))


# --- neck energy ---------------------------------------------------------------


@dataclass
class NeckRow:
    r_in: float
    r_out: float
    energy: float
    oscillation: float


def _max_pairwise_angle(v: np.ndarray, chunk: int = 2048) -> float:
    if len(v) < 2:
        return 0.0
    lo = 1.0
    for s in range(0, len(v), chunk):
        lo = min(lo, float(np.min(v[s:s + chunk] @ v.T)))
    return float(math.acos(max(-1.0, min(1.0, lo))))


def neck_energy_profile(field, x_core, radii: Sequence[float], stencil: str = NEAREST,
                        n_theta: int = 512, epsrel: float = 1e-10) -> list:
    """Annular exchange energies ``1/2 int_{rho_i < |x - x_core| < rho_{i+1}} |grad m|^2``.

    ``field`` is either a ``SphereField`` (lattice estimate: nodal energy
    density summed over nodes in each annulus, so annuli telescope exactly)
    or a vectorised pointwise map ``z -> m(z)`` (adaptive quadrature in the
    radius, periodic trapezoid in the angle, central differences of step
    ``1e-6`` for the gradient).  The oscillation column is the largest
    geodesic distance between two field values in the annulus.
    """
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 2 or np.any(np.diff(radii) <= 0) or radii[0] < 0:
        raise ValueError("radii out of range: need at least two increasing non-negative radii")
    x_core = np.asarray(x_core, dtype=float)
    if callable(field):
        return _neck_quadrature(field, x_core, radii, n_theta, epsrel)
    grid = field.grid
    if grid.periodic:
        if radii[-1] > 0.5:
            raise ValueError("radii out of range: annuli exceed half the torus side")
        d = grid.points() - x_core
        d -= np.round(d)
    else:
        if np.hypot(*x_core) + radii[-1] > 1.0 + 1e-12:
            raise ValueError("radii out of range: annuli leave the disk")
        d = grid.points() - x_core
    dist = np.hypot(d[..., 0], d[..., 1])
    dens = 0.5 * nodal_gradient_squared(field.values, grid.h, stencil) * grid.h**2
    rows = []
    for r0, r1 in zip(radii[:-1], radii[1:]):
        sel = (dist >= r0) & (dist < r1) & grid.active_mask
        rows.append(NeckRow(float(r0), float(r1), float(dens[sel].sum()), _max_pairwise_angle(field.values[sel])))
    return rows


def _neck_quadrature(fmap: Callable, x0: np.ndarray, radii: np.ndarray, n_theta: int, epsrel: float) -> list:
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
    step = 1e-6

    def ring(r):
        pts = x0 + r * dirs
        ex = np.array([step, 0.0])
        ey = np.array([0.0, step])
        gx = (fmap(pts + ex) - fmap(pts - ex)) / (2 * step)
        gy = (fmap(pts + ey) - fmap(pts - ey)) / (2 * step)
        return 0.5 * float(np.mean(np.sum(gx * gx + gy * gy, axis=-1))) * 2.0 * np.pi * r

    rows = []
    for r0, r1 in zip(radii[:-1], radii[1:]):
        val, _ = integrate.quad(ring, r0, r1, epsrel=epsrel, epsabs=1e-13, limit=200)
        rr = np.linspace(r0, r1, 16)
        vals = fmap((x0 + rr[:, None, None] * dirs[None]).reshape(-1, 2))
        vals = vals / np.linalg.norm(vals, axis=-1, keepdims=True)
        rows.append(NeckRow(float(r0), float(r1), float(val), _max_pairwise_angle(vals)))
    return rows


# --- bound audit ------------------------------------------------------------------


def upper_bound_slack(lam: float, h: float) -> float:
    """Finite-coupling, finite-grid slack for the asymptotic upper bound."""
    return 0.05 * lam * lam / abs(math.log(lam)) + 10.0 * h * h


def bound_audit(rows: Sequence[SweepRow], h: float, lower_slack: float = 0.0) -> dict:
    """Check each row against the lower bounds and, for ``lam <= 0.2``, the upper bound."""
    entries = []
    for row in rows:
        checks = {}
        if not math.isfinite(row.total):
            entries.append({"lam": row.lam, "eps": row.eps, "skipped": row.flag or "no data", "passed": True})
            continue
        lam = abs(row.lam)
        anis = row.m3_sq / (2.0 * row.eps**2)
        checks["topological_lower"] = row.total >= 4 * math.pi * (1 - lam * lam) * abs(row.degree) - lower_slack
        checks["coercive_lower"] = row.total >= (1 - lam) * (row.exchange + anis) - lower_slack
        if 0 < lam <= 0.2 and abs(row.degree) == 1:
            ub = 4 * math.pi * (1 - lam * lam / (8 * abs(math.log(lam)))) + upper_bound_slack(lam, h)
            checks["upper"] = row.total <= ub
        entries.append({"lam": row.lam, "eps": row.eps, "checks": checks, "passed": all(checks.values())})
    return {"passed": all(e["passed"] for e in entries), "entries": entries}


# --- writers ------------------------------------------------------------------------


def write_sweep_csv(path, rows: Sequence[SweepRow], config: Optional[dict] = None) -> Path:
    """CSV with a ``# schema`` line, an optional ``# config`` JSON line, then a fixed header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema: {SWEEP_SCHEMA}\n")
        if config is not None:
            fh.write("# config: " + json.dumps(config, sort_keys=True, default=str) + "\n")
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(row).items()})
    return path


def read_sweep_csv(path) -> list:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for d in csv.DictReader(lines):
        out.append(SweepRow(
            lam=float(d["lam"]), eps=float(d["eps"]), total=float(d["total"]), exchange=float(d["exchange"]),
            m3_sq=float(d["m3_sq"]), R_core=float(d["R_core"]), R_core_over_eps=float(d["R_core_over_eps"]),
            degree=int(d["degree"]), converged=d["converged"] == "True", wall_time=float(d["wall_time"]),
            flag=d["flag"],
        ))
    return out


def write_json(path, obj, config: Optional[dict] = None) -> Path:
    path = Path(path)
    payload = dict(obj) if isinstance(obj, dict) else {"data": obj}
    if config is not None:
        payload["config"] = config
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))
    return path


def _jsonable(o):
    if isinstance(o, (np.generic,)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    return str(o)

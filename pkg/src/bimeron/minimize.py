"""Sphere- and circle-constrained descent for the discrete energies.

Iterates ``m <- normalize(m - tau * g)`` where ``g`` is the tangent-projected
exact gradient.  The default step rule alternates the two Barzilai-Borwein
lengths and backtracks (Armijo) until the energy decreases, so the recorded
energy history is non-increasing.  ``step_rule="fixed"`` gives a plain
explicit heat-flow discretisation with step ``tau``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .energy import (
    EnergyBreakdown,
    EnergyParams,
    _bilinear,
    _check_s2,
    _projected_gradient_s2,
    _terms_s2,
    energy_s1,
    energy_s2,
    exchange_energy,
    lattice_degree,
)
from .grid import DISK, CircleField, SphereField, make_grid, pin, save_field

BB = "bb"
FIXED = "fixed"


class NumericalBlowup(FloatingPointError):
    pass


@dataclass(frozen=True)
class SolveConfig:
    """Stopping and step-size settings.

    ``tol`` bounds the sup-norm of the projected discrete gradient; ``None``
    means ``1e-8 * max(1, initial grad_sup)``.
    """

    max_iters: int = 20000
    tol: Optional[float] = None
    step_rule: str = BB
    tau: float = 0.1
    degree_check_every: int = 50
    seed: int = 0
    armijo_c: float = 1e-4
    max_backtracks: int = 60
    snapshot_every: int = 0
    snapshot_dir: Optional[str] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"invalid solve config: max_iters={self.max_iters} < 1")
        if self.tol is not None and not self.tol > 0:
            raise ValueError(f"invalid solve config: tol={self.tol} must be > 0")
        if self.step_rule not in (BB, FIXED):
            raise ValueError(f"invalid solve config: step_rule {self.step_rule!r} not in {(BB, FIXED)}")
        if not self.tau > 0:
            raise ValueError(f"invalid solve config: tau={self.tau} must be > 0")
        if self.degree_check_every < 1:
            raise ValueError("invalid solve config: degree_check_every must be >= 1")

    def resolved_tol(self, grad_sup0: float) -> float:
        return self.tol if self.tol is not None else 1e-8 * max(1.0, grad_sup0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MinimizeReport:
    final: EnergyBreakdown
    iters: int
    converged: bool
    tol: float
    energy_history: list = field(default_factory=list)
    degree_history: list = field(default_factory=list)
    sector_escape: bool = False
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def flags(self) -> list:
        return ["sector escape"] if self.sector_escape else []

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = self.flags
        return d

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True, default=float)


def _descend(
    v0: np.ndarray,
    free: np.ndarray,
    evaluate: Callable[[np.ndarray], tuple[float, np.ndarray]],
    degree: Callable[[np.ndarray], object],
    cfg: SolveConfig,
    snapshot: Optional[Callable[[np.ndarray, int], None]] = None,
):
    """Shared projected-gradient loop; returns (v, iters, converged, tol, E-history, Q-history, escaped)."""
    v = v0.copy()
    E, g = evaluate(v)
    if not math.isfinite(E):
        raise NumericalBlowup("numerical blowup: non-finite initial energy")
    gsup = float(np.max(np.linalg.norm(g, axis=-1)))
    tol = cfg.resolved_tol(gsup)
    q0 = degree(v)
    e_hist, q_hist = [E], [q0]
    escaped = False
    tau = cfg.tau
    it = 0
    converged = gsup <= tol
    while not converged and it < cfg.max_iters:
        it += 1
        gg = float(np.sum(g * g))
        for _ in range(cfg.max_backtracks + 1):
            w = v.copy()
            step = v[free] - tau * g[free]
            w[free] = step / np.linalg.norm(step, axis=-1, keepdims=True)
            E_new, g_new = evaluate(w)
            if not math.isfinite(E_new):
                if cfg.step_rule == FIXED:
                    raise NumericalBlowup(f"numerical blowup at iteration {it}")
                tau *= 0.5
                continue
            if cfg.step_rule == FIXED or E_new <= E - cfg.armijo_c * tau * gg:
                break
            tau *= 0.5
        else:
            # no acceptable step left: we are at the floating-point floor
            break
        if cfg.step_rule == BB:
            s = w - v
            y = g_new - g
            sy = float(np.sum(s * y))
            if sy > 0:
                tau = float(np.sum(s * s)) / sy if it % 2 else sy / float(np.sum(y * y))
            else:
                tau = cfg.tau
        v, E, g = w, E_new, g_new
        e_hist.append(E)
        gsup = float(np.max(np.linalg.norm(g, axis=-1)))
        converged = gsup <= tol
        if it % cfg.degree_check_every == 0 or converged:
            q = degree(v)
            q_hist.append(q)
            if q != q0:
                escaped = True
        if snapshot is not None and cfg.snapshot_every and it % cfg.snapshot_every == 0:
            snapshot(v, it)
    return v, it, converged, tol, e_hist, q_hist, escaped


def minimize_s2(init: SphereField, p: EnergyParams, cfg: SolveConfig = SolveConfig()):
    """Minimise ``energy_s2`` from ``init``; returns ``(field, MinimizeReport)``.

    A change of lattice degree during the run sets ``sector_escape`` but does
    not stop the run.
    """
    _check_s2(init, p)
    grid = init.grid
    def evaluate(v):
        return sum(_terms_s2(v, grid, p)), _projected_gradient_s2(v, grid, p)

    def degree(v):
        return lattice_degree(SphereField(grid, v, init.c_phase), strict=False)[0]

    snapshot = _snapshotter(cfg, lambda v: SphereField(grid, v, init.c_phase), {"params": asdict(p)})
    t0 = time.perf_counter()
    v, it, conv, tol, eh, qh, esc = _descend(init.values, grid.free_mask, evaluate, degree, cfg, snapshot)
    out = SphereField(grid, v, init.c_phase)
    final = energy_s2(out, p)
    rep = MinimizeReport(final, it, conv, tol, eh, qh, esc, time.perf_counter() - t0)
    return out, rep


def winding_numbers(field: CircleField) -> tuple[int, int]:
    """Lattice winding ``(k, l)`` of the phase along the first column and row."""
    phi = np.arctan2(field.values[..., 1], field.values[..., 0])

    def wind(line):
        d = np.diff(np.append(line, line[0]))
        return int(round(np.sum((d + np.pi) % (2 * np.pi) - np.pi) / (2 * np.pi)))

    return wind(phi[:, 0]), wind(phi[0, :])


def distance_to_constant(field: CircleField) -> float:
    """Max geodesic distance to the normalised mean direction (inf if the mean vanishes)."""
    m = field.values
    c = m.reshape(-1, 2).mean(axis=0)
    nc = np.linalg.norm(c)
    if nc == 0:
        return math.inf
    c = c / nc
    cross = m[..., 0] * c[1] - m[..., 1] * c[0]
    dot = m[..., 0] * c[0] + m[..., 1] * c[1]
    return float(np.max(np.arctan2(np.abs(cross), dot)))


def minimize_s1(init: CircleField, lam: float, cfg: SolveConfig = SolveConfig(), stencil: str = "nn"):
    """Descent on the easy-plane functional; report carries Dirichlet energy and distance to a constant."""
    grid = init.grid
    energy_s1(init, lam, stencil)  # validates domain and coercivity

    def evaluate(v):
        return energy_s1(CircleField(grid, v), lam, stencil)

    def degree(v):
        return list(winding_numbers(CircleField(grid, v)))

    snapshot = _snapshotter(cfg, lambda v: CircleField(grid, v), {"lam": lam})
    t0 = time.perf_counter()
    v, it, conv, tol, eh, qh, esc = _descend(init.values, grid.free_mask, evaluate, degree, cfg, snapshot)
    out = CircleField(grid, v)
    E, g = energy_s1(out, lam, stencil)
    ex = exchange_energy(v, stencil)
    final = EnergyBreakdown(
        exchange=float(ex),
        dmi=float(E - ex),
        anisotropy=0.0,
        total=float(E),
        degree=0,
        degree_real=0.0,
        grad_sup=float(np.max(np.linalg.norm(g, axis=-1))),
    )
    extras = {
        "dirichlet_energy": 2.0 * float(ex),
        "distance_to_constant": distance_to_constant(out),
        "winding": list(winding_numbers(out)),
    }
    rep = MinimizeReport(final, it, conv, tol, eh, qh, esc, time.perf_counter() - t0, extras)
    return out, rep


def perturb(field, magnitude: float, seed: int = 0):
    """Add tangent noise of sup-norm ``magnitude`` and renormalise (Dirichlet nodes untouched).

    The lattice degree cannot change as long as ``magnitude`` is small against
    the angles between neighbouring nodes and the distance of every lattice
    triangle from degeneracy; for smooth fields at the resolutions used here
    ``magnitude <= 0.05`` is safe, which callers can confirm with
    ``lattice_degree``.
    """
    if magnitude < 0:
        raise ValueError(f"invalid magnitude {magnitude} < 0")
    out = field.copy()
    if magnitude == 0:
        return out
    rng = np.random.default_rng(seed)
    v = out.values
    free = field.grid.free_mask
    noise = rng.normal(size=v.shape)
    noise -= np.sum(noise * v, axis=-1, keepdims=True) * v
    noise[~free] = 0.0
    nmax = np.max(np.linalg.norm(noise, axis=-1))
    if nmax > 0:
        noise *= magnitude / nmax
    w = v[free] + noise[free]
    v[free] = w / np.linalg.norm(w, axis=-1, keepdims=True)
    return out


def prolong(field, n: int):
    """Bilinear transfer of ``field`` to an ``n``-node grid of the same kind (warm start for refinement)."""
    grid = make_grid(field.grid.kind, n)
    pts = grid.points().reshape(-1, 2)
    v = _bilinear(field.values, field.grid, pts).reshape(n, n, -1)
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    if isinstance(field, CircleField):
        return CircleField(grid, v)
    return pin(SphereField(grid, v, field.c_phase))


def _snapshotter(cfg: SolveConfig, wrap, meta: dict):
    if not (cfg.snapshot_every and cfg.snapshot_dir):
        return None
    d = Path(cfg.snapshot_dir)
    d.mkdir(parents=True, exist_ok=True)

    def snap(v, it):
        save_field(d / f"iter_{it:07d}.field", wrap(v.copy()), {"iteration": it, "solve": cfg.to_dict(), **meta})

    return snap

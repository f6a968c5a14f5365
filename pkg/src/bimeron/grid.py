"""Lattice domains and the S2 / S1 field containers.

Two domains are supported:

* ``Disk``: the square ``[-1, 1]^2`` sampled with ``n`` nodes per side and
  masked to the closed unit disk.  Nodes on the staircase rim carry the
  Dirichlet value ``(cos c, sin c, 0)``.  Inactive nodes (outside the disk)
  store the same rim value, so every finite-difference stencil can run on the
  full array without special cases.
* ``Torus``: the periodic unit square ``[0, 1)^2`` with ``n`` nodes per side.

Arrays are indexed ``values[i, j]`` with ``i`` running along ``x`` and ``j``
along ``y``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

DISK = "Disk"
TORUS = "Torus"
KINDS = (DISK, TORUS)

FIELD_MAGIC = "BIMERON-FIELD v1"


@dataclass(frozen=True, eq=False)
class DomainGrid:
    kind: str
    n: int
    h: float
    active_mask: np.ndarray
    boundary_mask: np.ndarray
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    @property
    def periodic(self) -> bool:
        return self.kind == TORUS

    @property
    def free_mask(self) -> np.ndarray:
        """Nodes whose values are unknowns (active and not pinned)."""
        return self.active_mask & ~self.boundary_mask

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def side(self) -> float:
        return 2.0 if self.kind == DISK else 1.0

    @property
    def center(self) -> np.ndarray:
        return np.zeros(2) if self.kind == DISK else np.full(2, 0.5)

    @property
    def radius(self) -> float:
        """Domain radius: 1 for the disk, half the side for the torus."""
        return 1.0 if self.kind == DISK else 0.5

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(n, n, 2)``."""
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat index pairs of the unordered nearest-neighbour edges.

        Torus: every node links to its ``+x`` and ``+y`` neighbour (with wrap),
        giving ``2 n^2`` edges.  Disk: only edges joining two active nodes.
        """
        n = self.n
        idx = np.arange(n * n).reshape(n, n)
        if self.periodic:
            a = np.concatenate([idx.ravel(), idx.ravel()])
            b = np.concatenate([np.roll(idx, -1, axis=0).ravel(), np.roll(idx, -1, axis=1).ravel()])
            return a, b
        act = self.active_mask
        ex = act[:-1, :] & act[1:, :]
        ey = act[:, :-1] & act[:, 1:]
        a = np.concatenate([idx[:-1, :][ex], idx[:, :-1][ey]])
        b = np.concatenate([idx[1:, :][ex], idx[:, 1:][ey]])
        return a, b

    def metadata(self) -> dict:
        return {"kind": self.kind, "n": self.n, "h": self.h, "active_nodes": int(self.active_mask.sum())}


def make_grid(kind: str, n: int) -> DomainGrid:
    """Build a disk or torus lattice with ``n`` nodes per side."""
    kind = _normalize_kind(kind)
    n = int(n)
    if n < 8:
        raise ValueError(f"grid too coarse: n={n} < 8")
    if kind == TORUS:
        h = 1.0 / n
        x = np.arange(n) * h
        active = np.ones((n, n), dtype=bool)
        boundary = np.zeros((n, n), dtype=bool)
        return DomainGrid(TORUS, n, h, active, boundary, x, x.copy())

    h = 2.0 / (n - 1)
    x = -1.0 + np.arange(n) * h
    # integer arithmetic keeps the masks exactly dihedrally symmetric
    k = 2 * np.arange(n) - (n - 1)
    r2 = k[:, None] ** 2 + k[None, :] ** 2
    active = r2 <= (n - 1) ** 2
    padded = np.pad(active, 1, constant_values=False)
    all_nb = np.ones_like(active)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            all_nb &= padded[1 + di:1 + di + n, 1 + dj:1 + dj + n]
    # |x| >= 1 - h  <=>  r2 >= (n - 3)^2
    boundary = active & (~all_nb | (r2 >= (n - 3) ** 2))
    return DomainGrid(DISK, n, h, active, boundary, x, x.copy())


def _normalize_kind(kind: str) -> str:
    for k in KINDS:
        if str(kind).lower() == k.lower():
            return k
    raise ValueError(f"unknown domain kind {kind!r}; expected one of {KINDS}")


def phase_vector(c_phase: float) -> np.ndarray:
    return np.array([np.cos(c_phase), np.sin(c_phase), 0.0])


@dataclass(eq=False)
class SphereField:
    """Unit 3-vector per node.  ``c_phase`` is the Dirichlet phase (Disk only)."""

    grid: DomainGrid
    values: np.ndarray
    c_phase: Optional[float] = None

    @property
    def rim(self) -> Optional[np.ndarray]:
        if self.grid.kind != DISK:
            return None
        return phase_vector(self.c_phase or 0.0)

    def copy(self) -> "SphereField":
        return SphereField(self.grid, self.values.copy(), self.c_phase)

    def check(self, tol: float = 1e-12) -> None:
        """Raise ``ValueError`` if a stored invariant is violated."""
        g = self.grid
        if self.values.shape != (g.n, g.n, 3):
            raise ValueError(f"field shape {self.values.shape} does not match grid")
        norm = np.linalg.norm(self.values[g.active_mask], axis=-1)
        if not np.all(np.abs(norm - 1.0) <= tol):
            raise ValueError("field is not unit length at every active node")
        if g.kind == DISK:
            pinned = ~g.free_mask
            if not np.array_equal(self.values[pinned], np.broadcast_to(self.rim, self.values[pinned].shape)):
                raise ValueError("Dirichlet nodes do not carry the rim value")


@dataclass(eq=False)
class CircleField:
    """Unit 2-vector per node of a torus."""

    grid: DomainGrid
    values: np.ndarray

    def __post_init__(self):
        if self.grid.kind != TORUS:
            raise ValueError("circle fields live on the torus only")

    def copy(self) -> "CircleField":
        return CircleField(self.grid, self.values.copy())

    def check(self, tol: float = 1e-12) -> None:
        norm = np.linalg.norm(self.values, axis=-1)
        if not np.all(np.abs(norm - 1.0) <= tol):
            raise ValueError("circle field is not unit length")

    @classmethod
    def from_phase(cls, grid: DomainGrid, phi: np.ndarray) -> "CircleField":
        return cls(grid, np.stack([np.cos(phi), np.sin(phi)], axis=-1))


def normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def pin(field: SphereField) -> SphereField:
    """Overwrite every non-free Disk node with the rim value (in place)."""
    if field.grid.kind == DISK:
        field.values[~field.grid.free_mask] = field.rim
    return field


def sample_field(
    grid: DomainGrid,
    pointwise_map: Callable[[np.ndarray], np.ndarray],
    c_phase: Optional[float] = None,
) -> SphereField:
    """Evaluate ``pointwise_map`` on all nodes and pack it as a ``SphereField``.

    ``pointwise_map`` is vectorised: it receives an ``(..., 2)`` array of node
    positions and returns ``(..., 3)`` directions, which are renormalised.
    On the disk the rim (and the inactive exterior) is overwritten with
    ``(cos c_phase, sin c_phase, 0)``; ``c_phase`` defaults to 0 there.
    """
    pts = grid.points()
    v = np.asarray(pointwise_map(pts), dtype=float)
    if v.shape != (grid.n, grid.n, 3):
        raise ValueError(f"pointwise map returned shape {v.shape}, expected {(grid.n, grid.n, 3)}")
    norm = np.linalg.norm(v, axis=-1)
    bad = grid.active_mask & ~(norm > 0)
    if grid.kind == DISK:
        bad &= grid.free_mask
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"undefined direction at node ({i}, {j})")
    with np.errstate(invalid="ignore", divide="ignore"):
        v = v / norm[..., None]
    if grid.kind == DISK:
        f = SphereField(grid, v, 0.0 if c_phase is None else float(c_phase))
        return pin(f)
    return SphereField(grid, v, None)


def constant_field(grid: DomainGrid, c_phase: float = 0.0) -> SphereField:
    v = np.broadcast_to(phase_vector(c_phase), (grid.n, grid.n, 3)).copy()
    return SphereField(grid, v, c_phase if grid.kind == DISK else None)


# --- snapshot I/O -----------------------------------------------------------


def save_field(path, field, metadata: Optional[dict] = None) -> Path:
    """Write a ``BIMERON-FIELD v1`` text snapshot plus a JSON sidecar.

    The sidecar lives at ``<path>.json`` and records the grid, the Dirichlet
    phase and whatever ``metadata`` the caller passes (energy parameters,
    resolved run configuration).
    """
    path = Path(path)
    g = field.grid
    comps = field.values.shape[-1]
    idx = np.argwhere(g.active_mask)
    vals = field.values[g.active_mask]
    lines = [FIELD_MAGIC, f"{g.kind} {g.n} {g.h!r} {comps}"]
    fmt = " ".join(["%.17g"] * comps)
    for (i, j), v in zip(idx, vals):
        lines.append(f"{i} {j} " + fmt % tuple(v))
    path.write_text("\n".join(lines) + "\n")
    side = {
        "format": FIELD_MAGIC,
        "grid": g.metadata(),
        "components": comps,
        "c_phase": getattr(field, "c_phase", None),
    }
    side.update(metadata or {})
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True, default=_json_default))
    return path


def load_field(path):
    """Inverse of :func:`save_field`; returns ``(field, sidecar_dict)``."""
    path = Path(path)
    with path.open() as fh:
        magic = fh.readline().strip()
        if magic != FIELD_MAGIC:
            raise ValueError(f"not a bimeron field file (header {magic!r})")
        kind, n, _h, comps = fh.readline().split()
        data = np.loadtxt(fh, ndmin=2)
    grid = make_grid(kind, int(n))
    comps = int(comps)
    sidecar_path = Path(str(path) + ".json")
    side = json.loads(sidecar_path.read_text()) if sidecar_path.exists() else {}
    ij = data[:, :2].astype(int)
    if comps == 2:
        values = np.zeros((grid.n, grid.n, 2))
        values[ij[:, 0], ij[:, 1]] = data[:, 2:]
        return CircleField(grid, values), side
    c_phase = side.get("c_phase")
    if grid.kind == DISK and c_phase is None:
        c_phase = 0.0
    values = np.empty((grid.n, grid.n, 3))
    if grid.kind == DISK:
        values[:] = phase_vector(c_phase)
    values[ij[:, 0], ij[:, 1]] = data[:, 2:]
    return SphereField(grid, values, c_phase if grid.kind == DISK else None), side


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")

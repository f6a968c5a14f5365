"""Command-line entry point: ``bimeron <command> [--config FILE] [flags]``.

The config file (YAML, flat ``key: value`` pairs) is the source of truth and
command-line flags override it.  Every artifact embeds the fully resolved
config.  Exit codes: 0 success, 1 error, 2 the run finished but its audit
(energy bracket, bound checks, closed-form tolerance) failed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from . import __version__
from .ansatz import AnsatzParams, cutoff_energy, cutoff_field, verify_closed_forms
from .energy import NEAREST, STENCILS, EnergyParams, energy_s2
from .experiments import (
    bound_audit,
    conformal_sweep,
    core_radius,
    default_ansatz,
    large_domain_sweep,
    neck_energy_profile,
    ratio_spread,
    write_json,
    write_sweep_csv,
)
from .grid import DISK, TORUS, SphereField, load_field, make_grid, sample_field, save_field
from .minimize import SolveConfig, minimize_s2, perturb

COMMANDS = ("ansatz", "energy", "minimize", "sweep-conformal", "sweep-eps", "verify", "neck")
THREADS_ENV = "BIMERON_THREADS"
VERIFY_TOL = 1e-6
FOUR_PI = 4.0 * math.pi


@dataclass
class RunConfig:
    command: str = "energy"
    domain: Optional[str] = None  # None: from --input, else Disk
    n: Optional[int] = None  # None: from --input, else 128
    lam: float = 0.5
    eps: float = 0.2
    stencil: str = NEAREST
    a: Optional[float] = None  # None: optimal-scale default
    R_cut: Optional[float] = None
    c_phase: float = 0.0
    z0: Optional[list] = None
    max_iters: int = 20000
    tol: Optional[float] = None
    step_rule: str = "bb"
    tau: float = 0.1
    snapshot_every: int = 0
    noise: float = 0.0
    seed: int = 0
    input: Optional[str] = None
    out_dir: str = "runs"
    threads: int = 1
    lams: list = field(default_factory=lambda: [0.4, 0.3, 0.2])
    eps_list: list = field(default_factory=lambda: [0.1, 0.07, 0.05])
    delta0: float = 0.7
    radii: Optional[list] = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if self.stencil not in STENCILS:
            raise ValueError(f"unknown exchange stencil {self.stencil!r}")
        if self.threads < 1:
            raise ValueError(f"invalid threads={self.threads}")
        if self.input and (self.domain is None or self.n is None):
            src, _ = load_field(self.input)
            self.domain = self.domain or src.grid.kind
            self.n = self.n or src.grid.n
        self.domain = make_grid(self.domain or DISK, 8).kind
        self.n = int(self.n or 128)
        if self.command == "sweep-eps" and self.domain != TORUS:
            raise ValueError("domain mismatch: sweep-eps runs on the torus")
        if self.command in ("energy", "minimize", "ansatz", "neck"):
            EnergyParams(self.lam, self.eps, domain=self.domain, stencil=self.stencil)
        SolveConfig(**self.solve_kwargs())

    def solve_kwargs(self) -> dict:
        return dict(max_iters=self.max_iters, tol=self.tol, step_rule=self.step_rule, tau=self.tau,
                    seed=self.seed, snapshot_every=self.snapshot_every,
                    snapshot_dir=str(Path(self.out_dir) / "snapshots") if self.snapshot_every else None)

    def to_dict(self) -> dict:
        return asdict(self)


VALID_KEYS = tuple(f.name for f in fields(RunConfig))


def load_config(path) -> dict:
    """Read a flat YAML mapping; unknown keys are an error listing the valid ones."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must be a key: value mapping")
    check_keys(data)
    return data


def check_keys(data: dict) -> None:
    bad = sorted(set(data) - set(VALID_KEYS))
    if bad:
        raise ValueError(f"unknown config key(s) {', '.join(bad)}; valid keys: {', '.join(VALID_KEYS)}")


def _floats(text: str) -> list:
    return [float(t) for t in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bimeron", description="Chiral bimeron energies, minimisers and sweeps.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="YAML file of key: value pairs")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override any config key (repeatable)")
    ap.add_argument("--domain", choices=["disk", "torus", DISK, TORUS])
    ap.add_argument("--n", type=int)
    ap.add_argument("--lambda", dest="lam", type=float)
    ap.add_argument("--eps", type=float)
    ap.add_argument("--stencil", choices=sorted(STENCILS))
    ap.add_argument("--a", type=float)
    ap.add_argument("--R-cut", dest="R_cut", type=float)
    ap.add_argument("--c-phase", dest="c_phase", type=float)
    ap.add_argument("--z0", type=_floats)
    ap.add_argument("--max-iters", dest="max_iters", type=int)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--step-rule", dest="step_rule", choices=["bb", "fixed"])
    ap.add_argument("--tau", type=float)
    ap.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    ap.add_argument("--noise", type=float)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--input", help="field file (BIMERON-FIELD) to start from or evaluate")
    ap.add_argument("--out-dir", dest="out_dir")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--lams", type=_floats, help="comma-separated couplings for sweep-conformal")
    ap.add_argument("--eps-list", dest="eps_list", type=_floats, help="comma-separated eps for sweep-eps")
    ap.add_argument("--delta0", type=float)
    ap.add_argument("--radii", type=_floats, help="annulus radii for neck")
    return ap


def resolve_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values: dict = {}
    env = os.environ.get(THREADS_ENV)
    if env:
        values["threads"] = int(env)
    if args.config:
        values.update(load_config(args.config))
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        check_keys({key: None})
        values[key] = yaml.safe_load(raw)
    for key in VALID_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values["command"] = args.command
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# --- commands ---------------------------------------------------------------


def _ansatz_params(cfg: RunConfig, grid) -> AnsatzParams:
    d = default_ansatz(grid, cfg.lam, cfg.eps) if 0 < cfg.lam < 1 else AnsatzParams(0.1, 0.4, z0=tuple(grid.center))
    return AnsatzParams(
        a=cfg.a if cfg.a is not None else d.a,
        R_cut=cfg.R_cut if cfg.R_cut is not None else d.R_cut,
        c_phase=cfg.c_phase,
        z0=tuple(cfg.z0) if cfg.z0 is not None else d.z0,
    )


def _initial_field(cfg: RunConfig):
    if cfg.input:
        f, _ = load_field(cfg.input)
        if not isinstance(f, SphereField):
            raise ValueError("domain mismatch: expected an S2 field file")
        if f.grid.kind != cfg.domain or f.grid.n != cfg.n:
            raise ValueError(f"domain mismatch: input is {f.grid.kind} n={f.grid.n}, config says {cfg.domain} n={cfg.n}")
        return f, None
    grid = make_grid(cfg.domain, cfg.n)
    p = _ansatz_params(cfg, grid)
    if grid.kind == DISK:
        p.check_disk()
    f = sample_field(grid, lambda z: cutoff_field(z, p), c_phase=p.c_phase if grid.kind == DISK else None)
    return f, p


def _params(cfg: RunConfig) -> EnergyParams:
    return EnergyParams(cfg.lam, cfg.eps, domain=cfg.domain, stencil=cfg.stencil)


def cmd_ansatz(cfg: RunConfig, out: Path, meta: dict) -> tuple[int, str]:
    f, p = _initial_field(cfg)
    br = energy_s2(f, _params(cfg))
    cont = cutoff_energy(p, cfg.lam, cfg.eps) if p is not None else None
    save_field(out / "ansatz.field", f, meta)
    write_json(out / "ansatz.json", {"ansatz": asdict(p) if p else None, "discrete": br.to_dict(),
                                      "continuum": cont, "grid": f.grid.metadata()}, meta)
    return 0, f"ansatz: discrete total {br.total:.8f}, degree {br.degree}" + (
        f", continuum total {cont['total']:.8f}" if cont else "")


def cmd_energy(cfg: RunConfig, out: Path, meta: dict) -> tuple[int, str]:
    f, _ = _initial_field(cfg)
    br = energy_s2(f, _params(cfg))
    (out / "energy.json").write_text(br.to_json(f.grid, config=meta))
    return 0, (f"energy: total {br.total:.10g} (exchange {br.exchange:.6g}, dmi {br.dmi:.6g}, "
               f"anisotropy {br.anisotropy:.6g}), degree {br.degree}")


def cmd_minimize(cfg: RunConfig, out: Path, meta: dict) -> tuple[int, str]:
    f, _ = _initial_field(cfg)
    if cfg.noise:
        f = perturb(f, cfg.noise, cfg.seed)
    field_out, rep = minimize_s2(f, _params(cfg), SolveConfig(**cfg.solve_kwargs()))
    save_field(out / "minimizer.field", field_out, meta)
    lo = FOUR_PI * (1.0 - cfg.lam**2) * abs(rep.final.degree)
    bracket = abs(rep.final.degree) == 1 and lo <= rep.final.total < FOUR_PI
    audit = {"converged": rep.converged, "energy_bracket": bool(bracket), "lower": lo, "upper": FOUR_PI}
    (out / "report.json").write_text(rep.to_json(config=meta, audit=audit, grid=field_out.grid.metadata()))
    ok = rep.converged and bracket
    msg = (f"minimize: total {rep.final.total:.10g}, degree {rep.final.degree}, iters {rep.iters}, "
           f"grad_sup {rep.final.grad_sup:.2e}, converged {rep.converged}, bracket {'ok' if bracket else 'FAILED'}"
           + ("; sector escape" if rep.sector_escape else ""))
    return (0 if ok else 2), msg


def cmd_sweep_conformal(cfg: RunConfig, out: Path, meta: dict) -> tuple[int, str]:
    grid = make_grid(cfg.domain, cfg.n)
    rows = conformal_sweep(sorted(cfg.lams, reverse=True), cfg.eps, grid, SolveConfig(**cfg.solve_kwargs()),
                           cfg.stencil, cfg.delta0)
    write_sweep_csv(out / "sweep_conformal.csv", rows, meta)
    audit = bound_audit(rows, grid.h)
    write_json(out / "audit.json", audit, meta)
    return (0 if audit["passed"] else 2), f"sweep-conformal: {len(rows)} rows, audit {'passed' if audit['passed'] else 'FAILED'}"


def cmd_sweep_eps(cfg: RunConfig, out: Path, meta: dict) -> tuple[int, str]:
    grid = make_grid(cfg.domain, cfg.n)
    rows = large_domain_sweep(cfg.lam, sorted(cfg.eps_list, reverse=True), grid, SolveConfig(**cfg.solve_kwargs()),
                              cfg.stencil, cfg.delta0)
    write_sweep_csv(out / "sweep_eps.csv", rows, meta)
    audit = bound_audit(rows, grid.h)
    lo, hi = ratio_spread(rows)
    audit["ratio_spread"] = {"min": lo, "max": hi, "passed": bool(math.isfinite(lo) and hi / lo <= 2.0)}
    audit["passed"] = audit["passed"] and audit["ratio_spread"]["passed"]
    write_json(out / "audit.json", audit, meta)
    return (0 if audit["passed"] else 2), (f"sweep-eps: {len(rows)} rows, R_core/eps in [{lo:.4g}, {hi:.4g}], "
                                           f"audit {'passed' if audit['passed'] else 'FAILED'}")


def cmd_verify(cfg: RunConfig, out: Path, meta: dict) -> tuple[int, str]:
    res = verify_closed_forms()
    worst = max(r["rel_err"] for r in res)
    write_json(out / "verify.json", {"cases": res, "max_rel_err": worst, "tolerance": VERIFY_TOL}, meta)
    return (0 if worst <= VERIFY_TOL else 2), f"verify: {len(res)} cases, max relative error {worst:.3e}"


def cmd_neck(cfg: RunConfig, out: Path, meta: dict) -> tuple[int, str]:
    f, p = _initial_field(cfg)
    grid = f.grid
    if cfg.input:
        core = core_radius(f, cfg.eps, cfg.delta0, cfg.stencil)
        x_core, r_core, target = core.x_core, core.R_core, f
    else:
        # analytic ansatz: quadrature on the pointwise map around the pair centre
        x_core, r_core = p.z0, p.a
        target = lambda z: cutoff_field(z, p)  # noqa: E731
    r0, r1 = min(10.0 * r_core, 0.125 * grid.radius), 0.25 * grid.radius
    radii = cfg.radii or [r0 * (r1 / r0) ** (k / 4) for k in range(5)]
    rows = neck_energy_profile(target, x_core, radii, cfg.stencil)
    write_json(out / "neck.json", {"x_core": list(x_core), "R_core": r_core, "rows": [asdict(r) for r in rows]}, meta)
    total = sum(r.energy for r in rows)
    return 0, f"neck: {len(rows)} annuli from {radii[0]:.4g} to {radii[-1]:.4g}, exchange {total:.6g}"


HANDLERS = {
    "ansatz": cmd_ansatz,
    "energy": cmd_energy,
    "minimize": cmd_minimize,
    "sweep-conformal": cmd_sweep_conformal,
    "sweep-eps": cmd_sweep_eps,
    "verify": cmd_verify,
    "neck": cmd_neck,
}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = cfg.to_dict()
    code, msg = HANDLERS[cfg.command](cfg, out, meta)
    print(msg)
    return code


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
        return run(cfg)
    except SystemExit as exc:  # argparse usage errors
        return 1 if exc.code not in (0, None) else 0
    except (ValueError, OSError, FloatingPointError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

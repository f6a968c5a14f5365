"""Acceptance criteria, one test each; verdict lines are printed in the terminal summary.

Tolerances and grids are the prescribed ones.  Criteria whose prescribed grids
cannot resolve the soliton core fail here by design (see the README).
"""

import math

import numpy as np
import pytest

from bimeron.ansatz import AnsatzParams, cutoff_energy, cutoff_field, verify_closed_forms
from bimeron.energy import (
    EnergyParams,
    dirichlet_integral,
    energy_s1,
    energy_s2,
    energy_terms_s2,
    grad_s2,
    lattice_degree,
    pohozaev_residual_annulus,
    pohozaev_residual_disk,
    stress_tensor,
)
from bimeron.experiments import (
    conformal_sweep,
    core_radius,
    large_domain_sweep,
    neck_energy_profile,
    ratio_spread,
)
from bimeron.grid import CircleField, SphereField, make_grid, phase_vector, sample_field
from bimeron.minimize import SolveConfig, minimize_s1, minimize_s2, prolong

from conftest import VERDICTS

FOUR_PI = 4 * math.pi
# iteration cap for the runs that are expected to collapse: keeps each point well inside its runtime budget
CAP = 20000


def verdict(k: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail}"
    VERDICTS[k] = line
    print(line)
    assert ok, line


# shared minimisations (criteria 6 and 8 use the same disk states)
_CACHE: dict = {}


def disk_state(lam: float, eps: float = 0.2, n: int = 128):
    key = (lam, eps, n)
    if key not in _CACHE:
        keep = []
        row = conformal_sweep([lam], eps, make_grid("Disk", n), SolveConfig(tol=1e-6, max_iters=CAP), keep=keep)[0]
        _CACHE[key] = (row, keep[0] if keep else None)
    return _CACHE[key]


def test_c01_closed_form_fidelity():
    res = verify_closed_forms()
    worst = max(r["rel_err"] for r in res)
    verdict(1, len(res) >= 20 and worst <= 1e-6, f"{len(res)} cases, max relative error {worst:.2e} (<= 1e-6)")


def test_c02_discrete_consistency():
    p = AnsatzParams(0.1, 0.2, z0=(0.5, 0.5))
    lam, eps = 0.5, 0.3
    exact = cutoff_energy(p, lam, eps)["total"]
    errs = []
    for n in (64, 128, 256):
        f = sample_field(make_grid("Torus", n), lambda z: cutoff_field(z, p))
        errs.append(abs(energy_s2(f, EnergyParams(lam, eps)).total - exact))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    ok = all(1.7 <= o <= 2.3 for o in orders)
    verdict(2, ok, f"errors {', '.join(f'{e:.3e}' for e in errs)}; observed orders "
                   f"{orders[0]:.3f}, {orders[1]:.3f} (in [1.7, 2.3])")


def test_c03_degree_quantization():
    details, ok = [], True
    for kind, p in (("Disk", AnsatzParams(0.08, 0.35)), ("Torus", AnsatzParams(0.05, 0.2, z0=(0.5, 0.5)))):
        for n in (128, 256):
            g = make_grid(kind, n)
            f = sample_field(g, lambda z: cutoff_field(z, p))
            q, q_real = lattice_degree(f)
            # replicate (m, -m3)(-x): reflect the node array through the centre
            flip = np.roll(f.values[::-1, ::-1], (1, 1), axis=(0, 1)) if g.periodic else f.values[::-1, ::-1]
            flip = flip.copy()
            flip[..., 2] *= -1
            q_flip, _ = lattice_degree(SphereField(g, flip, f.c_phase))
            ok &= q == -1 and abs(q_real + 1) <= 1e-3 and q_flip == 1
            details.append(f"{kind} {n}: {q} ({q_real:+.6f}), replicate {q_flip:+d}")
    verdict(3, ok, "; ".join(details))


@pytest.mark.parametrize("lam", [0.3, 0.5])
def test_c04_existence_bracket(lam):
    eps = 0.2
    row, _ = disk_state(lam, eps)
    lo = FOUR_PI * (1 - lam**2)
    ok = row.converged and row.degree == -1 and lo <= row.total < FOUR_PI
    line = (f"λ={lam}, ε={eps}, Disk 128: converged={row.converged}, degree {row.degree}, "
            f"E={row.total:.5f} in [{lo:.5f}, {FOUR_PI:.5f})? {lo <= row.total < FOUR_PI} {row.flag}").strip()
    prev = VERDICTS.get(4, "")
    failed = prev.startswith("FAIL") or not ok
    body = (prev.split(": ", 1)[1] + " | " if prev else "") + line
    VERDICTS[4] = f"{'FAIL' if failed else 'PASS'} criterion  4: {body}"
    print(VERDICTS[4])
    assert ok, line


def test_c05_lambda_zero_triviality():
    g = make_grid("Disk", 128)
    init = sample_field(g, lambda z: cutoff_field(z, AnsatzParams(0.1, 0.4)))
    out, rep = minimize_s2(init, EnergyParams(0.0, 0.2), SolveConfig(tol=1e-6, max_iters=CAP))
    c = phase_vector(out.c_phase)
    dist = float(np.max(np.arccos(np.clip(out.values[g.active_mask] @ c, -1, 1))))
    ok = rep.sector_escape or dist <= 1e-3
    verdict(5, ok, f"sector escape={rep.sector_escape}, final degree {rep.final.degree}, "
                   f"E={rep.final.total:.4f}, sup distance to constant {dist:.2e}")


def test_c06_conformal_trend():
    rows = [disk_state(lam)[0] for lam in (0.4, 0.3, 0.2)]
    E = [r.total for r in rows]
    q = [r.m3_sq / r.lam**2 for r in rows]
    valid = all(r.converged and r.degree == -1 for r in rows)
    rising = E[0] < E[1] < E[2] < FOUR_PI
    spread = max(q) / min(q) if min(q) > 0 else math.inf
    ok = valid and rising and spread < 3
    verdict(6, ok, f"E = {', '.join(f'{e:.4f}' for e in E)} (rising to 4π: {rising}); "
                   f"∫m3²/λ² spread {spread:.3g} (< 3); all converged in degree -1: {valid}")


def test_c07_core_scaling():
    keep = []
    rows = large_domain_sweep(0.3, [0.1, 0.07, 0.05], make_grid("Torus", 256),
                              SolveConfig(tol=1e-6, max_iters=CAP), keep=keep)
    valid = all(r.converged and r.degree == -1 and not r.flag for r in rows)
    lo, hi = ratio_spread(rows)
    spread = hi / lo if valid and lo > 0 else math.inf
    detail = "; ".join(f"ε={r.eps}: R_core/ε={r.R_core_over_eps:.3g}, degree {r.degree}, "
                       f"converged={r.converged} {r.flag}".strip() for r in rows)
    verdict(7, valid and spread <= 2, f"{detail}; max/min {spread:.3g} (<= 2)")


def test_c08_neck_decay():
    lams = (0.3, 0.2, 0.1)
    neck, valid = [], True
    for lam in lams:
        row, kept = disk_state(lam)
        out, _ = kept
        valid &= row.converged and row.degree == -1
        try:
            core = core_radius(out, 0.2)
        except ValueError:
            # collapsed state: no disk carries delta0^2, so there is no neck to measure
            valid = False
            neck.append(math.nan)
            continue
        r0, r1 = 10 * core.R_core, 0.25
        valid &= r0 < r1
        x = np.asarray(core.x_core)
        r1 = min(r1, 1.0 - float(np.hypot(*x)))
        neck.append(neck_energy_profile(out, x, [r0, r1])[0].energy if r0 < r1 else math.nan)
    decreasing = neck[0] > neck[1] > neck[2]
    # fit C on the largest coupling; the smaller couplings must stay below C λ²
    C = neck[0] / lams[0] ** 2
    bounded = all(e <= C * lam**2 for e, lam in zip(neck[1:], lams[1:]))
    ok = valid and decreasing and bounded
    verdict(8, ok, f"neck energies {', '.join(f'{e:.3e}' for e in neck)} at λ={lams}; decreasing {decreasing}; "
                   f"≤ Cλ² with C={C:.3g}: {bounded}; converged in degree -1: {valid}")


def _random_small_phase(g, rng, target):
    X = g.points()
    phi = np.zeros(g.shape)
    for _ in range(6):
        k = rng.integers(1, 4, size=2)
        phi += rng.normal() * np.cos(2 * np.pi * (k[0] * X[..., 0] + k[1] * X[..., 1]) + rng.uniform(0, 2 * np.pi))
    phi += rng.uniform(0, 2 * np.pi) - phi.mean()
    f = CircleField.from_phase(g, phi)
    s = math.sqrt(target / dirichlet_integral(f))
    return CircleField.from_phase(g, phi.mean() + (phi - phi.mean()) * s)


def test_c09_energy_gap():
    g = make_grid("Torus", 64)
    rng = np.random.default_rng(2024)
    dists, energies0 = [], []
    for _ in range(20):
        f = _random_small_phase(g, rng, 0.25 * rng.uniform(0.1, 1.0))
        energies0.append(dirichlet_integral(f))
        _, rep = minimize_s1(f, 0.1, SolveConfig(tol=1e-11, max_iters=20000))
        dists.append(rep.extras["distance_to_constant"])
    X = g.points()
    w = CircleField.from_phase(g, 2 * np.pi * X[..., 0] + 0.1 * np.sin(2 * np.pi * X[..., 1]))
    _, rep = minimize_s1(w, 0.1, SolveConfig(tol=1e-8, max_iters=20000))
    kept = rep.extras["dirichlet_energy"]
    ok = max(energies0) <= 0.25 and max(dists) <= 1e-6 and kept >= 4 * math.pi**2 - 0.5 \
        and rep.extras["distance_to_constant"] > 1e-6
    verdict(9, ok, f"20 inits (Dirichlet ≤ {max(energies0):.3f}): max distance {max(dists):.2e} (<= 1e-6); "
                   f"winding (1,0) keeps {kept:.4f} (>= {4 * math.pi**2 - 0.5:.4f})")


def _fd_error(energy, grad, v, free, rng, t=1e-6):
    d = rng.normal(size=v.shape)
    d -= np.sum(d * v, -1, keepdims=True) * v
    d[~free] = 0

    def E(s):
        w = v + s * d
        return energy(w / np.linalg.norm(w, axis=-1, keepdims=True))

    an = float(np.sum(grad * d))
    return abs((E(t) - E(-t)) / (2 * t) - an) / abs(an)


def test_c10_gradient_correctness():
    rng = np.random.default_rng(10)
    g = make_grid("Disk", 24)
    X = g.points()
    p = EnergyParams(0.6, 0.3)
    e2, p2 = [], []
    for _ in range(10):
        # smooth random field: a few random Fourier modes per component, pinned on the rim
        v = np.zeros(g.shape + (3,))
        for c in range(3):
            for _ in range(3):
                k = rng.normal(size=2) * 3
                v[..., c] += rng.normal() * np.cos(k[0] * X[..., 0] + k[1] * X[..., 1] + rng.uniform(0, 6.3))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        f = SphereField(g, v, 0.3)
        f.values[~g.free_mask] = phase_vector(0.3)
        gr = grad_s2(f, p)
        e2.append(_fd_error(lambda w: sum(energy_terms_s2(SphereField(g, w, 0.3), p)), gr, f.values, g.free_mask, rng))
        p2.append(float(np.max(np.abs(np.sum(gr * f.values, -1)))))
    gt = make_grid("Torus", 24)
    e1, p1 = [], []
    for _ in range(10):
        u = rng.normal(size=gt.shape + (2,))
        c = CircleField(gt, u / np.linalg.norm(u, axis=-1, keepdims=True))
        _, gr = energy_s1(c, 0.7)
        e1.append(_fd_error(lambda w: energy_s1(CircleField(gt, w), 0.7)[0], gr, c.values, gt.free_mask, rng))
        p1.append(float(np.max(np.abs(np.sum(gr * c.values, -1)))))
    ok = max(e2 + e1) <= 1e-6 and max(p2 + p1) <= 1e-12
    verdict(10, ok, f"S² max rel FD error {max(e2):.2e}, S¹ {max(e1):.2e} (<= 1e-6); "
                    f"max |grad·m| {max(p2 + p1):.1e} (<= 1e-12)")


def test_c11_pohozaev_diagnostics():
    lam, eps = 0.9, 0.5
    g = make_grid("Disk", 128)
    init = sample_field(g, lambda z: cutoff_field(z, AnsatzParams(0.15, 0.4)))
    s128, r128 = minimize_s2(init, EnergyParams(lam, eps), SolveConfig(tol=1e-7, max_iters=40000))
    s256, r256 = minimize_s2(prolong(s128, 256), EnergyParams(lam, eps), SolveConfig(tol=1e-7, max_iters=40000))
    rim = [pohozaev_residual_disk(s, eps, lam) for s in (s128, s256)]
    lam1, ann, trace, conv = 0.5, [], 0.0, [r128.converged, r256.converged]
    for n in (128, 256):
        gt = make_grid("Torus", n)
        X = gt.points()
        c = CircleField.from_phase(gt, 2 * np.pi * X[..., 0] + 0.3 * np.sin(2 * np.pi * X[..., 1]))
        # 1e-8 sits just above the floating-point floor of the S¹ energy at n = 256
        out, rep = minimize_s1(c, lam1, SolveConfig(tol=1e-8, max_iters=40000))
        conv.append(rep.converged)
        ann.append(pohozaev_residual_annulus(out, lam1, 0.25))
        T = stress_tensor(out, lam1)
        trace = max(trace, float(np.max(np.abs(T[..., 0, 0] + T[..., 1, 1]))))
    f_rim, f_ann = rim[0] / rim[1], ann[0] / ann[1]
    ok = all(conv) and f_rim >= 1.5 and f_ann >= 1.5 and trace <= 1e-12
    verdict(11, ok, f"rim {rim[0]:.3e} -> {rim[1]:.3e} (x{f_rim:.2f}); annulus {ann[0]:.3e} -> {ann[1]:.3e} "
                    f"(x{f_ann:.2f}); factors >= 1.5; max |tr T| {trace:.1e} (<= 1e-12); converged {all(conv)}")

"""End-to-end acceptance battery.

Each test below checks one numbered acceptance criterion; a one-line
PASS/FAIL summary per criterion is printed by the terminal-summary hook
in conftest.py.  The constrained minimizer runs are shared across
criteria through the module-scoped ``suite`` fixture, so the minimality,
blow-up, and determinism checks really do cover every run in the
battery.
"""

import json
import math
import zlib
from dataclasses import dataclass

import numpy as np
import pytest

import fracmap as fm
from fracmap import BallSpec, FieldMap, FractionalParams, ManifoldSpec
from fracmap.cli import build_preset, calibrate_eps1, main, write_snapshot
from fracmap.grid import ball_indices

from conftest import mc_pair_integral


RHO_SWEEP = [0.125, 0.138, 0.152, 0.166]
DETECT_SCALES = [0.15, 0.2, 0.3, 0.4]
PRESET_RADII = [0.12, 0.18, 0.27, 0.4, 0.6]
SINGULAR_RADII = [0.2, 0.3, 0.45, 0.68]


def _winding_field(grid, amp=0.8):
    """Unit-circle field winding along the first axis; nonconstant collar."""
    g = amp * grid.centers[:, 0]
    return FieldMap(grid, np.stack([np.cos(g), np.sin(g)], axis=1))


def _bump_field(grid, radius=0.8, amp=0.8):
    """Compactly supported bump angle; collar identically (1, 0)."""
    r = np.linalg.norm(grid.centers, axis=1) / radius
    g = np.zeros(grid.num_cells)
    inside = r < 1.0
    g[inside] = amp * np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return FieldMap(grid, np.stack([np.cos(g), np.sin(g)], axis=1))


def _degree_one_field(grid):
    x = grid.centers
    return FieldMap(grid, x / np.linalg.norm(x, axis=1, keepdims=True))


@dataclass
class RunCase:
    """One converged constrained minimization shared across criteria."""

    name: str
    grid: object
    kernel: object
    initial: FieldMap
    result: object


def _run(name, s, p, n, h, collar, data, max_iters=2000):
    params = FractionalParams(s=s, p=p, n=n, N=2)
    box = [[-1.0, 1.0]] * n
    grid = fm.build_grid(params, box, h, collar_width=collar)
    kernel = fm.build_kernel(grid, params)
    u0 = data(grid)
    res = fm.minimize(u0, kernel, ManifoldSpec.sphere(2),
                      fm.MinimizeOptions(max_iters=max_iters, grad_tol=1e-6))
    return RunCase(name, grid, kernel, u0, res)


@pytest.fixture(scope="module")
def suite():
    """All constrained runs of the battery, keyed by name."""
    runs = [
        _run("n1-coarse", 0.4, 2.0, 1, 1 / 32, 0.25, _winding_field),
        _run("n1-fine", 0.4, 2.0, 1, 1 / 64, 0.25, _winding_field),
        _run("n1-bump", 0.4, 2.0, 1, 1 / 64, 0.25, _bump_field),
        _run("n2-coarse", 0.5, 2.5, 2, 1 / 16, 0.125, _winding_field),
        _run("n2-fine", 0.5, 2.5, 2, 1 / 32, 0.125, _winding_field),
        _run("n2-singular", 0.75, 2.0, 2, 1 / 16, 0.125, _degree_one_field),
        _run("n2-smooth", 0.75, 2.0, 2, 1 / 16, 0.125, _winding_field),
        _run("n2-bump", 0.75, 2.0, 2, 1 / 16, 0.125, _bump_field),
    ]
    return {r.name: r for r in runs}


@pytest.fixture(scope="module")
def eps1(suite):
    """Concentration threshold calibrated on the singular run."""
    run = suite["n2-singular"]
    return calibrate_eps1(run.result.field, run.kernel, DETECT_SCALES[-1])


# -- criterion 1 ------------------------------------------------------------

def test_01_kernel_oracle():
    rng = np.random.default_rng(42)
    cases = []
    for n, s, p, count in ((1, 0.4, 2.0, 8), (2, 0.45, 2.0, 12)):
        params = FractionalParams(s=s, p=p, n=n, N=2)
        grid = fm.build_grid(params, [[-1.0, 1.0]] * n, 0.25,
                             collar_width=0.25)
        kernel = fm.build_kernel(grid, params)
        cases.append((params, grid, kernel, count))

    mc_cache = {}
    pairs_checked = 0
    for params, grid, kernel, count in cases:
        gamma = params.n + params.sp
        pre = grid.h ** (2 * params.n - gamma)
        adjacent = []
        for i in range(grid.num_cells):
            d = grid.lattice - grid.lattice[i]
            hit = np.where((np.abs(d).max(axis=1) == 1))[0]
            adjacent.extend((i, int(j)) for j in hit if j > i)
        picks = rng.choice(len(adjacent), size=count, replace=False)
        for k in picks:
            i, j = adjacent[k]
            d = np.abs(grid.lattice[j] - grid.lattice[i]).astype(float)
            key = (params.n, gamma, tuple(sorted(d)))
            if key not in mc_cache:
                mc_cache[key] = mc_pair_integral(d, gamma, params.n,
                                                 nsamp=1_000_000, seed=0)
            oracle = pre * mc_cache[key]
            assert kernel.weights[i, j] == pytest.approx(oracle, rel=5e-3)
            pairs_checked += 1
    assert pairs_checked == 20

    # far pairs against the midpoint formula
    far_checked = 0
    for params, grid, kernel, _ in cases:
        gamma = params.n + params.sp
        for _ in range(10):
            i, j = rng.choice(grid.num_cells, size=2, replace=False)
            dist = np.linalg.norm(grid.lattice[j] - grid.lattice[i])
            if dist < 2.0 * math.sqrt(params.n):
                continue
            mid = grid.h ** (2 * params.n) * np.linalg.norm(
                grid.centers[i] - grid.centers[j]) ** (-gamma)
            assert kernel.weights[i, j] == pytest.approx(mid, rel=1e-2)
            far_checked += 1
    assert far_checked >= 10


# -- criterion 2 ------------------------------------------------------------

def _total_energy(field, kernel):
    everything = np.arange(kernel.grid.num_cells)
    return (fm.gagliardo_energy(field, kernel)
            + 2.0 * fm.analytic_tail(field, kernel, everything))


def test_02_scaling_law():
    lam = 2.0
    for n in (1, 2):
        for h in (1 / 8, 1 / 16):
            s, p = 0.4, 2.0
            params = FractionalParams(s=s, p=p, n=n, N=2)
            coarse = fm.build_grid(params, [[-1.0, 1.0]] * n, h,
                                   collar_width=0.5)
            fine = fm.build_grid(params, [[-0.5, 0.5]] * n, h / lam,
                                 collar_width=0.25)
            k_coarse = fm.build_kernel(coarse, params)
            k_fine = fm.build_kernel(fine, params)
            u = _bump_field(coarse, radius=0.8)
            # same map precomposed with x -> lam x, on the rescaled grid
            r = np.linalg.norm(lam * fine.centers, axis=1) / 0.8
            g = np.zeros(fine.num_cells)
            inside = r < 1.0
            g[inside] = 0.8 * np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
            u_lam = FieldMap(fine, np.stack([np.cos(g), np.sin(g)], axis=1))
            ratio = _total_energy(u_lam, k_fine) / _total_energy(u, k_coarse)
            target = lam ** (s * p - n)
            assert abs(ratio / target - 1.0) < 0.02


# -- criterion 3 ------------------------------------------------------------

def test_03_gradient_check():
    params0 = FractionalParams(s=0.5, p=2.0, n=2, N=2)
    grid = fm.build_grid(params0, [[-1.0, 1.0]] * 2, 0.25, collar_width=0.25)
    rng = np.random.default_rng(3)
    for p in (2.0, 2.5, 3.0):
        params = FractionalParams(s=0.5, p=p, n=2, N=2)
        kernel = fm.build_kernel(grid, params)
        field = FieldMap(grid, rng.standard_normal((grid.num_cells, 2)))
        grad = fm.energy_gradient(field, kernel)
        free = field.free_indices()
        cells = rng.choice(free, size=50, replace=False)
        comps = rng.integers(0, 2, size=50)
        eps = 1e-6
        for i, c in zip(cells, comps):
            up, dn = field.copy(), field.copy()
            up.values[i, c] += eps
            dn.values[i, c] -= eps
            fd = (fm.gagliardo_energy(up, kernel)
                  - fm.gagliardo_energy(dn, kernel)) / (2 * eps)
            assert abs(grad[i, c] - fd) <= 1e-6 * max(abs(fd), 1e-8)


# -- criterion 4 ------------------------------------------------------------

def test_04_summation_by_parts():
    params0 = FractionalParams(s=0.5, p=2.0, n=1, N=2)
    grid = fm.build_grid(params0, [[-1.0, 1.0]], 0.125, collar_width=0.25)
    for trial in range(20):
        p = (2.0, 2.5, 3.0)[trial % 3]
        params = FractionalParams(s=0.5, p=p, n=1, N=2)
        kernel = fm.build_kernel(grid, params)
        rng = np.random.default_rng(100 + trial)
        u = FieldMap(grid, rng.standard_normal((grid.num_cells, 2)))
        phi_vals = rng.standard_normal((grid.num_cells, 2))
        phi_vals[u.frozen] = 0.0
        phi = FieldMap(grid, phi_vals, u.frozen.copy())
        wr = fm.weak_residual(u, kernel, phi)
        op = fm.operator_field(u, kernel)
        pairing = grid.cell_volume * float(
            np.einsum("ij,ij->", op, phi.values))
        scale = abs(wr) + abs(pairing) + 1.0
        assert abs(wr - pairing) <= 1e-10 * scale


# -- criterion 5 ------------------------------------------------------------

def test_05_linear_oracle():
    params = FractionalParams(s=0.5, p=2.0, n=2, N=2)
    grid = fm.build_grid(params, [[-1.0, 1.0]] * 2, 1 / 16, collar_width=0.25)
    assert grid.shape[0] == 40  # 32^2 interior plus the collar
    kernel = fm.build_kernel(grid, params)
    vals = np.stack(
        [np.sin(2 * grid.centers[:, 0]) * np.cos(grid.centers[:, 1]),
         grid.centers[:, 0] * grid.centers[:, 1]], axis=1)
    data = FieldMap(grid, vals)
    linear = fm.solve_linear_p2(data, kernel)
    e_linear = fm.gagliardo_energy(linear, kernel)
    res = fm.minimize(data, kernel, None,
                      fm.MinimizeOptions(max_iters=4000, grad_tol=1e-10))
    assert abs(res.energy - e_linear) <= 1e-8 * e_linear


# -- criterion 6 ------------------------------------------------------------

def test_06_minimality_surrogate(suite):
    sphere = ManifoldSpec.sphere(2)
    converged = [r for r in suite.values() if r.result.converged]
    assert converged, "no converged constrained runs in the suite"
    for run in converged:
        field = run.result.field
        energy = run.result.energy
        rng = np.random.default_rng(zlib.crc32(run.name.encode()))
        worst = -np.inf
        for _ in range(100):
            d = sphere.project_tangent(
                field.values, rng.standard_normal(field.values.shape))
            d *= 1e-2 / max(np.abs(d).max(), 1e-30)
            pert = field.copy()
            pert.values[:] = sphere.project(field.values + d)
            pert.values[field.frozen] = field.values[field.frozen]
            decrease = energy - fm.gagliardo_energy(pert, run.kernel)
            worst = max(worst, decrease)
        assert worst < 1e-8 * max(energy, 1e-12), run.name


# -- criterion 7 ------------------------------------------------------------

def test_07_caccioppoli_stability(suite):
    for coarse_name, fine_name in (("n1-coarse", "n1-fine"),
                                   ("n2-coarse", "n2-fine")):
        sups = {}
        for name in (coarse_name, fine_name):
            run = suite[name]
            center = [0.0] * run.grid.n
            rep = fm.caccioppoli_sweep(run.result.field, run.kernel,
                                       center, RHO_SWEEP)
            for entry in rep.entries:
                if entry["resolved"]:
                    assert math.isfinite(entry["ratio"]), name
            sups[name] = rep.sup_ratio
        change = abs(sups[fine_name] - sups[coarse_name]) / sups[coarse_name]
        assert change < 0.30, (coarse_name, sups)


# -- criterion 8 ------------------------------------------------------------

def test_08_decay(suite, eps1):
    probes = {
        "n1-bump": [(-0.3,), (0.0,), (0.25,)],
        "n1-fine": [(-0.3,), (0.0,), (0.25,)],
        "n2-bump": [(-0.3, 0.0), (0.0, 0.0), (0.25, 0.25)],
        "n2-smooth": [(-0.3, 0.0), (0.0, 0.0), (0.25, 0.25)],
        "n2-coarse": [(-0.3, 0.0), (0.0, 0.0), (0.25, 0.25)],
    }
    qualifying = 0
    for name, points in probes.items():
        run = suite[name]
        for x0 in points:
            rep = fm.decay_probe(run.result.field, run.kernel, x0,
                                 R=0.5, theta=0.25, eps1=eps1)
            if rep.small and rep.ratio is not None:
                qualifying += 1
                assert rep.ratio <= 0.75, (name, x0, rep.ratio)
                assert rep.ratio < 1.0
    assert qualifying >= 3, "decay criterion never exercised"


# -- criterion 9 ------------------------------------------------------------

def test_09_singular_detection(suite, eps1):
    singular = suite["n2-singular"]
    rep = fm.singular_detect(singular.result.field, singular.kernel,
                             eps1, DETECT_SCALES)
    assert len(rep.clusters) == 1
    centroid = np.asarray(rep.clusters[0]["centroid"])
    argmax_center = singular.grid.centers[rep.density_argmax]
    assert np.linalg.norm(centroid - argmax_center) <= 2 * singular.grid.h

    for name in ("n2-smooth", "n2-bump"):
        run = suite[name]
        smooth_rep = fm.singular_detect(run.result.field, run.kernel,
                                        eps1, DETECT_SCALES)
        assert smooth_rep.flagged == [], name


# -- criterion 10 -----------------------------------------------------------

def test_10_holder_fit(suite, eps1):
    params = FractionalParams(s=0.4, p=2.0, n=1, N=2)
    grid = fm.build_grid(params, [[-1.0, 1.0]], 1 / 64, collar_width=0.25)
    for alpha in (0.3, 1.0):
        field = build_preset("holder-alpha", grid, params, {"alpha": alpha})
        rep = fm.holder_fit(field, BallSpec((0.0,), 3 / 64), p=2.0,
                            radii=PRESET_RADII)
        assert rep.accepted
        assert abs(rep.alpha - alpha) <= 0.1, (alpha, rep.alpha)

    # no false smoothness at the flagged cluster of criterion 9
    singular = suite["n2-singular"]
    det = fm.singular_detect(singular.result.field, singular.kernel,
                             eps1, DETECT_SCALES)
    centroid = tuple(det.clusters[0]["centroid"])
    rep = fm.holder_fit(singular.result.field,
                        BallSpec(centroid, 2 * singular.grid.h), p=2.0,
                        radii=SINGULAR_RADII)
    assert (not rep.accepted) or rep.alpha < 0.1, (rep.alpha, rep.residual)


# -- criterion 11 -----------------------------------------------------------

def test_11_blowup_normalization(suite):
    for run in suite.values():
        ball = BallSpec((0.0,) * run.grid.n, 0.5)
        if fm.localized_energy(run.result.field, run.kernel, ball) <= 0.0:
            continue
        v = fm.blowup_normalize(run.result.field, run.kernel, ball)
        assert abs(fm.localized_energy(v, run.kernel, ball) - 1.0) <= 1e-10
        idx = ball_indices(run.grid, ball)
        assert np.max(np.abs(v.values[idx].mean(axis=0))) <= 1e-10


# -- criterion 12 -----------------------------------------------------------

CLI_CONFIG = {
    "format_version": 1,
    "params": {"s": 0.4, "p": 2.0, "n": 1, "N": 2},
    "grid": {"box": [[-1.0, 1.0]], "h": 0.0625, "collar_width": 0.25},
    "manifold": {"kind": "sphere"},
    "preset": {"name": "smooth-bump", "radius": 0.8},
    "minimize": {"max_iters": 500, "grad_tol": 1e-8, "seed": 0},
    "diagnostics": [
        {"probe": "caccioppoli", "x0": [0.0], "rhos": [0.125, 0.15]},
        {"probe": "decay", "x0": [0.0], "R": 0.5, "theta": 0.25},
        {"probe": "holder", "center": [0.0], "radius": 0.1,
         "radii": [0.12, 0.18, 0.27, 0.4]},
    ],
}


def test_12_determinism(suite, tmp_path):
    # (a) re-running a suite minimization reproduces the snapshot bytes
    run = suite["n1-coarse"]
    params = FractionalParams(s=0.4, p=2.0, n=1, N=2)
    grid = fm.build_grid(params, [[-1.0, 1.0]], 1 / 32, collar_width=0.25)
    kernel = fm.build_kernel(grid, params)
    redo = fm.minimize(_winding_field(grid), kernel, ManifoldSpec.sphere(2),
                       fm.MinimizeOptions(max_iters=2000, grad_tol=1e-6))
    snap_a = tmp_path / "a.snap"
    snap_b = tmp_path / "b.snap"
    write_snapshot(snap_a, run.result.field)
    write_snapshot(snap_b, redo.field)
    assert snap_a.read_bytes() == snap_b.read_bytes()

    # (b) the CLI pipeline produces byte-identical artifacts on re-run
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(CLI_CONFIG))
    outs = []
    for tag in ("one", "two"):
        out = tmp_path / tag
        assert main(["solve", str(cfg), "--out", str(out)]) == 0
        assert main(["diagnose", str(cfg), str(out / "field.snap"),
                     "--out", str(out)]) == 0
        outs.append(out)
    names_a = sorted(q.name for q in outs[0].iterdir())
    names_b = sorted(q.name for q in outs[1].iterdir())
    assert names_a == names_b
    for name in names_a:
        assert ((outs[0] / name).read_bytes()
                == (outs[1] / name).read_bytes()), name

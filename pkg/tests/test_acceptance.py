"""Acceptance criteria, each checked against an independent oracle.

Every test records one PASS/FAIL line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""

import math
import time
from functools import cache

import numpy as np
import pytest

from fractal_energy import (
    CascadeEngine,
    LevelFunction,
    Renormalizer,
    audit_axioms,
    convergence_certificate,
    get_fractal,
    make_dirichlet,
    make_p_edge,
    make_perturbed,
    quadratic_eigen,
    solve_scaling_root,
)
from fractal_energy.errors import MonotonicityViolation


@cache
def fractal(name):
    return get_fractal(name)


@cache
def energy(key):
    if key == "interval":
        return quadratic_eigen(fractal("interval"), make_dirichlet(None, 2)).form
    if key == "gasket":
        return quadratic_eigen(fractal("gasket"), make_dirichlet(None, 3)).form
    if key == "vicsek":
        return quadratic_eigen(fractal("vicsek"), make_dirichlet(None, 4)).form
    if key == "quartic":
        return make_p_edge(None, 4, 3)
    if key == "perturbed":
        return make_perturbed(energy("gasket"), make_p_edge(None, 4, 3, name="bump"))
    raise KeyError(key)


FRACTAL_OF = {"interval": "interval", "vicsek": "vicsek"}


@cache
def engine(key, sigma=1.0):
    return CascadeEngine(fractal(FRACTAL_OF.get(key, "gasket")), energy(key), sigma)


@cache
def extension(key, u, depth, sigma=1.0):
    return engine(key, sigma).minimal_extension(np.array(u, dtype=float), depth)


# every minimal extension computed by the acceptance runs
RUNS = [
    ("gasket", (1.0, 0.0, 0.0), 1),
    ("gasket", (1.0, 0.0, 0.0), 6),
    ("gasket", (0.3, -1.2, 0.7), 6),
    ("perturbed", (1.0, 0.0, 0.0), 4),
    ("perturbed", (0.3, -1.2, 0.7), 4),
    ("interval", (0.0, 1.0), 8),
    ("quartic", (1.0, 0.0, 0.0), 4),
]


def _monotone_samples():
    rng = np.random.default_rng(2024)
    g = fractal("gasket")
    return [rng.normal(size=g.level(3).n_vertices) for _ in range(100)]


def test_criterion_01_interval_theta(criterion):
    rng = np.random.default_rng(1)
    I = fractal("interval")
    worst = 0.0
    start = time.perf_counter()
    for sigma in (0.25, 0.5, 1.0, 2.0):
        renorm = Renormalizer(I, energy("interval"))
        for _ in range(20):
            u = rng.normal(size=2)
            worst = max(worst, abs(renorm.theta_bar(sigma, u).theta - math.sqrt(2 * sigma)))
    at_two = Renormalizer(I, energy("interval")).theta_bar(2.0, [0.0, 1.0]).theta
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and abs(at_two - 2.0) <= 1e-8 and elapsed < 1.0
    assert criterion(1, ok, f"max |theta - sqrt(2 sigma)| = {worst:.2e}, sigma=2 -> {at_two!r}, {elapsed:.3f}s")


def _hand_schur(coeffs):
    # level-1 gasket written out by hand: corners 0,1,2; midpoints 01, 02, 12
    cells = [(0, 3, 4), (3, 1, 5), (4, 5, 2)]
    pairs = [(0, 1), (0, 2), (1, 2)]
    q = np.zeros((6, 6))
    for cell in cells:
        for (a, b), c in zip(pairs, coeffs):
            x, y = cell[a], cell[b]
            q[[x, y], [x, y]] += c
            q[x, y] -= c
            q[y, x] -= c
    schur = q[:3, :3] - q[:3, 3:] @ np.linalg.solve(q[3:, 3:], q[3:, :3])
    return np.array([-schur[a, b] for a, b in pairs])


def test_criterion_02_gasket_eigenvalue(criterion):
    start = time.perf_counter()
    result = quadratic_eigen(fractal("gasket"), make_dirichlet(None, 3))
    elapsed = time.perf_counter() - start
    image = _hand_schur((1.0, 1.0, 1.0))
    coeff_err = float(np.abs(image - 0.6 * np.ones(3)).max())
    rho_err = abs(result.rho - 0.6)
    ok = rho_err <= 1e-12 and coeff_err <= 1e-12 and np.allclose(result.trace_coefficients, image, atol=1e-12)
    ok = ok and elapsed < 1.0
    assert criterion(2, ok, f"|rho - 3/5| = {rho_err:.1e}, max |Lambda(D) - 3/5 D| = {coeff_err:.1e}, {elapsed:.3f}s")


def test_criterion_03_harmonic_rule(criterion):
    trace = extension("gasket", (1.0, 0.0, 0.0), 1)
    level1 = fractal("gasket").level(1)
    cells = [set(level1.cell_ids((i,)).tolist()) for i in range(3)]
    # the midpoint between corners a and b is the vertex shared by cells a and b
    mids = {
        (a, b): (cells[a] & cells[b]).pop() for a, b in [(0, 1), (0, 2), (1, 2)]
    }
    values = trace.final.values
    got = np.array([values[mids[pair]] for pair in [(0, 1), (0, 2), (1, 2)]])
    err = float(np.abs(got - [0.4, 0.4, 0.2]).max())
    assert criterion(3, err <= 1e-10, f"midpoints {np.round(got, 12).tolist()}, error {err:.1e}")


def test_criterion_04_conservation(criterion):
    start = time.perf_counter()
    drift = {}
    for key, tol in (("gasket", 1e-7), ("perturbed", 1e-5)):
        worst = 0.0
        for u, depth in [(r[1], r[2]) for r in RUNS if r[0] == key and r[2] >= 4]:
            trace = extension(key, u, depth)
            e_u = trace.boundary_energy
            worst = max(worst, max(abs(e - e_u) / e_u for e in trace.energies))
        drift[key] = (worst, tol)
    elapsed = time.perf_counter() - start
    ok = all(w <= t for w, t in drift.values()) and elapsed < 60
    detail = ", ".join(f"{k}: max rel drift {w:.1e} (tol {t:g})" for k, (w, t) in drift.items())
    assert criterion(4, ok, f"{detail}, {elapsed:.1f}s")


def test_criterion_05_monotonicity(criterion):
    g = fractal("gasket")
    eng = engine("gasket")
    worst_drop = 0.0
    for values in _monotone_samples():
        v = LevelFunction(g, 3, values)
        chain = [eng.energy_at_level(v, n) for n in range(4)]
        for lower, upper in zip(chain, chain[1:]):
            worst_drop = max(worst_drop, (lower - upper) / max(1.0, abs(lower)))
    worst_gap = 0.0
    for values in _monotone_samples():
        trace = extension("gasket", tuple(values[:3]), 3)
        worst_gap = max(worst_gap, max(abs(e - trace.boundary_energy) for e in trace.energies) / trace.boundary_energy)
    ok = worst_drop <= 1e-9 and worst_gap <= 1e-9
    assert criterion(5, ok, f"100 random v: worst drop {worst_drop:.1e}; minimal extensions: worst gap {worst_gap:.1e}")


def test_criterion_06_maximum_principle(criterion):
    traces = [extension(*run) for run in RUNS]
    traces += [extension("gasket", tuple(values[:3]), 3) for values in _monotone_samples()]
    bad = 0
    for trace in traces:
        lo, hi = trace.u.min(), trace.u.max()
        for rec in trace.levels:
            vals = rec.values.values
            bad += int(np.sum((vals < lo) | (vals > hi)))
    assert criterion(6, bad == 0, f"{len(traces)} extensions, {bad} values outside [min u, max u]")


def test_criterion_07_oscillation_decay(criterion):
    interval, _ = convergence_certificate(extension("interval", (0.0, 1.0), 8))
    gasket, _ = convergence_certificate(extension("gasket", (1.0, 0.0, 0.0), 6))
    gasket_generic, _ = convergence_certificate(extension("gasket", (0.3, -1.2, 0.7), 6))
    quartic, _ = convergence_certificate(extension("quartic", (1.0, 0.0, 0.0), 4))
    ok = (
        abs(interval - 0.5) <= 1e-6
        and abs(gasket - 0.6) <= 0.02
        and abs(gasket_generic - 0.6) <= 0.02
        and quartic < 1
    )
    detail = f"interval {interval:.9f}, gasket {gasket:.6f} / {gasket_generic:.6f}, gasket p=4 {quartic:.6f}"
    assert criterion(7, ok, detail)


def test_criterion_08_theta_limit(criterion):
    renorm = Renormalizer(fractal("gasket"), energy("perturbed"))
    u0 = np.array([1.0, 0.0, 0.0])
    target = math.sqrt(5 / 3)
    devs = [abs(renorm.theta_bar(1.0, t * u0).theta - target) for t in (1e-1, 1e-2, 1e-3, 1e-4)]
    decreasing = all(b < a for a, b in zip(devs, devs[1:]))
    ok = devs[-1] <= 1e-3 and decreasing
    assert criterion(8, ok, "deviations " + ", ".join(f"{d:.2e}" for d in devs))


SELF_SIMILAR = ["interval", "gasket", "vicsek", "quartic", "perturbed"]


def test_criterion_09_self_similarity(criterion):
    rng = np.random.default_rng(9)
    worst = {}
    for key in SELF_SIMILAR:
        eng = engine(key)
        f = eng.fractal
        w = 0.0
        # 50 functions per combination, spread over levels n = 0..3
        for j in range(50):
            n = j % 4
            v = LevelFunction(f, n + 1, rng.uniform(size=f.level(n + 1).n_vertices))
            w = max(w, eng.self_similarity_residual(v))
        worst[key] = w
    ok = all(w <= 1e-10 for w in worst.values())
    assert criterion(9, ok, ", ".join(f"{k} {w:.1e}" for k, w in worst.items()))


def test_criterion_10_falsification(criterion):
    q3 = audit_axioms(make_dirichlet([1, 0, 0], 3, check=False))
    q4 = audit_axioms(make_dirichlet([1, 1, -0.45], 3, check=False))
    w3, w4 = q3.checks["Q3"].witness, q4.checks["Q4"].witness
    q3_ok = not q3.checks["Q3"].passed and np.ptp(w3["u"]) > 0 and w3["E"] == 0
    clamped = np.clip(w4["u"], w4["b"], w4["a"])
    bad_form = make_dirichlet([1, 1, -0.45], 3, check=False)
    q4_ok = not q4.checks["Q4"].passed and bad_form(clamped) > bad_form(w4["u"])
    fakes = [
        lambda t: 3.0 - t,  # decreasing: caught while bracketing
        lambda t: t - 2.0 * math.exp(-(((t - 1.5) / 0.05) ** 2)),  # dip at the first midpoint
    ]
    mono_ok = True
    for fake in fakes:
        try:
            solve_scaling_root(fake, 1.8 if fake is fakes[1] else 1.0)
            mono_ok = False
        except MonotonicityViolation:
            pass
    ok = q3_ok and q4_ok and mono_ok
    assert criterion(10, ok, f"Q3 witness {q3_ok}, Q4 witness {q4_ok}, MonotonicityViolation {mono_ok}")


def _grid_minimum():
    """Coarse-to-fine grid search for the level-1 gasket quartic, u = (1, 0, 0)."""

    def s(m12, m13, m23):
        def e(a, b, c):
            return (a - b) ** 4 + (a - c) ** 4 + (b - c) ** 4

        return e(1.0, m12, m13) + e(m12, 0.0, m23) + e(m13, m23, 0.0)

    centre = np.array([0.5, 0.5, 0.5])
    half = 0.5
    best = None
    for step in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
        axes = [np.arange(c - half, c + half + step / 2, step) for c in centre]
        grid = np.meshgrid(*axes, indexing="ij")
        values = s(*grid)
        idx = np.unravel_index(np.argmin(values), values.shape)
        centre = np.array([axes[k][idx[k]] for k in range(3)])
        best = float(values[idx])
        half = 2 * step
    return best, centre


def test_criterion_11_brute_force(criterion):
    start = time.perf_counter()
    brute, where = _grid_minimum()
    value = Renormalizer(fractal("gasket"), energy("quartic")).lambda_theta(1.0, [1.0, 0.0, 0.0]).value
    elapsed = time.perf_counter() - start
    err = abs(value - brute)
    ok = err <= 1e-6 and elapsed < 60
    assert criterion(
        11, ok, f"solver {value:.10f}, grid {brute:.10f} at {np.round(where, 6).tolist()}, diff {err:.1e}, {elapsed:.1f}s"
    )

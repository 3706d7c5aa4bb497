"""Acceptance suite: one PASS/FAIL line per criterion at the stated tolerances.

Lines are printed as each test runs and repeated in the pytest terminal
summary under "acceptance criteria". Criteria 2, 3, 4, 7 and 9 solve
level-2 (and for 7, level-3) moment programs and take minutes.
"""
import csv
import math
import time
from importlib import resources

import numpy as np
import pytest

from povmcert.certify import (
    certify_record,
    certify_table,
    min_entropy,
    square_pg_boundary,
    square_pg_full,
    verify_eve_strategy_boundary,
    verify_eve_strategy_full,
    von_neumann_lb,
)
from povmcert.npa import (
    ConstraintSet,
    NPAScenario,
    assemble_bff_sdp,
    assemble_guessing_sdp,
    exact_model,
    extended_bff_extras,
)
from povmcert.quadrature import gauss_radau
from povmcert.qubit import extremality_check, povm_validate, random_rank_one_povm
from povmcert.scenario import (
    NoiseModel,
    chsh_value,
    noisy_state,
    protocol_correlations,
    record_from_row,
    sequential_decomposition,
    sequential_povm,
    square_povm,
    triangular_povm,
    visibilities,
)
from povmcert.sdp import OPTIMAL, solve
from povmcert.tsirelson import bell_value, derive_coefficients, ideal_saturation_residual
from test_sdp import planted

LOG2_3 = math.log2(3)
SQRT8 = math.sqrt(8)


def test_c01_boundary_saturation(acceptance):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    norm_err = sat_err = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 6))
        theta = rng.uniform(0.1, math.pi - 0.1)
        povm = random_rank_one_povm(d, rng)
        n = derive_coefficients(theta, povm).n
        norm_err = max(norm_err, float(np.abs(np.linalg.norm(n, axis=1) - 1).max()))
        sat_err = max(sat_err, ideal_saturation_residual(theta, povm))
    elapsed = time.perf_counter() - t0
    ok = norm_err <= 1e-12 and sat_err <= 1e-10 and elapsed < 5
    acceptance(1, ok, f"max ||n_b|-1| = {norm_err:.1e}, max |<S>-1| = {sat_err:.1e}, {elapsed:.2f} s")
    assert ok


@pytest.mark.slow
def test_c02_triangular_ideal(acceptance):
    theta = math.pi / 2
    povm = triangular_povm()
    n = derive_coefficients(theta, povm).n
    cs = ConstraintSet.boundary(NPAScenario(3), n, SQRT8, 0.0, 1.0)
    t0 = time.perf_counter()
    guess = min_entropy(cs, level=2)
    scen = NPAScenario(3, eve="z")
    vn = von_neumann_lb(cs, level=2, m=8, extras=extended_bff_extras(scen))
    elapsed = time.perf_counter() - t0
    ok_pg = abs(guess.p_g - 1 / 3) <= 1e-3 and abs(guess.h_min - LOG2_3) <= 5e-3
    ok_vn = 1.5 <= vn.h_vn <= LOG2_3
    acceptance(2, ok_pg and ok_vn,
               f"p_g = {guess.p_g:.6f}, H_min = {guess.h_min:.4f}, H (m=8, outer) = {vn.h_vn:.4f} "
               f"[inner {vn.h_vn_inner:.4f}], {elapsed:.0f} s")
    assert ok_pg and ok_vn


@pytest.mark.slow
def test_c03_square_boundary(acceptance):
    povm = square_povm()
    got = {}
    for theta in (math.pi / 3, math.pi / 2, 2 * math.pi / 3):
        corr = protocol_correlations(theta, povm=povm)
        got[theta] = certify_table(corr, povm, "boundary", level=2, theta=theta).p_g
    err = max(abs(v - square_pg_boundary(t)) for t, v in got.items())
    ok = err <= 1e-4
    acceptance(3, ok, "p_g = " + ", ".join(f"{v:.6f}" for v in got.values()) + f" (max error {err:.1e})")
    assert ok


@pytest.mark.slow
def test_c04_square_full(acceptance):
    theta = math.pi / 3
    povm = square_povm()
    corr = protocol_correlations(theta, povm=povm)
    p_g = certify_table(corr, povm, "full", level=2, theta=theta).p_g
    ok = abs(p_g - square_pg_full(theta)) <= 1e-4
    acceptance(4, ok, f"p_g = {p_g:.6f} vs 0.625")
    assert ok


def test_c05_eve_strategies(acceptance):
    worst = 0.0
    for theta in np.linspace(0.1, math.pi - 0.1, 13):
        b = verify_eve_strategy_boundary(theta)
        f = verify_eve_strategy_full(theta)
        worst = max(worst, abs(b.p_g - square_pg_boundary(theta)), abs(b.bell_value - 1),
                    abs(f.p_g - square_pg_full(theta)), f.table_deviation)
    ok = worst <= 1e-12
    acceptance(5, ok, f"max deviation over 13 angles = {worst:.1e}")
    assert ok


def test_c06_noise_model(acceptance):
    vis_err = 0.0
    for theta in np.linspace(0.2, math.pi - 0.2, 5):
        for p in np.linspace(0, 0.3, 5):
            for c in np.linspace(0, 0.2, 5):
                vz, vx = visibilities(noisy_state(theta, NoiseModel(p, c)))
                vis_err = max(vis_err, abs(vz - (1 - p)), abs(vx - (1 - p - c) * math.sin(theta)))
    theta = math.pi / 2
    coeffs = derive_coefficients(theta, triangular_povm())
    fig_err = 0.0
    for p in np.linspace(0, 0.3, 7):
        corr = protocol_correlations(theta, noise=NoiseModel(p), povm=triangular_povm())
        fig_err = max(fig_err, abs(bell_value(coeffs, corr) - (1 - p)), abs(chsh_value(corr) - SQRT8 * (1 - p)))
    ok = vis_err <= 1e-12 and fig_err <= 1e-12
    acceptance(6, ok, f"visibility error {vis_err:.1e}, <S>/<I_0> error {fig_err:.1e}")
    assert ok


def _delta_scan(grid, level):
    povm = triangular_povm()
    theta = math.pi / 2
    rows = []
    for p in grid:
        corr = protocol_correlations(theta, noise=NoiseModel(p), povm=povm)
        full = certify_table(corr, povm, "full", level).h_min
        bnd = certify_table(corr, povm, "boundary", level).h_min
        rows.append((p, full, bnd, full - bnd))
    return rows


@pytest.mark.slow
def test_c07_boundary_loss_level2(acceptance):
    rows = _delta_scan([0.0, 0.01, 0.025, 0.05, 0.1], level=2)
    deltas = {p: d for p, _, _, d in rows}
    nonneg = all(d >= -1e-6 for d in deltas.values())
    vanishing = abs(deltas[0.0]) <= 1e-3 and deltas[0.01] <= deltas[0.1]
    rel = np.mean([d / full for p, full, _, d in rows if p > 0])
    ok = nonneg and vanishing
    detail = ", ".join(f"p={p:g}: {d:.4f}" for p, d in deltas.items())
    acceptance(7, ok, f"level 2: Delta {detail}; mean relative loss {100 * rel:.1f}% (informative)")
    assert ok


@pytest.mark.slow
def test_c07_boundary_loss_level3(acceptance):
    rows = _delta_scan(np.linspace(0.01, 0.1, 4), level=3)
    rel = float(np.mean([d / full for _, full, _, d in rows]))
    ok = abs(rel - 0.07) <= 0.05
    acceptance(7, ok, f"level 3: mean relative loss {100 * rel:.1f}% (target 7% +/- 5 points)", label="L")
    assert ok


def test_c08_sequential_povm(acceptance):
    checks = []
    for beta in (math.pi / 12, math.pi / 8, math.pi / 6):
        povm = sequential_povm(beta)
        report = povm_validate(povm)
        dec = sequential_decomposition(beta)
        avg_err = max(float(np.abs(a - f).max()) for a, f in zip(dec.average(), povm.matrices))
        checks.append((report.valid, ideal_saturation_residual(math.pi / 2, povm) < 1e-10,
                       not extremality_check(povm).extremal, avg_err <= 1e-15))
    ok = all(all(c) for c in checks)
    acceptance(8, ok, f"(valid, residual, non-extremal, halves) per beta: {checks}")
    assert ok


@pytest.mark.slow
def test_c09_experimental_rows(acceptance):
    text = resources.files("povmcert").joinpath("data/experimental_rows.csv").read_text()
    table = list(csv.DictReader(text.splitlines()))
    worst, ordered, parts = 0.0, True, []
    for i in (0, 8, 16, 24, 32):
        row = table[i]
        rec = record_from_row({k: row[k] for k in ("theta", "I_alpha", "S", "H_min", "H")})
        res = certify_record(rec, triangular_povm(), level=2, m=8)
        worst = max(worst, abs(res.h_min - float(row["H_min"])), abs(res.h_vn - float(row["H"])))
        ordered &= res.h_vn >= res.h_min
        parts.append(f"{i}: {res.h_min:.3f}/{row['H_min']} {res.h_vn:.3f}/{row['H']}")
    ok = worst <= 0.1 and ordered
    acceptance(9, ok, f"max |dH| = {worst:.3f}, H >= H_min: {ordered}; rows H_min/ref H/ref " + "; ".join(parts))
    assert ok


def test_c10_solver_soundness(acceptance):
    worst_gap = 0.0
    for seed in range(50):
        prob, value, _ = planted(seed)
        sol = solve(prob)
        assert sol.status == OPTIMAL
        worst_gap = max(worst_gap, abs(sol.dual_value - value), abs(sol.primal_value - value))
    worst_res, count = 0.0, 0
    for make, theta in ((triangular_povm, math.pi / 2), (triangular_povm, 2.2),
                        (square_povm, math.pi / 3), (lambda: sequential_povm(math.pi / 8), 1.2)):
        povm = make()
        for noise in (None, NoiseModel(0.1, 0.05)):
            corr = protocol_correlations(theta, noise=noise, povm=povm)
            n = derive_coefficients(theta, povm).n
            rho = noisy_state(theta, noise).rho
            for mode in ("boundary", "standard", "full"):
                cs = ConstraintSet.from_table(NPAScenario(povm.d), corr, mode, n)
                for level in (1, 2):
                    prob, mm = assemble_guessing_sdp(cs, level, povm.d)
                    y = exact_model(NPAScenario(povm.d), rho, povm, theta).moment_vector(mm)
                    worst_res = max(worst_res, prob.feasibility_residual(y))
                    prob, mm = assemble_bff_sdp(cs, level, 0.5, povm.d)
                    zs = np.linspace(-0.5, 0.5, povm.d)
                    y = exact_model(NPAScenario(povm.d, eve="z"), rho, povm, theta, eve_scalars=zs).moment_vector(mm)
                    worst_res = max(worst_res, prob.feasibility_residual(y))
                    count += 2
    ok = worst_gap <= 1e-7 and worst_res <= 1e-10
    acceptance(10, ok, f"planted max error {worst_gap:.1e}; exact model residual {worst_res:.1e} over {count} programs")
    assert ok


def test_c11_quadrature(acceptance):
    worst = 0.0
    for m in (2, 3, 5, 8):
        q = gauss_radau(m)
        for k in range(2 * m - 1):
            worst = max(worst, abs(float(q.weights @ q.nodes**k) - 1 / (k + 1)))
    q2 = gauss_radau(2)
    m2 = float(np.abs(q2.nodes - [1 / 3, 1]).max() + np.abs(q2.weights - [0.75, 0.25]).max())
    ok = worst <= 1e-12 and m2 <= 1e-12
    acceptance(11, ok, f"max moment error {worst:.1e}; m=2 deviation {m2:.1e}")
    assert ok

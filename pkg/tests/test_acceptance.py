"""Acceptance gates.

One test per criterion; each prints a single PASS/FAIL line (visible under
``pytest -s`` or in failure output) and then asserts.  Tolerances are fixed
here, not tuned at runtime.
"""

import json
import math

import numpy as np
import pytest

from parisi import (
    LOG2,
    OptimizerOptions,
    decomposition_f,
    dP_dbeta_fd,
    dirac,
    evaluate,
    make_measure,
    make_spec,
    minimize_ladder,
    moment,
    rs_best_dirac,
    rs_closed_form,
    stationarity_certificate,
    subdifferential_probe,
    value_from_arrays,
)
from parisi.calculus import envelope_values
from parisi.cli import dispatch
from parisi.finite_model import (
    disorder_average,
    gibbs_summary,
    ibp_check,
    interaction_energies,
    log_partition,
    sample_disorder,
)
from parisi.phase import boundary_scan, classify

from conftest import ACCEPTANCE_OPTS, SPEC_MIX, SPEC_RS, SPEC_RSB
from oracles import random_measure, random_spec_coeffs, tensor_value

LIGHT_OPTS = OptimizerOptions(seed=77, restarts=4, max_iters=300)


def _report(num, ok, detail):
    print(f"\nACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'}: {detail}", flush=True)
    assert ok, f"criterion {num}: {detail}"


def test_criterion_01_summation_by_parts():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        spec = make_spec(random_spec_coeffs(rng), h=float(rng.uniform(-1, 1)))
        qs, ms = random_measure(rng, k_max=5)
        _, resid = decomposition_f(spec, make_measure(qs, ms))
        worst = max(worst, abs(resid))
    _report(1, worst <= 1e-12, f"max rearrangement residual {worst:.3e} <= 1e-12 over 100 pairs")


def test_criterion_02_closed_form_and_tensor_oracle():
    worst_cf = 0.0
    for beta in (0.3, 0.6, 0.9, 1.2, 1.4142):
        for h in (0.0, 0.7):
            for q in (0.0, 0.25, 0.5, 0.75, 1.0):
                spec = make_spec({2: beta}, h=h)
                diff = abs(evaluate(spec, dirac(q)).value - rs_closed_form(spec, q))
                worst_cf = max(worst_cf, diff)
    rng = np.random.default_rng(202)
    worst_t = 0.0
    for _ in range(20):
        spec = make_spec(random_spec_coeffs(rng), h=float(rng.uniform(-0.8, 0.8)))
        qs, ms = random_measure(rng, k_max=3)
        mine = value_from_arrays(spec, qs, ms)
        worst_t = max(worst_t, abs(mine - tensor_value(spec, qs, ms)))
    ok = worst_cf <= 1e-8 and worst_t <= 1e-8
    _report(
        2,
        ok,
        f"closed-form gap {worst_cf:.3e} over 50-point grid, "
        f"tensor-oracle gap {worst_t:.3e} over 20 cases, both <= 1e-8",
    )


def _k3_level(report):
    return report.levels[2]


def test_criterion_03_derivative_formula_at_minimizers(ladder_rs, ladder_rsb, ladder_mix):
    failures = []
    details = []
    for name, spec, ladder in (
        ("rs", SPEC_RS, ladder_rs),
        ("rsb", SPEC_RSB, ladder_rsb),
        ("mix", SPEC_MIX, ladder_mix),
    ):
        measure = _k3_level(ladder).measure
        for p in spec.orders:
            fd = dP_dbeta_fd(spec, measure, p)
            analytic = spec.beta(p) * (1.0 - moment(measure, p))
            gap = abs(fd - analytic)
            details.append(f"{name} p={p}: {gap:.2e}")
            if gap > 1e-4:
                failures.append(f"{name} p={p} derivative gap {gap:.3e} > 1e-4")
        cert = stationarity_certificate(spec, measure, tol=1e-3)
        details.append(f"{name} resid={cert.max_interior_residual:.2e}")
        if cert.max_interior_residual > 1e-3:
            failures.append(f"{name} interior residual {cert.max_interior_residual:.3e} > 1e-3")
        if cert.max_boundary_violation > 1e-3:
            failures.append(f"{name} boundary violation {cert.max_boundary_violation:.3e} > 1e-3")
    _report(3, not failures, "; ".join(failures) if failures else "; ".join(details))


@pytest.fixture(scope="module")
def light_ladders():
    return {
        "rs": minimize_ladder(SPEC_RS, 4, LIGHT_OPTS),
        "rsb": minimize_ladder(SPEC_RSB, 4, LIGHT_OPTS),
        "mix": minimize_ladder(SPEC_MIX, 4, LIGHT_OPTS),
    }


def test_criterion_04_sandwich_convexity_evenness(light_ladders):
    failures = []
    details = []
    probes = [
        ("rs", SPEC_RS, 2),
        ("rsb", SPEC_RSB, 2),
        ("mix", SPEC_MIX, 2),
        ("mix", SPEC_MIX, 4),
    ]
    for name, spec, p in probes:
        probe = subdifferential_probe(spec, p, light_ladders[name])
        details.append(
            f"{name} p={p}: analytic={probe.analytic:.6f} in "
            f"[{probe.lower - probe.slack:.6f}, {probe.upper + probe.slack:.6f}]"
        )
        if not probe.contained:
            failures.append(
                f"{name} p={p}: analytic {probe.analytic:.6f} outside "
                f"[{probe.lower - probe.slack:.6f}, {probe.upper + probe.slack:.6f}]"
            )
    grids = [("rs", SPEC_RS, 2), ("rsb", SPEC_RSB, 2), ("mix", SPEC_MIX, 4)]
    for name, spec, p in grids:
        betas = spec.beta(p) + 0.05 * np.arange(-4, 5)
        vals = envelope_values(spec, p, betas, 4, LIGHT_OPTS)
        second = np.diff(vals, 2)
        if np.any(second < -1e-6):
            failures.append(f"{name} p={p} envelope second difference {second.min():.3e} < -1e-6")
        details.append(f"{name} p={p} min second diff {second.min():.2e}")
    for name, spec, p in grids:
        mirrored = minimize_ladder(spec.with_coeff(p, -spec.beta(p)), 4, LIGHT_OPTS)
        gap = abs(mirrored.value - light_ladders[name].value)
        if gap > 1e-10:
            failures.append(f"{name} p={p} envelope not even: gap {gap:.3e} > 1e-10")
    _report(4, not failures, "; ".join(failures) if failures else "; ".join(details))


def test_criterion_05_ladder_monotonicity(ladder_rs, ladder_rsb, ladder_mix):
    failures = []
    for name, ladder in (("rs", ladder_rs), ("rsb", ladder_rsb), ("mix", ladder_mix)):
        values = [lvl.value for lvl in ladder.levels]
        eps = list(ladder.eps)
        if any(values[i + 1] > values[i] for i in range(len(values) - 1)):
            failures.append(f"{name} values not nonincreasing: {values}")
        if any(e < 0.0 for e in eps):
            failures.append(f"{name} eps has negative entries: {eps}")
        if any(eps[i + 1] > eps[i] for i in range(len(eps) - 1)):
            failures.append(f"{name} eps not nonincreasing: {eps}")
    _report(5, not failures, "; ".join(failures) if failures else "values(k) and eps both monotone, k=1..4, 3 models")


def test_criterion_06_phase_boundary_pure_two_spin():
    betas = np.round(0.1 + 0.05 * np.arange(29), 10)
    result = boundary_scan(
        make_spec({2: 0.1}),
        2,
        betas,
        k_max=2,
        opts=OptimizerOptions(seed=606, restarts=4, max_iters=300),
    )
    ok_flip = result.beta_c is not None
    gap = abs(result.beta_c - result.beta_c_fixed_point) if ok_flip else float("inf")
    lin = abs(result.beta_c_fixed_point - math.sqrt(0.5)) if result.beta_c_fixed_point else float("inf")
    noted = "beta^2 <= 2" in result.note
    flags = [row.is_rs for row in result.rows]
    single_flip = all(a >= b for a, b in zip(flags, flags[1:]))  # True...False, one flip
    ok = ok_flip and gap <= 0.02 and lin <= 2e-3 and noted and single_flip
    _report(
        6,
        ok,
        f"scan flip at beta={result.beta_c}, fixed-point emergence at "
        f"{result.beta_c_fixed_point} (linearization sqrt(1/2)={math.sqrt(0.5):.4f}); "
        f"|flip - oracle| = {gap:.4f} <= 0.02; alternative bound recorded: {noted}",
    )


def test_criterion_07_symmetric_rsb_diagnostics():
    diag = classify(SPEC_RSB, k_max=3, opts=OptimizerOptions(seed=707, restarts=5))
    failures = []
    if diag.is_rs:
        failures.append("is_rs should be False at beta2=1.2, h=0")
    if diag.moments[2] < 0.01:
        failures.append(f"second moment {diag.moments[2]:.4f} < 0.01")
    avg = disorder_average(SPEC_RSB, 12, [2], samples=200, seed=707)
    if avg.overlap_mean.mean != 0.0 or avg.overlap_mean.stderr != 0.0:
        failures.append("per-sample Gibbs mean overlap not exactly zero under spin flip")
    r2 = avg.overlap_moments[2]
    if not r2.mean > 3.0 * r2.stderr:
        failures.append(f"E<R^2> = {r2.mean:.4f} not separated from 0 by 3 stderr")
    _report(
        7,
        not failures,
        "; ".join(failures)
        if failures
        else f"is_rs=False, moment2={diag.moments[2]:.4f}, <R>=0 exactly, "
        f"E<R^2>={r2.mean:.4f}+-{r2.stderr:.4f}",
    )


def test_criterion_08_field_rsb_witnesses():
    diag = classify(SPEC_MIX, k_max=3, opts=OptimizerOptions(seed=808, restarts=5))
    failures = []
    if not diag.rs_margin > 1e-6:
        failures.append(f"point not verified RSB: rs_margin {diag.rs_margin:.3e} <= 1e-6")
    gap = diag.moment_gap[(2, 4)]
    if not gap < -1e-4:
        failures.append(f"moment gap {gap:.3e} not < -1e-4")
    if not diag.variance_proxy > 1e-4:
        failures.append(f"variance proxy {diag.variance_proxy:.3e} not > 1e-4")
    _report(
        8,
        not failures,
        "; ".join(failures)
        if failures
        else f"rs_margin={diag.rs_margin:.3e}, moment_gap(2,4)={gap:.4f}, "
        f"variance={diag.variance_proxy:.4f}",
    )


def test_criterion_09_finite_size_vs_prediction_rs():
    failures = []
    details = []
    for h in (0.0, 0.3):
        spec = make_spec({2: 0.3}, h=h)
        q_star, value = rs_best_dirac(spec)
        prediction = LOG2 + value
        devs = {}
        errs = {}
        for n in (8, 10, 12):
            avg = disorder_average(spec, n, [2], samples=200, seed=909 + n)
            dev = abs(avg.f_n.mean - prediction)
            devs[n] = dev
            errs[n] = avg.f_n.stderr
            budget = 3.0 * avg.f_n.stderr + 0.5 / n
            details.append(f"h={h} n={n}: dev={dev:.4f} budget={budget:.4f}")
            if dev > budget:
                failures.append(f"h={h} n={n}: deviation {dev:.4f} > {budget:.4f}")
        if devs[12] > devs[8] + 3.0 * (errs[8] + errs[12]):
            failures.append(
                f"h={h}: deviation grew with n ({devs[8]:.4f} -> {devs[12]:.4f})"
            )
    _report(9, not failures, "; ".join(failures) if failures else "; ".join(details))


def test_criterion_10_integration_by_parts():
    r = ibp_check(make_spec({2: 0.5}, h=0.3), n=10, p=2, samples=400, step=1e-3, seed=1010)
    failures = []
    if abs(r.diff) > 3.0 * r.stderr + 1e-4 or not r.passed:
        failures.append(f"averaged identity gap {r.diff:.2e} > 3*{r.stderr:.2e} + 1e-4")
    spec = make_spec({2: 0.5}, h=0.3)
    for n in (6, 10):
        sample = sample_disorder(spec, n, seed=1010 + n)
        energies = interaction_energies(sample)
        spins = 1.0 - 2.0 * ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1)
        e = 0.5 * energies[2] + 0.3 * spins.sum(axis=1)
        w = np.exp(e - e.max())
        w /= w.sum()
        gibbs_avg = float(w @ energies[2]) / n

        def f(b):
            return log_partition(sample, spec.with_coeff(2, b), energies) / n

        d1 = (f(0.5 + 1e-3) - f(0.5 - 1e-3)) / 2e-3
        d2 = (f(0.5 + 5e-4) - f(0.5 - 5e-4)) / 1e-3
        fd = (4.0 * d2 - d1) / 3.0
        if abs(fd - gibbs_avg) > 1e-8:
            failures.append(f"per-sample identity at n={n}: gap {abs(fd - gibbs_avg):.2e} > 1e-8")
    _report(
        10,
        not failures,
        "; ".join(failures)
        if failures
        else f"fd={r.fd:.5f} vs beta(1-E<R^2>)={r.identity:.5f} "
        f"(gap {r.diff:.1e}, stderr {r.stderr:.1e}); per-sample identity <= 1e-8",
    )


def test_criterion_11_product_measure_exactness():
    failures = []
    free0 = make_spec({2: 0.0}, h=0.0, allow_degenerate=True)
    s = sample_disorder(free0, 10, seed=11)
    g = gibbs_summary(s, [2])
    if g.overlap_moments[2] != pytest.approx(0.1, abs=1e-15):
        failures.append(f"<R^2> = {g.overlap_moments[2]!r} != 1/n")
    if g.overlap_mean != 0.0:
        failures.append("<R> not exactly 0 at h=0")
    if abs(g.log_z_over_n - math.log(2.0)) > 1e-15:
        failures.append("F != log 2 at h=0")
    avg = disorder_average(free0, 10, [2], samples=5, seed=11)
    if avg.f_n.stderr != 0.0:
        failures.append("stderr not exactly 0 for the free model")
    free_h = make_spec({2: 0.0}, h=0.3, allow_degenerate=True)
    gh = gibbs_summary(sample_disorder(free_h, 11, seed=11), [2])
    if abs(gh.overlap_mean - math.tanh(0.3) ** 2) > 1e-13:
        failures.append("<R> != tanh^2(h)")
    if abs(gh.log_z_over_n - math.log(2 * math.cosh(0.3))) > 1e-13:
        failures.append("F != log(2 cosh h)")
    _report(
        11,
        not failures,
        "; ".join(failures)
        if failures
        else "<R^2>=1/n, <R>=tanh^2(h), F=log(2 cosh h) at machine precision",
    )


def test_criterion_12_cli_determinism(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(make_spec({2: 0.5}, h=0.3).to_config()))
    measure_path = tmp_path / "m.json"
    measure_path.write_text(json.dumps(dirac(0.0).to_config()))

    def run(*argv):
        code = dispatch(list(argv))
        out = capsys.readouterr().out
        return code, out

    failures = []

    def twice(label, *argv):
        c1, o1 = run(*argv)
        c2, o2 = run(*argv)
        if c1 != c2 or o1 != o2:
            failures.append(f"{label} not byte-identical across runs")
        return o1

    twice(
        "eval",
        "eval", "--spec", str(spec_path), "--measure", str(measure_path), "--format", "json",
    )
    twice(
        "minimize",
        "minimize", "--spec", str(spec_path), "--k-max", "2", "--restarts", "3",
        "--seed", "1", "--csv",
    )
    twice(
        "classify",
        "classify", "--spec", str(spec_path), "--k-max", "2", "--restarts", "3",
        "--seed", "1", "--format", "json",
    )
    twice(
        "moments",
        "moments", "--spec", str(spec_path), "--p", "2", "--k-max", "2",
        "--restarts", "2", "--seed", "1", "--format", "json",
    )
    twice(
        "grad-check",
        "grad-check", "--spec", str(spec_path), "--p", "2", "--k-max", "2",
        "--restarts", "2", "--seed", "1", "--format", "json",
    )
    twice(
        "sk-compare",
        "sk-compare", "--spec", str(spec_path), "--n", "6", "--samples", "8",
        "--k-max", "1", "--restarts", "2", "--seed", "3", "--format", "json",
    )
    base_sk = (
        "sk-exact", "--spec", str(spec_path), "--n", "8", "--samples", "12",
        "--seed", "7", "--moments", "2", "--format", "json",
    )
    _, sk1 = run(*base_sk, "--jobs", "1")
    _, sk4 = run(*base_sk, "--jobs", "4")
    if sk1 != sk4:
        failures.append("sk-exact output differs between --jobs 1 and --jobs 4")
    csv1 = tmp_path / "scan1.csv"
    csv4 = tmp_path / "scan4.csv"
    base_scan = (
        "phase-scan", "--spec", str(spec_path), "--sweep", "p=2:0.2:0.4:0.1",
        "--k-max", "1", "--restarts", "2", "--seed", "5", "--format", "json",
    )
    run(*base_scan, "--csv", str(csv1), "--jobs", "1")
    run(*base_scan, "--csv", str(csv4), "--jobs", "4")
    if csv1.read_text() != csv4.read_text():
        failures.append("phase-scan CSV differs between --jobs 1 and --jobs 4")
    _report(
        12,
        not failures,
        "; ".join(failures)
        if failures
        else "eval/minimize/classify byte-identical across runs; "
        "sk-exact and phase-scan identical across --jobs 1 vs 4",
    )

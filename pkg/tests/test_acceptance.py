"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from aoii import cli
from aoii import experiments as ex
from aoii.applications import Weibull, fire_f, linear_f, video_f, weibull_f
from aoii.closed_form import stationary_distribution, tail_sum, update_rate
from aoii.config import ExperimentConfig
from aoii.model import validate
from aoii.optimizer import solve
from aoii.rvia import power_iteration_stationary
from aoii.simulator import Policy, simulate

from .conftest import record

SLOTS = 10**7


def test_c1_table2():
    t0 = time.perf_counter()
    analytic = ex.table2("analytic").records()
    t_analytic = time.perf_counter() - t0
    t0 = time.perf_counter()
    sim = ex.table2("simulate", T=SLOTS, seed=1).records()
    t_sim = time.perf_counter() - t0

    aoii_ref = {0.05: 4.5, 0.1: 3.1, 0.4: 1.0}
    err_ref = {0.05: 0.85, 0.1: 0.8, 0.4: 0.6}
    thr_ref = {0.05: 13, 0.1: 8, 0.4: 2}
    rows = {(r["delta"], r["policy"]): r for r in analytic}
    problems = []
    for d in ex.TABLE2_DELTAS:
        a, e = rows[d, "aoii_opt"], rows[d, "error_opt"]
        if abs(a["avg_aoii"] / aoii_ref[d] - 1) > 0.05:
            problems.append(f"aoii({d})={a['avg_aoii']:.4f}")
        for r in (a, e):
            if abs(r["avg_error"] - err_ref[d]) > 0.02:
                problems.append(f"{r['policy']} error({d})={r['avg_error']:.4f}")
        if abs(a["avg_error"] - e["avg_error"]) > 0.01:
            problems.append(f"error gap at {d}")
        if e["threshold"] != 1:
            problems.append(f"error-opt threshold {e['threshold']} at {d}")
        if abs(a["threshold"] - thr_ref[d]) > 1:
            problems.append(f"aoii threshold {a['threshold']} at {d}")
    for r in sim:
        ref = rows[r["delta"], r["policy"]]
        for col, hw in (("aoii", "sim_aoii_hw"), ("error", "sim_error_hw")):
            if abs(r[f"sim_{col}"] - ref[f"avg_{col}"]) > r[hw]:
                problems.append(f"sim {r['policy']} {col}({r['delta']}) off by more than one CI")
    if t_analytic > 30 or t_sim > 300:
        problems.append(f"runtime analytic={t_analytic:.1f}s sim={t_sim:.1f}s")
    ok = not problems
    detail = "aoii=" + ", ".join(f"{rows[d, 'aoii_opt']['avg_aoii']:.3f}" for d in ex.TABLE2_DELTAS)
    detail += " thresholds=" + ", ".join(str(rows[d, "aoii_opt"]["threshold"]) for d in ex.TABLE2_DELTAS)
    detail += f" analytic {t_analytic:.2f}s, sim {t_sim:.1f}s"
    record("C1 table2", ok, detail + ("" if ok else " | " + "; ".join(problems)))
    assert ok, problems


@pytest.fixture(scope="module")
def verify_table():
    t0 = time.perf_counter()
    table, _ = ex.verify(ExperimentConfig())
    return table, time.perf_counter() - t0


def _grid_rows(table, checks):
    return [r for r in table.records() if r["check"] in checks]


def test_c2_oracle_equivalence(verify_table):
    table, elapsed = verify_table
    rows = _grid_rows(table, {"threshold_equal", "theta_gap", "value_gap"})
    points = len(rows) // 3
    failed = [r for r in rows if not r["passed"]]
    theta = max(r["measured"] for r in rows if r["check"] == "theta_gap")
    value = max(r["measured"] for r in rows if r["check"] == "value_gap")
    ok = not failed and points == 3 * 2 * 2 * 4 * 3 and elapsed < 120
    record("C2 oracle equivalence", ok,
           f"{points} grid points, {len(failed)} failures, max theta gap {theta:.2e}, "
           f"max value gap {value:.2e}, {elapsed:.1f}s")
    assert ok


def test_c3_structure(verify_table):
    table, _ = verify_table
    rows = _grid_rows(table, {"monotone", "threshold_structure"})
    failed = [r for r in rows if not r["passed"]]
    ok = not failed and len(rows) == 2 * 144
    record("C3 structural properties", ok, f"{len(rows)} checks, {len(failed)} failures")
    assert ok


def test_c4_update_rate_and_stationary():
    params = validate(0.2, 0.9, 0.8)
    worst_rate = 0.0
    for n in range(16):
        st = simulate(Policy.threshold(n), params, linear_f(), 10**6, seed=n + 1)
        worst_rate = max(worst_rate, abs(st.rate - update_rate(n, params)))
    worst_sigma = 0.0
    for n in (1, 2, 5, 12):
        pi = power_iteration_stationary(n, params, K=400)
        worst_sigma = max(worst_sigma, float(np.max(np.abs(pi - stationary_distribution(n, params, K=400).sigma))))
    ok = worst_rate <= 0.005 and worst_sigma <= 1e-9
    record("C4 update rate / stationary law", ok,
           f"max |C_sim - C| = {worst_rate:.2e} (n=0..15), max sigma gap = {worst_sigma:.2e}")
    assert ok


def test_c5_constraint_binding():
    params0 = validate(0.2, 0.9, 0.8)
    problems, rates = [], []
    for d in (0.05, 0.1, 0.2, 0.4):
        params = params0.with_delta(d)
        assert d < params.vartheta
        m = solve(params, linear_f()).policy
        if not (m.C_low >= d >= m.C_high):
            problems.append(f"bracket at {d}")
        st = simulate(Policy.from_mixture(m), params, linear_f(), SLOTS, seed=7)
        rates.append(st.rate)
        if abs(st.rate - d) > 0.003:
            problems.append(f"rate {st.rate:.5f} at {d}")
    weib = weibull_f(Weibull(1.0, 1.0), 1e-3)
    for d in (params0.vartheta, 0.7, 1.0):
        sol = solve(params0.with_delta(d), weib)
        if not (sol.policy.pure and sol.threshold == 1 and sol.achieved_rate <= d + 1e-12):
            problems.append(f"bounded shortcut at {d}")
    ok = not problems
    record("C5 constraint binding", ok,
           "simulated rates " + ", ".join(f"{r:.4f}" for r in rates)
           + " for delta 0.05/0.1/0.2/0.4; bounded shortcut ok" + ("" if ok else " | " + "; ".join(problems)))
    assert ok


@pytest.fixture(scope="module")
def fig6_tables():
    return {t: ex.fig6(t, "both", SLOTS, seed=1) for t in ("fig6a", "fig6b", "fig6c")}


@pytest.mark.parametrize("target", ["fig6a", "fig6b", "fig6c"])
def test_c6_fig6_ordering(fig6_tables, target):
    recs = fig6_tables[target].records()
    policies = sorted({r["policy"] for r in recs})
    expected = ["aoi_opt", "aoii_opt", "error_opt"] if target != "fig6c" else ["aoii_opt", "error_opt"]
    deltas = sorted({r["delta"] for r in recs})
    violated = [r for r in recs if r["vs_aoii_opt"] == "violated"]
    worst_gap = max(abs(r["rel_gap"]) for r in recs if not math.isnan(r["rel_gap"]))
    finite = all(math.isfinite(r["sim_penalty"]) for r in recs)
    flags = {}
    for r in recs:
        flags[r["vs_aoii_opt"]] = flags.get(r["vs_aoii_opt"], 0) + 1
    ok = (policies == expected and deltas == list(ex.FIG6_DELTAS) and not violated
          and worst_gap <= 0.02 and finite)
    record(f"C6 {target} ordering", ok,
           f"{len(deltas)} deltas, flags {dict(sorted(flags.items()))}, "
           f"max analytic-vs-sim gap {100 * worst_gap:.2f}%")
    assert ok


def test_c7_numerical_robustness():
    f = video_f()
    ks = np.arange(10**4)
    fk = f.values(ks)
    worst = 0.0
    for a in np.round(np.arange(0.1, 1.0, 0.1), 10):
        direct = math.fsum(fk * a ** ks.astype(float))
        worst = max(worst, abs(tail_sum(f, a, 0) - direct) / direct)
    limit = ex.limit_gaps()
    # the fire fixture runs end to end at beta = 1 too
    sol = solve(validate(0.2, 1.0, 1.0, 0.1), fire_f())
    ok = worst <= 1e-9 and limit <= 1e-6 and math.isfinite(sol.avg_aoii)
    record("C7 numerical robustness", ok,
           f"tail_sum rel err {worst:.2e}, beta->1 limit gap {limit:.2e}")
    assert ok


def test_c8_determinism(tmp_path, capsys):
    outputs = {}
    for cmd in (["verify"], ["reproduce", "table2", "--mode", "both", "--slots", "200000"]):
        texts = []
        for i in range(2):
            out = tmp_path / f"{cmd[0]}_{i}.csv"
            code = cli.main(cmd + ["--seed", "11", "--out", str(out)])
            assert code == 0
            texts.append(out.read_bytes())
        outputs[cmd[0]] = texts
    capsys.readouterr()
    same = {k: v[0] == v[1] for k, v in outputs.items()}
    ok = all(same.values())
    record("C8 determinism", ok, ", ".join(f"{k} byte-identical={v}" for k, v in same.items()))
    assert ok

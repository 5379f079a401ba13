"""Acceptance checks at the stated tolerances; each prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``. The probe-strength
sweep (8 values x 5 seeds at T = 2e4) is computed once and shared by
criteria 3 to 5; expect a few minutes on one core.
"""
import math

import numpy as np
import pytest
from scipy import stats

from pqsmag import filtering, harness, markov, model, qmat, retro, truthsim
from pqsmag.filtering import BlockState, Dynamics
from pqsmag.harness import ExperimentConfig
from pqsmag.markov import HmmSpec
from pqsmag.model import default_params

from conftest import random_matrix
from test_retro import _classical_ops, classical_smoother

P = default_params()
SPEC = HmmSpec()
DESK = ExperimentConfig(duration=2e4, seeds=(0, 1, 2, 3, 4), write_traces=False)


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    rows, summary = harness.beta_sweep(DESK, out_dir=out)
    assert len(rows) == len(DESK.betas) * len(DESK.seeds)
    return rows, summary


def _at_beta(rows, beta):
    return [r for r in rows if math.isclose(r.beta, beta)]


def test_criterion_1_purcell_rates(capsys):
    g0 = model.purcell_rate(P, 0.0)
    g2 = [model.purcell_rate(P, d) for d in (-2.0, 2.0)]
    ok = abs(g0 - 0.8) <= 1e-12 * 0.8 and all(abs(g - 10 / 13) <= 1e-12 * 10 / 13 for g in g2)
    report(capsys, 1, ok, f"gamma_p(0)={g0:.15g} (0.8), gamma_p(+-2)={g2[0]:.15g}, {g2[1]:.15g} (10/13)")
    assert ok


def test_criterion_2_stationary_spread(capsys):
    std = markov.detuning_std(SPEC)
    tr = markov.sample_trajectory(SPEC, None, 1_000_000, 0.01, np.random.default_rng(2024))
    # thin to about one sample per two correlation times so the counts are close to independent
    x = tr.states[:: int(2 * 25 / 0.01)]
    expected = markov.stationary(SPEC) * x.size
    counts = np.bincount(x, minlength=SPEC.n_states)
    lo = np.searchsorted(np.cumsum(expected), 5)
    hi = SPEC.n_fleas - np.searchsorted(np.cumsum(expected[::-1]), 5)
    obs = np.r_[counts[: lo + 1].sum(), counts[lo + 1 : hi], counts[hi:].sum()]
    exp = np.r_[expected[: lo + 1].sum(), expected[lo + 1 : hi], expected[hi:].sum()]
    pval = stats.chisquare(obs, exp).pvalue
    ok = round(std, 3) == 0.408 and round(std, 2) == 0.41 and pval > 0.01
    report(capsys, 2, ok, f"stationary std={std:.6f} (0.408), chi-square p={pval:.3f} (> 0.01)")
    assert ok


def test_criterion_3_forward_error(sweep, capsys):
    rows = _at_beta(sweep[0], 1.0)
    agg = harness.aggregate(rows)
    rmse, std = agg["rmse_map_forward"], agg["mean_post_std_forward"]
    spread = np.std([r.rmse_map_forward for r in rows], ddof=1)
    ok = abs(rmse - 0.26) <= 0.05 and abs(std - 0.27) <= 0.05
    report(
        capsys,
        3,
        ok,
        f"rmse_map_forward={rmse:.4f} (0.26 +- 0.05), mean_post_std={std:.4f} (0.27 +- 0.05), "
        f"per-seed rmse std={spread:.4f} over {len(rows)} seeds",
    )
    assert ok


def test_criterion_4_smoothed_error(sweep, capsys):
    rows = _at_beta(sweep[0], 1.0)
    agg = harness.aggregate(rows)
    rmse, fwd = agg["rmse_map_pqs"], agg["rmse_map_forward"]
    spread = np.std([r.rmse_map_pqs for r in rows], ddof=1)
    ok = abs(rmse - 0.20) <= 0.05 and rmse < fwd
    report(
        capsys,
        4,
        ok,
        f"rmse_map_pqs={rmse:.4f} (0.20 +- 0.05), forward={fwd:.4f}, improvement={fwd - rmse:.4f}, "
        f"per-seed rmse std={spread:.4f}",
    )
    assert ok


def test_criterion_5_sweep_shape(sweep, capsys):
    summary = sweep[1]
    betas = sorted(summary)
    fwd = np.array([summary[b]["rmse_map_forward"] for b in betas])
    pqs = np.array([summary[b]["rmse_map_pqs"] for b in betas])
    sfwd = np.array([summary[b]["mean_post_std_forward"] for b in betas])
    spqs = np.array([summary[b]["mean_post_std_pqs"] for b in betas])
    small = [i for i, b in enumerate(betas) if b <= 0.2]
    plateau = all(abs(c[i] - 0.41) <= 0.03 for c in (fwd, pqs) for i in small)

    def interior_min(curve):
        i = int(np.argmin(curve))
        return 0.5 <= betas[i] <= 2.0 and curve[i] < curve[0] and curve[i] < curve[-1]

    minimum = interior_min(fwd) and interior_min(pqs)
    ordered = bool(np.all(pqs <= fwd)) and bool(np.all(spqs <= sfwd))
    ok = plateau and minimum and ordered
    table = ", ".join(f"{b:g}: {f:.3f}/{p:.3f}" for b, f, p in zip(betas, fwd, pqs))
    report(
        capsys,
        5,
        ok,
        f"plateau={'ok' if plateau else 'no'}, interior minimum={'ok' if minimum else 'no'} "
        f"(forward at beta={betas[int(np.argmin(fwd))]:g}, smoothed at beta={betas[int(np.argmin(pqs))]:g}), "
        f"smoothed <= forward={'ok' if ordered else 'no'}; rmse forward/smoothed by beta: {table}",
    )
    assert ok


def _duality(rng):
    worst = 0.0
    for _ in range(100):
        a = random_matrix(rng)
        rho = random_matrix(rng, hermitian=True)
        e = random_matrix(rng, hermitian=True)
        lhs = np.trace(rho @ qmat.adjoint_dissipator(a, e))
        rhs = np.trace(qmat.dissipator(a, rho) @ e)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return worst < 1e-12


def _step_adjointness(rng):
    dyn = Dynamics.build(SPEC, P, 0.01)
    worst = 0.0
    for _ in range(20):
        rho = np.array([random_matrix(rng, psd=True) for _ in range(25)])
        eff = np.array([random_matrix(rng, psd=True) for _ in range(25)])
        dy = rng.normal(0, 0.1)
        fwd = filtering.forward_map(qmat.pack(rho), dy, dyn)
        bwd = retro.backward_map(qmat.pack(eff), dy, dyn)
        w = qmat.TRACE_WEIGHTS
        lhs, rhs = np.sum(fwd * w * qmat.pack(eff)), np.sum(qmat.pack(rho) * w * bwd)
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    # exact for this integrator, so far inside O(dt^2)
    return worst < 1e-12


def _identity_fixed_point():
    dyn = Dynamics.build(SPEC, P.with_(eta=0.0), 0.01)
    e = BlockState.identity(25)
    for dy in np.random.default_rng(1).normal(0, 0.1, 100):
        e = retro.backward_step_linear(e, dy, dyn)
    return np.abs(e.blocks - np.eye(2)[None]).max() < 1e-12


def _scale_invariance(rng):
    rho = BlockState(np.array([random_matrix(rng, psd=True) for _ in range(25)]))
    eff = BlockState(np.array([random_matrix(rng, psd=True) for _ in range(25)]))
    base = retro.pqs_posterior(rho, eff)
    scaled = retro.pqs_posterior(BlockState(7.5 * rho.blocks), BlockState(3e-9 * eff.blocks))
    return np.abs(scaled - base).max() < 1e-13


def _boundary_identity():
    _, rec, _ = truthsim.generate(SPEC, P, 50_000, 0.01, seed=5)
    fwd, smooth = retro.run_pqs(rec, SPEC, P, stride=10)
    return fwd.times[-1] == pytest.approx(rec.duration) and np.abs(fwd.prob[-1] - smooth.prob[-1]).max() < 1e-12


def _classical_smoother_match():
    offsets = np.linspace(-1.5, 1.5, 25) ** 3
    rng = np.random.default_rng(17)
    tr = markov.sample_trajectory(SPEC, None, 5000, 0.01, rng)
    rec = truthsim.HomodyneRecord(0.01, 2 * offsets[tr.states[:-1]] * 0.01 + rng.normal(0, 0.1, 5000))
    dyn = Dynamics.from_operators(_classical_ops(offsets), SPEC, 0.01)
    _, smooth = retro.run_pqs(rec, SPEC, dyn=dyn, stride=1)
    ref = classical_smoother(rec.increments, offsets, markov.rate_matrix(SPEC), 0.01, markov.stationary(SPEC))
    return np.abs(smooth.prob - ref).max() < 1e-8


def _dt_halving(sweep):
    coarse = harness.aggregate(_at_beta(sweep[0], 1.0))
    fine_rows = [harness.run_one(DESK.with_(dt=0.005), s) for s in DESK.seeds]
    fine = harness.aggregate(fine_rows)
    gaps = [abs(fine[m] - coarse[m]) for m in ("rmse_map_forward", "rmse_map_pqs")]
    return max(gaps) < 0.02, gaps


def _determinism(tmp_path):
    cfg = ExperimentConfig(duration=2000.0)
    harness.run_one(cfg, 3, out_dir=tmp_path / "a")
    harness.run_one(cfg, 3, out_dir=tmp_path / "b")
    names = ("truth.csv", "forward.csv", "pqs.csv", "metrics.csv")
    return all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)


def test_criterion_6_property_suites(sweep, capsys, tmp_path):
    rng = np.random.default_rng(606)
    halving_ok, gaps = _dt_halving(sweep)
    checks = {
        "dissipator duality": _duality(rng),
        "step adjointness": _step_adjointness(rng),
        "identity fixed point": _identity_fixed_point(),
        "scale invariance": _scale_invariance(rng),
        "boundary identity": _boundary_identity(),
        "classical smoother": _classical_smoother_match(),
        "dt halving": halving_ok,
        "determinism": _determinism(tmp_path),
    }
    failed = [k for k, v in checks.items() if not v]
    ok = not failed
    detail = f"{len(checks) - len(failed)}/{len(checks)} suites pass; dt-halving rmse change {gaps[0]:.4f}/{gaps[1]:.4f}"
    if failed:
        detail += f"; failing: {', '.join(failed)}"
    report(capsys, 6, ok, detail)
    assert ok

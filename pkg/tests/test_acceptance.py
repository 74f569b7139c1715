"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Two checks are intentionally left red; their frozen expectations cannot be
reproduced by mathematically sound code (details on each test):

* criterion 02 freezes a certified-bound value that is only reachable by
  substituting the *location* of the fourth-derivative maximum for its
  value;
* criterion 03b freezes an over-estimation claim for the closed-form
  variance in exactly the region where the formula under-estimates.

Everything else must pass. Shared fixtures cache the expensive runs
(the 1e7-sample oracle grid and the three-seed washout ensembles).
"""

import time

import numpy as np
import pytest
from scipy.integrate import quad

from pesn.activations import get_activation
from pesn.bounds import mean_error_bound, variance_error_bound
from pesn.cartpole import make_dataset
from pesn.cli import main as cli_main
from pesn.experiments import (
    ExperimentConfig,
    run_model_learning,
    run_timing_bench,
    washout_and_entropy,
)
from pesn.gaussian import DiagonalGaussian, RngStream
from pesn.moments import (
    analytic_tanh_mean,
    analytic_tanh_variance,
    mc_reference_vec,
    segment_integral,
    spline_moments_vec,
)
from pesn.probabilistic import PesnConfig, pesn_predict, pesn_train
from pesn.reservoir import (
    EsnParams,
    build_regressor,
    esn_step,
    init_reservoir,
    rls_update,
    run_teacher_forced,
    train_batch,
    with_readout,
)
from pesn.splines import build_spline_table

TANH = get_activation("tanh")
MASTER_SEEDS = (1, 2, 3)


def report(num, ok, detail):
    line = f"[criterion {num}] {'PASS' if ok else 'FAIL'} - {detail}"
    print(line, flush=True)
    return line


@pytest.fixture(scope="module")
def tanh_table():
    return build_spline_table("tanh", -10.0, 10.0, 101, max_power=2)


@pytest.fixture(scope="module")
def oracle_grid(tanh_table):
    """21 x 2 grid with a 1e7-sample MC oracle, spline + analytic engines
    and certified bounds."""
    mus = np.arange(-5.0, 5.01, 0.5)
    out = {}
    for vi, var in enumerate((0.2, 1.0)):
        varr = np.full_like(mus, var)
        ref = mc_reference_vec(TANH, mus, varr, 10**7,
                               RngStream(20_000, vi))
        sm, sv = spline_moments_vec(tanh_table, mus, varr)
        out[var] = {
            "mus": mus,
            "mc": ref,
            "spline_mean": sm, "spline_var": sv,
            "analytic_mean": analytic_tanh_mean(mus, varr),
            "analytic_var": analytic_tanh_variance(mus, varr),
            "eps_mu": mean_error_bound(tanh_table, mus, varr),
            "eps_sigma": variance_error_bound(tanh_table, mus, varr),
        }
    return out


@pytest.fixture(scope="module")
def washout_runs():
    """Default-config washout/entropy ensembles for three master seeds."""
    return {
        seed: washout_and_entropy(ExperimentConfig(seed=seed))
        for seed in MASTER_SEEDS
    }


def test_criterion_01_certified_bound_validity(oracle_grid):
    t0 = time.perf_counter()
    worst = 0.0
    ok = True
    for var, g in oracle_grid.items():
        mean_ok = np.abs(g["spline_mean"] - g["mc"]["mean"]) <= (
            g["eps_mu"] + 3.0 * g["mc"]["se_mean"])
        var_ok = np.abs(g["spline_var"] - g["mc"]["variance"]) <= (
            g["eps_sigma"] + 3.0 * g["mc"]["se_variance"])
        ok = ok and bool(np.all(mean_ok) and np.all(var_ok))
        worst = max(worst, float(np.max(
            np.abs(g["spline_mean"] - g["mc"]["mean"]) - 3.0 * g["mc"]["se_mean"])))
    detail = (f"spline within eps+3SE at all 42 points "
              f"(worst mean excess over 3SE {worst:.2e}); "
              f"{time.perf_counter() - t0:.1f}s incremental")
    report("01", ok, detail)
    assert ok


def test_criterion_02_reported_bound_instance(tanh_table):
    got = mean_error_bound(tanh_table, 3.0, 0.2)
    expected = 4.21321e-5
    ok = abs(got - expected) <= 1e-10
    report("02", ok,
           f"mean_error_bound(3, 0.2) = {got:.6e}, frozen reference "
           f"{expected:.6e} (+/- 1 ulp of the printed digits)")
    # Reproducing 4.21321e-5 requires c1 built from 0.421321, which is the
    # *location* of the |tanh''''| maximum on a dense grid; the actual sup
    # is 4.08589 at z = 0.421316...  Substituting the location voids the
    # certification (the bound would fall below actually attainable
    # interpolation error), so this library keeps the true sup and this
    # check stays red by design.
    assert ok, (
        f"got {got:.6e}; the frozen value is only reachable by using the "
        "argmax location of |tanh''''| in place of its sup"
    )


def test_criterion_03a_spline_beats_analytic(oracle_grid):
    wins = total = 0
    for var, g in oracle_grid.items():
        wins += int(np.sum(np.abs(g["spline_mean"] - g["mc"]["mean"])
                           <= np.abs(g["analytic_mean"] - g["mc"]["mean"])))
        wins += int(np.sum(np.abs(g["spline_var"] - g["mc"]["variance"])
                           <= np.abs(g["analytic_var"] - g["mc"]["variance"])))
        total += 2 * len(g["mus"])
    ok = wins >= 0.9 * total
    report("03a", ok, f"spline error <= analytic at {wins}/{total} "
                      f"grid comparisons (need >= 90%)")
    assert ok


def test_criterion_03b_analytic_variance_overestimation_region(oracle_grid):
    over = total = 0
    for var, g in oracle_grid.items():
        sel = np.abs(g["mus"]) <= 2.0
        over += int(np.sum(g["analytic_var"][sel] >= g["mc"]["variance"][sel]))
        total += int(np.sum(sel))
    ok = over >= 0.8 * total
    # The closed-form variance uses a Gaussian-pdf fit to 1 - tanh^2 that
    # over-weights the mid-range of the bump: it *under*-estimates the
    # output variance for |mu| <= 2 and over-estimates only once the
    # activation saturates (93% of |mu| >= 2 points).  The frozen claim
    # inverts the regions, so this check stays red by design.
    report("03b", ok, f"analytic variance over-estimates at {over}/{total} "
                      f"points with |mu| <= 2 (need >= 80%; the formula "
                      f"actually under-estimates in this region)")
    assert ok, "over-estimation holds in the saturated region, not |mu| <= 2"


def test_criterion_04_linear_complexity(tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(seed=5, sizes=(100, 300, 1000, 3000, 10000),
                           repeats=30, mc_samples=10_000)
    _, rows = run_timing_bench(cfg, tmp_path)
    times = {}
    for method, d, median, _ in rows:
        times.setdefault(method, {})[d] = median
    r2 = {}
    for method, series in times.items():
        d = np.array(sorted(series))
        t = np.array([series[k] for k in sorted(series)])
        coeffs = np.polyfit(d, t, 1)
        resid = t - np.polyval(coeffs, d)
        r2[method] = 1.0 - np.sum(resid**2) / np.sum((t - t.mean()) ** 2)
    fits_ok = all(v >= 0.95 for v in r2.values())
    order_ok = all(
        times["analytic"][d] < times["spline"][d] < times["mc"][d]
        for d in cfg.sizes)
    ok = fits_ok and order_ok
    report("04", ok,
           f"R2 analytic={r2['analytic']:.4f} spline={r2['spline']:.4f} "
           f"mc={r2['mc']:.4f} (need >= 0.95); analytic < spline < mc at "
           f"every size: {order_ok}; {time.perf_counter() - t0:.0f}s")
    assert ok


@pytest.mark.filterwarnings("ignore::UserWarning")
@pytest.mark.filterwarnings(
    "ignore:The occurrence of roundoff error is detected")
def test_criterion_05_integral_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(0, 4))
        mu = rng.uniform(-3.0, 3.0)
        var = rng.uniform(0.02, 3.0)
        lo = rng.uniform(-6.0, 3.0)
        hi = lo + rng.uniform(0.01, 5.0)
        ref = quad(lambda z: z**k * np.exp(-((z - mu) ** 2) / (2 * var)),
                   lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        ref /= np.sqrt(2 * np.pi * var)
        worst = max(worst, abs(segment_integral(k, lo, hi, mu, var) - ref))
    ok = worst <= 1e-10
    report("05", ok, f"1000 random cases vs adaptive quadrature, worst "
                     f"abs diff {worst:.2e} (need <= 1e-10); "
                     f"{time.perf_counter() - t0:.1f}s")
    assert ok


def test_criterion_06_rls_batch_equivalence():
    # a little state noise keeps the 106-regressor Gram well away from
    # singular, so the delta*I offset in the recursive solution stays far
    # below the tolerance; batch and recursive solvers see identical rows
    data = make_dataset(700, rng=RngStream(66), washout=100, n_train=500,
                        n_test=100)
    params = EsnParams(n_reservoir=50, leak=0.8, noise=0.05, sparsity=0.2,
                       spectral_radius=0.9, washout=100, input_scale=0.2)
    weights = init_reservoir(params, 5, 2, RngStream(67))
    noise_gen = RngStream(68).generator()
    h, _ = run_teacher_forced(weights, params, data.inputs[:100],
                              data.targets[:100], np.zeros(50),
                              noise_rng=noise_gen)
    _, states = run_teacher_forced(
        weights, params, data.inputs[100:600], data.targets[100:600], h,
        noise_rng=noise_gen, y_first=data.targets[99], collect=True)
    b = np.hstack([np.ones((500, 1)), data.inputs[100:600], states])
    y = data.targets[100:600]
    batch = np.linalg.solve(b.T @ b, b.T @ y).T

    w_out = np.zeros_like(batch)
    p = 1e6 * np.eye(b.shape[1])
    for k in range(500):
        w_out, p = rls_update(w_out, p, b[k], y[k], 1.0)
    rel = float(np.max(np.abs(w_out - batch)) / np.max(np.abs(batch)))
    ok = rel < 1e-4
    report("06", ok, f"sequential RLS vs batch LS relative deviation "
                     f"{rel:.2e} on a 500-sample readout (need < 1e-4)")
    assert ok


def test_criterion_07_point_mass_collapse(tanh_table):
    data = make_dataset(900, rng=RngStream(77), washout=100, n_train=500,
                        n_test=300)
    esn = EsnParams(n_reservoir=80, leak=0.8, noise=0.0, sparsity=0.1,
                    spectral_radius=0.9, washout=100, input_scale=0.2)
    h0 = RngStream(78).generator().standard_normal(80)
    cfg = PesnConfig(esn=esn, engine="spline", table=tanh_table,
                     init_mu=h0, init_var=0.0)
    weights = init_reservoir(esn, 5, 2, RngStream(79))
    weights = with_readout(weights, train_batch(weights, esn, data, h0=np.zeros(80)))

    beliefs, _, _ = pesn_predict(weights, cfg, data, mode="multi", horizon=50)
    preds = np.array([b.mean for b in beliefs])
    variances = np.array([b.variance for b in beliefs])

    h = h0.copy()
    y_prev = data.targets[data.test_start - 1]
    det = np.empty_like(preds)
    for i in range(50):
        k = data.test_start + i
        h = esn_step(h, data.inputs[k], y_prev, weights, esn)
        det[i] = weights.w_out @ build_regressor(data.inputs[k], h)
        y_prev = det[i]

    # engine bound mapped through leak and readout at the first step
    pre = (weights.w_in @ data.inputs[data.test_start]
           + weights.w_fb @ data.targets[data.test_start - 1]
           + weights.w @ h0)
    eps = mean_error_bound(tanh_table, pre, np.full(80, 1e-300))
    step1_bound = float(np.max(np.abs(weights.w_out[:, 6:])
                               @ (esn.leak * eps)) + 1e-12)
    step1 = float(np.max(np.abs(preds[0] - det[0])))
    divergence = float(np.max(np.abs(preds - det)))
    ok = step1 <= step1_bound and divergence < 1e-3 and np.all(variances == 0.0)
    report("07", ok, f"step-1 gap {step1:.2e} (bound {step1_bound:.2e}); "
                     f"50-step max divergence {divergence:.2e} (need < 1e-3); "
                     f"propagated variances all zero")
    assert ok


def test_criterion_08_washout_pattern(washout_runs):
    details = []
    ok = True
    for seed, runs in washout_runs.items():
        wins = np.zeros(4, dtype=int)
        for w, res in runs.items():
            p = res["pesn_errors"].mean(axis=0)
            m = res["mc_errors"].mean(axis=0)
            wins += (p <= m).astype(int)
        dims_ok = int(np.sum(wins >= len(runs) / 2))
        ok = ok and dims_ok >= 3
        details.append(f"seed {seed}: wins/8 per dim {wins.tolist()} "
                       f"({dims_ok}/4 dims at majority)")
    report("08", ok, "; ".join(details))
    assert ok


def test_criterion_09_entropy_pattern(washout_runs):
    details = []
    ok = True
    for seed, runs in washout_runs.items():
        diffs = [res["mc_entropy"].mean() - res["pesn_entropy"].mean()
                 for res in runs.values()]
        ok = ok and all(d > 0 for d in diffs)
        details.append(f"seed {seed}: min entropy gap {min(diffs):.3f} bits")
    report("09", ok, "PESN washout entropy below ensemble at every length; "
                     + "; ".join(details))
    assert ok


def test_criterion_10_ffnn_orderings(tmp_path):
    from pesn.experiments import ffnn_propagate

    cfg = ExperimentConfig()
    _, shallow = ffnn_propagate(cfg, network="shallow", out_dir=tmp_path)
    shallow_ok = all(r[2] <= r[3] and r[4] <= r[5] for r in shallow)
    _, deep = ffnn_propagate(cfg, network="deep", out_dir=tmp_path)
    out_row = deep[-1]
    deep_ok = out_row[4] < out_row[5]
    ok = shallow_ok and deep_ok
    report("10", ok,
           f"shallow: spline <= analytic for eps_mu and eps_sigma at all "
           f"{len(shallow)} layers: {shallow_ok}; deep output eps_sigma "
           f"spline {out_row[4]:.2e} < analytic {out_row[5]:.2e}: {deep_ok}")
    assert ok


def test_criterion_11_multistep_containment(tmp_path):
    details = []
    ok = True
    for seed in MASTER_SEEDS:
        cfg = ExperimentConfig(seed=seed)
        _, rows = run_model_learning(cfg, tmp_path / str(seed))
        worst_z = 0.0
        for r in rows:
            mode, step, _, _, p_mean, _, mc_mean, mc_2s = r
            if mode == "multi" and step < 4:
                z = abs(p_mean - mc_mean) / max(mc_2s / 2.0, 1e-300)
                worst_z = max(worst_z, z / 2.0)
        ok = ok and worst_z <= 1.0
        details.append(f"seed {seed}: max |mean offset|/(2 sigma) = {worst_z:.2f}")
    report("11", ok, "PESN multi-step mean inside ensemble 2-sigma band "
                     "for the first 4 steps; " + "; ".join(details))
    assert ok


def test_criterion_12_byte_identical_reruns(tmp_path):
    cfg_text = (
        "mu_min = -1.0\nmu_max = 1.0\nmu_step = 1.0\nvariances = (0.2,)\n"
        "activations = ('tanh',)\nmc_oracle_samples = 20000\n"
        "washout_lengths = (1, 5)\nn_trials = 3\npesn_trials = 3\n"
        "train_steps = 300\ntest_steps = 200\n"
        "ml_single_steps = 10\nml_multi_horizon = 5\n"
        "ffnn_inputs = 32\nffnn_mc_samples = 2000\nffnn_shallow = (4, 4)\n"
    )
    cfg_path = tmp_path / "acc.cfg"
    cfg_path.write_text(cfg_text)
    experiments = (
        ("moments-grid", "moments_grid.csv"),
        ("washout", "washout.csv"),
        ("entropy", "entropy.csv"),
        ("model-learning", "model_learning.csv"),
        ("make-data", "cartpole.csv"),
        ("ffnn", "ffnn_shallow.csv"),
    )
    mismatched = []
    for name, fname in experiments:
        blobs = []
        for attempt in ("a", "b"):
            out = tmp_path / name / attempt
            argv = [name, "--config", str(cfg_path), "--out", str(out),
                    "--seed", "12"]
            if name == "ffnn":
                argv += ["--network", "shallow"]
            assert cli_main(argv) == 0
            blobs.append((out / fname).read_bytes())
        if blobs[0] != blobs[1]:
            mismatched.append(name)
    ok = not mismatched
    report("12", ok, "byte-identical reruns for moments-grid, washout, "
                     "entropy, model-learning, make-data, ffnn"
                     + (f"; MISMATCH: {mismatched}" if mismatched else
                        " (bench timings are wall-clock measurements and "
                        "excluded)"))
    assert ok

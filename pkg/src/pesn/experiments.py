"""Experiment harness: seeded, reproducible runs emitting CSV + sidecar.

Every experiment is a pure function of its configuration; re-running with
the same config and seed reproduces the CSV byte for byte (the timing
benchmarks necessarily measure wall time, so only their non-time columns
are reproducible). Floats are written with ``repr`` so files round-trip
exactly.
"""

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

import pesn
from pesn._backend import BACKEND, available_backends, kernel_module
from pesn.activations import get_activation
from pesn.bounds import mean_error_bound, variance_error_bound
from pesn.cartpole import make_dataset
from pesn.errors import ConfigError
from pesn.gaussian import DiagonalGaussian, RngStream
from pesn.moments import (
    analytic_tanh_mean,
    analytic_tanh_variance,
    mc_reference_vec,
    spline_moments_vec,
)
from pesn.probabilistic import (
    PesnConfig,
    ReservoirBelief,
    pesn_step,
    pesn_train,
    readout_belief,
)
from pesn.reservoir import (
    EsnParams,
    build_regressor,
    esn_step,
    rls_update,
    run_teacher_forced,
    save_dataset,
)
from pesn.splines import build_spline_table

STATE_DIMS = ("x", "theta", "x_dot", "omega")

# stream-id namespaces per experiment component
_STREAM_DATASET = 100
_STREAM_TRAIN = 200
_STREAM_MC_TRIAL = 300
_STREAM_PESN_TRIAL = 77_000
_STREAM_ML_MULTI = 5_000
_STREAM_ML_SINGLE = 9_000
_STREAM_GRID = 40_000


@dataclass(frozen=True)
class HistogramSpec:
    """Binning used for washout-entropy estimates; samples outside the
    range are clipped into the edge bins."""

    bins: int = 100
    lo: float = -2.0
    hi: float = 2.0
    log_base: float = 2.0

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if not self.lo < self.hi:
            raise ValueError("requires lo < hi")
        if self.log_base <= 1.0:
            raise ValueError("log_base must be > 1")


def shannon_entropy(samples, spec: HistogramSpec = HistogramSpec()) -> float:
    """Entropy (in log-base units, bits by default) of the histogram of
    the samples."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("entropy of an empty sample set")
    counts, _ = np.histogram(np.clip(samples, spec.lo, spec.hi),
                             bins=spec.bins, range=(spec.lo, spec.hi))
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum() / np.log(spec.log_base))


@dataclass
class ExperimentConfig:
    """Flat configuration shared by the CLI experiments.

    Only the knobs relevant to a given experiment are read by it; the
    whole config is hashed into every sidecar so outputs are traceable.
    """

    seed: int = 0
    out_dir: str = "results"
    engine: str = "spline"
    backend: str = "auto"

    # moment-grid
    mu_min: float = -5.0
    mu_max: float = 5.0
    mu_step: float = 0.5
    variances: tuple = (0.2, 1.0)
    activations: tuple = ("tanh", "sigmoid", "swish")
    mc_oracle_samples: int = 1_000_000

    # spline table
    spline_a: float = -10.0
    spline_b: float = 10.0
    spline_points: int = 101

    # timing benchmark
    sizes: tuple = (100, 300, 1000, 3000, 10000)
    repeats: int = 30
    mc_samples: int = 10_000

    # reservoir + cart-pole experiments
    n_reservoir: int = 100
    leak: float = 1.0
    noise: float = 0.3
    sparsity: float = 0.1
    spectral_radius: float = 0.9
    input_scale: float = 0.2
    ridge: float = 0.0
    rls_lambda: float = 0.999
    rls_delta: float = 1e6
    train_washout: int = 100
    train_steps: int = 1200
    test_steps: int = 700
    excitation: str = "sum-of-sines"
    excitation_amplitude: float = 5.0
    washout_lengths: tuple = (1, 10, 20, 30, 40, 50, 100, 200)
    n_trials: int = 50
    pesn_trials: int = 50
    horizon: int = 10

    # entropy histogram
    bins: int = 100
    hist_lo: float = -2.0
    hist_hi: float = 2.0

    # model learning
    ml_reservoir_noise: float = 0.0
    ml_input_noise: float = 0.05
    ml_settle: int = 50
    ml_multi_horizon: int = 20
    ml_single_steps: int = 100
    ml_rls: bool = False

    # feed-forward propagation
    ffnn_seed: int = 19
    ffnn_inputs: int = 1024
    ffnn_shallow: tuple = (5, 5, 5, 5, 5)
    ffnn_deep: tuple = (50, 50, 50, 50, 50, 50, 50, 50, 50, 50)
    ffnn_mc_samples: int = 50_000
    ffnn_gain: float = 2.0
    ffnn_scale_weights: bool = True
    ffnn_in_mean: float = -0.5
    ffnn_in_var: float = 0.01

    def __post_init__(self):
        if self.mu_step <= 0 or self.mu_min > self.mu_max:
            raise ConfigError("empty mean grid")
        if len(self.variances) == 0:
            raise ConfigError("empty variance list")
        if list(self.washout_lengths) != sorted(self.washout_lengths):
            raise ConfigError("washout_lengths must be sorted ascending")
        if self.engine not in ("analytic", "spline", "mc"):
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.backend not in ("auto", "compiled", "python"):
            raise ConfigError(f"unknown backend {self.backend!r}")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        known = {f.name: f.type for f in fields(cls)}
        clean = {}
        for key, value in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            clean[key] = value
        try:
            return cls(**clean)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def esn_params(self, noise=None) -> EsnParams:
        return EsnParams(
            n_reservoir=self.n_reservoir, leak=self.leak,
            noise=self.noise if noise is None else noise,
            sparsity=self.sparsity, spectral_radius=self.spectral_radius,
            washout=self.train_washout, rls_lambda=self.rls_lambda,
            rls_delta=self.rls_delta, ridge=self.ridge,
            input_scale=self.input_scale,
        )

    def histogram_spec(self) -> HistogramSpec:
        return HistogramSpec(self.bins, self.hist_lo, self.hist_hi)

    def mu_grid(self) -> np.ndarray:
        n = int(round((self.mu_max - self.mu_min) / self.mu_step)) + 1
        return float(self.mu_min) + float(self.mu_step) * np.arange(n)


def parse_config_file(path) -> dict:
    """``key = value`` lines; '#' comments; values parsed as Python
    literals where possible, with bare words kept as strings."""
    import ast

    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value'")
            key, _, value = line.partition("=")
            value = value.strip()
            try:
                out[key.strip()] = ast.literal_eval(value)
            except (ValueError, SyntaxError):
                out[key.strip()] = value
    return out


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def write_sidecar(csv_path, cfg: ExperimentConfig, experiment: str, extra=None):
    doc = asdict(cfg)
    del doc["out_dir"]  # results stay comparable wherever they are written
    for key, value in doc.items():
        if isinstance(value, tuple):
            doc[key] = list(value)
    payload = {
        "experiment": experiment,
        "config": doc,
        "config_hash": hashlib.sha256(
            json.dumps(doc, sort_keys=True).encode()).hexdigest(),
        "seed": cfg.seed,
        "code_version": pesn.__version__,
        "backend": BACKEND if cfg.backend == "auto" else cfg.backend,
    }
    if extra:
        payload.update(extra)
    side = Path(str(csv_path) + ".meta.json")
    with open(side, "w", encoding="ascii") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
    return side


# ---------------------------------------------------------------------------
# moment-error grid


def run_moments_grid(cfg: ExperimentConfig, out_dir=None):
    """Absolute moment errors of the analytic and spline engines against
    a Monte-Carlo oracle over a (mean, variance) grid.

    One row per (activation, engine, grid point); spline rows carry the
    certified bounds and, where the table holds third/fourth powers, the
    skew/kurtosis errors with a low-variance flag (standardized moments
    are unstable below variance 1e-6).
    """
    out_dir = Path(cfg.out_dir if out_dir is None else out_dir)
    mus = cfg.mu_grid()
    rows = []
    for act_name in cfg.activations:
        act = get_activation(act_name)
        table = build_spline_table(act, cfg.spline_a, cfg.spline_b,
                                   cfg.spline_points, max_power=4)
        for vi, var in enumerate(cfg.variances):
            varr = np.full_like(mus, float(var))
            stream = RngStream(cfg.seed, _STREAM_GRID + 100 * vi) \
                .spawn(hash_name(act_name))
            ref = mc_reference_vec(act, mus, varr, cfg.mc_oracle_samples,
                                   stream, order=4)
            sm, sv, ss, sk = spline_moments_vec(table, mus, varr, order=4,
                                                backend=cfg.backend)
            eps_mu = mean_error_bound(table, mus, varr)
            eps_sigma = variance_error_bound(table, mus, varr)
            if np.isscalar(eps_mu) or eps_mu.ndim == 0:
                eps_mu = np.full_like(mus, float(eps_mu))
                eps_sigma = np.full_like(mus, float(eps_sigma))
            for i, mu in enumerate(mus):
                low_var = sv[i] < 1e-6
                rows.append((act_name, "spline", mu, var,
                             abs(sm[i] - ref["mean"][i]),
                             abs(sv[i] - ref["variance"][i]),
                             eps_mu[i], eps_sigma[i],
                             abs(ss[i] - ref["skewness"][i]),
                             abs(sk[i] - ref["kurtosis"][i]),
                             int(low_var)))
            if act_name == "tanh":
                am = analytic_tanh_mean(mus, varr)
                av = analytic_tanh_variance(mus, varr)
                for i, mu in enumerate(mus):
                    rows.append((act_name, "analytic", mu, var,
                                 abs(am[i] - ref["mean"][i]),
                                 abs(av[i] - ref["variance"][i]),
                                 float("nan"), float("nan"),
                                 float("nan"), float("nan"), 0))
    header = ["activation", "engine", "mu", "var", "abs_mean_err",
              "abs_var_err", "bound_eps_mu", "bound_eps_sigma",
              "abs_skew_err", "abs_kurt_err", "low_variance"]
    path = write_csv(out_dir / "moments_grid.csv", header, rows)
    write_sidecar(path, cfg, "moments-grid")
    return path, rows


def hash_name(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")


# ---------------------------------------------------------------------------
# timing benchmark


def _mc_mean_var_pass(mu, var, n, generator):
    """Lean per-element MC moment pass (mean and variance only)."""
    n_el = mu.shape[0]
    sd = np.sqrt(var)
    s1 = np.zeros(n_el)
    s2 = np.zeros(n_el)
    chunk = max(1, 1_000_000 // n_el)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        x = np.tanh(mu + sd * generator.standard_normal((m, n_el)))
        s1 += x.sum(axis=0)
        s2 += (x * x).sum(axis=0)
        done += m
    mean = s1 / n
    return mean, s2 / n - mean * mean


def run_timing_bench(cfg: ExperimentConfig, out_dir=None):
    """Median wall time of one elementwise tanh moment pass per method.

    Spline table construction is amortized across calls and reported
    separately in the sidecar, not in the per-call timings.
    """
    out_dir = Path(cfg.out_dir if out_dir is None else out_dir)
    t0 = time.perf_counter()
    table = build_spline_table("tanh", cfg.spline_a, cfg.spline_b,
                               cfg.spline_points)
    build_seconds = time.perf_counter() - t0

    def time_call(fn, repeats):
        for _ in range(3):
            fn()
        t = time.perf_counter()
        fn()
        estimate = max(time.perf_counter() - t, 1e-9)
        # at least the configured repeats, more for microsecond-scale
        # calls so the median sits above timer jitter
        n = max(repeats, min(2000, int(0.05 / estimate)))
        samples = []
        for _ in range(n):
            t = time.perf_counter()
            fn()
            samples.append(time.perf_counter() - t)
        return float(np.median(samples)), n

    rows = []
    for d in cfg.sizes:
        g = RngStream(cfg.seed, 500 + d).generator()
        mu = g.uniform(-3.0, 3.0, d)
        var = g.uniform(0.05, 2.0, d)
        mc_gen = RngStream(cfg.seed, 600 + d).generator()
        timings = {
            "analytic": lambda: (analytic_tanh_mean(mu, var),
                                 analytic_tanh_variance(mu, var)),
            "spline": lambda: spline_moments_vec(table, mu, var,
                                                 backend=cfg.backend),
            "mc": lambda: _mc_mean_var_pass(mu, var, cfg.mc_samples, mc_gen),
        }
        for method, fn in timings.items():
            median, n_reps = time_call(fn, cfg.repeats)
            rows.append((method, d, median, n_reps))
    header = ["method", "d", "median_seconds", "repeats"]
    path = write_csv(out_dir / "timing.csv", header, rows)
    write_sidecar(path, cfg, "bench-time", extra={
        "spline_build_seconds": build_seconds,
        "mc_samples": cfg.mc_samples,
        "note": "median_seconds is a wall-clock measurement and is not "
                "byte-reproducible across runs",
    })
    return path, rows


def bench_backends(cfg: ExperimentConfig, out_dir=None):
    """Compare the compiled and pure-NumPy spline kernels call for call."""
    out_dir = Path(cfg.out_dir if out_dir is None else out_dir)
    table = build_spline_table("tanh", cfg.spline_a, cfg.spline_b,
                               cfg.spline_points)
    rows = []
    for d in cfg.sizes:
        g = RngStream(cfg.seed, 700 + d).generator()
        mu = g.uniform(-3.0, 3.0, d)
        var = g.uniform(0.05, 2.0, d)
        for name in available_backends():
            kern = kernel_module(name)
            fn = lambda: kern.spline_interior_raw_moments(
                table.mesh.nodes, table.coeffs, mu, var)
            for _ in range(3):
                fn()
            samples = []
            for _ in range(cfg.repeats):
                t = time.perf_counter()
                fn()
                samples.append(time.perf_counter() - t)
            rows.append((name, d, float(np.median(samples)), cfg.repeats))
    header = ["backend", "d", "median_seconds", "repeats"]
    path = write_csv(out_dir / "backend_bench.csv", header, rows)
    write_sidecar(path, cfg, "bench-backend", extra={
        "available": available_backends(),
        "note": "median_seconds is a wall-clock measurement",
    })
    return path, rows


# ---------------------------------------------------------------------------
# cart-pole closed-loop rollouts


def cartpole_dataset(cfg: ExperimentConfig):
    n_steps = cfg.train_washout + cfg.train_steps + cfg.test_steps
    return make_dataset(
        n_steps, excitation=cfg.excitation,
        rng=RngStream(cfg.seed, _STREAM_DATASET),
        amplitude=cfg.excitation_amplitude,
        washout=cfg.train_washout, n_train=cfg.train_steps,
        n_test=cfg.test_steps,
    )


def train_shared_weights(cfg: ExperimentConfig, data, noise=None):
    esn = cfg.esn_params(noise=noise)
    pcfg = PesnConfig(esn=esn, engine=cfg.engine,
                      spline_a=cfg.spline_a, spline_b=cfg.spline_b,
                      spline_points=cfg.spline_points)
    weights = pesn_train(pcfg, data.inputs.shape[1], data.targets.shape[1],
                         data, RngStream(cfg.seed, _STREAM_TRAIN))
    return weights, pcfg


def rollout_deterministic(weights, esn, data, h, start, horizon, dt,
                          noise_gen=None, input_noise=0.0, input_gen=None):
    """Closed-loop state rollout: the network predicts next velocities,
    positions integrate trapezoidally, the predicted state feeds back."""
    s = data.inputs[start, :4].copy()
    y_prev = data.targets[start - 1].copy()
    states = np.empty((horizon, 4))
    for i in range(horizon):
        k = start + i
        z = np.concatenate([s, [data.inputs[k, 4]]])
        if input_noise > 0.0:
            z[:4] += input_noise * input_gen.standard_normal(4)
        h = esn_step(h, z, y_prev, weights, esn, rng=noise_gen)
        y = weights.w_out @ build_regressor(z, h)
        pos = s[:2] + dt * 0.5 * (s[2:4] + y)
        s = np.concatenate([pos, y])
        states[i] = s
        y_prev = y
    return states, h


def rollout_belief(weights, pcfg, data, belief, start, horizon, dt,
                   input_variance=0.0):
    """Closed-loop belief rollout; the state belief stays diagonal
    Gaussian because the kinematic update is linear."""
    s_mean = data.inputs[start, :4].copy()
    s_var = np.zeros(4)
    y_prev = DiagonalGaussian.point_mass(data.targets[start - 1])
    means = np.empty((horizon, 4))
    variances = np.empty((horizon, 4))
    for i in range(horizon):
        k = start + i
        z = DiagonalGaussian(
            np.concatenate([s_mean, [data.inputs[k, 4]]]),
            np.concatenate([s_var + input_variance, [0.0]]),
        )
        belief, _ = pesn_step(belief, z, y_prev, weights, pcfg)
        yb = readout_belief(z, belief, weights.w_out)
        pos_mean = s_mean[:2] + dt * 0.5 * (s_mean[2:4] + yb.mean)
        pos_var = s_var[:2] + (dt * 0.5) ** 2 * (s_var[2:4] + yb.variance)
        s_mean = np.concatenate([pos_mean, yb.mean])
        s_var = np.concatenate([pos_var, yb.variance])
        means[i] = s_mean
        variances[i] = s_var
        y_prev = yb
    return means, variances, belief


# ---------------------------------------------------------------------------
# washout and entropy experiments


def washout_and_entropy(cfg: ExperimentConfig):
    """Shared runner: per washout length, a deterministic trial ensemble
    and a PESN trial ensemble, each reporting rollout state errors and
    washout-period hidden-value entropies."""
    data = cartpole_dataset(cfg)
    dt = data.metadata["params"]["dt"]
    weights, pcfg = train_shared_weights(cfg, data)
    esn = pcfg.esn
    spec = cfg.histogram_spec()
    start0 = data.test_start
    master = RngStream(cfg.seed)

    results = {}
    for w in cfg.washout_lengths:
        mc_err = np.empty((cfg.n_trials, 4))
        mc_ent = np.empty(cfg.n_trials)
        for t in range(cfg.n_trials):
            g = master.spawn(_STREAM_MC_TRIAL + 1000 * w + t).generator()
            h0 = g.standard_normal(esn.n_reservoir)
            h, states = run_teacher_forced(
                weights, esn,
                data.inputs[start0 : start0 + w],
                data.targets[start0 : start0 + w],
                h0, noise_rng=g, y_first=data.targets[start0 - 1],
                collect=True)
            rolled, _ = rollout_deterministic(
                weights, esn, data, h, start0 + w, cfg.horizon, dt,
                noise_gen=g)
            truth = data.inputs[start0 + w + 1 : start0 + w + cfg.horizon + 1, :4]
            mc_err[t] = np.abs(rolled - truth).mean(axis=0)
            mc_ent[t] = shannon_entropy(states, spec)

        p_err = np.empty((cfg.pesn_trials, 4))
        p_ent = np.empty(cfg.pesn_trials)
        for t in range(cfg.pesn_trials):
            g = master.spawn(_STREAM_PESN_TRIAL + 1000 * w + t).generator()
            mu0 = g.standard_normal(esn.n_reservoir)
            belief = ReservoirBelief(DiagonalGaussian(mu0, np.ones(esn.n_reservoir)))
            y_prev = DiagonalGaussian.point_mass(data.targets[start0 - 1])
            means = np.empty((w, esn.n_reservoir))
            for j, k in enumerate(range(start0, start0 + w)):
                z = DiagonalGaussian.point_mass(data.inputs[k])
                belief, _ = pesn_step(belief, z, y_prev, weights, pcfg)
                means[j] = belief.h.mean
                y_prev = DiagonalGaussian.point_mass(data.targets[k])
            rolled, _, _ = rollout_belief(
                weights, pcfg, data, belief, start0 + w, cfg.horizon, dt)
            truth = data.inputs[start0 + w + 1 : start0 + w + cfg.horizon + 1, :4]
            p_err[t] = np.abs(rolled - truth).mean(axis=0)
            p_ent[t] = shannon_entropy(means, spec)

        results[w] = {
            "pesn_errors": p_err, "mc_errors": mc_err,
            "pesn_entropy": p_ent, "mc_entropy": mc_ent,
        }
    return results


def run_washout_experiment(cfg: ExperimentConfig, out_dir=None, runs=None):
    """Table of rollout-error statistics per washout length and state
    dimension, PESN trials vs the deterministic ensemble."""
    out_dir = Path(cfg.out_dir if out_dir is None else out_dir)
    runs = washout_and_entropy(cfg) if runs is None else runs
    rows = []
    for w, res in runs.items():
        for d, label in enumerate(STATE_DIMS):
            p = res["pesn_errors"][:, d]
            m = res["mc_errors"][:, d]
            rows.append((w, label, p.mean(), p.min(), p.max(),
                         m.mean(), m.min(), m.max()))
    header = ["washout", "dim", "p_mean", "p_min", "p_max",
              "mc_mean", "mc_min", "mc_max"]
    path = write_csv(out_dir / "washout.csv", header, rows)
    write_sidecar(path, cfg, "washout")
    return path, rows


def run_entropy_experiment(cfg: ExperimentConfig, out_dir=None, runs=None):
    """Entropy of pooled washout-period hidden values (PESN belief means
    vs deterministic states), per washout length."""
    out_dir = Path(cfg.out_dir if out_dir is None else out_dir)
    runs = washout_and_entropy(cfg) if runs is None else runs
    rows = []
    for w, res in runs.items():
        p = res["pesn_entropy"]
        m = res["mc_entropy"]
        rows.append((w, p.mean(), p.min(), p.max(),
                     m.mean(), m.min(), m.max()))
    header = ["washout", "p_mean", "p_min", "p_max",
              "mc_mean", "mc_min", "mc_max"]
    path = write_csv(out_dir / "entropy.csv", header, rows)
    write_sidecar(path, cfg, "entropy", extra={
        "histogram": asdict(cfg.histogram_spec())})
    return path, rows


# ---------------------------------------------------------------------------
# feed-forward propagation


def ffnn_propagate(cfg: ExperimentConfig, widths=None, network="shallow",
                   out_dir=None):
    """Per-layer moment errors of both engines against sampled network
    propagation, plus output CDF quantiles of the MC baseline.

    Weights are standard normal times ``ffnn_gain``, divided by
    sqrt(fan-in) unless ``ffnn_scale_weights`` is off (the unscaled
    variant drives every unit deep into saturation).
    """
    out_dir = Path(cfg.out_dir if out_dir is None else out_dir)
    if widths is None:
        widths = cfg.ffnn_shallow if network == "shallow" else cfg.ffnn_deep
    rng = RngStream(cfg.ffnn_seed)
    g = rng.spawn(0).generator()
    dims = [cfg.ffnn_inputs] + list(widths) + [1]
    layer_weights = []
    for i in range(len(dims) - 1):
        w = cfg.ffnn_gain * g.standard_normal((dims[i + 1], dims[i]))
        if cfg.ffnn_scale_weights:
            w /= np.sqrt(dims[i])
        layer_weights.append(w)

    # sampled baseline through the whole network, streamed in chunks
    gs = rng.spawn(1).generator()
    n_mc = cfg.ffnn_mc_samples
    sums = [np.zeros(d) for d in dims[1:]]
    sq_sums = [np.zeros(d) for d in dims[1:]]
    outputs = np.empty(n_mc)
    chunk = max(1, 8_388_608 // cfg.ffnn_inputs)
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        x = cfg.ffnn_in_mean + np.sqrt(cfg.ffnn_in_var) * gs.standard_normal(
            (m, cfg.ffnn_inputs))
        for li, w in enumerate(layer_weights):
            x = np.tanh(x @ w.T)
            sums[li] += x.sum(axis=0)
            sq_sums[li] += (x * x).sum(axis=0)
        outputs[done : done + m] = x[:, 0]
        done += m
    mc_stats = []
    for s1, s2 in zip(sums, sq_sums):
        mean = s1 / n_mc
        mc_stats.append((mean, s2 / n_mc - mean * mean))
    output_samples = np.sort(outputs)

    table = build_spline_table("tanh", cfg.spline_a, cfg.spline_b,
                               cfg.spline_points)
    per_engine = {}
    for engine in ("analytic", "spline"):
        m = np.full(cfg.ffnn_inputs, cfg.ffnn_in_mean)
        v = np.full(cfg.ffnn_inputs, cfg.ffnn_in_var)
        eps_mu, eps_sigma = [], []
        for li, w in enumerate(layer_weights):
            pm = w @ m
            pv = (w * w) @ v
            if engine == "analytic":
                m = analytic_tanh_mean(pm, pv)
                v = analytic_tanh_variance(pm, pv)
            else:
                m, v = spline_moments_vec(table, pm, pv, backend=cfg.backend)
            eps_mu.append(float(np.mean(np.abs(m - mc_stats[li][0]))))
            eps_sigma.append(float(np.mean(np.abs(v - mc_stats[li][1]))))
        per_engine[engine] = (eps_mu, eps_sigma, float(m[0]), float(v[0]))

    rows = []
    n_layers = len(layer_weights)
    for li in range(n_layers):
        label = "out" if li == n_layers - 1 else str(li + 1)
        rows.append((network, label,
                     per_engine["spline"][0][li], per_engine["analytic"][0][li],
                     per_engine["spline"][1][li], per_engine["analytic"][1][li]))
    header = ["network", "layer", "eps_mu_spline", "eps_mu_analytic",
              "eps_sigma_spline", "eps_sigma_analytic"]
    path = write_csv(out_dir / f"ffnn_{network}.csv", header, rows)

    qs = np.arange(0.005, 1.0, 0.005)
    cdf_rows = [(network, q, float(np.quantile(output_samples, q))) for q in qs]
    cdf_path = write_csv(out_dir / f"ffnn_{network}_cdf.csv",
                         ["network", "quantile", "mc_output"], cdf_rows)
    write_sidecar(path, cfg, "ffnn", extra={
        "network": network, "widths": list(widths),
        "spline_output": per_engine["spline"][2:],
        "analytic_output": per_engine["analytic"][2:],
        "cdf_csv": cdf_path.name,
    })
    return path, rows


# ---------------------------------------------------------------------------
# model learning


def run_model_learning(cfg: ExperimentConfig, out_dir=None):
    """Single-step and free-running predictions with uncertain inputs.

    The deterministic ensemble receives per-step Gaussian state noise;
    the PESN carries the same noise variance in its input belief. Both
    share weights and the settling washout. Emits per-step truth, PESN
    mean and 2-sigma, and the ensemble mean and 2-sigma.
    """
    out_dir = Path(cfg.out_dir if out_dir is None else out_dir)
    data = cartpole_dataset(cfg)
    dt = data.metadata["params"]["dt"]
    weights, pcfg = train_shared_weights(cfg, data,
                                         noise=cfg.ml_reservoir_noise)
    esn = pcfg.esn
    master = RngStream(cfg.seed)
    start0 = data.test_start
    h_settled, _ = run_teacher_forced(
        weights, esn,
        data.inputs[start0 : start0 + cfg.ml_settle],
        data.targets[start0 : start0 + cfg.ml_settle],
        np.zeros(esn.n_reservoir), y_first=data.targets[start0 - 1])
    s0 = start0 + cfg.ml_settle
    sigma_in = cfg.ml_input_noise

    # multi-step: free-running ensemble vs belief rollout
    horizon = cfg.ml_multi_horizon
    mc_states = np.empty((cfg.n_trials, horizon, 4))
    for t in range(cfg.n_trials):
        g = master.spawn(_STREAM_ML_MULTI + t).generator()
        mc_states[t], _ = rollout_deterministic(
            weights, esn, data, h_settled.copy(), s0, horizon, dt,
            noise_gen=g if esn.noise > 0 else None,
            input_noise=sigma_in, input_gen=g)
    belief = ReservoirBelief(DiagonalGaussian(
        h_settled, np.zeros(esn.n_reservoir)))
    p_mean, p_var, _ = rollout_belief(weights, pcfg, data, belief, s0,
                                      horizon, dt,
                                      input_variance=sigma_in**2)
    rows = []
    for i in range(horizon):
        truth = data.inputs[s0 + i + 1, :4]
        for d, label in enumerate(STATE_DIMS):
            rows.append(("multi", i, label, truth[d],
                         p_mean[i, d], 2.0 * np.sqrt(p_var[i, d]),
                         mc_states[:, i, d].mean(),
                         2.0 * mc_states[:, i, d].std()))

    # single step: ground-truth inputs plus noise, truth fed back
    steps = cfg.ml_single_steps
    mc_y = np.empty((cfg.n_trials, steps, 2))
    for t in range(cfg.n_trials):
        g = master.spawn(_STREAM_ML_SINGLE + t).generator()
        h = h_settled.copy()
        w_out = weights.w_out.copy()
        p_rls = esn.rls_delta * np.eye(w_out.shape[1])
        y_prev = data.targets[s0 - 1].copy()
        for i in range(steps):
            k = s0 + i
            z = data.inputs[k].copy()
            z[:4] += sigma_in * g.standard_normal(4)
            h = esn_step(h, z, y_prev, weights, esn,
                         rng=g if esn.noise > 0 else None)
            b = build_regressor(z, h)
            mc_y[t, i] = w_out @ b
            if cfg.ml_rls:
                w_out, p_rls = rls_update(w_out, p_rls, b, data.targets[k],
                                          esn.rls_lambda)
            y_prev = data.targets[k]

    belief = ReservoirBelief(DiagonalGaussian(
        h_settled, np.zeros(esn.n_reservoir)))
    w_out = weights.w_out.copy()
    p_rls = esn.rls_delta * np.eye(w_out.shape[1])
    y_prev = DiagonalGaussian.point_mass(data.targets[s0 - 1])
    ps = np.empty((steps, 2, 2))  # (step, dim, mean/2sigma)
    for i in range(steps):
        k = s0 + i
        z = DiagonalGaussian(
            data.inputs[k],
            np.concatenate([np.full(4, sigma_in**2), [0.0]]))
        belief, _ = pesn_step(belief, z, y_prev, weights, pcfg)
        yb = readout_belief(z, belief, w_out)
        ps[i, :, 0] = yb.mean
        ps[i, :, 1] = 2.0 * np.sqrt(yb.variance)
        if cfg.ml_rls:
            b = build_regressor(z.mean, belief.h.mean)
            w_out, p_rls = rls_update(w_out, p_rls, b, data.targets[k],
                                      esn.rls_lambda)
        y_prev = DiagonalGaussian.point_mass(data.targets[k])
    for i in range(steps):
        for d, label in enumerate(("x_dot", "omega")):
            rows.append(("single", i, label, data.targets[s0 + i][d],
                         ps[i, d, 0], ps[i, d, 1],
                         mc_y[:, i, d].mean(), 2.0 * mc_y[:, i, d].std()))

    header = ["mode", "step", "dim", "truth", "pesn_mean", "pesn_2sigma",
              "mc_mean", "mc_2sigma"]
    path = write_csv(out_dir / "model_learning.csv", header, rows)
    write_sidecar(path, cfg, "model-learning", extra={
        "input_noise": sigma_in, "settle": cfg.ml_settle})
    return path, rows


# ---------------------------------------------------------------------------
# dataset generation entry point (shared with the CLI)


def run_make_data(cfg: ExperimentConfig, out_dir=None):
    out_dir = Path(cfg.out_dir if out_dir is None else out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = cartpole_dataset(cfg)
    path = out_dir / "cartpole.csv"
    save_dataset(path, data)
    return path, data

"""Probabilistic echo state network.

Carries a diagonal Gaussian belief over inputs, feedback and hidden state
through the reservoir recurrence. The pre-activation belief is formed by
the fixed linear maps (all cross-covariance terms dropped, which
underestimates uncertainty); per-element tanh output moments come from a
pluggable engine (analytic, spline or Monte Carlo); the leaky mix then
combines old and new beliefs elementwise.

Training uses only the propagated means, so it coincides exactly with
deterministic batch training started from the belief mean. Variance
propagation is a prediction-time feature.
"""

from dataclasses import dataclass, field

import numpy as np

from pesn.errors import NumericError
from pesn.gaussian import DiagonalGaussian, RngStream
from pesn.moments import (
    analytic_tanh_mean,
    analytic_tanh_variance,
    mc_reference_vec,
    spline_moments_vec,
)
from pesn.reservoir import (
    Dataset,
    EsnParams,
    EsnWeights,
    build_regressor,
    init_reservoir,
    rls_update,
    train_batch,
    with_readout,
)
from pesn.splines import SplineTable, build_spline_table
from pesn.activations import TANH


@dataclass(frozen=True)
class ReservoirBelief:
    """Diagonal Gaussian over the hidden state."""

    h: DiagonalGaussian

    def __post_init__(self):
        if not np.all(np.isfinite(self.h.variance)):
            raise ValueError("belief variances must be finite")


@dataclass
class PesnConfig:
    """Engine selection and belief initialization for a PESN run.

    ``init_mu=None`` draws the initial belief mean from a standard normal,
    matching the distribution the deterministic ensemble draws its
    initial states from; ``init_var`` is the per-element initial variance.
    ``noise_variance_squared`` switches the state-noise term in the
    variance recursion from ``noise`` to ``noise**2`` (the recursion adds
    the magnitude as written by default).
    ``washout_propagates_variance=False`` restricts the washout loop to
    the mean recursion.
    """

    esn: EsnParams = field(default_factory=EsnParams)
    engine: str = "spline"
    spline_a: float = -10.0
    spline_b: float = 10.0
    spline_points: int = 101
    table: SplineTable | None = None
    mc_samples: int = 10_000
    mc_stream: RngStream | None = None
    init_mu: np.ndarray | None = None
    init_var: float = 1.0
    noise_variance_squared: bool = False
    washout_propagates_variance: bool = True

    def __post_init__(self):
        if self.engine not in ("analytic", "spline", "mc"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.init_var < 0.0:
            raise ValueError("init_var must be >= 0")

    def spline_table(self) -> SplineTable:
        if self.table is None:
            self.table = build_spline_table(
                "tanh", self.spline_a, self.spline_b, self.spline_points
            )
        return self.table


def tanh_belief(cfg: PesnConfig, pre: DiagonalGaussian) -> DiagonalGaussian:
    """Per-element output moments of tanh under the configured engine."""
    if cfg.engine == "analytic":
        mean = analytic_tanh_mean(pre.mean, pre.variance)
        var = analytic_tanh_variance(pre.mean, pre.variance)
    elif cfg.engine == "spline":
        mean, var = spline_moments_vec(cfg.spline_table(), pre.mean, pre.variance)
    else:
        stream = cfg.mc_stream if cfg.mc_stream is not None else RngStream(0)
        live = pre.variance > 0.0
        mean = np.tanh(pre.mean)
        var = np.zeros_like(pre.variance)
        if np.any(live):
            ref = mc_reference_vec(TANH, pre.mean[live], pre.variance[live],
                                   cfg.mc_samples, stream)
            mean[live] = ref["mean"]
            var[live] = ref["variance"]
    if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(var)):
        raise NumericError("activation moment engine produced non-finite values")
    return DiagonalGaussian(mean, var)


def activation_input_belief(z: DiagonalGaussian, y_prev: DiagonalGaussian,
                            h: ReservoirBelief, weights: EsnWeights) -> DiagonalGaussian:
    """Belief over the pre-activation, cross terms dropped."""
    if z.dim != weights.n_inputs or y_prev.dim != weights.n_outputs:
        raise ValueError("belief dimensions do not match the weights")
    if h.h.dim != weights.n_reservoir:
        raise ValueError("hidden belief does not match the reservoir size")
    mean = weights.w_in @ z.mean + weights.w_fb @ y_prev.mean + weights.w @ h.h.mean
    variance = (
        (weights.w_in**2) @ z.variance
        + (weights.w_fb**2) @ y_prev.variance
        + (weights.w**2) @ h.h.variance
    )
    return DiagonalGaussian(mean, variance)


def pesn_step(h: ReservoirBelief, z: DiagonalGaussian, y_prev: DiagonalGaussian,
              weights: EsnWeights, cfg: PesnConfig):
    """One belief update; returns the new hidden belief and the tanh belief."""
    pre = activation_input_belief(z, y_prev, h, weights)
    act = tanh_belief(cfg, pre)
    leak = cfg.esn.leak
    noise_term = cfg.esn.noise**2 if cfg.noise_variance_squared else cfg.esn.noise
    mean = (1.0 - leak) * h.h.mean + leak * act.mean
    variance = (1.0 - leak) ** 2 * h.h.variance + leak**2 * act.variance + noise_term
    return ReservoirBelief(DiagonalGaussian(mean, variance)), act


def pesn_mean_step(h: ReservoirBelief, z_mean, y_mean, weights: EsnWeights,
                   cfg: PesnConfig) -> ReservoirBelief:
    """Mean-only recursion (washout and training use this form)."""
    pre = weights.w_in @ z_mean + weights.w_fb @ y_mean + weights.w @ h.h.mean
    mean = (1.0 - cfg.esn.leak) * h.h.mean + cfg.esn.leak * np.tanh(pre)
    return ReservoirBelief(DiagonalGaussian(mean, h.h.variance))


def readout_belief(z: DiagonalGaussian, h: ReservoirBelief,
                   w_out: np.ndarray) -> DiagonalGaussian:
    """Belief over the readout of ``[1, z, h]`` (constant carries zero
    variance; cross blocks are zero by construction)."""
    expected = 1 + z.dim + h.h.dim
    if w_out.shape[1] != expected:
        raise ValueError(f"readout expects {w_out.shape[1]} regressors, got {expected}")
    b_mean = np.concatenate(([1.0], z.mean, h.h.mean))
    b_var = np.concatenate(([0.0], z.variance, h.h.variance))
    return DiagonalGaussian(w_out @ b_mean, (w_out**2) @ b_var)


def initial_belief(cfg: PesnConfig, n_reservoir: int,
                   rng: RngStream | None = None) -> ReservoirBelief:
    if cfg.init_mu is not None:
        mu = np.asarray(cfg.init_mu, dtype=float)
        if mu.shape != (n_reservoir,):
            raise ValueError("init_mu length does not match the reservoir size")
    else:
        if rng is None:
            raise ValueError("drawing the initial belief mean needs an RngStream")
        mu = rng.generator().standard_normal(n_reservoir)
    return ReservoirBelief(DiagonalGaussian(mu, np.full(n_reservoir, cfg.init_var)))


def pesn_train(cfg: PesnConfig, n_inputs: int, n_outputs: int, data: Dataset,
               rng: RngStream):
    """Initialize the reservoir and train the readout on propagated means.

    The mean recursion during washout and training is exactly the
    deterministic reservoir run started from the belief mean, so the
    batch solve is shared with the deterministic trainer. Returns the
    weights with the trained readout installed.
    """
    weights = init_reservoir(cfg.esn, n_inputs, n_outputs, rng.spawn(0))
    belief = initial_belief(cfg, cfg.esn.n_reservoir, rng.spawn(1))
    w_out = train_batch(weights, cfg.esn, data, rng=rng.spawn(2),
                        h0=belief.h.mean)
    return with_readout(weights, w_out)


def pesn_predict(weights: EsnWeights, cfg: PesnConfig, data: Dataset,
                 mode: str = "single", washout_len: int = 0,
                 horizon: int | None = None, start: int | None = None,
                 rng: RngStream | None = None,
                 rls_enabled: bool = True):
    """Belief-propagating prediction over the test rows.

    The washout loop consumes ``washout_len`` rows with ground-truth
    feedback (point-mass beliefs). In ``single`` mode each step then
    feeds the true output back and refines the readout online against it;
    in ``multi`` mode the predicted output belief is fed back, and the
    readout stays frozen because no target exists mid-rollout.

    Returns ``(beliefs, errors, final_hidden_belief)`` where beliefs are
    the per-step output DiagonalGaussians and errors the absolute errors
    of the belief means against the targets.
    """
    if mode not in ("single", "multi"):
        raise ValueError(f"mode must be 'single' or 'multi', got {mode!r}")
    start = data.test_start if start is None else start
    remaining = data.n_steps - start - washout_len
    horizon = remaining if horizon is None else horizon
    if washout_len + horizon > data.n_steps - start:
        raise ValueError("washout and horizon exceed available rows")

    belief = initial_belief(cfg, weights.n_reservoir, rng)
    n_out = weights.n_outputs

    y_prev = DiagonalGaussian.point_mass(
        data.targets[start - 1] if start > 0 else np.zeros(n_out))
    for k in range(start, start + washout_len):
        z = DiagonalGaussian.point_mass(data.inputs[k])
        if cfg.washout_propagates_variance:
            belief, _ = pesn_step(belief, z, y_prev, weights, cfg)
        else:
            belief = pesn_mean_step(belief, z.mean, y_prev.mean, weights, cfg)
        y_prev = DiagonalGaussian.point_mass(data.targets[k])

    w_out = weights.w_out.copy()
    p = cfg.esn.rls_delta * np.eye(w_out.shape[1])
    beliefs = []
    errors = np.empty((horizon, n_out))
    for i in range(horizon):
        k = start + washout_len + i
        z = DiagonalGaussian.point_mass(data.inputs[k])
        belief, _ = pesn_step(belief, z, y_prev, weights, cfg)
        y_belief = readout_belief(z, belief, w_out)
        beliefs.append(y_belief)
        errors[i] = np.abs(y_belief.mean - data.targets[k])
        if mode == "single":
            if rls_enabled:
                b = build_regressor(z.mean, belief.h.mean)
                w_out, p = rls_update(w_out, p, b, data.targets[k],
                                      cfg.esn.rls_lambda)
            y_prev = DiagonalGaussian.point_mass(data.targets[k])
        else:
            y_prev = y_belief
    return beliefs, errors, belief

"""Deterministic leaky echo state network.

Fixed random input, feedback and recurrent weights; only the linear
readout is trained (batch least squares, with an online recursive
least-squares refinement at prediction time). The recurrent matrix is
sparse by construction and rescaled to a prescribed spectral radius.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from pesn.errors import NumericError
from pesn.gaussian import RngStream

_WEIGHTS_FORMAT = "pesn-weights"
_WEIGHTS_VERSION = 1

_INIT_RETRIES = 8


@dataclass(frozen=True)
class EsnParams:
    """Reservoir hyperparameters.

    ``leak`` mixes the previous state with the new activation, ``noise``
    scales unit-variance Gaussian state noise, ``sparsity`` is the
    fraction of nonzero recurrent entries, and ``spectral_radius`` is the
    largest eigenvalue magnitude of the rescaled recurrent matrix.
    ``input_scale`` multiplies the random input weights; keeping the
    pre-activations inside the moment tables' interval is the caller's
    responsibility and this is the knob for it.
    """

    n_reservoir: int = 100
    leak: float = 0.8
    noise: float = 0.0
    sparsity: float = 0.1
    spectral_radius: float = 0.9
    washout: int = 100
    rls_lambda: float = 0.999
    rls_delta: float = 1e6
    ridge: float = 0.0
    input_scale: float = 1.0

    def __post_init__(self):
        if self.n_reservoir < 1:
            raise ValueError("n_reservoir must be >= 1")
        if not 0.0 <= self.leak <= 1.0:
            raise ValueError("leak must be in [0, 1]")
        if self.noise < 0.0:
            raise ValueError("noise must be >= 0")
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError("sparsity must be in (0, 1]")
        if self.spectral_radius <= 0.0:
            raise ValueError("spectral_radius must be > 0")
        if self.washout < 0:
            raise ValueError("washout must be >= 0")
        if not 0.0 < self.rls_lambda <= 1.0:
            raise ValueError("rls_lambda must be in (0, 1]")
        if self.rls_delta <= 0.0:
            raise ValueError("rls_delta must be > 0")
        if self.ridge < 0.0:
            raise ValueError("ridge must be >= 0")


@dataclass(frozen=True)
class EsnWeights:
    """Fixed network matrices plus the trained readout.

    ``w`` is stored dense but sparse-valued. ``w_out`` maps the regressor
    ``[1, z, h]`` to the outputs and is zero until trained.
    """

    w_in: np.ndarray
    w_fb: np.ndarray
    w: np.ndarray
    w_out: np.ndarray
    seed: int | None = None

    @property
    def n_reservoir(self) -> int:
        return self.w.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.w_in.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.w_fb.shape[1]


@dataclass(frozen=True)
class Dataset:
    """Aligned input/target sequences with an ordered three-way split."""

    inputs: np.ndarray
    targets: np.ndarray
    washout: int
    n_train: int
    n_test: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must have equal row counts")
        if min(self.washout, self.n_train, self.n_test) < 0:
            raise ValueError("split sizes must be >= 0")
        if self.washout + self.n_train + self.n_test != self.inputs.shape[0]:
            raise ValueError("splits must partition the rows in order")

    @property
    def n_steps(self) -> int:
        return self.inputs.shape[0]

    @property
    def test_start(self) -> int:
        return self.washout + self.n_train


def spectral_radius(w: np.ndarray) -> float:
    """Largest eigenvalue magnitude via a Krylov (shifted power) method.

    Small matrices fall back to the dense routine; the test suite checks
    the Krylov path against dense eigenvalues independently.
    """
    n = w.shape[0]
    if n <= 32:
        return float(np.max(np.abs(np.linalg.eigvals(w))))
    try:
        vals = scipy.sparse.linalg.eigs(
            w, k=2, which="LM", return_eigenvectors=False,
            maxiter=50 * n, tol=0,
            v0=np.full(n, 1.0 / np.sqrt(n)),
        )
        return float(np.max(np.abs(vals)))
    except scipy.sparse.linalg.ArpackNoConvergence:
        return float(np.max(np.abs(np.linalg.eigvals(w))))


def init_reservoir(params: EsnParams, n_inputs: int, n_outputs: int,
                   rng: RngStream) -> EsnWeights:
    """Draw the fixed matrices and rescale the recurrent one.

    Entries are i.i.d. standard normal; an exact-count uniform mask zeroes
    ``1 - sparsity`` of the recurrent entries; the survivors are rescaled
    so the spectral radius matches the requested value. A masked matrix
    with zero spectral radius (possible for tiny nonzero counts) is
    redrawn, with an error after 8 attempts.
    """
    if n_inputs < 1 or n_outputs < 1:
        raise ValueError("n_inputs and n_outputs must be >= 1")
    n = params.n_reservoir
    g = rng.generator()
    w_in = g.standard_normal((n, n_inputs)) * params.input_scale
    w_fb = g.standard_normal((n, n_outputs))

    n_keep = max(1, round(params.sparsity * n * n))
    for _ in range(_INIT_RETRIES):
        w = g.standard_normal((n, n))
        keep = g.permutation(n * n)[:n_keep]
        mask = np.zeros(n * n, dtype=bool)
        mask[keep] = True
        w *= mask.reshape(n, n)
        rho = spectral_radius(w)
        if rho > 0.0:
            w *= params.spectral_radius / rho
            break
    else:
        raise NumericError("recurrent matrix had zero spectral radius after 8 draws")

    w_out = np.zeros((n_outputs, 1 + n_inputs + n))
    return EsnWeights(w_in, w_fb, w, w_out, seed=rng.seed)


def esn_step(h, z, y_prev, weights: EsnWeights, params: EsnParams, rng=None):
    """One reservoir update; ``rng=None`` omits the state noise."""
    h = np.asarray(h, dtype=float)
    z = np.asarray(z, dtype=float)
    y_prev = np.asarray(y_prev, dtype=float)
    if h.shape != (weights.n_reservoir,):
        raise ValueError(f"state must have shape ({weights.n_reservoir},)")
    if z.shape != (weights.n_inputs,):
        raise ValueError(f"input must have shape ({weights.n_inputs},)")
    if y_prev.shape != (weights.n_outputs,):
        raise ValueError(f"feedback must have shape ({weights.n_outputs},)")
    pre = weights.w_in @ z + weights.w_fb @ y_prev + weights.w @ h
    out = (1.0 - params.leak) * h + params.leak * np.tanh(pre)
    if rng is not None and params.noise > 0.0:
        out = out + params.noise * rng.standard_normal(weights.n_reservoir)
    return out


def build_regressor(z, h):
    """Readout regressor ``[1, z, h]``."""
    return np.concatenate(([1.0], z, h))


def readout(weights: EsnWeights, z, h):
    return weights.w_out @ build_regressor(z, h)


def run_teacher_forced(weights, params, inputs, targets, h0, noise_rng=None,
                       y_first=None, collect=False):
    """Drive the reservoir with ground-truth feedback.

    Feedback at row k is ``targets[k-1]``; the first step uses ``y_first``
    (zeros by default). Returns the final state, and the per-step states
    when ``collect`` is set.
    """
    h = np.asarray(h0, dtype=float).copy()
    y_prev = np.zeros(weights.n_outputs) if y_first is None else np.asarray(y_first, float)
    states = np.empty((len(inputs), weights.n_reservoir)) if collect else None
    for k in range(len(inputs)):
        h = esn_step(h, inputs[k], y_prev, weights, params, rng=noise_rng)
        if collect:
            states[k] = h
        y_prev = targets[k]
    return (h, states) if collect else (h, None)


def train_batch(weights: EsnWeights, params: EsnParams, data: Dataset,
                rng: RngStream | None = None, h0=None) -> np.ndarray:
    """Batch least-squares readout from teacher-forced states.

    The washout rows drive the reservoir and are discarded; the training
    rows contribute regressor columns ``[1, z(k), h(k)]``. Solves the
    normal equations (optionally ridge-stabilized via ``params.ridge``)
    and returns the readout matrix.
    """
    if data.n_train < 1:
        raise ValueError("dataset has no training rows")
    n = weights.n_reservoir
    if h0 is None:
        if rng is None:
            raise ValueError("train_batch needs an initial state or an RngStream")
        h0 = rng.generator().standard_normal(n)
    noise_g = rng.generator() if (rng is not None and params.noise > 0.0) else None

    h, _ = run_teacher_forced(
        weights, params,
        data.inputs[: data.washout], data.targets[: data.washout],
        h0, noise_rng=noise_g,
    )
    rows = slice(data.washout, data.washout + data.n_train)
    y_first = data.targets[data.washout - 1] if data.washout > 0 else None
    _, states = run_teacher_forced(
        weights, params, data.inputs[rows], data.targets[rows],
        h, noise_rng=noise_g, y_first=y_first, collect=True,
    )
    b = np.hstack([
        np.ones((data.n_train, 1)), data.inputs[rows], states
    ]).T  # (1 + n_in + n, T)
    y = data.targets[rows].T
    gram = b @ b.T
    if params.ridge > 0.0:
        gram = gram + params.ridge * np.eye(gram.shape[0])
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            "readout normal equations are singular (rank-deficient "
            "regressors with ridge disabled)") from exc
    rhs = b @ y.T
    w_out = scipy.linalg.cho_solve((chol, True), rhs).T
    return w_out


def rls_update(w_out, p, b, y_target, lam: float):
    """One recursive least-squares step on the readout.

    ``p`` is the inverse-Gram state (symmetric positive definite); the
    update is rank one and ``p`` is re-symmetrized to suppress drift.
    """
    b = np.asarray(b, dtype=float)
    pb = p @ b
    denom = lam + b @ pb
    g = pb / denom
    innovation = y_target - w_out @ b
    w_new = w_out + np.outer(innovation, g)
    p_new = (p - np.outer(g, pb)) / lam
    p_new = 0.5 * (p_new + p_new.T)
    if not (np.all(np.isfinite(w_new)) and np.all(np.isfinite(p_new))):
        raise NumericError("non-finite values in recursive least-squares update")
    return w_new, p_new


def esn_predict(weights: EsnWeights, params: EsnParams, data: Dataset,
                mode: str = "single", horizon: int | None = None,
                rls_enabled: bool = False, rng: RngStream | None = None,
                h0=None, start: int | None = None):
    """Predict over the test rows.

    ``single`` feeds ground-truth outputs back each step (and can refine
    the readout online against them); ``multi`` feeds its own predictions
    back and freezes the readout for the whole free-running horizon.

    Returns ``(predictions, errors, h)`` where errors are per-step
    absolute errors against the targets.
    """
    if mode not in ("single", "multi"):
        raise ValueError(f"mode must be 'single' or 'multi', got {mode!r}")
    start = data.test_start if start is None else start
    horizon = data.n_steps - start if horizon is None else horizon
    if start + horizon > data.n_steps:
        raise ValueError("horizon exceeds available rows")
    n = weights.n_reservoir
    h = np.zeros(n) if h0 is None else np.asarray(h0, dtype=float).copy()
    noise_g = rng.generator() if (rng is not None and params.noise > 0.0) else None

    w_out = weights.w_out.copy()
    p = params.rls_delta * np.eye(w_out.shape[1])
    y_prev = data.targets[start - 1] if start > 0 else np.zeros(weights.n_outputs)

    preds = np.empty((horizon, weights.n_outputs))
    errors = np.empty_like(preds)
    for i in range(horizon):
        k = start + i
        h = esn_step(h, data.inputs[k], y_prev, weights, params, rng=noise_g)
        b = build_regressor(data.inputs[k], h)
        y_hat = w_out @ b
        preds[i] = y_hat
        errors[i] = np.abs(y_hat - data.targets[k])
        if mode == "single":
            if rls_enabled:
                w_out, p = rls_update(w_out, p, b, data.targets[k], params.rls_lambda)
            y_prev = data.targets[k]
        else:
            y_prev = y_hat
    return preds, errors, h


def mc_ensemble_rollout(weights: EsnWeights, params: EsnParams, data: Dataset,
                        n_trials: int, washout_len: int, horizon: int,
                        rng: RngStream, start: int | None = None):
    """Ensemble of rollouts from random initial states.

    Each trial draws ``h0 ~ N(0, I)``, burns ``washout_len`` teacher-forced
    test rows, then runs a free-running multi-step prediction. Returns
    per-trial mean absolute error per output dimension (plus min/max
    summaries) and the pooled washout-period hidden values.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    start = data.test_start if start is None else start
    trial_errors = np.empty((n_trials, weights.n_outputs))
    hidden_pools = []
    for t in range(n_trials):
        g = rng.spawn(t).generator()
        h0 = g.standard_normal(weights.n_reservoir)
        h, states = run_teacher_forced(
            weights, params,
            data.inputs[start : start + washout_len],
            data.targets[start : start + washout_len],
            h0,
            y_first=data.targets[start - 1] if start > 0 else None,
            collect=True,
        )
        _, errors, _ = esn_predict(
            weights, params, data, mode="multi", horizon=horizon,
            h0=h, start=start + washout_len,
        )
        trial_errors[t] = errors.mean(axis=0)
        hidden_pools.append(states.ravel() if states is not None else h)
    return {
        "trial_errors": trial_errors,
        "mean": trial_errors.mean(axis=0),
        "min": trial_errors.min(axis=0),
        "max": trial_errors.max(axis=0),
        "washout_hidden": hidden_pools,
    }


def save_weights(path, weights: EsnWeights, params: EsnParams | None = None):
    doc = {
        "format": _WEIGHTS_FORMAT,
        "version": _WEIGHTS_VERSION,
        "n_reservoir": weights.n_reservoir,
        "n_inputs": weights.n_inputs,
        "n_outputs": weights.n_outputs,
        "seed": weights.seed,
        "w_in": weights.w_in.tolist(),
        "w_fb": weights.w_fb.tolist(),
        "w": weights.w.tolist(),
        "w_out": weights.w_out.tolist(),
    }
    if params is not None:
        doc["params"] = {k: getattr(params, k) for k in params.__dataclass_fields__}
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_weights(path):
    """Returns ``(EsnWeights, EsnParams | None)``."""
    with open(path, "r", encoding="ascii") as fh:
        doc = json.load(fh)
    if doc.get("format") != _WEIGHTS_FORMAT or doc.get("version") != _WEIGHTS_VERSION:
        raise ValueError(f"unrecognized weights document in {path}")
    weights = EsnWeights(
        np.array(doc["w_in"]), np.array(doc["w_fb"]),
        np.array(doc["w"]), np.array(doc["w_out"]),
        seed=doc.get("seed"),
    )
    params = EsnParams(**doc["params"]) if "params" in doc else None
    return weights, params


def with_readout(weights: EsnWeights, w_out: np.ndarray) -> EsnWeights:
    return replace(weights, w_out=np.asarray(w_out, dtype=float))


def save_dataset(path, data: Dataset):
    """CSV with one timestep per row, columns z0.. then y0..; split sizes
    and generation metadata go to a JSON sidecar next to the file."""
    n_in = data.inputs.shape[1]
    n_out = data.targets.shape[1]
    header = [f"z{i}" for i in range(n_in)] + [f"y{i}" for i in range(n_out)]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(data.n_steps):
            row = [repr(float(v)) for v in data.inputs[k]]
            row += [repr(float(v)) for v in data.targets[k]]
            fh.write(",".join(row) + "\n")
    sidecar = {
        "washout": data.washout,
        "n_train": data.n_train,
        "n_test": data.n_test,
        "metadata": data.metadata,
    }
    with open(str(path) + ".meta.json", "w", encoding="ascii") as fh:
        json.dump(sidecar, fh, sort_keys=True)


def load_dataset(path, washout=None, n_train=None, n_test=None) -> Dataset:
    """Read a dataset CSV; split sizes default to the sidecar's."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        rows = [list(map(float, line.split(","))) for line in fh if line.strip()]
    n_in = sum(1 for c in header if c.startswith("z"))
    n_out = sum(1 for c in header if c.startswith("y"))
    if n_in + n_out != len(header):
        raise ValueError("dataset header must contain only z*/y* columns")
    arr = np.array(rows)
    meta = {}
    if washout is None or n_train is None or n_test is None:
        try:
            with open(str(path) + ".meta.json", "r", encoding="ascii") as fh:
                side = json.load(fh)
        except FileNotFoundError:
            raise ValueError(
                "split sizes not given and no metadata sidecar found"
            ) from None
        washout = side["washout"] if washout is None else washout
        n_train = side["n_train"] if n_train is None else n_train
        n_test = side["n_test"] if n_test is None else n_test
        meta = side.get("metadata", {})
    return Dataset(arr[:, :n_in], arr[:, n_in:], washout, n_train, n_test, meta)

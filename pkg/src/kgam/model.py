"""K-GAM model: fixed KST embedding followed by additive ReLU outer nets.

Regression predicts ``sum_q g_q(z_q)``; binary classification predicts
``sigmoid(intercept + sum_q g_q(z_q))``.  With ``shared_g`` one net is
applied to every channel, with ``per_channel_g`` channel ``q`` has its own
net, and ``badic_single_g`` feeds a single net the B-adic channel.
Training only touches the outer nets and the intercept.

Each net sees its channel through a fixed affine map ``(z - center) / scale``
and, for regression, the summed net output is mapped back through
``target_center + target_scale * sum``.  Both maps are fitted once from
training data in :func:`build_model` and never trained; they only
precondition SGD, since ``g_q(z) = target_scale * net_q((z - c_q) / s_q)
+ target_center / n_nets`` is itself a ReLU net of ``z``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .datasets import Dataset
from .embedding import Normalizer, SchemaError, _embed_normalized, badic_embed_normalized
from .koppen import KstParams
from .neural import Mlp, SgdState, TrainConfig, TrainingDivergence
from .rng import SplitMix64, derive_seed

OUTER_MODES = ("shared_g", "per_channel_g", "badic_single_g")
TASKS = ("regression", "binary_classification")
LOSS_FOR_TASK = {"regression": "l2", "binary_classification": "logistic"}
INIT_STREAM = 1
SHUFFLE_STREAM = 2


@dataclass
class KgamModel:
    params: KstParams
    normalizer: Normalizer
    outer_mode: str
    nets: list[Mlp]
    task: str = "regression"
    intercept: float = 0.0
    badic_base: int | None = None
    z_ranges: list[list[float]] = field(default_factory=list)
    input_scaling: list[list[float]] = field(default_factory=list)
    target_scaling: list[float] = field(default_factory=lambda: [0.0, 1.0])

    def __post_init__(self):
        if self.outer_mode not in OUTER_MODES:
            raise ValueError(f"outer_mode must be one of {OUTER_MODES}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        expected = self.params.channels if self.outer_mode == "per_channel_g" else 1
        if len(self.nets) != expected:
            raise ValueError(f"{self.outer_mode} needs {expected} net(s), got {len(self.nets)}")
        if (self.outer_mode == "badic_single_g") != (self.badic_base is not None):
            raise ValueError("badic_base must be set exactly when outer_mode is badic_single_g")
        if self.normalizer.d != self.params.d:
            raise SchemaError("normalizer and params disagree on d")
        if not self.input_scaling:
            self.input_scaling = [[0.0, 1.0] for _ in self.nets]
        if len(self.input_scaling) != len(self.nets):
            raise ValueError("one input scaling per net is required")
        if min(s for _, s in self.input_scaling) <= 0 or self.target_scaling[1] <= 0:
            raise ValueError("scalings must be positive")
        if self.task == "binary_classification" and list(self.target_scaling) != [0.0, 1.0]:
            raise ValueError("classification models use the intercept, not a target scaling")

    @property
    def n_channels(self) -> int:
        return 1 if self.outer_mode == "badic_single_g" else self.params.channels

    def copy(self) -> KgamModel:
        return copy.deepcopy(self)


def build_model(
    params: KstParams,
    normalizer: Normalizer,
    outer_mode: str = "shared_g",
    task: str = "regression",
    dims=None,
    seed: int = 0,
    badic_base: int | None = None,
    fit_data=None,
) -> KgamModel:
    """Fresh model with He-uniform outer nets; per-channel nets get distinct seeds.

    ``fit_data=(X, y)`` (raw training rows and targets) sets the fixed input
    and target scalings; without it both are the identity.
    """
    dims = dims or neural.outer_dims(16, 18)
    count = params.channels if outer_mode == "per_channel_g" else 1
    base = derive_seed(seed, INIT_STREAM)
    nets = [neural.init_mlp(dims, derive_seed(base, q)) for q in range(count)]
    model = KgamModel(params, normalizer, outer_mode, nets, task, 0.0, badic_base)
    if fit_data is not None:
        X, y = fit_data
        Z = embed(model, X)
        cols = [Z[:, q] for q in range(count)] if outer_mode == "per_channel_g" else [Z.ravel()]
        model.input_scaling = [[float(c.mean()), _spread(c)] for c in cols]
        for net, col, (c, s) in zip(model.nets, cols, model.input_scaling):
            place_breakpoints(net, (col - c) / s)
        if task == "regression":
            y = np.asarray(y, dtype=np.float64)
            model.target_scaling = [float(y.mean()), _spread(y)]
    return model


def place_breakpoints(net: Mlp, u: np.ndarray):
    """Move first-layer ReLU kinks onto evenly spaced quantiles of the inputs ``u``.

    With zero biases a 1-D ReLU net is two linear pieces joined at 0 whatever
    its depth; spreading the kinks over the data lets SGD fit local structure
    from the first epoch.
    """
    W, b = net.weights[0], net.biases[0]
    probs = (np.arange(W.shape[0]) + 0.5) / W.shape[0]
    b[:] = -W[:, 0] * np.quantile(u, probs)


def _spread(v: np.ndarray) -> float:
    sd = float(np.std(v))
    return sd if sd > 0 else 1.0


def embed(model: KgamModel, X) -> np.ndarray:
    """Raw feature rows to the fixed channel matrix ``(n, n_channels)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.params.d:
        raise SchemaError(f"model expects {model.params.d} features, got {X.shape[1]}")
    if X.shape[0] == 0:
        return np.empty((0, model.n_channels))
    U = model.normalizer.transform(X)
    if model.outer_mode == "badic_single_g":
        return badic_embed_normalized(U, model.params, model.badic_base).reshape(-1, 1)
    return _embed_normalized(U, model.params)


def _outer(model: KgamModel, Z: np.ndarray):
    """Additive score ``sum_q g(z_q)`` per row plus the caches for backprop."""
    if model.outer_mode == "per_channel_g":
        caches = []
        score = np.zeros(Z.shape[0])
        for q, (net, (c, s)) in enumerate(zip(model.nets, model.input_scaling)):
            out, cache = neural.forward(net, (Z[:, q] - c) / s)
            score += out
            caches.append(cache)
        return score, caches
    c, s = model.input_scaling[0]
    out, cache = neural.forward(model.nets[0], (Z.ravel() - c) / s)
    return out.reshape(Z.shape).sum(axis=1), [cache]


def outer_function(model: KgamModel, z, net_index: int = 0) -> np.ndarray:
    """The additive component ``g(z)`` of net ``net_index`` in data units.

    Summing ``outer_function`` over channels reproduces the regression
    prediction (classification: the logit minus the intercept).
    """
    c, s = model.input_scaling[net_index]
    tc, ts = model.target_scaling
    raw = neural.predict(model.nets[net_index], (np.asarray(z, dtype=np.float64) - c) / s)
    return ts * raw + tc / model.n_channels


def _link(model: KgamModel, score: np.ndarray) -> np.ndarray:
    if model.task == "binary_classification":
        return sigmoid(model.intercept + score)
    tc, ts = model.target_scaling
    return tc + ts * score


def sigmoid(s):
    s = np.asarray(s, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -s))


def predict_batch(model: KgamModel, X) -> np.ndarray:
    Z = embed(model, X)
    return _link(model, _outer(model, Z)[0])


def predict(model: KgamModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise SchemaError("predict takes a single raw feature vector")
    return float(predict_batch(model, x.reshape(1, -1))[0])


def _loss_and_grad(model: KgamModel, kind: str, score: np.ndarray, y: np.ndarray):
    """Mean loss over the rows and the SGD signal for each row's summed net output.

    For ``l2`` the reported loss is the MSE in target units while the signal
    is the gradient of the MSE in standardized target units.
    """
    n = y.shape[0]
    if kind == "l2":
        tc, ts = model.target_scaling
        resid = tc + ts * score - y
        return float(np.mean(resid**2)), 2.0 * resid / (ts * n)
    s = model.intercept + score
    # -log-likelihood of Bernoulli(sigmoid(s)), written with softplus for stability
    loss = float(np.mean(np.logaddexp(0.0, s) - y * s))
    return loss, (sigmoid(s) - y) / n


def loss_value(model: KgamModel, Z: np.ndarray, y: np.ndarray, kind: str | None = None) -> float:
    kind = kind or LOSS_FOR_TASK[model.task]
    return _loss_and_grad(model, kind, _outer(model, Z)[0], y)[0]


def _sgd_batch(model, Z, y, kind, config, states, icpt_state):
    score, caches = _outer(model, Z)
    _, dscore = _loss_and_grad(model, kind, score, y)
    if model.outer_mode == "per_channel_g":
        for net, cache, state in zip(model.nets, caches, states):
            neural.sgd_step(net, neural.backward(net, cache, dscore), config, state)
    else:
        upstream = np.repeat(dscore, Z.shape[1])
        neural.sgd_step(model.nets[0], neural.backward(model.nets[0], caches[0], upstream), config, states[0])
    if kind == "logistic":
        g = float(dscore.sum())
        if not np.isfinite(g):
            raise TrainingDivergence("non-finite intercept gradient")
        icpt_state[0] = g + config.effective_momentum * icpt_state[0]
        model.intercept -= config.learning_rate * icpt_state[0]


def train(model: KgamModel, dataset: Dataset, config: TrainConfig, loss: str | None = None):
    """Mini-batch SGD on the training split.

    Returns ``(trained_model, trace)`` where ``trace[e]`` is the full
    training-split loss after epoch ``e``.  The input model is not mutated.
    Raises :class:`TrainingDivergence` (with ``.epoch``) on a non-finite loss.
    """
    kind = loss or LOSS_FOR_TASK[model.task]
    if kind == "logistic" and not np.all(np.isin(dataset.y, (0.0, 1.0))):
        raise ValueError("logistic loss needs targets in {0, 1}")
    model = model.copy()
    X, y = dataset.part("train")
    Z = embed(model, X)
    if Z.shape[0]:
        model.z_ranges = [[float(Z[:, q].min()), float(Z[:, q].max())] for q in range(Z.shape[1])]
    rng = SplitMix64(derive_seed(config.seed, SHUFFLE_STREAM))
    states = [SgdState() for _ in model.nets]
    icpt_state = [0.0]
    trace: list[float] = []
    n = Z.shape[0]
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        # overflow surfaces as a non-finite gradient or loss below
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                for start in range(0, n, config.batch_size):
                    idx = perm[start : start + config.batch_size]
                    _sgd_batch(model, Z[idx], y[idx], kind, config, states, icpt_state)
            except TrainingDivergence as exc:
                raise TrainingDivergence(f"training diverged in epoch {epoch}: {exc}", epoch) from None
            value = loss_value(model, Z, y, kind)
        if not np.isfinite(value):
            raise TrainingDivergence(f"training diverged in epoch {epoch}: loss {value}", epoch)
        trace.append(value)
    return model, trace


def evaluate(model: KgamModel, dataset: Dataset, split: str = "test") -> dict:
    X, y = dataset.part(split)
    if y.size == 0:
        raise ValueError(f"the {split!r} split is empty")
    return metrics(model.task, predict_batch(model, X), y)


def metrics(task: str, pred: np.ndarray, y: np.ndarray) -> dict:
    """Regression: RMSE and R^2.  Classification: probability RMSE, accuracy, confusion at 0.5."""
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot score an empty split")
    rmse = float(np.sqrt(np.mean((pred - y) ** 2)))
    out = {"n": int(y.size), "rmse": rmse}
    if task == "regression":
        sst = float(np.sum((y - y.mean()) ** 2))
        out["r2"] = 1.0 - float(np.sum((pred - y) ** 2)) / sst if sst > 0 else float("nan")
        return out
    label = (pred > 0.5).astype(int)
    actual = y.astype(int)
    confusion = [[int(np.sum((actual == a) & (label == p))) for p in (0, 1)] for a in (0, 1)]
    out["accuracy"] = float(np.mean(label == actual))
    out["confusion"] = confusion
    return out


def format_confusion(confusion) -> str:
    (tn, fp), (fn, tp) = confusion
    w = max(len(str(v)) for v in (tn, fp, fn, tp))
    width = max(w, len("Predicted 0"))
    lines = [
        f"{'':<9}| {'Predicted 0':>{width}} {'Predicted 1':>{width}}",
        "-" * (11 + 2 * width + 1),
        f"{'Actual 0':<9}| {tn:>{width}} {fp:>{width}}",
        f"{'Actual 1':<9}| {fn:>{width}} {tp:>{width}}",
    ]
    return "\n".join(lines)

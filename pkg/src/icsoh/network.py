"""From-scratch bidirectional LSTM regression with BPTT and Adam.

Gate equations (per step, sigmoid sg and elementwise *):

    f = sg(W_f [h_prev, x] + b_f)         forget gate
    i = sg(W_i [h_prev, x] + b_i)         input gate
    g = tanh(W_c [h_prev, x] + b_c)       cell candidate
    c = f * c_prev + i * g                cell state
    o = sg(W_o [h_prev, x] + b_o)         output gate
    h = o * tanh(c)

Two independent parameter sets consume the sequence in opposite directions;
the last hidden state of each direction is concatenated and fed through a
rectified linear head producing one non-negative scalar (SOH).

Training is mini-batch MSE with full backpropagation through time, Adam
updates, global-norm gradient clipping, and a step learning-rate schedule
(rate multiplied by a drop factor every drop period).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ._io import atomic_write_text
from .errors import DataError, NumericalError
from .validation import require

GRAD_CLIP_NORM = 5.0
# SOH targets live in (0, 1.5]; an epoch MSE beyond this is divergence, not
# noise (Adam plus stable sigmoids never literally produce a non-finite loss).
LOSS_BLOWUP_GUARD = 1e6
PARAM_BLOWUP_GUARD = 1e4
DEFAULT_HEAD_BIAS = 0.5


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmParams:
    """Per-gate weights over [h_prev, x] plus biases, stored fused.

    ``weights`` stacks the four h-by-(h+d) gate matrices row-wise in the
    order forget, input, candidate, output; ``biases`` stacks likewise.
    Per-gate views are exposed as properties.
    """

    weights: np.ndarray  # (4h, h+d)
    biases: np.ndarray  # (4h,)

    def __post_init__(self):
        require(self.weights.ndim == 2, "weights must be 2-D")
        require(self.weights.shape[0] % 4 == 0, "weight rows must be 4*hidden")
        require(len(self.biases) == self.weights.shape[0], "bias length mismatch")
        h = self.hidden_size
        require(self.weights.shape[1] > h, "weights must cover [h_prev, x]")

    @property
    def hidden_size(self) -> int:
        return self.weights.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.weights.shape[1] - self.hidden_size

    def _gate(self, k: int) -> np.ndarray:
        h = self.hidden_size
        return self.weights[k * h : (k + 1) * h]

    def _gate_bias(self, k: int) -> np.ndarray:
        h = self.hidden_size
        return self.biases[k * h : (k + 1) * h]

    w_f = property(lambda self: self._gate(0))
    w_i = property(lambda self: self._gate(1))
    w_c = property(lambda self: self._gate(2))
    w_o = property(lambda self: self._gate(3))
    b_f = property(lambda self: self._gate_bias(0))
    b_i = property(lambda self: self._gate_bias(1))
    b_c = property(lambda self: self._gate_bias(2))
    b_o = property(lambda self: self._gate_bias(3))

    @classmethod
    def initialize(
        cls,
        hidden_size: int,
        input_size: int,
        rng: np.random.Generator,
        forget_bias: float = 1.0,
    ) -> "LstmParams":
        """Uniform init in [-1/sqrt(h), 1/sqrt(h)]; forget bias shifted +1."""
        bound = 1.0 / np.sqrt(hidden_size)
        weights = rng.uniform(-bound, bound, size=(4 * hidden_size, hidden_size + input_size))
        biases = np.zeros(4 * hidden_size)
        biases[:hidden_size] = forget_bias
        return cls(weights=weights, biases=biases)


@dataclass
class LstmState:
    """Hidden output h and cell state c of one LSTM direction."""

    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int) -> "LstmState":
        return cls(h=np.zeros(hidden_size), c=np.zeros(hidden_size))


def lstm_step(params: LstmParams, prev: LstmState, x: np.ndarray) -> LstmState:
    """One literal gate update for a single sample."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.input_size,):
        raise DataError(
            f"input has shape {x.shape}, expected ({params.input_size},)"
        )
    if prev.h.shape != (params.hidden_size,) or prev.c.shape != (params.hidden_size,):
        raise DataError("state dimensions do not match parameters")
    z = np.concatenate([prev.h, x])
    h = params.hidden_size
    pre = params.weights @ z + params.biases
    f = sigmoid(pre[:h])
    i = sigmoid(pre[h : 2 * h])
    g = np.tanh(pre[2 * h : 3 * h])
    o = sigmoid(pre[3 * h :])
    c = f * prev.c + i * g
    new_h = o * np.tanh(c)
    assert np.all(np.abs(new_h) <= 1.0)
    return LstmState(h=new_h, c=c)


@dataclass
class BiLstmNetwork:
    """Forward and backward LSTM parameter sets plus the rectified head.

    ``head_bias`` is kept as a length-1 array so the optimizer can update
    it in place alongside the other parameter arrays.
    """

    forward_params: LstmParams
    backward_params: LstmParams
    head_weights: np.ndarray  # (2h,)
    head_bias: np.ndarray  # (1,)

    def __post_init__(self):
        require(
            self.forward_params.hidden_size == self.backward_params.hidden_size,
            "forward/backward hidden sizes differ",
        )
        require(
            len(self.head_weights) == 2 * self.forward_params.hidden_size,
            "head width must be twice the hidden size",
        )

    @property
    def hidden_size(self) -> int:
        return self.forward_params.hidden_size

    @property
    def input_size(self) -> int:
        return self.forward_params.input_size

    def parameter_arrays(self) -> list[np.ndarray]:
        return [
            self.forward_params.weights,
            self.forward_params.biases,
            self.backward_params.weights,
            self.backward_params.biases,
            self.head_weights,
            self.head_bias,
        ]

    def predict(self, sequence: np.ndarray) -> float:
        pred, _ = bilstm_forward(self, sequence)
        return pred

    def predict_many(self, sequences: np.ndarray) -> np.ndarray:
        X = _check_sequences(sequences, self.input_size)
        pred, _ = _batch_forward(self, X)
        return pred


def initialize_network(
    hidden_size: int,
    input_size: int,
    seed_or_rng: int | np.random.Generator = 0,
    head_bias: float = DEFAULT_HEAD_BIAS,
) -> BiLstmNetwork:
    """Fresh network; positive default head bias keeps the rectifier live."""
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    bound = 1.0 / np.sqrt(hidden_size)
    return BiLstmNetwork(
        forward_params=LstmParams.initialize(hidden_size, input_size, rng),
        backward_params=LstmParams.initialize(hidden_size, input_size, rng),
        head_weights=rng.uniform(-bound, bound, size=2 * hidden_size),
        head_bias=np.array([head_bias]),
    )


@dataclass(frozen=True)
class TrainConfig:
    """Training schedule: Adam on mini-batch MSE with step rate decay."""

    max_epochs: int = 500
    batch_size: int = 32
    initial_lr: float = 0.01
    lr_drop_period: int = 350
    lr_drop_factor: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    window_length: int = 5

    def __post_init__(self):
        require(0 < self.lr_drop_factor <= 1.0, "drop factor must be in (0, 1]")
        require(self.batch_size >= 1, "batch size must be >= 1")
        require(self.max_epochs >= 0, "max_epochs must be >= 0")


def effective_learning_rate(initial_lr: float, epoch: int, cfg: TrainConfig) -> float:
    """Rate in force during 1-based ``epoch``; drops at multiples of the period."""
    return initial_lr * cfg.lr_drop_factor ** (epoch // cfg.lr_drop_period)


class _Adam:
    def __init__(self, arrays: list[np.ndarray], cfg: TrainConfig):
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0
        self.b1 = cfg.adam_beta1
        self.b2 = cfg.adam_beta2
        self.eps = cfg.adam_eps

    def update(self, arrays: list[np.ndarray], grads: list[np.ndarray], lr: float):
        self.t += 1
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            m_hat = m / (1 - self.b1**self.t)
            v_hat = v / (1 - self.b2**self.t)
            a -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _check_sequences(sequences, input_size: int | None = None) -> np.ndarray:
    X = np.asarray(sequences, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] < 1:
        raise DataError(f"sequences must be (n, steps, features), got {X.shape}")
    if input_size is not None and X.shape[2] != input_size:
        raise DataError(f"expected {input_size} features, got {X.shape[2]}")
    return X


def _run_direction(params: LstmParams, X: np.ndarray, reverse: bool):
    n, steps, _ = X.shape
    h = params.hidden_size
    state_h = np.zeros((n, h))
    state_c = np.zeros((n, h))
    caches = []
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        z = np.concatenate([state_h, X[:, t, :]], axis=1)
        pre = z @ params.weights.T + params.biases
        f = sigmoid(pre[:, :h])
        i = sigmoid(pre[:, h : 2 * h])
        g = np.tanh(pre[:, 2 * h : 3 * h])
        o = sigmoid(pre[:, 3 * h :])
        c_prev = state_c
        state_c = f * c_prev + i * g
        tanh_c = np.tanh(state_c)
        state_h = o * tanh_c
        caches.append((z, f, i, g, o, c_prev, tanh_c))
    return state_h, caches


def _direction_backward(params: LstmParams, caches, dh_final: np.ndarray):
    h = params.hidden_size
    d_weights = np.zeros_like(params.weights)
    d_biases = np.zeros_like(params.biases)
    dh_next = dh_final
    dc_next = np.zeros_like(dh_final)
    for z, f, i, g, o, c_prev, tanh_c in reversed(caches):
        dh = dh_next
        do = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c**2)
        dpre = np.concatenate(
            [
                dc * c_prev * f * (1.0 - f),
                dc * g * i * (1.0 - i),
                dc * i * (1.0 - g**2),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        d_weights += dpre.T @ z
        d_biases += dpre.sum(axis=0)
        dz = dpre @ params.weights
        dh_next = dz[:, :h]
        dc_next = dc * f
    return d_weights, d_biases


def _batch_forward(net: BiLstmNetwork, X: np.ndarray):
    h_fwd, caches_fwd = _run_direction(net.forward_params, X, reverse=False)
    h_bwd, caches_bwd = _run_direction(net.backward_params, X, reverse=True)
    concat = np.concatenate([h_fwd, h_bwd], axis=1)
    pre_head = concat @ net.head_weights + net.head_bias[0]
    pred = np.maximum(pre_head, 0.0)
    return pred, (caches_fwd, caches_bwd, concat, pre_head)


def _batch_backward(net: BiLstmNetwork, cache, dpred: np.ndarray) -> list[np.ndarray]:
    caches_fwd, caches_bwd, concat, pre_head = cache
    h = net.hidden_size
    dpre_head = dpred * (pre_head > 0)
    d_head_w = concat.T @ dpre_head
    d_head_b = np.array([dpre_head.sum()])
    dconcat = np.outer(dpre_head, net.head_weights)
    dw_f, db_f = _direction_backward(net.forward_params, caches_fwd, dconcat[:, :h])
    dw_b, db_b = _direction_backward(net.backward_params, caches_bwd, dconcat[:, h:])
    return [dw_f, db_f, dw_b, db_b, d_head_w, d_head_b]


def bilstm_forward(net: BiLstmNetwork, sequence) -> tuple[float, tuple]:
    """Prediction for one sequence plus the activation cache for backprop.

    The forward LSTM consumes steps first-to-last, the backward LSTM
    last-to-first; the readout concatenates the final hidden state of each
    direction and applies the rectified head.
    """
    X = _check_sequences(sequence, net.input_size)
    if X.shape[0] != 1:
        raise DataError("bilstm_forward takes a single sequence")
    pred, cache = _batch_forward(net, X)
    return float(pred[0]), cache


def _clip_gradients(grads: list[np.ndarray], max_norm: float = GRAD_CLIP_NORM):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return grads


def train_bilstm(
    sequences,
    targets,
    hidden_size: int,
    initial_lr: float | None = None,
    cfg: TrainConfig = TrainConfig(),
    init_net: BiLstmNetwork | None = None,
) -> tuple[BiLstmNetwork, list[float]]:
    """Train a BiLSTM on (sequence, SOH) pairs; returns net and loss history.

    Deterministic given ``cfg.seed``: initialization and epoch shuffling use
    independent seeded streams. Raises NumericalError naming the epoch when
    the training loss turns non-finite or blows past the divergence guard.
    """
    X = _check_sequences(sequences)
    y = np.asarray(targets, dtype=float)
    require(len(y) == X.shape[0], "targets must match sequence count")
    require(len(y) >= 1, "need at least one training pair")
    if not np.all(np.isfinite(y)):
        raise DataError("targets contain non-finite values")
    lr0 = cfg.initial_lr if initial_lr is None else float(initial_lr)
    require(lr0 > 0, "learning rate must be positive")

    init_stream, shuffle_stream = np.random.SeedSequence(cfg.seed).spawn(2)
    if init_net is None:
        net = initialize_network(
            hidden_size, X.shape[2], np.random.default_rng(init_stream)
        )
    else:
        require(init_net.input_size == X.shape[2], "init net feature width mismatch")
        net = copy.deepcopy(init_net)
    shuffle_rng = np.random.default_rng(shuffle_stream)

    params = net.parameter_arrays()
    adam = _Adam(params, cfg)
    n = X.shape[0]
    history: list[float] = []
    for epoch in range(1, cfg.max_epochs + 1):
        lr = effective_learning_rate(lr0, epoch, cfg)
        perm = shuffle_rng.permutation(n)
        sq_err_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            pred, cache = _batch_forward(net, xb)
            err = pred - yb
            sq_err_sum += float(np.sum(err**2))
            dpred = 2.0 * err / len(idx)
            grads = _batch_backward(net, cache, dpred)
            _clip_gradients(grads)
            adam.update(params, grads, lr)
        epoch_loss = sq_err_sum / n
        history.append(epoch_loss)
        if not np.isfinite(epoch_loss) or epoch_loss > LOSS_BLOWUP_GUARD:
            raise NumericalError(
                f"training diverged at epoch {epoch} (loss {epoch_loss:.3e})"
            )
        # Adam keeps the loss finite even at absurd rates; runaway parameter
        # magnitudes are the observable instability, so guard those too.
        if any(float(np.max(np.abs(p))) > PARAM_BLOWUP_GUARD for p in params):
            raise NumericalError(f"parameters diverged at epoch {epoch}")
    return net, history


def gradient_check(
    net: BiLstmNetwork, sequence, target: float, epsilon: float = 1e-5
) -> float:
    """Max relative disagreement between BPTT and central finite differences.

    Relative error per parameter entry is |ga - gn| / max(|ga| + |gn|, 1e-8);
    the loss is the squared error of the single pair.
    """
    X = _check_sequences(sequence, net.input_size)

    def loss() -> float:
        pred, _ = _batch_forward(net, X)
        return float((pred[0] - target) ** 2)

    pred, cache = _batch_forward(net, X)
    analytic = _batch_backward(net, cache, np.array([2.0 * (pred[0] - target)]))

    worst = 0.0
    for arr, grad in zip(net.parameter_arrays(), analytic):
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for k in range(flat.size):
            saved = flat[k]
            flat[k] = saved + epsilon
            hi = loss()
            flat[k] = saved - epsilon
            lo = loss()
            flat[k] = saved
            numeric = (hi - lo) / (2.0 * epsilon)
            denom = max(abs(gflat[k]) + abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[k] - numeric) / denom)
    return worst


def network_to_dict(
    net: BiLstmNetwork, normalization: dict | None = None, config: dict | None = None
) -> dict:
    return {
        "hidden_size": net.hidden_size,
        "input_size": net.input_size,
        "forward": {
            "weights": net.forward_params.weights.tolist(),
            "biases": net.forward_params.biases.tolist(),
        },
        "backward": {
            "weights": net.backward_params.weights.tolist(),
            "biases": net.backward_params.biases.tolist(),
        },
        "head_weights": net.head_weights.tolist(),
        "head_bias": float(net.head_bias[0]),
        "normalization": normalization,
        "config": config,
    }


def network_from_dict(payload: dict) -> BiLstmNetwork:
    return BiLstmNetwork(
        forward_params=LstmParams(
            weights=np.array(payload["forward"]["weights"]),
            biases=np.array(payload["forward"]["biases"]),
        ),
        backward_params=LstmParams(
            weights=np.array(payload["backward"]["weights"]),
            biases=np.array(payload["backward"]["biases"]),
        ),
        head_weights=np.array(payload["head_weights"]),
        head_bias=np.array([payload["head_bias"]]),
    )


def save_network(
    net: BiLstmNetwork,
    path: str | Path,
    normalization: dict | None = None,
    config: dict | None = None,
) -> None:
    """Persist as JSON; float repr round-trips bit-exactly through load."""
    atomic_write_text(path, json.dumps(network_to_dict(net, normalization, config), indent=1))


def load_network(path: str | Path) -> tuple[BiLstmNetwork, dict]:
    payload = json.loads(Path(path).read_text())
    return network_from_dict(payload), payload


class BiLstmRegressor(BaseEstimator, RegressorMixin):
    """Scikit-learn style wrapper around :func:`train_bilstm`.

    X is (n, window, features); y is the SOH at each window's last cycle.
    """

    def __init__(
        self,
        hidden_size: int = 60,
        learning_rate: float = 0.01,
        train_config: TrainConfig = TrainConfig(),
        random_state: int = 0,
    ):
        self.hidden_size = hidden_size
        self.learning_rate = learning_rate
        self.train_config = train_config
        self.random_state = random_state

    def fit(self, X, y):
        cfg = replace(self.train_config, seed=self.random_state)
        self.network_, self.loss_history_ = train_bilstm(
            X, y, self.hidden_size, self.learning_rate, cfg
        )
        return self

    def predict(self, X):
        if getattr(self, "network_", None) is None:
            raise DataError("BiLstmRegressor is not fitted")
        return self.network_.predict_many(X)

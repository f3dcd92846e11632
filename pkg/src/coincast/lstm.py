"""A from-scratch LSTM used as a temporal feature extractor.

One cell step, with x_t the input row and [h, x] denoting concatenation:

    f_t = sigmoid(W_f [h_{t-1}, x_t] + b_f)        forget gate
    i_t = sigmoid(W_i [h_{t-1}, x_t] + b_i)        input gate
    c~_t = tanh(W_C [h_{t-1}, x_t] + b_C)          candidate cell
    C_t = f_t * C_{t-1} + i_t * c~_t               cell state
    o_t = sigmoid(W_o [h_{t-1}, x_t] + b_o)        output gate
    h_t = o_t * tanh(C_t)

The final hidden state h_n of a sequence is the latent feature vector
handed to the downstream tree ensemble. Training attaches a temporary
linear head, minimizes mean squared error on the window targets with full
backpropagation through time, and discards the head afterwards.

All gate weights are (k, k+d) acting on the concatenated [h, x] vector;
initial h and C are zero. Weight init is uniform on +-1/sqrt(k+d) drawn in
the fixed order W_f, W_i, W_C, W_o, head; b_f starts at 1.0 so memory is
retained early in training, all other biases at zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError, SizingError, TrainingError
from .market_data import WindowedDataset
from .numkernel import Rng, seeded_uniform, sigmoid

_WEIGHTS = ("W_f", "W_i", "W_C", "W_o")
_BIASES = ("b_f", "b_i", "b_C", "b_o")
PARAM_FIELDS = _WEIGHTS + _BIASES


@dataclass
class LstmParams:
    W_f: np.ndarray
    W_i: np.ndarray
    W_C: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_C: np.ndarray
    b_o: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    def validate(self) -> None:
        k = self.W_f.shape[0]
        width = self.W_f.shape[1]
        if width <= k:
            raise ShapeError(f"W_f is {self.W_f.shape}; expected (k, k+d) with d >= 1")
        for name in _WEIGHTS:
            w = getattr(self, name)
            if w.shape != (k, width):
                raise ShapeError(f"{name} has shape {w.shape}, expected {(k, width)}")
        for name in _BIASES:
            b = getattr(self, name)
            if b.shape != (k,):
                raise ShapeError(f"{name} has shape {b.shape}, expected {(k,)}")

    def to_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in PARAM_FIELDS}

    @classmethod
    def from_dict(cls, payload: dict) -> "LstmParams":
        params = cls(**{name: np.asarray(payload[name], dtype=np.float64) for name in PARAM_FIELDS})
        params.validate()
        return params


@dataclass
class LstmState:
    h: np.ndarray
    C: np.ndarray


def init_state(hidden_size: int) -> LstmState:
    return LstmState(h=np.zeros(hidden_size), C=np.zeros(hidden_size))


def init_params(input_size: int, hidden_size: int, rng: Rng) -> LstmParams:
    """Seeded uniform init on +-1/sqrt(k+d); forget bias 1.0, others zero."""
    if input_size < 1 or hidden_size < 1:
        raise SizingError(
            f"input and hidden sizes must be at least 1, got d={input_size}, k={hidden_size}"
        )
    k, width = hidden_size, hidden_size + input_size
    scale = 1.0 / math.sqrt(width)
    weights = {name: seeded_uniform(rng, k, width, scale) for name in _WEIGHTS}
    return LstmParams(
        **weights,
        b_f=np.ones(k),
        b_i=np.zeros(k),
        b_C=np.zeros(k),
        b_o=np.zeros(k),
    )


@dataclass
class StepCache:
    concat: np.ndarray  # [h_{t-1}, x_t]
    f: np.ndarray
    i: np.ndarray
    c_tilde: np.ndarray
    o: np.ndarray
    C_prev: np.ndarray
    tanh_C: np.ndarray


@dataclass
class SequenceCache:
    steps: list[StepCache]
    hidden_size: int
    input_size: int


def cell_forward(params: LstmParams, x, state: LstmState):
    """One LSTM step; returns the new state and the cache needed for BPTT."""
    k, d = params.hidden_size, params.input_size
    xv = np.asarray(x, dtype=np.float64).ravel()
    if xv.size != d:
        raise ShapeError(f"input vector has length {xv.size}, expected {d}")
    if state.h.shape != (k,) or state.C.shape != (k,):
        raise ShapeError(
            f"state vectors have shapes {state.h.shape}/{state.C.shape}, expected {(k,)}"
        )
    concat = np.concatenate([state.h, xv])
    f = sigmoid(params.W_f @ concat + params.b_f)
    i = sigmoid(params.W_i @ concat + params.b_i)
    c_tilde = np.tanh(params.W_C @ concat + params.b_C)
    o = sigmoid(params.W_o @ concat + params.b_o)
    C = f * state.C + i * c_tilde
    tanh_C = np.tanh(C)
    h = o * tanh_C
    cache = StepCache(concat=concat, f=f, i=i, c_tilde=c_tilde, o=o, C_prev=state.C, tanh_C=tanh_C)
    return LstmState(h=h, C=C), cache


def sequence_forward(params: LstmParams, X):
    """Run a (n, d) sequence from zero state; returns (h_n, cache)."""
    mat = np.asarray(X, dtype=np.float64)
    if mat.ndim != 2:
        raise ShapeError(f"expected a 2-D sequence, got {mat.ndim} dimension(s)")
    if mat.shape[0] < 1:
        raise SizingError("sequence must contain at least one step")
    if mat.shape[1] != params.input_size:
        raise ShapeError(
            f"sequence has {mat.shape[1]} feature(s), params expect {params.input_size}"
        )
    state = init_state(params.hidden_size)
    steps: list[StepCache] = []
    for t in range(mat.shape[0]):
        state, cache = cell_forward(params, mat[t], state)
        steps.append(cache)
    seq_cache = SequenceCache(steps=steps, hidden_size=params.hidden_size, input_size=params.input_size)
    return state.h, seq_cache


@dataclass
class LstmGrads:
    W_f: np.ndarray
    W_i: np.ndarray
    W_C: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_C: np.ndarray
    b_o: np.ndarray

    @classmethod
    def zeros_like(cls, params: LstmParams) -> "LstmGrads":
        return cls(**{name: np.zeros_like(getattr(params, name)) for name in PARAM_FIELDS})


def sequence_backward(params: LstmParams, cache: SequenceCache, grad_h_n) -> LstmGrads:
    """Full backpropagation through time from a gradient on h_n alone.

    Reverse accumulation over the cached steps; returns parameter gradients
    of the same shapes as the params. A zero incoming gradient yields
    exactly zero everywhere.
    """
    k = params.hidden_size
    if cache.hidden_size != k or cache.input_size != params.input_size:
        raise ShapeError(
            f"cache was built for k={cache.hidden_size}, d={cache.input_size}; "
            f"params have k={k}, d={params.input_size}"
        )
    dh = np.asarray(grad_h_n, dtype=np.float64).ravel()
    if dh.size != k:
        raise ShapeError(f"gradient on h_n has length {dh.size}, expected {k}")
    grads = LstmGrads.zeros_like(params)
    dh = dh.copy()
    dC = np.zeros(k)
    for step in reversed(cache.steps):
        do = dh * step.tanh_C
        dC = dC + dh * step.o * (1.0 - step.tanh_C**2)
        df = dC * step.C_prev
        di = dC * step.c_tilde
        dct = dC * step.i
        da_f = df * step.f * (1.0 - step.f)
        da_i = di * step.i * (1.0 - step.i)
        da_c = dct * (1.0 - step.c_tilde**2)
        da_o = do * step.o * (1.0 - step.o)
        grads.W_f += np.outer(da_f, step.concat)
        grads.W_i += np.outer(da_i, step.concat)
        grads.W_C += np.outer(da_c, step.concat)
        grads.W_o += np.outer(da_o, step.concat)
        grads.b_f += da_f
        grads.b_i += da_i
        grads.b_C += da_c
        grads.b_o += da_o
        dconcat = (
            params.W_f.T @ da_f
            + params.W_i.T @ da_i
            + params.W_C.T @ da_c
            + params.W_o.T @ da_o
        )
        dh = dconcat[:k]
        dC = dC * step.f
    return grads


@dataclass
class LinearHead:
    """Temporary readout h_n -> horizon used only during pre-training."""

    W: np.ndarray  # (n_out, k)
    b: np.ndarray  # (n_out,)

    def predict(self, latents) -> np.ndarray:
        Z = np.asarray(latents, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[1] != self.W.shape[1]:
            raise ShapeError(
                f"latents have shape {Z.shape}, head expects (N, {self.W.shape[1]})"
            )
        return Z @ self.W.T + self.b

    def to_dict(self) -> dict:
        return {"W": self.W.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "LinearHead":
        return cls(W=np.asarray(payload["W"], dtype=np.float64), b=np.asarray(payload["b"], dtype=np.float64))


@dataclass
class TrainConfig:
    hidden_size: int = 64
    epochs: int = 100
    learning_rate: float = 0.005
    seed: int = 42
    optimizer: str = "adam"
    clip_norm: float | None = 5.0
    batch_size: int | None = None  # None = full batch
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.hidden_size < 1:
            raise SizingError(f"hidden size must be at least 1, got {self.hidden_size}")
        if self.epochs < 1:
            raise SizingError(f"epochs must be at least 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise DomainError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise DomainError(f"clip norm must be positive, got {self.clip_norm}")
        if self.batch_size is not None and self.batch_size < 1:
            raise SizingError(f"batch size must be at least 1, got {self.batch_size}")


# --- batched forward/backward used by training -----------------------------
# Same math as the per-sequence functions above, but over (N, n, d) at once;
# the per-sequence path stays the reference implementation.


def _forward_batch(params: LstmParams, X3: np.ndarray):
    N, n, _ = X3.shape
    k = params.hidden_size
    h = np.zeros((N, k))
    C = np.zeros((N, k))
    steps = []
    for t in range(n):
        concat = np.concatenate([h, X3[:, t, :]], axis=1)
        f = sigmoid(concat @ params.W_f.T + params.b_f)
        i = sigmoid(concat @ params.W_i.T + params.b_i)
        c_tilde = np.tanh(concat @ params.W_C.T + params.b_C)
        o = sigmoid(concat @ params.W_o.T + params.b_o)
        C_new = f * C + i * c_tilde
        tanh_C = np.tanh(C_new)
        steps.append(StepCache(concat=concat, f=f, i=i, c_tilde=c_tilde, o=o, C_prev=C, tanh_C=tanh_C))
        C = C_new
        h = o * tanh_C
    return h, steps


def _backward_batch(params: LstmParams, steps: list[StepCache], dHn: np.ndarray) -> LstmGrads:
    k = params.hidden_size
    grads = LstmGrads.zeros_like(params)
    dh = dHn.copy()
    dC = np.zeros_like(dHn)
    for step in reversed(steps):
        do = dh * step.tanh_C
        dC = dC + dh * step.o * (1.0 - step.tanh_C**2)
        df = dC * step.C_prev
        di = dC * step.c_tilde
        dct = dC * step.i
        da_f = df * step.f * (1.0 - step.f)
        da_i = di * step.i * (1.0 - step.i)
        da_c = dct * (1.0 - step.c_tilde**2)
        da_o = do * step.o * (1.0 - step.o)
        grads.W_f += da_f.T @ step.concat
        grads.W_i += da_i.T @ step.concat
        grads.W_C += da_c.T @ step.concat
        grads.W_o += da_o.T @ step.concat
        grads.b_f += da_f.sum(axis=0)
        grads.b_i += da_i.sum(axis=0)
        grads.b_C += da_c.sum(axis=0)
        grads.b_o += da_o.sum(axis=0)
        dconcat = da_f @ params.W_f + da_i @ params.W_i + da_c @ params.W_C + da_o @ params.W_o
        dh = dconcat[:, :k]
        dC = dC * step.f
    return grads


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, tensors: dict, grads: dict):
        for name, grad in grads.items():
            tensors[name] -= self.lr * grad


class _Adam:
    def __init__(self, lr: float, beta1: float, beta2: float, eps: float, shapes: dict):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros(shape) for name, shape in shapes.items()}
        self.v = {name: np.zeros(shape) for name, shape in shapes.items()}

    def step(self, tensors: dict, grads: dict):
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, grad in grads.items():
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            m_hat = m / correction1
            v_hat = v / correction2
            tensors[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _clip_global(grads: dict, clip_norm: float | None):
    if clip_norm is None:
        return
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = math.sqrt(total)
    if norm > clip_norm:
        factor = clip_norm / norm
        for g in grads.values():
            g *= factor


def train(dataset: WindowedDataset, config: TrainConfig):
    """Pre-train an LSTM on windowed data through a temporary linear head.

    Returns (params, head, loss_history) where loss_history[e] is the mean
    squared error over the whole dataset computed from the forward passes of
    epoch e (before that epoch's updates take effect in the history entry).
    Deterministic for a fixed seed; batches are consecutive, never shuffled.
    """
    N = dataset.n_samples
    if N < 1:
        raise SizingError("cannot train on an empty dataset")
    X3 = np.asarray(dataset.X, dtype=np.float64)
    Y = np.asarray(dataset.Y, dtype=np.float64)
    n_out = Y.shape[1]
    d = X3.shape[2]
    k = config.hidden_size

    rng = Rng(config.seed)
    params = init_params(d, k, rng)
    head = LinearHead(W=seeded_uniform(rng, n_out, k, 1.0 / math.sqrt(k)), b=np.zeros(n_out))

    tensors = {name: getattr(params, name) for name in PARAM_FIELDS}
    tensors["head_W"] = head.W
    tensors["head_b"] = head.b
    if config.optimizer == "adam":
        optimizer = _Adam(
            config.learning_rate,
            config.beta1,
            config.beta2,
            config.eps,
            {name: t.shape for name, t in tensors.items()},
        )
    else:
        optimizer = _Sgd(config.learning_rate)

    batch = N if config.batch_size is None else min(config.batch_size, N)
    history: list[float] = []
    # overflow during a diverging run is reported via TrainingError below,
    # not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            sq_err_total = 0.0
            for start in range(0, N, batch):
                stop = min(start + batch, N)
                B = stop - start
                Hn, steps = _forward_batch(params, X3[start:stop])
                preds = Hn @ head.W.T + head.b
                err = preds - Y[start:stop]
                sq_err_total += float((err * err).sum())
                dpred = (2.0 / (B * n_out)) * err
                grad_map = {
                    "head_W": dpred.T @ Hn,
                    "head_b": dpred.sum(axis=0),
                }
                dHn = dpred @ head.W
                lstm_grads = _backward_batch(params, steps, dHn)
                for name in PARAM_FIELDS:
                    grad_map[name] = getattr(lstm_grads, name)
                _clip_global(grad_map, config.clip_norm)
                optimizer.step(tensors, grad_map)
            loss = sq_err_total / (N * n_out)
            if not math.isfinite(loss):
                raise TrainingError(f"training diverged at epoch {epoch}: loss is not finite")
            history.append(loss)
    return params, head, history


def extract_latents(params: LstmParams, dataset: WindowedDataset) -> np.ndarray:
    """Final hidden state of every window, one row per sample.

    Runs each sample through :func:`sequence_forward` so row i is bitwise
    identical to the single-sequence path.
    """
    N = dataset.n_samples
    k = params.hidden_size
    Z = np.zeros((N, k))
    for i in range(N):
        Z[i], _ = sequence_forward(params, dataset.X[i])
    return Z

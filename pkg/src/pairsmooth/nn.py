"""Dual-head MLP classifier with hand-derived gradients and SGD with momentum.

The trunk maps inputs to an embedding ``S``. Two bias-free linear heads read
the same embedding: the logit head produces ``z = S W_l^T`` and the smoothing
head produces ``v = sigmoid(S W_t^T)``, whose row softmax ``u'`` is the
learned smoothing distribution.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import tensor
from .smoothing import TargetDistributionError, coefficient_distribution

CHECKPOINT_FORMAT = 1


@dataclass
class Model:
    params: Dict[str, np.ndarray]
    num_trunk_layers: int

    @property
    def num_classes(self):
        return self.params["logit_head"].shape[0]

    @property
    def embed_dim(self):
        return self.params["logit_head"].shape[1]

    @property
    def input_dim(self):
        return self.params["trunk.0.weight"].shape[1]

    @property
    def coefficient_head(self):
        """True when the smoothing head predicts one coefficient instead of K scores."""
        return self.params["smooth_head"].shape[0] == 1 and self.num_classes != 1

    def trunk(self):
        for i in range(self.num_trunk_layers):
            yield self.params[f"trunk.{i}.weight"], self.params[f"trunk.{i}.bias"]

    def copy(self):
        return Model({k: v.copy() for k, v in self.params.items()}, self.num_trunk_layers)


def init_model(input_dim, hidden, embed_dim, num_classes, rng, coefficient_head=False):
    """Trunk of ReLU layers ``input_dim -> *hidden -> embed_dim`` plus two heads.

    Every tensor is drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); both heads
    share that scheme.
    """
    widths = [input_dim, *hidden, embed_dim]
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"trunk.{i}.weight"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params[f"trunk.{i}.bias"] = rng.uniform(-bound, bound, size=(fan_out, 1))
    bound = 1.0 / np.sqrt(embed_dim)
    params["logit_head"] = rng.uniform(-bound, bound, size=(num_classes, embed_dim))
    smooth_rows = 1 if coefficient_head else num_classes
    params["smooth_head"] = rng.uniform(-bound, bound, size=(smooth_rows, embed_dim))
    return Model(params, len(widths) - 1)


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre: List[np.ndarray]  # pre-activation of every trunk layer
    post: List[np.ndarray]  # activation of every trunk layer; post[-1] is S
    logits: np.ndarray  # z, B x K
    smooth_pre: np.ndarray  # a = S W_t^T
    v: np.ndarray  # sigmoid(a)
    p: np.ndarray  # softmax(z)
    log_p: np.ndarray
    u_prime: Optional[np.ndarray]  # softmax(v); None for the coefficient head

    @property
    def embedding(self):
        return self.post[-1]

    def smoothing_distribution(self, q=None):
        """Learned smoothing rows; the coefficient head needs the label rows ``q``."""
        if self.u_prime is not None:
            return self.u_prime
        if q is None:
            raise ValueError("coefficient head needs label rows to form its smoothing distribution")
        return coefficient_distribution(q, self.v)


def forward(model, inputs):
    x = tensor.as_matrix(inputs, "inputs")
    if x.shape[1] != model.input_dim:
        raise tensor.DimensionError(
            f"inputs have {x.shape[1]} features, model expects {model.input_dim}"
        )
    pre, post = [], []
    h = x
    for weight, bias in model.trunk():
        a = tensor.matmul(h, weight.T) + bias.T
        h = tensor.relu(a)
        pre.append(a)
        post.append(h)
    z = tensor.matmul(h, model.params["logit_head"].T)
    a_s = tensor.matmul(h, model.params["smooth_head"].T)
    v = tensor.sigmoid(a_s)
    u = None if model.coefficient_head else tensor.softmax_rows(v)
    return ForwardTrace(x, pre, post, z, a_s, v, tensor.softmax_rows(z),
                        tensor.log_softmax_rows(z), u)


def cross_entropy(target, log_p):
    """Per-row ``H(target, p) = -sum_k target_k log p_k``."""
    return -(target * log_p).sum(axis=1)


def loss_and_backward(model, trace, q, w):
    """Mean over the batch of ``(1 - w) H(q, p) + w H(u', p)`` and its gradients.

    Gradients flow through both heads into the shared trunk; nothing is
    detached. Returns ``(loss, grads)`` with ``grads`` keyed like ``model.params``.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != trace.p.shape:
        raise tensor.DimensionError(f"targets {q.shape} do not match predictions {trace.p.shape}")
    err = np.abs(q.sum(axis=1) - 1.0)
    if (err > 1e-6).any():
        raise TargetDistributionError(f"target row {int(err.argmax())} does not sum to 1")
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"mixing weight must lie in [0, 1], got {w}")

    n = q.shape[0]
    log_p = trace.log_p
    u = trace.smoothing_distribution(q)
    loss = float(((1 - w) * cross_entropy(q, log_p) + w * cross_entropy(u, log_p)).mean())

    dz = (trace.p - ((1 - w) * q + w * u)) / n
    c = -w * log_p
    if model.coefficient_head:
        # u' = (1 - s) q + s / K, so dH(u', p)/ds = sum_k (q_k - 1/K) log p_k
        dv = w * ((q - 1.0 / q.shape[1]) * log_p).sum(axis=1, keepdims=True) / n
    else:
        dv = u * (c - (u * c).sum(axis=1, keepdims=True)) / n
    da = dv * trace.v * (1 - trace.v)

    s = trace.embedding
    grads = {
        "logit_head": dz.T @ s,
        "smooth_head": da.T @ s,
    }
    dh = dz @ model.params["logit_head"] + da @ model.params["smooth_head"]
    for i in reversed(range(model.num_trunk_layers)):
        dpre = dh * (trace.pre[i] > 0)
        below = trace.post[i - 1] if i > 0 else trace.inputs
        grads[f"trunk.{i}.weight"] = dpre.T @ below
        grads[f"trunk.{i}.bias"] = dpre.sum(axis=0)[:, None]
        if i > 0:
            dh = dpre @ model.params[f"trunk.{i}.weight"]
    return loss, {k: grads[k] for k in model.params}


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.9
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")


def sgd_step(model, grads, state):
    """``velocity <- momentum * velocity - lr * grad``; ``param <- param + velocity``.

    Updates ``model`` and ``state`` in place and returns both.
    """
    for name, param in model.params.items():
        g = grads[name]
        if g.shape != param.shape:
            raise tensor.DimensionError(f"{name}: gradient {g.shape} vs parameter {param.shape}")
        vel = state.velocity.get(name)
        if vel is None:
            vel = np.zeros_like(param)
        vel = state.momentum * vel - state.learning_rate * g
        state.velocity[name] = vel
        param += vel
        if not np.isfinite(param).all():
            raise tensor.NonFiniteError(f"{name} became non-finite after an update")
    return model, state


def model_to_dict(model, provenance=None):
    doc = {
        "format_version": CHECKPOINT_FORMAT,
        "num_trunk_layers": model.num_trunk_layers,
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in model.params.items()
        },
    }
    if provenance:
        doc["provenance"] = provenance
    return doc


def model_from_dict(doc):
    if doc.get("format_version") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    params = {}
    for name, entry in doc["params"].items():
        shape = tuple(entry["shape"])
        arr = np.asarray(entry["data"], dtype=np.float64)
        if arr.size != int(np.prod(shape)):
            raise ValueError(f"{name}: {arr.size} values for shape {shape}")
        params[name] = arr.reshape(shape)
    return Model(params, int(doc["num_trunk_layers"]))


def save_checkpoint(model, path, provenance=None):
    with open(path, "w") as f:
        json.dump(model_to_dict(model, provenance), f)


def load_checkpoint(path):
    with open(path) as f:
        return model_from_dict(json.load(f))

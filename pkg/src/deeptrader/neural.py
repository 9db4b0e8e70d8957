"""Dense feed-forward networks with exact reverse-mode gradients.

Everything is float64 numpy. A network is a plain value object (list of
layers); forward returns a cache that backward consumes to produce gradients
for every weight, bias and the input. The Adam optimizer and Polyak target
blending live here too, as does the bit-exact JSON checkpoint encoding.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "tanh", "linear")

CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    weights: np.ndarray  # (fan_in, fan_out)
    biases: np.ndarray  # (fan_out,)
    activation: str

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.shape[1] != self.biases.shape[0]:
            raise ValueError(
                f"bias length {self.biases.shape[0]} does not match fan-out {self.weights.shape[1]}"
            )


@dataclass
class Mlp:
    layers: list[Layer]

    @property
    def input_size(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_size(self) -> int:
        return self.layers[-1].weights.shape[1]

    def parameters(self) -> list[np.ndarray]:
        """Flat view of all parameter tensors, weights then bias per layer."""
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out

    def clone(self) -> "Mlp":
        return Mlp(
            layers=[
                Layer(weights=l.weights.copy(), biases=l.biases.copy(), activation=l.activation)
                for l in self.layers
            ]
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
        """Run the network, returning the output and the activation cache.

        Accepts a single vector or a (batch, features) matrix; the output
        matches the input's dimensionality.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x.reshape(1, -1) if single else x
        if h.shape[1] != self.input_size:
            raise ValueError(f"input width {h.shape[1]} does not match network input {self.input_size}")
        cache: list[tuple[np.ndarray, np.ndarray]] = []
        for layer in self.layers:
            pre = h @ layer.weights + layer.biases
            cache.append((h, pre))
            h = _activate(pre, layer.activation)
        return (h[0] if single else h), cache

    def backward(
        self,
        cache: list[tuple[np.ndarray, np.ndarray]],
        output_grad: np.ndarray,
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Exact gradients of a scalar loss given d(loss)/d(output).

        Returns (parameter gradients ordered like ``parameters()``, input gradient).
        """
        if len(cache) != len(self.layers):
            raise ValueError("cache does not match network depth (stale cache?)")
        grad = np.asarray(output_grad, dtype=np.float64)
        single = grad.ndim == 1
        grad = grad.reshape(1, -1) if single else grad

        weight_grads: list[np.ndarray] = [None] * len(self.layers)  # type: ignore[list-item]
        bias_grads: list[np.ndarray] = [None] * len(self.layers)  # type: ignore[list-item]
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            inputs, pre = cache[idx]
            d_pre = grad * _activation_grad(pre, layer.activation)
            weight_grads[idx] = inputs.T @ d_pre
            bias_grads[idx] = d_pre.sum(axis=0)
            grad = d_pre @ layer.weights.T

        flat: list[np.ndarray] = []
        for w_grad, b_grad in zip(weight_grads, bias_grads):
            flat.append(w_grad)
            flat.append(b_grad)
        return flat, (grad[0] if single else grad)


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "tanh":
        return np.tanh(pre)
    return pre


def _activation_grad(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (pre > 0.0).astype(np.float64)
    if activation == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    return np.ones_like(pre)


def init_mlp(
    sizes: list[int] | tuple[int, ...],
    output_activation: str,
    rng: np.random.Generator,
    hidden_activation: str = "relu",
) -> Mlp:
    """Build an MLP with uniform fan-in initialization from the seeded generator."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    layers: list[Layer] = []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = 1.0 / np.sqrt(fan_in)
        weights = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        biases = rng.uniform(-bound, bound, size=fan_out)
        activation = output_activation if i == len(sizes) - 2 else hidden_activation
        layers.append(Layer(weights=weights, biases=biases, activation=activation))
    return Mlp(layers=layers)


@dataclass
class Adam:
    """Adaptive-moment optimizer over a fixed list of parameter tensors."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update parameters in place with bias-corrected moment estimates."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(params) != len(self.m):
            raise ValueError("parameter list does not match optimizer state")
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def polyak_update(target: Mlp, source: Mlp, tau: float) -> None:
    """Blend source into target in place: target = tau*source + (1-tau)*target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    for t_layer, s_layer in zip(target.layers, source.layers):
        t_layer.weights *= 1.0 - tau
        t_layer.weights += tau * s_layer.weights
        t_layer.biases *= 1.0 - tau
        t_layer.biases += tau * s_layer.biases


# ---------------------------------------------------------------------------
# Bit-exact JSON serialization
# ---------------------------------------------------------------------------


def encode_array(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype=np.float64)
    return {
        "shape": list(data.shape),
        "data": base64.b64encode(data.astype("<f8").tobytes()).decode("ascii"),
    }


def decode_array(doc: dict) -> np.ndarray:
    flat = np.frombuffer(base64.b64decode(doc["data"]), dtype="<f8")
    return flat.reshape(doc["shape"]).astype(np.float64)


def mlp_to_dict(net: Mlp) -> dict:
    return {
        "layers": [
            {
                "weights": encode_array(l.weights),
                "biases": encode_array(l.biases),
                "activation": l.activation,
            }
            for l in net.layers
        ]
    }


def mlp_from_dict(doc: dict) -> Mlp:
    return Mlp(
        layers=[
            Layer(
                weights=decode_array(l["weights"]),
                biases=decode_array(l["biases"]),
                activation=l["activation"],
            )
            for l in doc["layers"]
        ]
    )


def adam_to_dict(opt: Adam) -> dict:
    return {
        "lr": opt.lr,
        "beta1": opt.beta1,
        "beta2": opt.beta2,
        "eps": opt.eps,
        "step_count": opt.step_count,
        "m": [encode_array(t) for t in opt.m],
        "v": [encode_array(t) for t in opt.v],
    }


def adam_from_dict(doc: dict) -> Adam:
    return Adam(
        lr=doc["lr"],
        beta1=doc["beta1"],
        beta2=doc["beta2"],
        eps=doc["eps"],
        step_count=doc["step_count"],
        m=[decode_array(t) for t in doc["m"]],
        v=[decode_array(t) for t in doc["v"]],
    )


def save_checkpoint(path: str | Path, payload: dict) -> None:
    """Write a versioned checkpoint document; byte-identical for equal payloads."""
    document = {"version": CHECKPOINT_VERSION, "payload": payload}
    Path(path).write_text(
        json.dumps(document, sort_keys=True, separators=(",", ":")), encoding="utf-8"
    )


def load_checkpoint(path: str | Path) -> dict:
    document = json.loads(Path(path).read_text(encoding="utf-8"))
    version = document.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    return document["payload"]

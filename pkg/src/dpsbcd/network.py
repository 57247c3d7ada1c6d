"""Spectrally capped multilayer perceptron: parameters, forward pass, loss.

Layers are bias-free linear maps with ReLU between them and no activation on
the last map. Each weight matrix carries a spectral-norm cap that is enforced
by rescaling with a power-iteration estimate of the norm.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngState, power_iteration, require_matrix, solve_spd

__all__ = [
    "LipschitzMLP",
    "init_model",
    "forward",
    "normalize_layer",
    "loss",
    "prox_squared_loss",
    "predict",
    "save_model",
    "load_model",
]

MODEL_MAGIC = b"DPSBCD-MODEL-v1"


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


@dataclass
class LipschitzMLP:
    """Weights plus per-layer spectral caps.

    ``weights[d]`` maps width_d -> width_{d+1}; the network has depth
    ``D = len(weights) - 1`` hidden transitions with ReLU after layers
    0..D-1 and the raw linear output of layer D feeding the loss.
    """

    weights: list[np.ndarray]
    caps: list[float] = field(default_factory=list)
    cap_final: bool = True

    def __post_init__(self):
        if len(self.weights) < 2:
            raise ValueError("need at least two weight matrices (one hidden layer)")
        for d in range(len(self.weights) - 1):
            if self.weights[d + 1].shape[1] != self.weights[d].shape[0]:
                raise ValueError(
                    f"layer {d} output width {self.weights[d].shape[0]} does not "
                    f"match layer {d + 1} input width {self.weights[d + 1].shape[1]}"
                )
        if not self.caps:
            self.caps = [np.inf] * len(self.weights)
        if len(self.caps) != len(self.weights):
            raise ValueError("caps must have one entry per weight matrix")
        if any(c <= 0 for c in self.caps):
            raise ValueError("caps must be positive")

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "LipschitzMLP":
        return LipschitzMLP(
            [w.copy() for w in self.weights], list(self.caps), self.cap_final
        )


def init_model(
    widths: list[int],
    rho: float | list[float],
    init_sigma2: float,
    rng: RngState,
    cap_final: bool = True,
) -> LipschitzMLP:
    """Gaussian-initialized network with entry variance ``init_sigma2``.

    The initialization variance doubles as the inverse of the privacy
    accountant's initial log-Sobolev constant, so it is a named parameter
    rather than a hard-coded default.
    """
    if len(widths) < 3:
        raise ValueError("widths must list input, at least one hidden, and output size")
    if init_sigma2 <= 0:
        raise ValueError("init_sigma2 must be > 0")
    caps = list(rho) if isinstance(rho, (list, tuple)) else [float(rho)] * (len(widths) - 1)
    if not cap_final:
        caps[-1] = np.inf
    std = float(np.sqrt(init_sigma2))
    weights = [
        std * rng.standard_normal(widths[d + 1], widths[d]) for d in range(len(widths) - 1)
    ]
    model = LipschitzMLP(weights, caps, cap_final=cap_final)
    for d in range(len(model.weights)):
        if np.isfinite(model.caps[d]):
            model.weights[d] = normalize_layer(model.weights[d], model.caps[d])
    return model


def forward(model: LipschitzMLP, inputs) -> list[np.ndarray]:
    """Activations x_0..x_D with x_0 = inputs and x_{d+1} = relu(W_d x_d)."""
    x = require_matrix(inputs, "inputs")
    if x.shape[0] != model.weights[0].shape[1]:
        raise ValueError(
            f"input width {x.shape[0]} does not match first layer "
            f"width {model.weights[0].shape[1]}"
        )
    activations = [x]
    for d in range(model.depth):
        x = relu(model.weights[d] @ x)
        activations.append(x)
    return activations


def normalize_layer(theta, rho: float, max_iters: int = 100, tol: float = 1e-12) -> np.ndarray:
    """Rescale a weight matrix so its estimated spectral norm is at most rho.

    Returns theta * min(rho / lam, 1) where lam is the power-iteration
    estimate of the spectral norm; matrices already under the cap are
    returned unchanged (same object, no copy).
    """
    if rho <= 0:
        raise ValueError("rho must be > 0")
    theta = require_matrix(theta, "theta")
    lam = power_iteration(theta, max_iters=max_iters, tol=tol)
    if lam <= rho:
        return theta
    return theta * (rho / lam)


def loss(theta_out, x_out, targets) -> float:
    """Batch-mean squared loss: ||W x - y||_F^2 / (2 b)."""
    theta_out = require_matrix(theta_out, "theta_out")
    x_out = require_matrix(x_out, "x_out")
    targets = require_matrix(targets, "targets")
    residual = theta_out @ x_out - targets
    b = x_out.shape[1]
    return 0.5 * float(np.sum(residual * residual)) / b


def prox_squared_loss(theta_out, v, targets, gamma: float) -> np.ndarray:
    """Proximal map of the squared loss in the output activations.

    argmin_x ||W x - y||_F^2 / 2 + (gamma / 2) ||x - v||_F^2, solved exactly
    via the normal equations (W^T W + gamma I) x = W^T y + gamma v. The
    system is positive definite for any gamma > 0.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    theta_out = require_matrix(theta_out, "theta_out")
    v = require_matrix(v, "v")
    targets = require_matrix(targets, "targets")
    width = theta_out.shape[1]
    a = theta_out.T @ theta_out + gamma * np.eye(width)
    rhs = theta_out.T @ targets + gamma * v
    return solve_spd(a, rhs)


def predict(model: LipschitzMLP, inputs) -> np.ndarray:
    """Class indices from the argmax of the final linear scores."""
    activations = forward(model, inputs)
    scores = model.weights[-1] @ activations[-1]
    return np.argmax(scores, axis=0)


def save_model(model: LipschitzMLP, path) -> None:
    """Write a versioned binary checkpoint (magic, json header, raw weights)."""
    header = {
        "depth": model.depth,
        "widths": model.widths,
        "caps": [float(c) for c in model.caps],
        "cap_final": bool(model.cap_final),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + b"\n")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for w in model.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_model(path) -> LipschitzMLP:
    with open(path, "rb") as fh:
        magic = fh.read(len(MODEL_MAGIC) + 1)
        if magic != MODEL_MAGIC + b"\n":
            raise ValueError(f"{path}: not a model checkpoint (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        widths = header["widths"]
        weights = []
        for d in range(len(widths) - 1):
            count = widths[d + 1] * widths[d]
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated weight block for layer {d}")
            weights.append(
                np.frombuffer(raw, dtype="<f8").reshape(widths[d + 1], widths[d]).copy()
            )
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after last weight block")
    return LipschitzMLP(weights, [float(c) for c in header["caps"]], header["cap_final"])

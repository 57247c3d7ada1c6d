"""Penalty splitting of the training objective and its exact block updates.

The network constraints x_{d+1} = relu(U_d), U_d = W_d x_d are relaxed into
quadratic penalties, giving the batch-mean objective

    L = loss(W_D, x_D; y)
        + (gamma / 2b) * sum_d ( ||x_{d+1} - relu(U_d)||_F^2
                                 + ||U_d - W_d x_d||_F^2 )

Every block (one layer's x, U, or W) is convex given the others, and the x
and U blocks have closed-form minimizers implemented here. The 1/b factor
makes the weight gradient a batch mean; it rescales the objective without
moving any block minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import LipschitzMLP, forward, loss, prox_squared_loss, relu
from .numerics import require_matrix, solve_spd

__all__ = [
    "SplitState",
    "SmoothnessReport",
    "init_split_state",
    "lagrangian",
    "weight_gradient",
    "update_activations",
    "update_preactivations",
    "prox",
    "smoothness_constants",
    "gradient_map_lipschitz",
]


@dataclass
class SplitState:
    """Per-batch auxiliary variables of the splitting.

    activations[0] is anchored to the batch inputs and never updated;
    activations[1..D] and preactivations[0..D-1] are free variables.
    """

    activations: list[np.ndarray]
    preactivations: list[np.ndarray]
    gamma: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if len(self.preactivations) != len(self.activations) - 1:
            raise ValueError("need one preactivation block per layer transition")

    @property
    def batch_size(self) -> int:
        return self.activations[0].shape[1]

    def copy(self) -> "SplitState":
        return SplitState(
            [x.copy() for x in self.activations],
            [u.copy() for u in self.preactivations],
            self.gamma,
        )


def init_split_state(model: LipschitzMLP, inputs, gamma: float = 1.0) -> SplitState:
    """Feasible starting point: x from a forward pass, U_d = W_d x_d."""
    activations = forward(model, inputs)
    preactivations = [model.weights[d] @ activations[d] for d in range(model.depth)]
    return SplitState(activations, preactivations, gamma)


def lagrangian(model: LipschitzMLP, state: SplitState, targets) -> float:
    """Batch-mean penalty objective; equals the plain loss at feasible states."""
    targets = require_matrix(targets, "targets")
    b = state.batch_size
    total = loss(model.weights[-1], state.activations[-1], targets)
    for d in range(model.depth):
        x_next = state.activations[d + 1]
        u = state.preactivations[d]
        wx = model.weights[d] @ state.activations[d]
        total += 0.5 * state.gamma / b * float(np.sum((x_next - relu(u)) ** 2))
        total += 0.5 * state.gamma / b * float(np.sum((u - wx) ** 2))
    return total


def weight_gradient(d: int, model: LipschitzMLP, state: SplitState, targets) -> np.ndarray:
    """Gradient of the objective in layer d's weights (batch mean).

    Hidden layers: gamma (W_d x_d - U_d) x_d^T / b.
    Output layer:  (W_D x_D - y) x_D^T / b.
    """
    depth = model.depth
    if not 0 <= d <= depth:
        raise ValueError(f"layer index {d} out of range 0..{depth}")
    b = state.batch_size
    x = state.activations[d]
    if d == depth:
        targets = require_matrix(targets, "targets")
        residual = model.weights[d] @ x - targets
        return (residual @ x.T) / b
    residual = model.weights[d] @ x - state.preactivations[d]
    return state.gamma * (residual @ x.T) / b


def update_activations(d: int, model: LipschitzMLP, state: SplitState, targets) -> np.ndarray:
    """Exact minimizer of the objective in the activation block x_d.

    For 1 <= d <= D-1 the stationarity condition is the linear system
    (W_d^T W_d + I) x_d = W_d^T U_d + relu(U_{d-1}); for d = D it is the
    proximal map of the squared loss around relu(U_{D-1}). x_0 is the data
    and is never updated.
    """
    depth = model.depth
    if d == 0:
        raise ValueError("x_0 is anchored to the batch inputs and is never updated")
    if not 1 <= d <= depth:
        raise ValueError(f"layer index {d} out of range 1..{depth}")
    v = relu(state.preactivations[d - 1])
    if d == depth:
        return prox_squared_loss(model.weights[d], v, targets, state.gamma)
    w = model.weights[d]
    a = w.T @ w + np.eye(w.shape[1])
    return solve_spd(a, w.T @ state.preactivations[d] + v)


def update_preactivations(d: int, model: LipschitzMLP, state: SplitState) -> np.ndarray:
    """Exact elementwise minimizer of the objective in the block U_d.

    Per entry, with z the linear response (W_d x_d) and a the downstream
    activation x_{d+1}, the minimizer of (a - relu(u))^2 + (u - z)^2 is

        u = z            if -a <= z <= -(sqrt(2)-1) a <= 0
        u = min(0, z)    else if z + a <= 0
        u = (z + a) / 2  otherwise

    evaluated in that order (the regions overlap only where the candidates
    coincide).
    """
    depth = model.depth
    if not 0 <= d <= depth - 1:
        raise ValueError(f"preactivation index {d} out of range 0..{depth - 1}")
    z = model.weights[d] @ state.activations[d]
    a = state.activations[d + 1]
    root2m1 = np.sqrt(2.0) - 1.0
    case1 = (-a <= z) & (z <= -root2m1 * a) & (a >= 0)
    case2 = (z + a <= 0) & ~case1
    out = 0.5 * (z + a)
    out = np.where(case2, np.minimum(0.0, z), out)
    out = np.where(case1, z, out)
    return out


def prox(kind: str, eta: float, v) -> np.ndarray:
    """Proximal maps of the regularizer catalog: argmin r(t) + ||t-v||^2/(2 eta).

    'none' is the identity, 'l2' (weight decay, r = ||t||^2/2) contracts to
    v / (1 + eta), and 'l1' (r = ||t||_1) soft-thresholds at eta. All three
    maps are 1-Lipschitz. Note the l2 map scales by 1/(1+eta), the exact
    minimizer, not the eta/(1+eta) sometimes quoted for this catalog.
    """
    if eta <= 0:
        raise ValueError("eta must be > 0")
    v = require_matrix(v, "v")
    if kind == "none":
        return v
    if kind == "l2":
        return v / (1.0 + eta)
    if kind == "l1":
        return np.sign(v) * np.maximum(0.0, np.abs(v) - eta)
    raise ValueError(f"unknown regularizer kind {kind!r}; expected none, l2 or l1")


@dataclass(frozen=True)
class SmoothnessReport:
    """Curvature constants of the weight sub-problem for one layer.

    beta/omega are the extreme eigenvalues of gamma * (x_d x_d^T / b), the
    exact Hessian of the objective in W_d. x_bound is the largest squared
    column norm in the batch; gamma * x_bound upper-bounds beta, and the
    quadratic variant gamma * x_bound^2 is also reported since both forms
    circulate as the a-priori smoothness bound.
    """

    layer: int
    beta: float
    omega: float
    x_bound: float
    beta_bound: float
    beta_bound_quadratic: float


def smoothness_constants(d: int, state: SplitState, gamma: float | None = None) -> SmoothnessReport:
    """Empirical smoothness/convexity constants from the current batch."""
    if not 0 <= d < len(state.activations):
        raise ValueError(f"layer index {d} out of range")
    g = state.gamma if gamma is None else gamma
    x = state.activations[d]
    b = x.shape[1]
    x_bound = float(np.max(np.sum(x * x, axis=0))) if x.size else 0.0
    gram = (x @ x.T) / b
    if np.count_nonzero(gram) == 0:
        eig_min = eig_max = 0.0
    else:
        eigvals = np.linalg.eigvalsh(gram)
        eig_min, eig_max = float(eigvals[0]), float(eigvals[-1])
    if x.shape[0] > b:
        eig_min = 0.0  # rank-deficient Gram
    return SmoothnessReport(
        layer=d,
        beta=g * eig_max,
        omega=max(0.0, g * eig_min),
        x_bound=x_bound,
        beta_bound=g * x_bound,
        beta_bound_quadratic=g * x_bound * x_bound,
    )


def gradient_map_lipschitz(eta: float, beta: float, omega: float) -> float:
    """Lipschitz constant of theta -> theta - eta * grad, for a quadratic
    objective with Hessian eigenvalues in [omega, beta]:
    max(|1 - eta*omega|, |1 - eta*beta|)."""
    if eta <= 0:
        raise ValueError("eta must be > 0")
    if omega < 0 or beta < omega:
        raise ValueError(f"need 0 <= omega <= beta, got omega={omega}, beta={beta}")
    return max(abs(1.0 - eta * omega), abs(1.0 - eta * beta))

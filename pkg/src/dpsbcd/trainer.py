"""Noisy stochastic block coordinate descent over (epoch, batch, layer).

Each layer iteration runs, in order: activation update, preactivation
update, spectral normalization of the layer's weights, then the noisy
proximal weight step

    W_d <- prox(kind, eta, W_d - eta * grad + N(0, 2 eta o(eta, k, j) I)).

Normalization precedes the noisy step, so a freshly perturbed layer may
transiently exceed its cap until its next visit; the released model is
re-normalized once after the last epoch (pure post-processing).

Batches are a fixed, seeded partition reused every epoch, and each layer
consumes its own derived noise stream, so runs replay bit-exactly from
(config, seed) regardless of evaluation or logging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .network import LipschitzMLP, forward, init_model, predict
from .numerics import RngState, derive_seed, gaussian_sample, power_iteration
from .schedules import Constant, eval_schedule
from .splitting import (
    SplitState,
    gradient_map_lipschitz,
    init_split_state,
    lagrangian,
    prox,
    smoothness_constants,
    update_activations,
    update_preactivations,
    weight_gradient,
)

__all__ = [
    "TrainConfig",
    "TrainTrace",
    "LayerStats",
    "AccountingRecord",
    "TrainingDiverged",
    "dp_layer_step",
    "run_epoch",
    "train",
]


class TrainingDiverged(RuntimeError):
    """Raised when the objective or a state block stops being finite."""

    def __init__(self, message: str, last_good_epoch: int):
        super().__init__(message)
        self.last_good_epoch = last_good_epoch


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 960
    eta: float = 0.01
    gamma: float = 1.0
    rho: float = 3.0
    regularizer: str = "none"
    schedule: object = field(default_factory=lambda: Constant(0.01))
    seed: int = 0
    dp_enabled: bool = True
    hidden: tuple = (200, 200, 200, 200)
    init_sigma2: float = 0.01
    cap_final: bool = True
    rho_final: float | None = None  # output-layer cap; None means rho
    final_normalize: bool = True
    train_frac: float = 0.8

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.eta <= 0 or self.gamma <= 0 or self.rho <= 0:
            raise ValueError("eta, gamma and rho must be > 0")
        if self.regularizer not in ("none", "l1", "l2"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if not self.hidden:
            raise ValueError("need at least one hidden layer")


@dataclass
class TrainTrace:
    """Per-epoch diagnostics; every list has one entry per trained epoch."""

    objective: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)  # per epoch: list per layer
    noise_values: list = field(default_factory=list)  # per epoch: o over batches

    def __len__(self) -> int:
        return len(self.objective)


@dataclass
class LayerStats:
    """Worst-case constants observed for one layer across a whole run.

    lipschitz_max is the gradient-map constant with the curvature floor
    clipped to zero (the sub-problems are convex but not strongly convex).
    """

    beta_max: float = 0.0
    omega_min: float = math.inf
    x_bound_max: float = 0.0
    u_norm_max: float = 0.0
    lipschitz_max: float = 0.0


@dataclass
class AccountingRecord:
    """Everything the privacy accountant needs from a finished run."""

    eta: float
    gamma: float
    rho: float
    batch_size: int
    train_size: int
    epochs: int
    schedule: object
    init_sigma2: float
    layer_stats: list  # LayerStats, one per weight matrix
    caps: list = field(default_factory=list)  # per-layer spectral caps

    @property
    def batches_per_epoch(self) -> int:
        return self.train_size // self.batch_size

    @property
    def c0(self) -> float:
        return 1.0 / self.init_sigma2

    def privacy_configs(
        self,
        alpha: float,
        lip_prox: float = 1.0,
        lip_gradient: float | None = None,
        grad_sensitivity: float | None = None,
        c0: float | None = None,
    ) -> list:
        """One accountant config per layer from the recorded run constants.

        Defaults: the contraction constant is the run's worst case (curvature
        floor clipped at zero), the gradient sensitivity is the analytic
        per-sample bound from the observed activation and preactivation norm
        bounds, and the initial LSI constant is the inverse initialization
        variance. Any of them can be overridden with an explicit value
        shared by all layers.
        """
        from .accountant import PrivacyConfig, analytic_sensitivity, preactivation_bound

        configs = []
        depth = len(self.layer_stats) - 1
        for d, stats in enumerate(self.layer_stats):
            cap = self.caps[d] if self.caps else self.rho
            if grad_sensitivity is None:
                if d == depth:
                    # The output block couples to unit-norm one-hot targets.
                    u_bound = 1.0
                    layer_gamma = 1.0
                else:
                    u_bound = preactivation_bound(
                        cap, stats.x_bound_max, self.layer_stats[d + 1].x_bound_max
                    )
                    layer_gamma = self.gamma
                sensitivity = analytic_sensitivity(
                    cap, stats.x_bound_max, u_bound, layer_gamma
                )
            else:
                sensitivity = grad_sensitivity
            configs.append(
                PrivacyConfig(
                    alpha=alpha,
                    grad_sensitivity=sensitivity,
                    lip_gradient=(
                        lip_gradient if lip_gradient is not None else stats.lipschitz_max
                    ),
                    eta=self.eta,
                    batch_size=self.batch_size,
                    dataset_size=self.train_size,
                    epochs=self.epochs,
                    schedule=self.schedule,
                    lip_prox=lip_prox,
                    c0=c0 if c0 is not None else self.c0,
                    gamma=self.gamma,
                )
            )
        return configs


def _record_layer(stats: LayerStats, report, eta: float) -> None:
    stats.beta_max = max(stats.beta_max, report.beta)
    stats.omega_min = min(stats.omega_min, report.omega)
    stats.x_bound_max = max(stats.x_bound_max, report.x_bound)
    # Conservative contraction constant: curvature clipped at 0.
    stats.lipschitz_max = max(
        stats.lipschitz_max, gradient_map_lipschitz(eta, report.beta, 0.0)
    )


def dp_layer_step(
    d: int,
    model: LipschitzMLP,
    state: SplitState,
    cfg: TrainConfig,
    rng: RngState,
    k: int,
    j: int,
    targets,
    grad: np.ndarray | None = None,
) -> np.ndarray:
    """Noisy proximal update of layer d's weights (assumes x, U, and the
    normalization for this iteration already happened). Callers that already
    computed the batch-mean gradient can pass it in."""
    theta = model.weights[d]
    if grad is None:
        grad = weight_gradient(d, model, state, targets)
    stepped = theta - cfg.eta * grad
    if cfg.dp_enabled:
        variance = 2.0 * cfg.eta * eval_schedule(cfg.schedule, cfg.eta, k, j)
        stepped = stepped + gaussian_sample(rng, theta.shape[0], theta.shape[1], variance)
    return prox(cfg.regularizer, cfg.eta, stepped)


def _normalize_in_place(model: LipschitzMLP, d: int, power_vectors: list) -> None:
    cap = model.caps[d]
    if not math.isfinite(cap):
        return
    lam, vec = power_iteration(
        model.weights[d], max_iters=100, tol=1e-12, start=power_vectors[d], return_vector=True
    )
    power_vectors[d] = vec
    if lam > cap:
        model.weights[d] = model.weights[d] * (cap / lam)


def run_epoch(
    model: LipschitzMLP,
    batch_targets: list,
    states: list,
    cfg: TrainConfig,
    layer_rngs: list,
    k: int,
    record: AccountingRecord,
    power_vectors: list,
) -> tuple:
    """One sweep over all batches and layers; mutates model and states.

    The batch inputs live in each state's anchored first activation block.
    Returns (mean objective over batches, per-layer mean gradient norms,
    noise values used).
    """
    depth = model.depth
    grad_norm_acc = np.zeros(depth + 1)
    noise_used = []
    for j, targets in enumerate(batch_targets):
        state = states[j]
        if cfg.dp_enabled:
            noise_used.append(eval_schedule(cfg.schedule, cfg.eta, k, j))
        try:
            for d in range(depth + 1):
                if d >= 1:
                    state.activations[d] = update_activations(d, model, state, targets)
                if d <= depth - 1:
                    state.preactivations[d] = update_preactivations(d, model, state)
                    u_norms = np.linalg.norm(state.preactivations[d], axis=0)
                    if u_norms.size:
                        record.layer_stats[d].u_norm_max = max(
                            record.layer_stats[d].u_norm_max, float(u_norms.max())
                        )
                _normalize_in_place(model, d, power_vectors)
                stats = record.layer_stats[d]
                x = state.activations[d]
                stats.x_bound_max = max(stats.x_bound_max, float(np.max(np.sum(x * x, axis=0))))
                if j == 0:
                    # Exact curvature once per epoch; the eigensolve is too
                    # costly to run on every batch and the extremes move slowly.
                    layer_gamma = 1.0 if d == depth else cfg.gamma
                    report = smoothness_constants(d, state, gamma=layer_gamma)
                    _record_layer(stats, report, cfg.eta)
                grad = weight_gradient(d, model, state, targets)
                grad_norm_acc[d] += float(np.linalg.norm(grad))
                stepped = dp_layer_step(
                    d, model, state, cfg, layer_rngs[d], k, j, targets, grad=grad
                )
                if not np.isfinite(stepped).all():
                    raise TrainingDiverged(
                        f"layer {d} weights became non-finite in epoch {k}, batch {j}",
                        last_good_epoch=k - 1,
                    )
                model.weights[d] = stepped
        except TrainingDiverged:
            raise
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise TrainingDiverged(
                f"numeric failure in epoch {k}, batch {j}: {exc}", last_good_epoch=k - 1
            ) from exc
    objective = float(
        np.mean(
            [lagrangian(model, st, tg) for st, tg in zip(states, batch_targets)]
        )
    )
    return objective, grad_norm_acc / max(len(batch_targets), 1), noise_used


def _accuracy(model: LipschitzMLP, inputs, labels) -> float:
    if labels.size == 0:
        return float("nan")
    return float(np.mean(predict(model, inputs) == labels))


def train(
    cfg: TrainConfig,
    dataset: data_mod.Dataset,
    rng: RngState | None = None,
    eval_at: tuple = (),
):
    """Run the full noisy training loop on a dataset.

    Returns (model, trace, record, snapshots) where record carries the
    observed per-layer constants for the accountant and snapshots maps each
    epoch count in eval_at to (train_acc, test_acc) measured right after
    that many epochs (identical prefixes of a longer run, since batches and
    noise streams do not depend on the total epoch count).
    """
    rng = rng if rng is not None else RngState(cfg.seed)
    batches = data_mod.split_and_batch(dataset, cfg.batch_size, rng.seed, cfg.train_frac)
    classes = dataset.classes
    widths = [dataset.dims, *cfg.hidden, classes]

    caps = [cfg.rho] * (len(widths) - 1)
    if cfg.rho_final is not None:
        caps[-1] = cfg.rho_final
    model = init_model(
        widths, caps, cfg.init_sigma2, rng.child("init"), cap_final=cfg.cap_final
    )
    batch_inputs = [dataset.columns(idx) for idx in batches.train_batches]
    batch_targets = [
        data_mod.one_hot(dataset.labels[idx], classes) for idx in batches.train_batches
    ]
    states = [init_split_state(model, x, cfg.gamma) for x in batch_inputs]

    train_idx = batches.train_idx
    train_cols = dataset.columns(train_idx)
    train_labels = dataset.labels[train_idx]
    test_cols = dataset.columns(batches.test_idx)
    test_labels = dataset.labels[batches.test_idx]

    depth = model.depth
    layer_rngs = [rng.child("noise", d) for d in range(depth + 1)]
    power_vectors = [None] * (depth + 1)
    record = AccountingRecord(
        eta=cfg.eta,
        gamma=cfg.gamma,
        rho=cfg.rho,
        batch_size=cfg.batch_size,
        train_size=len(train_idx),
        epochs=cfg.epochs,
        schedule=cfg.schedule,
        init_sigma2=cfg.init_sigma2,
        layer_stats=[LayerStats() for _ in range(depth + 1)],
        caps=list(model.caps),
    )
    trace = TrainTrace()
    snapshots = {}

    for k in range(cfg.epochs):
        objective, grad_norms, noise_used = run_epoch(
            model, batch_targets, states, cfg, layer_rngs, k, record, power_vectors
        )
        if not math.isfinite(objective) or any(
            not np.isfinite(x).all() for st in states for x in st.activations
        ):
            raise TrainingDiverged(
                f"objective became non-finite during epoch {k}", last_good_epoch=k - 1
            )
        trace.objective.append(objective)
        trace.train_acc.append(_accuracy(model, train_cols, train_labels))
        trace.test_acc.append(_accuracy(model, test_cols, test_labels))
        trace.grad_norms.append(list(grad_norms))
        trace.noise_values.append(noise_used)
        if (k + 1) in eval_at:
            snapshots[k + 1] = (trace.train_acc[-1], trace.test_acc[-1])

    if cfg.final_normalize:
        vectors = [None] * (depth + 1)
        for d in range(depth + 1):
            _normalize_in_place(model, d, vectors)

    return model, trace, record, snapshots

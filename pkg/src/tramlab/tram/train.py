"""One-step, two-step, plain and distilled training loops.

All loops share one minibatch schedule: epoch ``e`` visits a permutation drawn
from ``make_rng(seed, "epoch", e)`` in consecutive chunks of ``batch_size``.
Each parameter block has its own Adam state, and Adam is elementwise, so a
block's trajectory depends only on the gradients it receives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..nn import autodiff as ad
from ..nn.losses import GAUSSIAN_NLL, HET_SOFTMAX_CE, MSE, SOFTMAX_CE, LossKind, loss_and_grad
from ..nn.optim import AdamState, adam_step
from ..rng import make_rng
from .model import CLASSIFICATION, REGRESSION, TramModel, build_graph

HET_SAMPLES = 100


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "one_step"
    beta: float = 1.0
    epochs: int = 10
    batch_size: int = 128
    lr: float = 1e-3
    seed: int = 0
    loss_l1: LossKind | None = None
    loss_l2: LossKind | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("one_step", "two_step"):
            raise ValueError(f"unknown training mode {self.mode!r}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


@dataclass
class TrainLog:
    l1: list[float] = field(default_factory=list)  # per-epoch mean
    l2: list[float] = field(default_factory=list)
    # per step: norm of dL2 over (phi, psi, head_u) and of dL1 over head_w
    l2_shared_grad_norm: list[float] = field(default_factory=list)
    l1_head_w_grad_norm: list[float] = field(default_factory=list)


@dataclass
class TrainResult:
    model: TramModel
    log: TrainLog


def default_losses(model: TramModel, cfg: TrainConfig) -> tuple[LossKind, LossKind]:
    """Task defaults: MSE or softmax CE, with a heteroscedastic marginal loss when needed."""
    base = MSE if model.task == REGRESSION else SOFTMAX_CE
    l1 = cfg.loss_l1 or base
    if cfg.loss_l2 is not None:
        l2 = cfg.loss_l2
    elif model.is_het:
        l2 = GAUSSIAN_NLL if model.task == REGRESSION else HET_SOFTMAX_CE
    else:
        l2 = base
    return l1, l2


def batches(n: int, cfg: TrainConfig, epoch: int) -> list[np.ndarray]:
    perm = make_rng(cfg.seed, "epoch", epoch).permutation(n)
    return [perm[i : i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]


def _targets(model: TramModel, y: np.ndarray) -> np.ndarray:
    return y.astype(int) if model.task == CLASSIFICATION else y.astype(float)


def _aux(kind: LossKind, model: TramModel, seed: int, epoch: int, step: int, B: int, teacher_logits):
    if kind.name == "HetSoftmaxCE":
        return make_rng(seed, "het-noise", epoch, step).standard_normal((HET_SAMPLES, B, model.n_classes))
    if kind.name == "Distill":
        return teacher_logits
    return None


def _collect(nodes: dict, names) -> dict[str, dict[str, np.ndarray]]:
    out = {}
    for block in names:
        out[block] = {
            k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in nodes[block].items()
        }
    return out


def _norm(grads: dict[str, dict[str, np.ndarray]], names) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for b in names for g in grads.get(b, {}).values()))


def _finite(loss: float, what: str, epoch: int, step: int) -> None:
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite {what} loss at epoch {epoch}, batch {step}")


def _init_adam(model: TramModel, names, lr: float) -> dict[str, AdamState]:
    blocks = model.blocks()
    return {n: AdamState.for_params(blocks[n], lr=lr) for n in names}


def _step(model: TramModel, states: dict[str, AdamState], grads: dict[str, dict[str, np.ndarray]]) -> None:
    blocks = model.blocks()
    for name, state in states.items():
        adam_step(state, blocks[name], grads[name])


def _run_tram(
    model: TramModel,
    dataset,
    cfg: TrainConfig,
    *,
    include_marginal: bool,
    teacher_fn=None,
) -> TrainResult:
    """Shared loop for one-step TRAM and conditional-only (L1) training."""
    if not model.has_pi:
        raise ValueError("TRAM training needs a model with a PI path")
    l1_kind, l2_kind = default_losses(model, cfg)
    shared = ("phi", "psi", "head_u")
    marginal = tuple(n for n in ("head_w", "het_w") if n in model.blocks())
    trained = shared + (marginal if include_marginal else ())
    states = _init_adam(model, trained, cfg.lr)
    x, a, y = dataset.x, dataset.a_encoded, _targets(model, dataset.y)
    log = TrainLog()
    for epoch in range(cfg.epochs):
        sums = [0.0, 0.0]
        for step, idx in enumerate(batches(len(y), cfg, epoch)):
            xb, ab, yb = x[idx], a[idx], y[idx]
            g = build_graph(model, xb, ab, marginal=include_marginal, conditional=True)
            grads: dict[str, dict[str, np.ndarray]] = {}
            if include_marginal:
                aux2 = _aux(l2_kind, model, cfg.seed, epoch, step, len(idx), None)
                loss2, d2 = loss_and_grad(l2_kind, g.marginal.data, yb, aux2)
                _finite(loss2, "L2", epoch, step)
                ad.backward([(g.marginal, d2)])
                grads.update(_collect(g.nodes, marginal))
                leaked = _collect(g.nodes, shared)
                log.l2_shared_grad_norm.append(_norm(leaked, shared))
                sums[1] += loss2 * len(idx)
            teacher = teacher_fn(xb, ab) if teacher_fn is not None else None
            aux1 = _aux(l1_kind, model, cfg.seed, epoch, step, len(idx), teacher)
            loss1, d1 = loss_and_grad(l1_kind, g.conditional.data, yb, aux1)
            _finite(loss1, "L1", epoch, step)
            before = _collect(g.nodes, marginal) if include_marginal else {}
            ad.backward([(g.conditional, cfg.beta * d1)])
            grads.update(_collect(g.nodes, shared))
            if include_marginal:
                after = _collect(g.nodes, marginal)
                diff = {b: {k: after[b][k] - before[b][k] for k in after[b]} for b in marginal}
                log.l1_head_w_grad_norm.append(_norm(diff, marginal))
            sums[0] += loss1 * len(idx)
            _step(model, states, grads)
        log.l1.append(sums[0] / len(y))
        if include_marginal:
            log.l2.append(sums[1] / len(y))
    return TrainResult(model, log)


def train_one_step(model: TramModel, dataset, cfg: TrainConfig, teacher_fn=None) -> TrainResult:
    """Jointly minimize L2(marginal on stop_gradient(phi)) + beta * L1(conditional)."""
    return _run_tram(model, dataset, cfg, include_marginal=True, teacher_fn=teacher_fn)


def train_conditional(model: TramModel, dataset, cfg: TrainConfig, teacher_fn=None) -> TrainResult:
    """L1 only: updates phi, psi and head_u; the marginal head is left untouched."""
    return _run_tram(model, dataset, cfg, include_marginal=False, teacher_fn=teacher_fn)


def fit_marginal_head(model: TramModel, dataset, cfg: TrainConfig) -> TrainLog:
    """Fit head_w (and het_w) on L2 with phi frozen."""
    _, l2_kind = default_losses(model, cfg)
    names = tuple(n for n in ("head_w", "het_w") if n in model.blocks())
    states = _init_adam(model, names, cfg.lr)
    x, y = dataset.x, _targets(model, dataset.y)
    log = TrainLog()
    for epoch in range(cfg.epochs):
        total = 0.0
        for step, idx in enumerate(batches(len(y), cfg, epoch)):
            g = build_graph(model, x[idx], marginal=True, conditional=False, stop_marginal=True)
            aux = _aux(l2_kind, model, cfg.seed, epoch, step, len(idx), None)
            loss, d = loss_and_grad(l2_kind, g.marginal.data, y[idx], aux)
            _finite(loss, "L2", epoch, step)
            ad.backward([(g.marginal, d)])
            _step(model, states, _collect(g.nodes, names))
            total += loss * len(idx)
        log.l2.append(total / len(y))
    return log


def train_two_step(model: TramModel, dataset, cfg: TrainConfig) -> TrainResult:
    """Step 1: L1 on (phi, psi, head_u). Step 2: phi frozen, L2 on the marginal head."""
    result = train_conditional(model, dataset, cfg)
    result.log.l2 = fit_marginal_head(model, dataset, cfg).l2
    return result


def train_no_pi(model: TramModel, dataset, cfg: TrainConfig, teacher_fn=None) -> TrainResult:
    """Standard training of phi and the marginal head on the loss without PI.

    ``teacher_fn(x)`` supplies teacher logits when the loss is ``Distill``.
    """
    if model.has_pi:
        raise ValueError("train_no_pi expects a model built without PI")
    _, l2_kind = default_losses(model, cfg)
    kind = cfg.loss_l1 if cfg.loss_l1 is not None and cfg.loss_l1.name == "Distill" else l2_kind
    names = tuple(model.blocks())
    states = _init_adam(model, names, cfg.lr)
    x, y = dataset.x, _targets(model, dataset.y)
    log = TrainLog()
    for epoch in range(cfg.epochs):
        total = 0.0
        for step, idx in enumerate(batches(len(y), cfg, epoch)):
            g = build_graph(model, x[idx], marginal=True, conditional=False, stop_marginal=False)
            teacher = teacher_fn(x[idx]) if teacher_fn is not None else None
            aux = _aux(kind, model, cfg.seed, epoch, step, len(idx), teacher)
            loss, d = loss_and_grad(kind, g.marginal.data, y[idx], aux)
            _finite(loss, "marginal", epoch, step)
            ad.backward([(g.marginal, d)])
            _step(model, states, _collect(g.nodes, names))
            total += loss * len(idx)
        log.l2.append(total / len(y))
    return TrainResult(model, log)


def train(model: TramModel, dataset, cfg: TrainConfig) -> TrainResult:
    """Dispatch on ``cfg.mode`` for PI models; plain training otherwise."""
    if not model.has_pi:
        return train_no_pi(model, dataset, cfg)
    if cfg.mode == "one_step":
        return train_one_step(model, dataset, cfg)
    return train_two_step(model, dataset, cfg)


def train_distilled(
    teacher: TramModel,
    student: TramModel,
    dataset,
    cfg: TrainConfig,
    temperature: float = 3.0,
    lam: float = 0.5,
) -> TrainResult:
    """Distill ``teacher`` into ``student``.

    A PI teacher gives soft labels from its conditional head at (x, a) and the
    student is a TRAM model trained one-step with that distillation loss as L1.
    A teacher without PI gives marginal-head soft labels to a student without
    PI (the DistillNoPI baseline). Teacher logits are recomputed per batch.
    """
    if teacher.task != CLASSIFICATION or student.task != CLASSIFICATION:
        raise ValueError("distillation is defined for classification")
    if teacher.n_classes != student.n_classes:
        raise ValueError(f"teacher has {teacher.n_classes} classes, student {student.n_classes}")
    kind = LossKind.distill(temperature, lam)
    if teacher.has_pi:
        if not student.has_pi:
            raise ValueError("a PI teacher needs a TRAM student")

        def teacher_fn(xb, ab):
            return build_graph(teacher, xb, ab, marginal=False).conditional.data

        step_cfg = TrainConfig("one_step", cfg.beta, cfg.epochs, cfg.batch_size, cfg.lr, cfg.seed, kind, cfg.loss_l2)
        return train_one_step(student, dataset, step_cfg, teacher_fn=teacher_fn)
    if student.has_pi:
        raise ValueError("a teacher without PI needs a student without PI")

    def teacher_marg(xb):
        return build_graph(teacher, xb, marginal=True, conditional=False).marginal.data[:, : teacher.n_classes]

    plain_cfg = TrainConfig("one_step", cfg.beta, cfg.epochs, cfg.batch_size, cfg.lr, cfg.seed, kind, cfg.loss_l2)
    return train_no_pi(student, dataset, plain_cfg, teacher_fn=teacher_marg)

"""Margin-based alignment training with hard negative mining.

Positives come from the reasoning module's emitted mappings; negatives
replace one side of each positive with its nearest non-positive
counterparts in embedding space. Gradients for every model parameter are
exact, computed by reverse-mode differentiation through the full forward
pass.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .kg import KgPair
from .model import (
    EmbeddingModel,
    GraphInputs,
    build_fused,
    l2_normalize_rows,
    pair_inputs,
)


class EmptySeedMappingsError(ValueError):
    """Training requires at least one positive pair."""


class NonFiniteGradientError(FloatingPointError):
    """A parameter gradient came out NaN or infinite."""


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.4
    neg_k: int = 5
    lr: float = 1e-3
    epochs: int = 200
    optimizer: str = "adam"
    seed: int = 0
    neg_refresh_every: int = 20

    def validate(self) -> list[str]:
        errs = []
        if self.gamma <= 0:
            errs.append(f"gamma must be > 0, got {self.gamma}")
        if self.neg_k < 1:
            errs.append(f"neg_k must be >= 1, got {self.neg_k}")
        if self.lr <= 0:
            errs.append(f"lr must be > 0, got {self.lr}")
        if self.epochs < 0:
            errs.append(f"epochs must be >= 0, got {self.epochs}")
        if self.optimizer not in ("adam", "sgd"):
            errs.append(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        return errs


@dataclass
class TrainingSet:
    """Positive pairs plus the per-positive hard negative lists."""

    positives: list[tuple[int, int]]
    negatives: list[list[tuple[int, int]]] = field(default_factory=list)

    def validate(self) -> None:
        pos = set(self.positives)
        for (e1, e2), negs in zip(self.positives, self.negatives):
            for n1, n2 in negs:
                if (n1, n2) in pos:
                    raise ValueError(f"negative {(n1, n2)} is a positive pair")
                if n1 != e1 and n2 != e2:
                    raise ValueError(
                        f"negative {(n1, n2)} shares no side with positive {(e1, e2)}"
                    )


def mine_hard_negatives(
    positives: list[tuple[int, int]],
    fused1: np.ndarray,
    fused2: np.ndarray,
    k: int,
) -> list[list[tuple[int, int]]]:
    """K nearest non-positive counterparts per positive, on each side.

    Nearest means highest cosine; ties break toward the smaller entity id.
    If a side has fewer than k eligible entities, all of them are used.
    """
    cos = l2_normalize_rows(fused1) @ l2_normalize_rows(fused2).T
    pos_set = set(positives)
    out: list[list[tuple[int, int]]] = []
    for e1, e2 in positives:
        row_order = np.argsort(-cos[e1], kind="stable")
        tails = [int(c) for c in row_order if (e1, int(c)) not in pos_set][:k]
        col_order = np.argsort(-cos[:, e2], kind="stable")
        heads = [int(r) for r in col_order if (int(r), e2) not in pos_set][:k]
        out.append([(e1, c) for c in tails] + [(r, e2) for r in heads])
    return out


def _cos_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (l2_normalize_rows(a) * l2_normalize_rows(b)).sum(axis=1)


def margin_loss(
    positives: list[tuple[int, int]],
    negatives: list[list[tuple[int, int]]],
    fused1: np.ndarray,
    fused2: np.ndarray,
    gamma: float,
) -> float:
    """Sum of hinge terms max(0, cos(neg) - cos(pos) + gamma)."""
    total = 0.0
    for (e1, e2), negs in zip(positives, negatives):
        sp = float(_cos_rows(fused1[None, e1], fused2[None, e2])[0])
        for n1, n2 in negs:
            sn = float(_cos_rows(fused1[None, n1], fused2[None, n2])[0])
            total += max(0.0, sn - sp + gamma)
    return total


def build_loss(
    inputs1: GraphInputs,
    inputs2: GraphInputs,
    nodes: dict[str, ad.Node],
    training_set: TrainingSet,
    gamma: float,
) -> tuple[ad.Node, ad.Node, ad.Node]:
    """Differentiable loss over both graphs; returns (loss, fused1, fused2).

    Fused rows are unit-normalized by the forward pass, so cosine
    similarity reduces to a row dot product.
    """
    out1 = build_fused(inputs1, nodes)
    out2 = build_fused(inputs2, nodes)
    fused1, fused2 = out1["fused"], out2["fused"]

    pos = training_set.positives
    p1 = np.array([e1 for e1, _ in pos], dtype=int)
    p2 = np.array([e2 for _, e2 in pos], dtype=int)
    n1, n2, owner = [], [], []
    for i, negs in enumerate(training_set.negatives):
        for a, b in negs:
            n1.append(a)
            n2.append(b)
            owner.append(i)
    if not n1:
        return ad.leaf(0.0, "loss"), fused1, fused2

    sp = ad.rowdot(ad.gather_rows(fused1, p1), ad.gather_rows(fused2, p2))
    sn = ad.rowdot(
        ad.gather_rows(fused1, np.array(n1, dtype=int)),
        ad.gather_rows(fused2, np.array(n2, dtype=int)),
    )
    hinge = ad.relu(ad.add_scalar(ad.sub(sn, ad.gather_vec(sp, np.array(owner, dtype=int))), gamma))
    return ad.reduce_sum(hinge), fused1, fused2


def compute_loss_and_grads(
    model: EmbeddingModel,
    inputs1: GraphInputs,
    inputs2: GraphInputs,
    training_set: TrainingSet,
    gamma: float,
) -> tuple[float, dict[str, np.ndarray]]:
    nodes = {name: ad.leaf(value, name) for name, value in model.params().items()}
    loss_node, _, _ = build_loss(inputs1, inputs2, nodes, training_set, gamma)
    grads_by_id = ad.backward(loss_node)
    grads = {}
    for name, node in nodes.items():
        g = grads_by_id.get(id(node))
        if g is None:
            g = np.zeros_like(node.value)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name}")
        grads[name] = g
    return float(loss_node.value), grads


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for k in params:
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            m_hat = self.m[k] / (1 - self.b1 ** self.t)
            v_hat = self.v[k] / (1 - self.b2 ** self.t)
            params[k] = params[k] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _Sgd:
    def __init__(self, params: dict[str, np.ndarray], lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k in params:
            params[k] = params[k] - self.lr * grads[k]


def _fused_pair(model_params: dict[str, np.ndarray], model: EmbeddingModel,
                inputs1: GraphInputs, inputs2: GraphInputs) -> tuple[np.ndarray, np.ndarray]:
    cur = model.with_params(model_params)
    nodes = {name: ad.leaf(value, name) for name, value in cur.params().items()}
    f1 = build_fused(inputs1, nodes)["fused"].value
    f2 = build_fused(inputs2, nodes)["fused"].value
    return f1, f2


def train(
    pair: KgPair,
    seed_mappings,
    model: EmbeddingModel,
    config: TrainConfig,
    trace_path: str | None = None,
) -> tuple[EmbeddingModel, list[float]]:
    """Full-batch training; returns the parameters with the lowest seen loss.

    Negatives are re-mined from current embeddings every
    ``neg_refresh_every`` epochs. The run is a pure function of the inputs
    and config, so identical seeds give identical parameter files.
    """
    errs = config.validate()
    if errs:
        raise ValueError("; ".join(errs))
    positives = [(int(m[0]), int(m[1])) for m in seed_mappings]
    if not positives:
        raise EmptySeedMappingsError("no seed mappings to train on")

    inputs1, inputs2 = pair_inputs(pair)
    params = {k: v.copy() for k, v in model.params().items()}
    opt = _Adam(params, config.lr) if config.optimizer == "adam" else _Sgd(params, config.lr)

    best_params = {k: v.copy() for k, v in params.items()}
    best_loss = np.inf
    history: list[float] = []
    training_set = TrainingSet(positives, [])
    refresh = max(1, config.neg_refresh_every)

    for epoch in range(config.epochs):
        if epoch % refresh == 0:
            f1, f2 = _fused_pair(params, model, inputs1, inputs2)
            training_set = TrainingSet(
                positives, mine_hard_negatives(positives, f1, f2, config.neg_k)
            )
        loss, grads = compute_loss_and_grads(
            model.with_params(params), inputs1, inputs2, training_set, config.gamma
        )
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_params = {k: v.copy() for k, v in params.items()}
        opt.step(params, grads)

    if config.epochs > 0:
        final_loss = margin_loss(
            training_set.positives,
            training_set.negatives,
            *_fused_pair(params, model, inputs1, inputs2),
            config.gamma,
        )
        history.append(final_loss)
        if final_loss < best_loss:
            best_loss = final_loss
            best_params = {k: v.copy() for k, v in params.items()}

    if trace_path:
        with open(trace_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss"])
            for i, loss in enumerate(history):
                writer.writerow([i, repr(loss)])

    return model.with_params(best_params), history

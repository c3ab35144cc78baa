"""End-to-end alignment pipeline.

Step 1 runs pure probabilistic reasoning once. Each subsequent round
trains the embedding model on the currently emitted mappings (Step 2),
then re-runs reasoning with embedding similarity blended in (Step 3).
The final mapping surface is either the last reasoning state or the
CSLS-ranked embedding alignment, selected by ``final``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .inference import align, cosine_matrix, csls_adjust, evaluate, mapping_accuracy
from .kg import KgPair
from .model import EmbeddingModel, embed_pair, init_model_for_pair
from .reasoning import (
    AlignmentState,
    ParisConfig,
    emit_mappings,
    max_probability_change,
    run_paris,
)
from .train import TrainConfig, train

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid pipeline configuration; message lists every problem."""


@dataclass(frozen=True)
class PipelineConfig:
    paris: ParisConfig = field(default_factory=ParisConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dim: int = 128
    csls_k: int = 10
    use_csls: bool = True
    rounds: int = 3
    seed: int = 0
    final: str = "se"
    reinit_each_round: bool = True

    def validate(self) -> list[str]:
        errs = self.paris.validate() + self.train.validate()
        if self.rounds < 1:
            errs.append(f"rounds must be >= 1, got {self.rounds}")
        if self.dim < 1:
            errs.append(f"dim must be >= 1, got {self.dim}")
        if self.csls_k < 1:
            errs.append(f"csls_k must be >= 1, got {self.csls_k}")
        if self.final not in ("pr", "se"):
            errs.append(f"final must be 'pr' or 'se', got {self.final!r}")
        return errs


@dataclass
class RoundLogEntry:
    round: int
    n_seed_mappings: int
    trained: bool
    final_loss: float | None
    n_pr_mappings: int
    se_eval: dict | None
    pr_hit1: float | None
    seconds: float

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "seed_mappings": self.n_seed_mappings,
            "trained": self.trained,
            "final_loss": self.final_loss,
            "pr_mappings": self.n_pr_mappings,
            "se_eval": self.se_eval,
            "pr_hit1": self.pr_hit1,
            "seconds": self.seconds,
        }


@dataclass
class PipelineResult:
    mappings: list[tuple[int, int, float]]
    pr_mappings: list[tuple[int, int, float]]
    se_mappings: list[tuple[int, int, float]]
    state: AlignmentState
    model: EmbeddingModel | None
    similarity: np.ndarray | None
    step1_mappings: list[tuple[int, int, float]]
    round_log: list[RoundLogEntry]

    def log_dict(self) -> dict:
        return {
            "step1_mappings": len(self.step1_mappings),
            "rounds": [entry.to_dict() for entry in self.round_log],
            "final_mappings": len(self.mappings),
        }


def run_pipeline(pair: KgPair, config: PipelineConfig) -> PipelineResult:
    errs = config.validate()
    if errs:
        raise ConfigError("; ".join(errs))

    state = run_paris(pair, config.paris)
    pr_mappings = emit_mappings(state, config.paris.theta)
    step1_mappings = list(pr_mappings)
    logger.info("step 1: reasoning emitted %d mappings", len(pr_mappings))

    prev_probs = state.ent_prob
    model: EmbeddingModel | None = None
    cos = None
    round_log: list[RoundLogEntry] = []

    for rnd in range(1, config.rounds + 1):
        t0 = time.perf_counter()
        n_seed = len(pr_mappings)

        if model is None or config.reinit_each_round:
            model = init_model_for_pair(pair, config.dim, config.seed + 7919 * rnd)
        trained = False
        final_loss = None
        if pr_mappings:
            train_cfg = TrainConfig(
                gamma=config.train.gamma,
                neg_k=config.train.neg_k,
                lr=config.train.lr,
                epochs=config.train.epochs,
                optimizer=config.train.optimizer,
                seed=config.seed + 7919 * rnd,
                neg_refresh_every=config.train.neg_refresh_every,
            )
            model, history = train(pair, pr_mappings, model, train_cfg)
            trained = True
            final_loss = history[-1] if history else None
        else:
            logger.warning(
                "round %d: no seed mappings; skipping training and using an "
                "untrained (freshly initialized) model for similarity",
                rnd,
            )

        bundle1, bundle2 = embed_pair(pair, model)
        cos = cosine_matrix(bundle1.fused, bundle2.fused)
        sim = lambda e1, e2, m=cos: m[e1, e2]  # noqa: E731

        state = run_paris(pair, config.paris, sim=sim)
        pr_mappings = emit_mappings(state, config.paris.theta)

        se_eval = None
        pr_hit1 = None
        if pair.gold_links:
            ranked = csls_adjust(cos, min(config.csls_k, min(cos.shape))) if config.use_csls else cos
            se_eval = evaluate(ranked, pair.gold_links).to_dict()
            pr_hit1 = mapping_accuracy(pr_mappings, pair.gold_links)

        delta = max_probability_change(prev_probs, state.ent_prob)
        prev_probs = state.ent_prob
        round_log.append(
            RoundLogEntry(
                round=rnd,
                n_seed_mappings=n_seed,
                trained=trained,
                final_loss=final_loss,
                n_pr_mappings=len(pr_mappings),
                se_eval=se_eval,
                pr_hit1=pr_hit1,
                seconds=time.perf_counter() - t0,
            )
        )
        if delta < config.paris.tol:
            logger.info("round %d: reasoning state stable (max change %.2e); stopping early", rnd, delta)
            break

    se_mappings: list[tuple[int, int, float]] = []
    if cos is not None:
        ranked = csls_adjust(cos, min(config.csls_k, min(cos.shape))) if config.use_csls else cos
        se_mappings = align(ranked)

    mappings = se_mappings if config.final == "se" else pr_mappings
    return PipelineResult(
        mappings=mappings,
        pr_mappings=pr_mappings,
        se_mappings=se_mappings,
        state=state,
        model=model,
        similarity=cos,
        step1_mappings=step1_mappings,
        round_log=round_log,
    )

"""Scoring, the hard-plus-soft label loss, and the optimization loop."""

import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from autodiff import Adam, Tape, Tensor, ops, step_decay_lr
from models import Checkpoint, EpochMetrics, RetrievalConfig, Session, SoftLabel, TrainConfig
from services.label_collab import LabelCollaborator
from services.model import CaresModel, score_logits
from utils.errors import NumericalError
from utils.logging import RunLogger, get_logger

logger = get_logger(__name__)

PROB_FLOOR = 1e-12


def predict_scores(session_vectors: Tensor, item_table: Tensor, score_scale: float = 12.0) -> Tensor:
    """Softmax over the catalog of tau * cosine(h_s, item row)."""
    return ops.row_softmax(score_logits(session_vectors, item_table, score_scale))


@dataclass
class LossParts:
    """Batch-mean loss and its two parts."""

    total: Tensor
    ce: float
    kl: float


def soft_label_matrix(labels: Sequence[Optional[SoftLabel]], num_items: int) -> np.ndarray:
    """Dense (B, m) rows; sessions without a label get a zero row."""
    matrix = np.zeros((len(labels), num_items), dtype=np.float64)
    for row, label in enumerate(labels):
        if label is None:
            continue
        for item, p in label.probs.items():
            matrix[row, item] = p
    return matrix


def loss(
    probs: Tensor,
    targets: np.ndarray,
    labels: Optional[Sequence[Optional[SoftLabel]]] = None,
    lambda_: float = 0.0,
) -> LossParts:
    """Mean over the batch of -log p[target] + lambda * KL(soft label || p).

    The KL sum runs over each soft label's support and is skipped for sessions
    without one.
    """
    batch_size, num_items = probs.shape
    targets = np.asarray(targets, dtype=np.int64)
    rows = np.arange(batch_size)
    target_probs = probs.data[rows, targets]
    clamped = int((target_probs < PROB_FLOOR).sum())
    if clamped:
        logger.warning(f"{clamped} target probabilities below {PROB_FLOOR}; clamped")

    log_p = ops.log(probs, floor=PROB_FLOOR)
    one_hot = np.zeros((batch_size, num_items))
    one_hot[rows, targets] = 1.0
    ce_sum = ops.scalar_mul(ops.sum(ops.mul(log_p, Tensor(one_hot))), -1.0)
    ce_value = ce_sum.item() / batch_size

    has_labels = labels is not None and any(label is not None for label in labels)
    if lambda_ == 0 or not has_labels:
        return LossParts(total=ops.scalar_mul(ce_sum, 1.0 / batch_size), ce=ce_value, kl=0.0)

    soft = soft_label_matrix(labels, num_items)
    support = soft > 0
    entropy_term = float((soft[support] * np.log(soft[support])).sum())
    cross = ops.sum(ops.mul(log_p, Tensor(soft)))
    kl_sum = ops.sub(Tensor(entropy_term), cross)
    total = ops.scalar_mul(ops.add(ce_sum, ops.scalar_mul(kl_sum, lambda_)), 1.0 / batch_size)
    return LossParts(total=total, ce=ce_value, kl=kl_sum.item() / batch_size)


@dataclass
class StepResult:
    loss: float
    ce: float
    kl: float
    batch_size: int


class Trainer:
    """Adam over the model parameters, one batch at a time."""

    def __init__(
        self,
        model: CaresModel,
        config: TrainConfig,
        collaborator: Optional[LabelCollaborator] = None,
        progress: bool = False,
    ):
        self.model = model
        self.config = config
        self.collaborator = collaborator
        self.progress = progress
        self.optimizer = Adam(model.params.named(), lr=config.lr, weight_decay=config.l2)
        self.rng = np.random.default_rng(config.seed)
        self.epoch = 0
        self.run_logger = RunLogger(__name__)

    @classmethod
    def create(
        cls,
        model: CaresModel,
        config: TrainConfig,
        retrieval: RetrievalConfig,
        progress: bool = False,
    ) -> "Trainer":
        """Label collaboration is attached only when lambda > 0."""
        collaborator = (
            LabelCollaborator(retrieval, model.params.dims.dim) if config.lambda_ > 0 else None
        )
        return cls(model, config, collaborator, progress)

    def lr_for_epoch(self, epoch: int) -> float:
        c = self.config
        return step_decay_lr(c.lr, epoch, c.lr_decay, c.lr_decay_every)

    def batch_loss(self, samples: Sequence[Session]):
        """Forward pass for one batch; returns (loss parts, fingerprints or None, targets)."""
        batch = self.model.make_batch(samples)
        session_vectors = self.model.session_vectors(batch)
        fingerprints, labels = None, None
        if self.collaborator is not None:
            # detached: retrieval sees values only
            fingerprints, labels = self.collaborator.soft_labels(session_vectors.data)
        probs = predict_scores(
            session_vectors, self.model.params.item_embedding, self.model.score_scale
        )
        parts = loss(probs, batch.targets, labels, self.config.lambda_)
        return parts, fingerprints, batch.targets

    def train_step(self, samples: Sequence[Session], lr: Optional[float] = None) -> StepResult:
        self.optimizer.zero_grad()
        with Tape() as tape:
            parts, fingerprints, targets = self.batch_loss(samples)
            value = parts.total.item()
            if not math.isfinite(value):
                logger.error(f"Non-finite loss; tape:\n{tape.dump()}")
                raise NumericalError(f"loss is {value} at epoch {self.epoch}")
            tape.backward(parts.total)

        self.optimizer.lr = self.config.lr if lr is None else lr
        self.optimizer.step()
        if self.collaborator is not None:
            self.collaborator.update(fingerprints, targets)
        return StepResult(loss=value, ce=parts.ce, kl=parts.kl, batch_size=len(samples))

    def train_epoch(self, samples: List[Session]) -> EpochMetrics:
        """One shuffled pass; loss, ce and kl are sample-weighted means."""
        epoch = self.epoch
        lr = self.lr_for_epoch(epoch)
        started = time.perf_counter()
        order = self.rng.permutation(len(samples))
        size = self.config.batch_size
        starts = range(0, len(order), size)
        if self.progress:
            starts = tqdm(starts, desc=f"epoch {epoch}", unit="batch", leave=False)

        total = ce = kl = 0.0
        for start in starts:
            batch = [samples[i] for i in order[start:start + size]]
            result = self.train_step(batch, lr)
            total += result.loss * result.batch_size
            ce += result.ce * result.batch_size
            kl += result.kl * result.batch_size

        n = max(len(samples), 1)
        self.epoch += 1
        return EpochMetrics(
            epoch=epoch,
            lr=lr,
            loss=total / n,
            ce=ce / n,
            kl=kl / n,
            wall_seconds=time.perf_counter() - started,
        )

    def fit(
        self,
        samples: List[Session],
        epochs: Optional[int] = None,
        evaluate: Optional[Callable[[], tuple]] = None,
        on_epoch: Optional[Callable[[EpochMetrics], None]] = None,
    ) -> List[EpochMetrics]:
        """Train for ``epochs`` more epochs.

        ``evaluate`` returns (p@k, mrr@k) and runs every ``eval_every`` epochs.
        """
        epochs = self.config.epochs if epochs is None else epochs
        history = []
        for _ in range(epochs):
            metrics = self.train_epoch(samples)
            every = self.config.eval_every
            if evaluate is not None and every > 0 and (metrics.epoch + 1) % every == 0:
                metrics.p_at_k, metrics.mrr_at_k = evaluate()
            self.run_logger.log_epoch(
                metrics.epoch,
                lr=metrics.lr,
                loss=metrics.loss,
                ce=metrics.ce,
                kl=metrics.kl,
                seconds=round(metrics.wall_seconds, 2),
            )
            if on_epoch is not None:
                on_epoch(metrics)
            history.append(metrics)
        return history

    def checkpoint(self, vocab_hash: str, graph_hash: str, config: dict) -> Checkpoint:
        dims = self.model.params.dims
        return Checkpoint(
            tensors={k: v.copy() for k, v in self.model.params.arrays().items()},
            vocab_hash=vocab_hash,
            graph_hash=graph_hash,
            config=config,
            epoch=self.epoch,
            optimizer_step=self.optimizer.step_count,
            optimizer_state={k: v.copy() for k, v in self.optimizer.state_dict().items()},
            dims=dims.to_record(),
            rng_state=self.rng.bit_generator.state,
        )

    def restore(self, checkpoint: Checkpoint):
        """Resume optimizer state, the epoch counter and the batch order."""
        if checkpoint.optimizer_state:
            self.optimizer.load_state_dict(checkpoint.optimizer_state, checkpoint.optimizer_step)
        if checkpoint.rng_state:
            self.rng.bit_generator.state = checkpoint.rng_state
        self.epoch = checkpoint.epoch

"""Exact t-SNE in numpy.

Per-point Gaussian bandwidths are found by bisection on the precision so
that each conditional distribution's entropy matches log2(perplexity).
The embedding minimizes KL(P || Q) with a Student-t Q by gradient descent
with momentum and per-coordinate gains; P is exaggerated during the first
iterations.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from src.config import LOGGER_NAME, TSNE_ENTROPY_TOLERANCE
from src.errors import DataError
from src.schemas import TsneConfig

logger = logging.getLogger(LOGGER_NAME)

MIN_POINTS = 5
MAX_BISECTION_STEPS = 200
INITIAL_MOMENTUM = 0.5
FINAL_MOMENTUM = 0.8
MIN_GAIN = 0.01
KL_LOG_EVERY = 50
DISTRIBUTION_TOLERANCE = 1e-9


def squared_distances(X: np.ndarray) -> np.ndarray:
    sum_x = (X ** 2).sum(axis=1)
    d = sum_x[:, None] + sum_x[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _row_distribution(distances: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Normalized exp(-beta * d) and its entropy in bits."""
    shifted = distances - distances.min()
    weights = np.exp(-beta * shifted)
    total = weights.sum()
    probs = weights / total
    entropy_nats = np.log(total) + beta * float((shifted * probs).sum())
    return probs, entropy_nats / np.log(2.0)


def conditional_probabilities(
    D: np.ndarray,
    perplexity: float,
    tol: float = TSNE_ENTROPY_TOLERANCE
) -> tuple[np.ndarray, np.ndarray]:
    """Row-conditional P_{j|i} with entropy log2(perplexity) per row.

    Args:
        D: n x n squared distances
        perplexity: Target perplexity
        tol: Entropy tolerance in bits

    Returns:
        (n x n conditional matrix with zero diagonal, per-row entropies in bits)
    """
    n = D.shape[0]
    target = np.log2(perplexity)
    P = np.zeros((n, n), dtype=np.float64)
    entropies = np.zeros(n, dtype=np.float64)

    for i in range(n):
        others = np.concatenate([D[i, :i], D[i, i + 1:]])
        beta, lo, hi = 1.0, 0.0, np.inf
        probs, entropy = _row_distribution(others, beta)
        for _ in range(MAX_BISECTION_STEPS):
            diff = entropy - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
            probs, entropy = _row_distribution(others, beta)
        P[i, :i] = probs[:i]
        P[i, i + 1:] = probs[i:]
        entropies[i] = entropy
    return P, entropies


def joint_probabilities(X: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized joint P with unit sum."""
    conditional, _ = conditional_probabilities(squared_distances(X), perplexity)
    P = conditional + conditional.T
    return P / P.sum()


def check_joint_distribution(M: np.ndarray, name: str, tol: float = DISTRIBUTION_TOLERANCE):
    """Raise DataError unless M is symmetric, non-negative and sums to 1."""
    if not np.all(np.isfinite(M)) or M.min() < 0:
        raise DataError(f"{name} has negative or non-finite entries")
    if np.abs(M - M.T).max() > tol:
        raise DataError(f"{name} is not symmetric")
    if abs(M.sum() - 1.0) > tol:
        raise DataError(f"{name} sums to {M.sum()}, not 1")


def student_t_affinities(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(Q, unnormalized kernel) for an embedding Y."""
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float((P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))).sum())


def effective_perplexity(perplexity: float, n: int) -> float:
    return max(2.0, min(perplexity, (n - 1) / 3.0))


@dataclass
class TsneResult:
    """Embedding plus the monitored objective.

    Attributes:
        points: n x 2 embedding
        perplexity: Perplexity actually used
        initial_kl: KL(P || Q) at the initial embedding
        exaggeration_kl: KL right after early exaggeration ends
        final_kl: KL at the last iteration
        kl_history: (iteration, KL) pairs
    """
    points: np.ndarray
    perplexity: float
    initial_kl: float
    exaggeration_kl: float
    final_kl: float
    kl_history: list[tuple[int, float]] = field(default_factory=list)


def tsne_embed(vectors: np.ndarray, cfg: TsneConfig) -> TsneResult:
    """Embed n vectors into two dimensions.

    Args:
        vectors: n x d matrix
        cfg: t-SNE settings; perplexity is clamped to [2, (n - 1) / 3]

    Returns:
        TsneResult; identical for identical inputs and seed

    Raises:
        DataError: Fewer than 5 points or non-finite input
    """
    cfg.check()
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < MIN_POINTS:
        raise DataError(f"t-SNE needs at least {MIN_POINTS} vectors, got {X.shape[0] if X.ndim else 0}")
    if not np.all(np.isfinite(X)):
        raise DataError("t-SNE input contains non-finite values")

    n = X.shape[0]
    perplexity = effective_perplexity(cfg.perplexity, n)
    if perplexity != cfg.perplexity:
        logger.info(f"t-SNE perplexity clamped from {cfg.perplexity} to {perplexity:.2f} for {n} points")

    P = joint_probabilities(X, perplexity)
    check_joint_distribution(P, "P")

    rng = np.random.default_rng(cfg.seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)

    Q, _ = student_t_affinities(Y)
    check_joint_distribution(Q, "Q")
    initial_kl = kl_divergence(P, Q)
    history = [(0, initial_kl)]
    exaggeration_kl = initial_kl

    for it in range(cfg.iterations):
        exaggerate = it < cfg.exaggeration_iters
        P_eff = P * cfg.early_exaggeration if exaggerate else P
        momentum = INITIAL_MOMENTUM if exaggerate else FINAL_MOMENTUM

        Q, num = student_t_affinities(Y)
        W = (P_eff - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)

        increase = (grad > 0) != (velocity > 0)
        gains = np.where(increase, gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, MIN_GAIN)
        velocity = momentum * velocity - cfg.learning_rate * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)

        if it + 1 == cfg.exaggeration_iters:
            exaggeration_kl = kl_divergence(P, student_t_affinities(Y)[0])
            history.append((it + 1, exaggeration_kl))
        elif (it + 1) % KL_LOG_EVERY == 0:
            history.append((it + 1, kl_divergence(P, student_t_affinities(Y)[0])))

    Q, _ = student_t_affinities(Y)
    check_joint_distribution(Q, "Q")
    final_kl = kl_divergence(P, Q)
    if history[-1][0] != cfg.iterations:
        history.append((cfg.iterations, final_kl))

    logger.info(f"t-SNE on {n} points: KL {initial_kl:.4f} -> {exaggeration_kl:.4f} (after exaggeration) "
                f"-> {final_kl:.4f}")
    return TsneResult(
        points=Y,
        perplexity=perplexity,
        initial_kl=initial_kl,
        exaggeration_kl=exaggeration_kl,
        final_kl=final_kl,
        kl_history=history,
    )

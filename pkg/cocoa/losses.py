"""
Self-supervised objectives on multimodal embeddings

COCOA pulls the aligned modality embeddings of a window together and pushes
distinct windows of one modality apart. The pairwise baselines (InfoNCE,
DCL, Hard-DCL, Barlow Twins) treat two modalities as two views; CMC applies
InfoNCE to every ordered modality pair.

Every contrastive loss counts the unique vector-pair similarities it
evaluates in an OpCounter, the cost unit of the complexity comparison.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .constants import (
    BARLOW_EPS, BARLOW_LAMBDA, CROSS_MODAL_METHODS, DCL_EPSILON, DEFAULT_LAMBDA,
    DEFAULT_TAU, HARD_DCL_BETA, PAIR_METHODS, SSL_METHODS,
)
from .encoder import EmbeddingSet
from .errors import ConfigurationError, NumericDegeneracyError
from .tensor import (
    DiffTensor, ArrayLike, as_tensor, exp, gather, log, log_softmax, maximum, sqrt,
    take_rows, tensor_sum, transpose,
)

logger = logging.getLogger(__name__)

SIMILARITY_KINDS = ("cosine", "dot")


@dataclass(frozen=True)
class CocoaHyper:
    """Temperature and discriminator weight of the COCOA objective."""

    tau: float = DEFAULT_TAU
    lambda_: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if not np.isfinite(self.lambda_) or self.lambda_ < 0:
            raise ConfigurationError(f"lambda must be finite and non-negative, got {self.lambda_}")


@dataclass(frozen=True)
class LossHyper:
    """Hyper-parameters of every objective; each method reads its own."""

    tau: float = DEFAULT_TAU
    lambda_: float = DEFAULT_LAMBDA
    dcl_eps: float = DCL_EPSILON
    hard_dcl_beta: float = HARD_DCL_BETA
    barlow_lambda: float = BARLOW_LAMBDA
    similarity: str = "cosine"

    def __post_init__(self):
        CocoaHyper(self.tau, self.lambda_)
        if not self.dcl_eps > 0:
            raise ConfigurationError(f"dcl_eps must be positive, got {self.dcl_eps}")
        if self.hard_dcl_beta < 0:
            raise ConfigurationError(f"hard_dcl_beta must be non-negative, got {self.hard_dcl_beta}")
        if self.barlow_lambda < 0:
            raise ConfigurationError(f"barlow_lambda must be non-negative, got {self.barlow_lambda}")
        if self.similarity not in SIMILARITY_KINDS:
            raise ConfigurationError(f"similarity must be one of {SIMILARITY_KINDS}, got '{self.similarity}'")

    @property
    def cocoa(self) -> CocoaHyper:
        return CocoaHyper(self.tau, self.lambda_)


@dataclass
class OpCounter:
    """Unique similarity evaluations performed by one loss evaluation."""

    similarity_evaluations: int = 0

    def add(self, count: int) -> None:
        self.similarity_evaluations += int(count)

    def reset(self) -> None:
        self.similarity_evaluations = 0


@dataclass
class SimilarityMatrix:
    """Pairwise similarities between the rows of two embedding matrices."""

    values: DiffTensor
    kind: str = "cosine"

    def check_bounds(self, tolerance: float = 1e-9) -> bool:
        if self.kind != "cosine":
            return True
        return bool(np.all(np.abs(self.values.data) <= 1.0 + tolerance))


def _counted(counter: Optional[OpCounter]) -> OpCounter:
    return counter if counter is not None else OpCounter()


def cosine_sim(a: Sequence[float], b: Sequence[float]) -> float:
    """a . b / (|a| |b|) of two plain vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise NumericDegeneracyError("cosine similarity of a zero-norm vector is undefined")
    return float(a @ b / (norm_a * norm_b))


def normalize_rows(z: ArrayLike) -> DiffTensor:
    """Scale every row to unit length, differentiably."""
    z = as_tensor(z)
    norms = sqrt(tensor_sum(z * z, axis=1, keepdims=True))
    if np.any(norms.data == 0):
        raise NumericDegeneracyError("cosine similarity of a zero-norm embedding is undefined")
    return z / norms


def similarity_matrix(a: ArrayLike, b: ArrayLike, kind: str = "cosine",
                      counter: Optional[OpCounter] = None) -> SimilarityMatrix:
    """Full N_a x N_b similarity matrix; counts N_a * N_b evaluations."""
    a, b = as_tensor(a), as_tensor(b)
    if kind not in SIMILARITY_KINDS:
        raise ConfigurationError(f"similarity kind must be one of {SIMILARITY_KINDS}, got '{kind}'")
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ConfigurationError(f"similarity: embeddings {a.shape} and {b.shape} do not match")
    if kind == "cosine":
        a, b = normalize_rows(a), normalize_rows(b)
    _counted(counter).add(a.shape[0] * b.shape[0])
    return SimilarityMatrix(a @ transpose(b), kind)


def _row_similarities(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    return tensor_sum(a * b, axis=1)


def _require_modalities(z: EmbeddingSet, minimum: int, op: str) -> None:
    if z.num_modalities < minimum:
        raise ConfigurationError(f"{op} needs at least {minimum} modalities, got {z.num_modalities}")


def _require_samples(n: int, minimum: int, op: str) -> None:
    if n < minimum:
        raise ConfigurationError(f"{op} needs a batch of at least {minimum} samples, got {n}")


def cocoa_positive_term(z: EmbeddingSet, hyper: CocoaHyper, counter: Optional[OpCounter] = None) -> DiffTensor:
    """
    Cross-modality correlation summed over the batch.

    Sums exp((1 - S_vw(t, t)) / tau) over samples t and ordered modality
    pairs (v, w), v != w. S is symmetric, so each unordered pair is evaluated
    once (N similarities) and counted twice.
    """
    _require_modalities(z, 2, "cocoa_positive_term")
    _require_samples(z.num_samples, 1, "cocoa_positive_term")
    counter = _counted(counter)
    units = [normalize_rows(e) for e in z.embeddings]
    total = None
    for v in range(len(units)):
        for w in range(v + 1, len(units)):
            sims = _row_similarities(units[v], units[w])
            counter.add(z.num_samples)
            term = tensor_sum(exp((1.0 - sims) / hyper.tau))
            total = term if total is None else total + term
    return 2.0 * total


def cocoa_negative_term(z: EmbeddingSet, hyper: CocoaHyper, counter: Optional[OpCounter] = None) -> DiffTensor:
    """
    Intra-modality discriminator summed over modalities.

    For each modality, the mean of exp(S_vv(t, t') / tau) over distinct
    sample pairs. Only the upper triangle (N(N-1)/2 similarities) is
    evaluated; its mean equals the mean over ordered pairs.
    """
    n = z.num_samples
    _require_samples(n, 2, "cocoa_negative_term")
    counter = _counted(counter)
    rows, cols = np.triu_indices(n, k=1)
    total = None
    for embedding in z.embeddings:
        unit = normalize_rows(embedding)
        sims = _row_similarities(take_rows(unit, rows), take_rows(unit, cols))
        counter.add(len(rows))
        term = exp(sims / hyper.tau).mean()
        total = term if total is None else total + term
    return total


def cocoa_loss(z: EmbeddingSet, hyper: CocoaHyper, counter: Optional[OpCounter] = None) -> DiffTensor:
    """Positive term plus lambda times the negative term."""
    _require_modalities(z, 2, "cocoa_loss")
    _require_samples(z.num_samples, 2, "cocoa_loss")
    positive = cocoa_positive_term(z, hyper, counter)
    # evaluated even at lambda=0 so the counter matches count_formula
    return positive + hyper.lambda_ * cocoa_negative_term(z, hyper, counter)


def _infonce_from_matrix(sims: DiffTensor, tau: float) -> DiffTensor:
    n = sims.shape[0]
    log_probs = log_softmax(sims / tau, axis=1)
    diagonal = np.arange(n)
    return -(gather(log_probs, diagonal, diagonal).mean())


def infonce_loss(anchor: ArrayLike, other: ArrayLike, tau: float = DEFAULT_TAU,
                 counter: Optional[OpCounter] = None, kind: str = "cosine") -> DiffTensor:
    """
    Mean over anchors of -log softmax(S[t] / tau)[t].

    The aligned row of ``other`` is the positive, every other row a negative.
    """
    anchor = as_tensor(anchor)
    _require_samples(anchor.shape[0], 2, "infonce_loss")
    sims = similarity_matrix(anchor, other, kind, counter)
    return _infonce_from_matrix(sims.values, tau)


def _split_positive_negative(anchor: ArrayLike, other: ArrayLike, kind: str,
                             counter: Optional[OpCounter], op: str) -> Tuple[DiffTensor, DiffTensor, np.ndarray]:
    anchor = as_tensor(anchor)
    n = anchor.shape[0]
    _require_samples(n, 2, op)
    sims = similarity_matrix(anchor, other, kind, counter).values
    powered = exp(sims)
    diagonal = np.arange(n)
    positive = gather(powered, diagonal, diagonal)
    negative_mask = 1.0 - np.eye(n)
    return positive, powered, negative_mask


def _debiased_from_g(positive: DiffTensor, g: DiffTensor, num_negatives: int) -> DiffTensor:
    return (log(positive + num_negatives * g) - log(positive)).mean()


def dcl_loss(anchor: ArrayLike, other: ArrayLike, tau: float = DEFAULT_TAU, eps: float = DCL_EPSILON,
             counter: Optional[OpCounter] = None, kind: str = "cosine") -> DiffTensor:
    """
    Debiased contrastive loss in its tabulated form.

    Per anchor, g = max((mean_neg e^{s-} + e^{s+}) / tau, eps) and the loss is
    -log(e^{s+} / (e^{s+} + N_neg g)), averaged over anchors.
    """
    if not eps > 0:
        raise ConfigurationError(f"dcl eps must be positive, got {eps}")
    positive, powered, mask = _split_positive_negative(anchor, other, kind, counter, "dcl_loss")
    num_negatives = mask.shape[0] - 1
    negative_mean = tensor_sum(powered * mask, axis=1) / num_negatives
    g = maximum((negative_mean + positive) / tau, eps)
    return _debiased_from_g(positive, g, num_negatives)


def hard_negative_weights(powered: DiffTensor, mask: np.ndarray, beta: float) -> DiffTensor:
    """beta * softmax of the negative similarities of every anchor row."""
    negatives = powered * mask
    return beta * negatives / tensor_sum(negatives, axis=1, keepdims=True)


def hard_dcl_loss(anchor: ArrayLike, other: ArrayLike, tau: float = DEFAULT_TAU, eps: float = DCL_EPSILON,
                  beta: float = HARD_DCL_BETA, counter: Optional[OpCounter] = None,
                  kind: str = "cosine") -> DiffTensor:
    """DCL with negatives reweighted towards the hardest (most similar) ones."""
    if beta < 0:
        raise ConfigurationError(f"hard_dcl beta must be non-negative, got {beta}")
    if not eps > 0:
        raise ConfigurationError(f"dcl eps must be positive, got {eps}")
    positive, powered, mask = _split_positive_negative(anchor, other, kind, counter, "hard_dcl_loss")
    num_negatives = mask.shape[0] - 1
    weights = hard_negative_weights(powered, mask, beta)
    weighted_mean = tensor_sum(weights * powered * mask, axis=1) / num_negatives
    g = maximum((weighted_mean + positive) / tau, eps)
    return _debiased_from_g(positive, g, num_negatives)


def _standardize(view: DiffTensor, eps: float, name: str) -> DiffTensor:
    centered = view - view.mean(axis=0, keepdims=True)
    variance = (centered * centered).mean(axis=0, keepdims=True)
    flat = np.flatnonzero(variance.data.ravel() <= eps)
    if len(flat):
        logger.warning("Barlow Twins: %s has %d zero-variance dimension(s) %s; eps guard applied",
                       name, len(flat), flat.tolist())
    return centered / sqrt(variance + eps)


def cross_correlation(view_a: ArrayLike, view_b: ArrayLike, eps: float = BARLOW_EPS) -> DiffTensor:
    """d x d cross-correlation of the batch-standardized views."""
    view_a, view_b = as_tensor(view_a), as_tensor(view_b)
    if view_a.shape != view_b.shape or view_a.ndim != 2:
        raise ConfigurationError(f"barlow_twins_loss: views {view_a.shape} and {view_b.shape} differ")
    a_std = _standardize(view_a, eps, "view_a")
    b_std = _standardize(view_b, eps, "view_b")
    return (transpose(a_std) @ b_std) / float(view_a.shape[0])


def barlow_twins_loss(view_a: ArrayLike, view_b: ArrayLike, lambda_bt: float = BARLOW_LAMBDA,
                      eps: float = BARLOW_EPS) -> DiffTensor:
    """sum_i (1 - C_ii)^2 + lambda_bt * sum_{i != j} C_ij^2."""
    view_a = as_tensor(view_a)
    _require_samples(view_a.shape[0], 2, "barlow_twins_loss")
    c = cross_correlation(view_a, view_b, eps)
    d = c.shape[0]
    diagonal = np.arange(d)
    on_diagonal = gather(c, diagonal, diagonal)
    invariance = tensor_sum((1.0 - on_diagonal) * (1.0 - on_diagonal))
    redundancy = tensor_sum(c * c * (1.0 - np.eye(d)))
    return invariance + lambda_bt * redundancy


def cmc_loss(z: EmbeddingSet, tau: float = DEFAULT_TAU, counter: Optional[OpCounter] = None,
             kind: str = "cosine") -> DiffTensor:
    """
    InfoNCE summed over all ordered modality pairs.

    One N x N similarity matrix per unordered pair serves both directions
    (rows for v -> w, the transpose for w -> v).
    """
    _require_modalities(z, 2, "cmc_loss")
    _require_samples(z.num_samples, 2, "cmc_loss")
    total = None
    for v in range(z.num_modalities):
        for w in range(v + 1, z.num_modalities):
            sims = similarity_matrix(z[v], z[w], kind, counter).values
            term = _infonce_from_matrix(sims, tau) + _infonce_from_matrix(transpose(sims), tau)
            total = term if total is None else total + term
    return total


def count_formula(method: str, num_modalities: int, batch_size: int) -> int:
    """Closed-form number of unique similarity evaluations per loss call."""
    v, n = int(num_modalities), int(batch_size)
    if v < 2 or n < 2:
        raise ConfigurationError(f"count_formula needs V >= 2 and N >= 2, got V={v}, N={n}")
    if method == "cocoa":
        return n * v * (v - 1) // 2 + v * n * (n - 1) // 2
    if method == "cmc":
        return v * (v - 1) // 2 * n * n
    raise ConfigurationError(f"count_formula covers {CROSS_MODAL_METHODS}, got '{method}'")


def ssl_loss(method: str, z: EmbeddingSet, hyper: LossHyper,
             counter: Optional[OpCounter] = None) -> DiffTensor:
    """
    Dispatch to the self-supervised objective named ``method``.

    Pairwise methods need exactly two modalities; the first is the anchor.
    """
    if method not in SSL_METHODS:
        raise ConfigurationError(f"unknown self-supervised method '{method}'; expected one of {SSL_METHODS}")
    if method == "cocoa":
        return cocoa_loss(z, hyper.cocoa, counter)
    if method == "cmc":
        return cmc_loss(z, hyper.tau, counter, hyper.similarity)
    if z.num_modalities != 2:
        raise ConfigurationError(
            f"method '{method}' contrasts exactly two modalities, got {z.num_modalities}; "
            f"select a modality pair first")
    anchor, other = z[0], z[1]
    if method == "infonce":
        return infonce_loss(anchor, other, hyper.tau, counter, hyper.similarity)
    if method == "dcl":
        return dcl_loss(anchor, other, hyper.tau, hyper.dcl_eps, counter, hyper.similarity)
    if method == "hard_dcl":
        return hard_dcl_loss(anchor, other, hyper.tau, hyper.dcl_eps, hyper.hard_dcl_beta,
                             counter, hyper.similarity)
    return barlow_twins_loss(anchor, other, hyper.barlow_lambda)


def required_modalities(method: str) -> Tuple[int, Optional[int]]:
    """(minimum, maximum) modality count accepted by ``method``."""
    if method in PAIR_METHODS:
        return 2, 2
    if method in CROSS_MODAL_METHODS:
        return 2, None
    return 1, None

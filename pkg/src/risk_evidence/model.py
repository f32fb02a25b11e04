"""Balanced binary logistic regression, linear-model attribution, and CV.

The classifier minimizes class-weighted L2-regularized logistic loss with a
trust-region Newton method driven by analytic gradients and Hessian-vector
products (both defined here and finite-difference checked in the tests).
Per-document feature attributions use the independence-baseline linear rule
score_i = w_i * (x_i - mean_i), which is exact Shapley for a linear model.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, sparse
from scipy.special import expit

from . import features as _features
from .corpus import Corpus, map_risk_to_binary
from .features import SparseVector, TfidfConfig, to_csr

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class DegenerateLabelsError(ValueError):
    """Training or CV input with fewer than two classes represented."""


@dataclass(frozen=True)
class TrainConfig:
    c: float = 1.0  # inverse regularization strength
    max_iterations: int = 200
    tolerance: float = 1e-6  # L2 norm of the objective gradient
    class_weight: str = "balanced"  # "balanced" | "none"

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.class_weight not in ("balanced", "none"):
            raise ValueError(f"unknown class_weight {self.class_weight!r}")


@dataclass(frozen=True, eq=False)
class LogRegModel:
    weights: np.ndarray
    bias: float
    config: TrainConfig
    converged: bool
    grad_norm: float
    n_iterations: int

    @property
    def n_features(self) -> int:
        return int(self.weights.size)


@dataclass(frozen=True, eq=False)
class ExplainerBaseline:
    """Per-feature mean of the transformed feature value over a reference corpus."""

    feature_means: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.feature_means)):
            raise ValueError("feature means must be finite")

    @classmethod
    def from_vectors(cls, vectors: list[SparseVector], n_features: int) -> "ExplainerBaseline":
        matrix = to_csr(vectors, n_features)
        means = np.asarray(matrix.mean(axis=0)).ravel()
        return cls(feature_means=means)


@dataclass(frozen=True)
class FeatureScore:
    index: int
    ngram: str
    score: float


@dataclass(frozen=True)
class SelectionPolicy:
    """Which attribution scores count as "important".

    ``top_k`` keeps the k highest positive-direction scores; ``min_score``
    keeps everything at or above a threshold instead. Ties break by n-gram
    lexicographic order.
    """

    top_k: int | None = 10
    min_score: float | None = None

    def __post_init__(self) -> None:
        if self.top_k is None and self.min_score is None:
            raise ValueError("policy needs top_k or min_score")
        if self.top_k is not None and self.top_k < 0:
            raise ValueError("top_k must be >= 0")


def balanced_class_weights(labels: list[int] | np.ndarray) -> dict[int, float]:
    """Per-class weight n_samples / (2 * n_class) for labels in {-1, +1}."""
    y = np.asarray(labels)
    classes, counts = np.unique(y, return_counts=True)
    if set(classes.tolist()) != {-1, 1}:
        raise DegenerateLabelsError(
            f"degenerate labels: need both classes -1 and +1, got {classes.tolist()}"
        )
    n = y.size
    return {int(c): n / (2.0 * count) for c, count in zip(classes, counts)}


def logreg_objective(
    theta: np.ndarray,
    X: sparse.csr_matrix,
    y: np.ndarray,
    sample_weights: np.ndarray,
    c: float,
) -> tuple[float, np.ndarray]:
    """Loss and gradient of 0.5*||w||^2 + c * sum_i s_i * log(1 + exp(-y_i z_i)).

    ``theta`` packs [weights, bias]; the bias is not regularized.
    """
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    margins = y * z
    loss = 0.5 * float(w @ w) + c * float(sample_weights @ np.logaddexp(0.0, -margins))
    # d/dz of the loss term: -s * y * sigmoid(-margin)
    dz = -c * sample_weights * y * expit(-margins)
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ dz + w
    grad[-1] = float(np.sum(dz))
    return loss, grad


def _logreg_hessp(
    theta: np.ndarray,
    p: np.ndarray,
    X: sparse.csr_matrix,
    y: np.ndarray,
    sample_weights: np.ndarray,
    c: float,
) -> np.ndarray:
    w, b = theta[:-1], theta[-1]
    margins = y * (X @ w + b)
    sig = expit(margins)
    curvature = c * sample_weights * sig * (1.0 - sig)
    t = curvature * (X @ p[:-1] + p[-1])
    out = np.empty_like(p)
    out[:-1] = X.T @ t + p[:-1]
    out[-1] = float(np.sum(t))
    return out


def fit_logreg(
    X: list[SparseVector] | sparse.spmatrix,
    y: list[int] | np.ndarray,
    config: TrainConfig | None = None,
    n_features: int | None = None,
) -> LogRegModel:
    """Fit the classifier; never silent on non-convergence.

    Optimization runs a trust-region Newton-CG solve until the gradient's L2
    norm drops below ``config.tolerance`` or ``config.max_iterations`` outer
    iterations elapse; the returned model carries the converged flag and the
    final gradient norm either way.
    """
    config = config or TrainConfig()
    if isinstance(X, list):
        if n_features is None:
            n_features = max((int(v.indices[-1]) + 1 for v in X if v.nnz), default=0)
        matrix = to_csr(X, n_features)
    else:
        matrix = X.tocsr()
        n_features = matrix.shape[1]
    yy = np.asarray(y, dtype=np.float64)
    if matrix.shape[0] != yy.size or yy.size < 2:
        raise ValueError("need |X| == |y| >= 2")

    if config.class_weight == "balanced":
        per_class = balanced_class_weights(yy.astype(np.int64))
        sample_weights = np.where(yy > 0, per_class[1], per_class[-1])
    else:
        if set(np.unique(yy).tolist()) != {-1.0, 1.0}:
            raise DegenerateLabelsError("degenerate labels: need both classes")
        sample_weights = np.ones_like(yy)

    theta0 = np.zeros(n_features + 1, dtype=np.float64)
    args = (matrix, yy, sample_weights, config.c)
    result = optimize.minimize(
        logreg_objective,
        theta0,
        args=args,
        method="trust-ncg",
        jac=True,
        hessp=lambda t, p, *a: _logreg_hessp(t, p, *a),
        options={"gtol": config.tolerance, "maxiter": config.max_iterations},
    )
    _, grad = logreg_objective(result.x, *args)
    grad_norm = float(np.linalg.norm(grad))
    converged = grad_norm <= config.tolerance
    if not converged:
        logger.warning(
            "logistic regression did not converge: grad norm %.3e > tolerance %.3e "
            "after %d iterations", grad_norm, config.tolerance, result.nit,
        )
    return LogRegModel(
        weights=result.x[:-1].copy(),
        bias=float(result.x[-1]),
        config=config,
        converged=converged,
        grad_norm=grad_norm,
        n_iterations=int(result.nit),
    )


def _check_dim(model: LogRegModel, x: SparseVector) -> None:
    if x.nnz and int(x.indices[-1]) >= model.n_features:
        raise ValueError(
            f"dimension mismatch: feature index {int(x.indices[-1])} >= {model.n_features}"
        )


def decision_value(model: LogRegModel, x: SparseVector) -> float:
    _check_dim(model, x)
    if not x.nnz:
        return model.bias
    return float(model.weights[x.indices] @ x.values) + model.bias


def predict_proba(model: LogRegModel, x: SparseVector) -> float:
    """Probability of class +1 under the fitted model."""
    return float(expit(decision_value(model, x)))


def predict_proba_many(model: LogRegModel, X: sparse.spmatrix) -> np.ndarray:
    if X.shape[1] != model.n_features:
        raise ValueError(f"dimension mismatch: {X.shape[1]} != {model.n_features}")
    return expit(X @ model.weights + model.bias)


def shap_score_array(
    model: LogRegModel, x: SparseVector, baseline: ExplainerBaseline
) -> np.ndarray:
    """Dense attribution vector w * (x - mean), one entry per feature."""
    means = baseline.feature_means
    if means.size != model.n_features:
        raise ValueError(f"dimension mismatch: baseline {means.size} != {model.n_features}")
    _check_dim(model, x)
    scores = model.weights * (-means)
    if x.nnz:
        scores[x.indices] = model.weights[x.indices] * (x.values - means[x.indices])
    return scores


def shap_scores(
    model: LogRegModel,
    x: SparseVector,
    baseline: ExplainerBaseline,
    feature_names: tuple[str, ...] | None = None,
) -> list[FeatureScore]:
    """Per-feature attributions, descending by score (ties by n-gram).

    Only features with a nonzero contribution are listed; the sum over the
    list equals w.x - w.mean exactly (the additivity identity).
    """
    arr = shap_score_array(model, x, baseline)
    nonzero = np.flatnonzero(arr)
    named = [
        FeatureScore(
            index=int(i),
            ngram=feature_names[int(i)] if feature_names else f"f{int(i)}",
            score=float(arr[i]),
        )
        for i in nonzero
    ]
    named.sort(key=lambda fs: (-fs.score, fs.ngram))
    return named


def select_important(
    scores: list[FeatureScore], policy: SelectionPolicy | None = None
) -> list[FeatureScore]:
    """Apply the selection policy; output ordered by (score desc, n-gram asc)."""
    policy = policy or SelectionPolicy()
    if policy.min_score is not None:
        kept = [fs for fs in scores if fs.score >= policy.min_score]
    else:
        kept = [fs for fs in scores if fs.score > 0.0]
    kept.sort(key=lambda fs: (-fs.score, fs.ngram))
    if policy.min_score is None and policy.top_k is not None:
        kept = kept[: policy.top_k]
    return kept


def select_important_array(
    scores: np.ndarray,
    feature_names: tuple[str, ...],
    policy: SelectionPolicy | None = None,
) -> list[FeatureScore]:
    """Fast selection path over a dense score array (same tie rule)."""
    policy = policy or SelectionPolicy()
    if policy.min_score is not None:
        candidates = np.flatnonzero(scores >= policy.min_score)
        limit = None
    else:
        candidates = np.flatnonzero(scores > 0.0)
        limit = policy.top_k
        if limit is not None and candidates.size > limit:
            vals = scores[candidates]
            kth = np.partition(vals, vals.size - limit)[vals.size - limit]
            candidates = candidates[vals >= kth]  # keep boundary ties for the tie rule
    ranked = sorted(candidates.tolist(), key=lambda i: (-scores[i], feature_names[i]))
    if limit is not None:
        ranked = ranked[:limit]
    return [FeatureScore(index=i, ngram=feature_names[i], score=float(scores[i])) for i in ranked]


# ---------------------------------------------------------------------------
# Cross-validation


@dataclass(frozen=True)
class FoldMetrics:
    balanced_accuracy: float
    accuracy: float
    f1: float


@dataclass(frozen=True)
class CvReport:
    folds: tuple[FoldMetrics, ...]
    mean: FoldMetrics
    n_folds: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "folds": [asdict(f) for f in self.folds],
            "mean": asdict(self.mean),
            "n_folds": self.n_folds,
            "seed": self.seed,
        }


def classification_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> FoldMetrics:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    accuracy = float(np.mean(y_true == y_pred))
    recalls = []
    for cls in (-1, 1):
        mask = y_true == cls
        if mask.any():
            recalls.append(float(np.mean(y_pred[mask] == cls)))
    balanced = float(np.mean(recalls)) if recalls else 0.0
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == -1) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == -1)))
    f1 = 2.0 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    return FoldMetrics(balanced_accuracy=balanced, accuracy=accuracy, f1=f1)


def stratified_fold_assignment(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold id per sample; preserves class ratios, fold sizes differ by <= 1."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    order_parts = []
    for cls in sorted(np.unique(y).tolist()):
        members = np.flatnonzero(y == cls)
        if members.size < folds:
            raise DegenerateLabelsError(
                f"insufficient class members: class {cls} has {members.size} < {folds}"
            )
        order_parts.append(rng.permutation(members))
    order = np.concatenate(order_parts)
    fold_of = np.empty(y.size, dtype=np.int64)
    for f in range(folds):
        fold_of[order[f::folds]] = f
    return fold_of


def _shuffled_fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    for f in range(folds):
        fold_of[order[f::folds]] = f
    return fold_of


def cross_validate(
    corpus: Corpus,
    folds: int = 5,
    stratified: bool = True,
    seed: int = 0,
    tfidf_config: TfidfConfig | None = None,
    train_config: TrainConfig | None = None,
    include_titles: bool = True,
) -> CvReport:
    """K-fold CV of the tf-idf + logistic-regression pipeline at post level.

    Each post is one document labeled with its user's binarized risk; the
    vectorizer is refit on each training fold.
    """
    docs: list[str] = []
    y_list: list[int] = []
    for user in corpus.users:
        target = map_risk_to_binary(user.label)
        for post in user.posts:
            docs.append(post.document(include_titles))
            y_list.append(target)
    y = np.array(y_list, dtype=np.int64)
    if stratified:
        fold_of = stratified_fold_assignment(y, folds, seed)
    else:
        fold_of = _shuffled_fold_assignment(y.size, folds, seed)

    fold_metrics: list[FoldMetrics] = []
    for f in range(folds):
        test_mask = fold_of == f
        train_docs = [d for d, m in zip(docs, test_mask) if not m]
        test_docs = [d for d, m in zip(docs, test_mask) if m]
        tfidf = _features.fit_tfidf(train_docs, tfidf_config)
        train_X = to_csr(_features.transform_many(tfidf, train_docs), tfidf.n_features)
        test_X = to_csr(_features.transform_many(tfidf, test_docs), tfidf.n_features)
        clf = fit_logreg(train_X, y[~test_mask], train_config)
        probs = predict_proba_many(clf, test_X)
        preds = np.where(probs >= 0.5, 1, -1)
        fold_metrics.append(classification_metrics(y[test_mask], preds))

    mean = FoldMetrics(
        balanced_accuracy=float(np.mean([m.balanced_accuracy for m in fold_metrics])),
        accuracy=float(np.mean([m.accuracy for m in fold_metrics])),
        f1=float(np.mean([m.f1 for m in fold_metrics])),
    )
    return CvReport(folds=tuple(fold_metrics), mean=mean, n_folds=folds, seed=seed)


# ---------------------------------------------------------------------------
# Serialization


def save_logreg(model: LogRegModel, path: str | Path, fingerprint: str | None = None) -> None:
    nonzero = np.flatnonzero(model.weights)
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "logreg",
        "dim": model.n_features,
        "weight_indices": nonzero.tolist(),
        "weight_values": model.weights[nonzero].tolist(),
        "bias": model.bias,
        "config": asdict(model.config),
        "converged": model.converged,
        "grad_norm": model.grad_norm,
        "n_iterations": model.n_iterations,
        "training_fingerprint": fingerprint,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_logreg(path: str | Path) -> LogRegModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("kind") != "logreg":
        raise ValueError(f"{path}: not a classifier model file")
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version")
    weights = np.zeros(int(payload["dim"]), dtype=np.float64)
    weights[np.array(payload["weight_indices"], dtype=np.int64)] = payload["weight_values"]
    return LogRegModel(
        weights=weights,
        bias=float(payload["bias"]),
        config=TrainConfig(**payload["config"]),
        converged=bool(payload["converged"]),
        grad_norm=float(payload["grad_norm"]),
        n_iterations=int(payload["n_iterations"]),
    )


def save_baseline(baseline: ExplainerBaseline, path: str | Path) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "explainer_baseline",
        "feature_means": baseline.feature_means.tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_baseline(path: str | Path) -> ExplainerBaseline:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("kind") != "explainer_baseline":
        raise ValueError(f"{path}: not a baseline file")
    return ExplainerBaseline(feature_means=np.array(payload["feature_means"], dtype=np.float64))

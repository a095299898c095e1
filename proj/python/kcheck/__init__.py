"""Representation-based knowledge checking for retrieval-augmented generation."""

from ._core import (
    Checker,
    InputError,
    ModelError,
    RetrievalIndex,
    __version__,
    auc,
    binary_metrics,
    calibrate_threshold,
    exact_match,
    fill_template,
    normalize_answer,
    parse_yes_no,
    pca_fit,
    perplexity,
    prob_scores,
    roc_curve,
    run_cli,
    sweep_best_accuracy,
    template_names,
    template_text,
    train_contrastive_checker,
    train_pca_checker,
    validate_misleading,
)

__all__ = [
    "Checker",
    "InputError",
    "ModelError",
    "RetrievalIndex",
    "__version__",
    "auc",
    "binary_metrics",
    "calibrate_threshold",
    "exact_match",
    "fill_template",
    "normalize_answer",
    "parse_yes_no",
    "pca_fit",
    "perplexity",
    "prob_scores",
    "roc_curve",
    "run_cli",
    "sweep_best_accuracy",
    "template_names",
    "template_text",
    "train_contrastive_checker",
    "train_pca_checker",
    "validate_misleading",
]

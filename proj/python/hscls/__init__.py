"""Python bindings for the hscls HS-code classification toolkit."""

from ._core import (
    Classifier,
    __version__,
    dnn_layer_plan,
    f_beta,
    f_survival,
    normalize_text,
    one_way_anova,
    regularized_incomplete_beta,
    run_cli,
    tune,
)

__all__ = [
    "Classifier",
    "__version__",
    "dnn_layer_plan",
    "f_beta",
    "f_survival",
    "normalize_text",
    "one_way_anova",
    "regularized_incomplete_beta",
    "run_cli",
    "tune",
]

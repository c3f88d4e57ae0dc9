"""From-scratch learners and their JSON serialization."""

from .forest import ForestModel, ForestParams, fit_forest_classifier, fit_forest_regressor, fit_random_forest
from .gbt import VARIANTS, GbtModel, GbtParams, fit_gbt, log_loss, sigmoid
from .gnb import GnbModel, fit_gnb
from .logistic import LogisticModel, LogisticParams, fit_logistic, penalized_loss
from .tree import DecisionTreeModel, Tree, TreeParams, fit_tree

MODEL_FORMAT_VERSION = 1

_KINDS = {
    "forest": ForestModel,
    "gbt": GbtModel,
    "logistic": LogisticModel,
    "gnb": GnbModel,
}


def model_to_dict(model) -> dict:
    d = model.to_dict()
    d["format_version"] = MODEL_FORMAT_VERSION
    return d


def model_from_dict(d: dict):
    if d.get("format_version", MODEL_FORMAT_VERSION) != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('format_version')}")
    try:
        cls = _KINDS[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown model kind {d.get('kind')!r}") from None
    return cls.from_dict(d)


__all__ = [
    "DecisionTreeModel", "ForestModel", "ForestParams", "GbtModel", "GbtParams", "GnbModel",
    "LogisticModel", "LogisticParams", "MODEL_FORMAT_VERSION", "Tree", "TreeParams", "VARIANTS",
    "fit_forest_classifier", "fit_forest_regressor", "fit_gbt", "fit_gnb", "fit_logistic",
    "fit_random_forest", "fit_tree", "log_loss", "model_from_dict", "model_to_dict",
    "penalized_loss", "sigmoid",
]

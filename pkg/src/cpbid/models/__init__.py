"""Point and benchmark quantile models."""

from ._common import ModelError, kfold, rmse
from .forest import ForestModel, Tree, build_tree, fit_rfr, tune_rfr
from .io import load_model, model_from_dict, model_to_dict, save_model
from .knn import SIGMA_FLOOR, KnnIndex, knn_sigma
from .linear import LinearModel, fit_ols, forward_subset_select
from .quantile import QuantileModel, fit_lqr, fit_quantile_model, pinball_loss


def predict(model, data):
    """Point prediction of any fitted model for a Dataset or feature array.

    Quantile models return their median. Values are not clamped.
    """
    return model.predict(data)


__all__ = [
    "ModelError", "kfold", "rmse",
    "ForestModel", "Tree", "build_tree", "fit_rfr", "tune_rfr",
    "load_model", "model_from_dict", "model_to_dict", "save_model",
    "SIGMA_FLOOR", "KnnIndex", "knn_sigma",
    "LinearModel", "fit_ols", "forward_subset_select",
    "QuantileModel", "fit_lqr", "fit_quantile_model", "pinball_loss",
    "predict",
]

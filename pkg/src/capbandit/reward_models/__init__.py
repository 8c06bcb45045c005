"""Online per-agent reward estimators."""
from .logistic import LogisticPosterior, fit_map, sigmoid, sigmoid_array
from .marginal import MarginalMean
from .trees import TreeEnsemble, fit_forest

MODEL_TYPES = {
    "logistic": LogisticPosterior,
    "tree": TreeEnsemble,
    "marginal": MarginalMean,
}

STATE_VERSION = 1


def dump_model(model) -> dict:
    """Versioned JSON-compatible snapshot of a reward model."""
    return {"version": STATE_VERSION, **model.state_dict()}


def load_model(state: dict):
    from ..errors import CheckpointError

    if state.get("version") != STATE_VERSION:
        raise CheckpointError(f"unsupported model state version {state.get('version')!r}")
    try:
        cls = MODEL_TYPES[state["type"]]
    except KeyError:
        raise CheckpointError(f"unknown model type {state.get('type')!r}") from None
    return cls.from_state(state)


__all__ = [
    "LogisticPosterior",
    "MarginalMean",
    "TreeEnsemble",
    "dump_model",
    "fit_forest",
    "fit_map",
    "load_model",
    "sigmoid",
    "sigmoid_array",
]

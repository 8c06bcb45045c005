"""Capacity-constrained contextual assignment of tasks to agents."""
__version__ = "0.1.0"

from .capacity import QueueBank
from .domain import CapacityProfile, TaskLog, load_task_log, permute_log, validate_capacity_profile
from .policy import ModelParams, PolicyKind

__all__ = [
    "CapacityProfile",
    "ModelParams",
    "PolicyKind",
    "QueueBank",
    "TaskLog",
    "__version__",
    "load_task_log",
    "permute_log",
    "validate_capacity_profile",
]

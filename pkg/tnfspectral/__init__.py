from enum import Enum
from typing import Any, Callable

__all__ = [
    "AFFINITY_REGISTRY",
    "AffinityMethod",
    "register_affinity",
]


class AffinityMethod(str, Enum):
    GAUSSIAN = "gaussian"
    CNN = "cnn"
    SELF_TUNING = "self-tuning"
    TNF1 = "tnf1"
    TNF2 = "tnf2"
    COMPOSED = "composed"

    def __str__(self) -> str:
        """
        String representation of the affinity method.

        Returns:
            Affinity method name as a lower-case string.

        """
        return self.value

    @property
    def uses_sigma(self) -> bool:
        """Whether the kernel depends on the global Gaussian scale `sigma`."""
        return self is not AffinityMethod.SELF_TUNING

    @property
    def uses_graph(self) -> bool:
        """Whether the kernel needs the epsilon-neighborhood graph (and its TNFs)."""
        return self in (AffinityMethod.CNN, AffinityMethod.TNF1, AffinityMethod.TNF2, AffinityMethod.COMPOSED)


AFFINITY_REGISTRY = {}


def register_affinity(method: AffinityMethod) -> Callable[..., Any]:
    """
    Decorator to register an affinity builder into the global registry.

    A builder receives a `GraphContext`, the Gaussian scale `sigma` and keyword parameters, and returns
    an `AffinityMatrix`. Registered builders are looked up by the pipeline and the sigma sweep.

    Args:
        method: The affinity method enum value to associate the function with.

    Returns:
        The original function, now registered in the AFFINITY_REGISTRY dictionary.

    """

    def decorator(func: Any) -> Any:
        AFFINITY_REGISTRY[method] = func
        return func

    return decorator

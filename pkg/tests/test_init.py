from typing import Any
from unittest.mock import patch

from tnfspectral import AFFINITY_REGISTRY, AffinityMethod, register_affinity


class TestBase:
    def test_affinity_method_enum_str_conversion(self):
        """Verify that the Enum returns its value when cast to string."""
        method = AffinityMethod.SELF_TUNING
        assert str(method) == "self-tuning"
        assert f"{method}" == "self-tuning"
        assert AffinityMethod("tnf2") is AffinityMethod.TNF2

    def test_uses_sigma(self):
        """Only the self-tuning kernel works without the global scale."""
        assert not AffinityMethod.SELF_TUNING.uses_sigma
        assert all(method.uses_sigma for method in AffinityMethod if method is not AffinityMethod.SELF_TUNING)

    def test_uses_graph(self):
        """Kernels built on neighborhoods need the epsilon-graph."""
        assert AffinityMethod.TNF1.uses_graph
        assert AffinityMethod.CNN.uses_graph
        assert not AffinityMethod.GAUSSIAN.uses_graph
        assert not AffinityMethod.SELF_TUNING.uses_graph

    def test_register_affinity_decorator(self):
        """Verify the decorator correctly populates the AFFINITY_REGISTRY."""
        method = AffinityMethod.COMPOSED

        with patch.dict(AFFINITY_REGISTRY, clear=True):

            @register_affinity(method)
            def mock_builder(context: Any, sigma: Any) -> Any:
                return "success"

            assert method in AFFINITY_REGISTRY
            assert AFFINITY_REGISTRY[method] == mock_builder
            # the decorator returns the function unchanged
            assert mock_builder(None, None) == "success"

    def test_enum_uniqueness(self):
        """Ensure no two enum members have the same value."""
        values = [member.value for member in AffinityMethod]
        assert len(values) == len(set(values)), "Duplicate values found in AffinityMethod enum"

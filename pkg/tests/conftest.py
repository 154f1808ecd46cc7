"""Shared generated-distribution fixtures (session-scoped: generation is slow)."""

import pytest

from hetfx.dgp import DGPConfig, generate


@pytest.fixture(scope="session")
def order3_true_batch():
    """100 interaction-order-3 distributions with treatment interactions."""
    return [
        generate(DGPConfig(inter_order=3, tx_inter=True, seed=9000 + i))
        for i in range(100)
    ]


@pytest.fixture(scope="session")
def order3_false_batch():
    """50 interaction-order-3 distributions without treatment interactions."""
    return [
        generate(DGPConfig(inter_order=3, tx_inter=False, seed=9500 + i))
        for i in range(50)
    ]


@pytest.fixture(scope="session")
def order1_true_small():
    """5 interaction-order-1 distributions with treatment interactions."""
    return [
        generate(DGPConfig(inter_order=1, tx_inter=True, seed=9800 + i))
        for i in range(5)
    ]

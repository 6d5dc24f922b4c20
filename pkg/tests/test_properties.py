"""Algebraic identities on random expressions drawn through hypothesis.

The acceptance suite runs the same checks on 500 fixed seeds each; here
hypothesis supplies the randomness so failures shrink to a small seed.
"""
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _cases import PROPERTIES


@pytest.mark.parametrize("name", sorted(PROPERTIES))
def test_identity(name):
    check = PROPERTIES[name]

    @settings(max_examples=60, deadline=None, derandomize=True)
    @given(st.randoms(use_true_random=False))
    def run(rng):
        assert check(rng) == 0

    run()

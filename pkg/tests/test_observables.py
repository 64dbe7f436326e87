import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from etac.observables import DEFAULT_DICTIONARY, InvalidInputError, ObservableDictionary, lift, project

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


def test_lift_examples():
    assert lift(0.0).tolist() == [0.0, 0.0]
    np.testing.assert_allclose(lift(-0.3), [-0.3, 0.09], rtol=0, atol=1e-15)
    assert lift(1.0).tolist() == [1.0, 1.0]


def test_project_examples():
    assert project([0.0, 0.0]) == 0.0
    assert project([-0.3, 0.09]) == -0.3


def test_higher_degree_monomials_in_order():
    d = ObservableDictionary(4)
    assert d.lifted_dim == 4
    np.testing.assert_allclose(d.lift(2.0), [2.0, 4.0, 8.0, 16.0])


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_lift_rejects_non_finite(bad):
    with pytest.raises(InvalidInputError):
        lift(bad)


def test_project_rejects_wrong_length():
    with pytest.raises(ValueError):
        DEFAULT_DICTIONARY.project([1.0, 2.0, 3.0])


def test_invalid_degree():
    with pytest.raises(ValueError):
        ObservableDictionary(0)


def test_output_matrix_selects_first_coordinate():
    C = DEFAULT_DICTIONARY.output_matrix()
    assert C.tolist() == [[1.0, 0.0]]


@given(finite)
def test_round_trip_is_bitwise(x):
    z = DEFAULT_DICTIONARY.lift(x)
    assert DEFAULT_DICTIONARY.project(z) == x
    assert z[0] == x


@given(finite)
def test_lift_is_deterministic(x):
    assert np.array_equal(lift(x), lift(x))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsemimarkov.functions import CombinedFn, ComplexRate, ScalarFn, TimeGrid, combine


def test_grid_basics():
    g = TimeGrid(0.25, 8)
    assert len(g) == 9
    assert g.horizon == 2.0
    assert np.abs(g.times - np.linspace(0, 2, 9)).max() < 1e-15
    assert g.index_of(1.5) == 6
    assert g.refined(2).steps == 16 and g.refined(2).h == 0.125
    assert TimeGrid.from_horizon(5.0, 1e-3).steps == 5000


@pytest.mark.parametrize("h, steps", [(0.0, 3), (-1.0, 3), (0.1, 0)])
def test_grid_rejects_bad_input(h, steps):
    with pytest.raises(ValueError):
        TimeGrid(h, steps)


def test_grid_off_grid_time():
    with pytest.raises(ValueError):
        TimeGrid(0.1, 10).index_of(0.05)
    with pytest.raises(ValueError):
        TimeGrid.from_horizon(1.0, 0.3)


def test_evaluation_of_each_representation():
    tau = np.array([0.0, 0.5, 2.0])
    assert np.all(ScalarFn.constant(3.0)(tau) == 3.0)
    e = ScalarFn.exponential_sum([(2.0, 1.0), (-1.0, 3.0)])
    ref = 2 * np.exp(-tau) - np.exp(-3 * tau)
    assert np.abs(e(tau) - ref).max() < 1e-15
    tab = ScalarFn.tabulated([1.0, 3.0, 2.0], 0.5)
    assert np.abs(tab(np.array([0.25, 0.75, 1.0, 1.2])) - [2.0, 2.5, 2.0, 0.0]).max() < 1e-15
    assert isinstance(e(0.3), float)


def test_negative_lag_rejected():
    for f in (ScalarFn.constant(1), ScalarFn.exponential(1, 1), ScalarFn.tabulated([1, 2], 0.1)):
        with pytest.raises(ValueError):
            f(-0.1)


def test_modes_and_zero():
    assert ScalarFn.zero().is_zero
    assert ScalarFn.exponential(0.0, 2.0).is_zero
    assert ScalarFn.constant(2).exponential_modes() == [(2.0, 0.0)]
    assert ScalarFn.tabulated([1.0], 0.1).exponential_modes() is None
    with pytest.raises(ValueError):
        ScalarFn.exponential(1.0, -1.0)


@pytest.mark.parametrize("f", [
    ScalarFn.constant(1.5),
    ScalarFn.exponential_sum([(1.0, 2.0), (0.5, 0.0)]),
    ScalarFn.tabulated([0.0, 1.0, 0.5], 0.01),
])
def test_dict_round_trip(f):
    assert ScalarFn.from_dict(f.to_dict()) == f


def test_combine_simplifies():
    c = combine([(2.0, ScalarFn.exponential(1.0, 3.0)), (1.0, ScalarFn.constant(1.0)),
                 (-1.0, ScalarFn.exponential(2.0, 3.0))])
    assert c.tag == "exponential-sum"
    assert sorted(c.terms, key=lambda t: t[1]) == [(1.0, 0.0), (0.0, 3.0)]
    mixed = combine([(1.0, ScalarFn.tabulated([1, 1], 0.1)), (1.0, ScalarFn.exponential(1.0, 1.0))])
    assert isinstance(mixed, CombinedFn)
    assert abs(mixed(0.05) - (1 + np.exp(-0.05))) < 1e-14
    # nested combined parts are flattened
    again = combine([(2.0, mixed)])
    assert abs(again(0.05) - 2 * mixed(0.05)) < 1e-14
    assert combine([]).is_zero


def test_complex_rate():
    z = ComplexRate(ScalarFn.exponential(2.0, 1.0), ScalarFn.constant(0.5))
    assert abs(z(0.0) - (1.0 + 0.5j)) < 1e-15
    assert abs(z.conj()(0.0) - (1.0 - 0.5j)) < 1e-15
    w = z + z.conj()
    assert abs(w(0.3) - 2 * np.exp(-0.3)) < 1e-14
    modes = dict((g, a) for a, g in z.exponential_modes())
    assert modes[1.0] == 1.0 and modes[0.0] == 0.5j


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(0, 5)), min_size=1, max_size=4),
       st.floats(-2, 2), st.floats(0, 4))
def test_combine_is_linear(terms, w, tau):
    f = ScalarFn.exponential_sum(terms)
    g = ScalarFn.constant(0.7)
    h = combine([(w, f), (1.0, g)])
    assert abs(h(tau) - (w * f(tau) + g(tau))) < 1e-10

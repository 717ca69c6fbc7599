import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selftrap.trace import TransmissionTrace, average_traces, extract_trapping_time


def make_trace(t, p, **kw):
    z = np.zeros_like(t)
    return TransmissionTrace(t, p, z, z, empty_level=1.0, **kw)


def test_exponential_decay_half_time():
    t = np.linspace(0, 60, 60001)
    p = 1.0 + 4.0 * np.exp(-t / 3.0)
    tau = extract_trapping_time(make_trace(t, p))
    assert tau == pytest.approx(3.0 * np.log(2), abs=1e-4)


def test_maximum_after_transient():
    t = np.linspace(0, 20, 2001)
    p = np.where(t < 2, 10.0, 1.0 + 3.0 * np.exp(-(t - 2)))
    # without a search window the plateau is taken as the maximum
    assert extract_trapping_time(make_trace(t, p)) == pytest.approx(2.0, abs=0.01)
    tau = extract_trapping_time(make_trace(t, p, search_from=2.0))
    assert tau == pytest.approx(np.log(2), abs=1e-3)


def test_flat_trace_has_no_trapping_time():
    t = np.linspace(0, 10, 101)
    assert extract_trapping_time(make_trace(t, np.ones(101))) is None


def test_never_decays():
    t = np.linspace(0, 10, 101)
    p = np.concatenate([np.ones(50), 1 + np.linspace(0, 1, 51)])
    assert extract_trapping_time(make_trace(t, p)) is None


def test_mismatched_grids_rejected():
    a = make_trace(np.linspace(0, 1, 5), np.ones(5))
    b = make_trace(np.linspace(0, 1.1, 5), np.ones(5))
    with pytest.raises(ValueError):
        average_traces([a, b])
    with pytest.raises(ValueError):
        average_traces([])


def test_average_is_pointwise_mean():
    t = np.linspace(0, 1, 4)
    a = make_trace(t, np.array([1.0, 2, 3, 4]))
    b = make_trace(t, np.array([3.0, 2, 1, 0]))
    m = average_traces([a, b])
    np.testing.assert_allclose(m.photon_number, 2.0)
    assert m.meta["n_traces"] == 2


def test_invalid_trace():
    with pytest.raises(ValueError):
        make_trace(np.arange(3.0), np.array([1.0, -1.0, 0.0]))
    with pytest.raises(ValueError):
        make_trace(np.arange(3.0), np.ones(2))


def test_normalized_without_reference_is_nan():
    z = np.zeros(3)
    tr = TransmissionTrace(np.arange(3.0), np.ones(3), z, z)
    assert np.all(np.isnan(tr.transmission_norm))


@settings(max_examples=50, deadline=None)
@given(scale=st.floats(0.1, 1e4), offset=st.floats(0.0, 1e3), tau=st.floats(0.5, 5.0))
def test_extraction_invariant_under_affine_scaling(scale, offset, tau):
    t = np.linspace(0, 40, 4001)
    base = 1.0 + np.exp(-t / tau)
    a = extract_trapping_time(make_trace(t, base))
    b = extract_trapping_time(make_trace(t, scale * base + offset))
    assert b == pytest.approx(a, rel=1e-9)

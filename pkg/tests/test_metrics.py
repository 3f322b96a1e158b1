import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowkit import oracles
from flowkit.metrics import endpoint_error, error_rate, evaluate


def test_three_four_five():
    pred = np.zeros((2, 2, 2))
    truth = np.zeros((2, 2, 2))
    truth[..., 0], truth[..., 1] = 3, 4
    epe, mean = endpoint_error(pred, truth)
    assert np.all(epe == 5) and mean == 5


def test_relative_guard_on_large_motion():
    truth = np.zeros((1, 2, 2))
    truth[..., 0] = 100
    pred = truth.copy()
    pred[0, 0, 0] += 4.0  # 4 px but only 4% of 100
    pred[0, 1, 0] += 6.0  # 6 px and 6%
    assert error_rate(pred, truth) == 0.5


def test_valid_mask_and_noc_subset():
    rng = np.random.default_rng(0)
    pred, truth = rng.normal(size=(6, 6, 2)), rng.normal(size=(6, 6, 2))
    valid = np.ones((6, 6))
    valid[0] = 0
    noc = np.ones((6, 6))
    noc[:, 0] = 0
    res = evaluate(pred, truth, valid, noc)
    epe = np.hypot(*(pred - truth).transpose(2, 0, 1))
    assert res.epe_all == pytest.approx(epe[1:].mean())
    assert res.epe_noc == pytest.approx(epe[1:, 1:].mean())
    assert res.pixel_count == 30
    assert any(line.startswith("epe_all=") for line in res.lines())


@given(st.integers(0, 2**31 - 1))
def test_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    pred = rng.normal(0, 5, (5, 7, 2))
    truth = rng.normal(0, 5, (5, 7, 2))
    valid = rng.random((5, 7)) < 0.8
    valid[0, 0] = True
    assert endpoint_error(pred, truth, valid)[1] == pytest.approx(oracles.endpoint_error(pred, truth, valid))
    assert error_rate(pred, truth, valid) == pytest.approx(oracles.error_rate(pred, truth, valid))


def test_errors():
    z = np.zeros((3, 3, 2))
    with pytest.raises(ValueError, match="no valid"):
        endpoint_error(z, z, np.zeros((3, 3)))
    with pytest.raises(ValueError, match="differ"):
        error_rate(z, np.zeros((3, 4, 2)))
    with pytest.raises(ValueError, match="valid mask"):
        evaluate(z, z, np.ones((2, 2)))

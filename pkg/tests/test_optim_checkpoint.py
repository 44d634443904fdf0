import numpy as np
import pytest

from motionlift.checkpoint import load_params, save_params
from motionlift.errors import ConfigError, DataError, NumericError
from motionlift.optim import AdamState, adam_step
from motionlift.rng import SeededRng
from motionlift.tensor import Tensor


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = {"w": Tensor(np.array([1.0, -2.0]), requires_grad=True)}
        state = AdamState(lr=0.1)
        adam_step(p, {"w": np.zeros(2)}, state)
        assert np.array_equal(p["w"].data, [1.0, -2.0])
        assert state.t == 1

    def test_first_step_is_minus_lr(self):
        # Bias correction makes mhat = g, vhat = g^2 at t=1, so the update is
        # -lr * g / (|g| + eps).
        p = {"w": Tensor(np.array(3.0), requires_grad=True)}
        state = AdamState(lr=0.05)
        adam_step(p, {"w": np.array(1.0)}, state)
        assert abs(float(p["w"].data) - (3.0 - 0.05)) <= 1e-8

    def test_converges_on_quadratic(self):
        p = {"x": Tensor(np.array(5.0), requires_grad=True)}
        state = AdamState(lr=0.1)
        for _ in range(100):
            g = 2.0 * p["x"].data
            adam_step(p, {"x": g}, state)
        assert abs(float(p["x"].data)) < 0.5

    def test_nan_grad_aborts_naming_param(self):
        p = {
            "a": Tensor(np.array(1.0), requires_grad=True),
            "b": Tensor(np.array(2.0), requires_grad=True),
        }
        state = AdamState(lr=0.1)
        with pytest.raises(NumericError, match="'b'"):
            adam_step(p, {"a": np.array(1.0), "b": np.array(np.nan)}, state)
        # whole step aborted: 'a' untouched, t not advanced
        assert float(p["a"].data) == 1.0
        assert state.t == 0

    def test_bad_lr_rejected(self):
        with pytest.raises(ConfigError):
            AdamState(lr=0.0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = SeededRng(9)
        params = {
            "enc.w": Tensor(rng.normal((3, 4))),
            "enc.b": Tensor(rng.normal((4,))),
            "head": Tensor(rng.normal((2, 2, 2))),
        }
        stem = tmp_path / "ckpt"
        save_params(stem, params)
        loaded = load_params(stem)
        assert list(loaded) == list(params)
        for name in params:
            assert np.array_equal(loaded[name], params[name].data)

    def test_truncated_blob_rejected(self, tmp_path):
        stem = tmp_path / "ckpt"
        save_params(stem, {"w": Tensor(np.ones(4))})
        blob = stem.with_suffix(".bin").read_bytes()
        stem.with_suffix(".bin").write_bytes(blob[:-8])
        with pytest.raises(DataError):
            load_params(stem)

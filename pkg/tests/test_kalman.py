import numpy as np
import pytest

from straintc.kalman import KalmanSpec, _forward_pass, _resolve_variances, kalman_denoise, kalman_denoise_series
from straintc.phantom import StrainStack


def test_constant_signal_convergence():
    z = np.full(300, 0.02)
    out = kalman_denoise_series(z, KalmanSpec(measurement_noise_var=1e-6,
                                              process_noise_var=1e-9))
    err = np.abs(out - 0.02)
    assert np.all(np.diff(err) <= 1e-15)  # error never grows
    assert err[-1] < 1e-6


def test_large_process_noise_trusts_measurements():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(200)
    out = kalman_denoise_series(z, KalmanSpec(measurement_noise_var=1e-4,
                                              process_noise_var=1e4))
    assert np.allclose(out, z, rtol=0, atol=1e-6)


def test_variance_reduction_on_white_noise():
    # 10^4 independent realizations, auto variances: the smoother must shrink
    # zero-mean white noise
    rng = np.random.default_rng(1)
    z = rng.standard_normal((10_000, 60))
    out = kalman_denoise_series(z)
    assert out.var() < z.var()
    assert out.var() < 0.9 * z.var()


def test_linearity_with_explicit_variances():
    rng = np.random.default_rng(2)
    spec = KalmanSpec(measurement_noise_var=1e-3, process_noise_var=1e-5)
    x = rng.standard_normal(120)
    y = rng.standard_normal(120)
    a, b = 1.7, -0.4
    combined = kalman_denoise_series(a * x + b * y, spec)
    parts = a * kalman_denoise_series(x, spec) + b * kalman_denoise_series(y, spec)
    assert np.allclose(combined, parts, rtol=1e-9, atol=1e-12)


def test_output_finite():
    rng = np.random.default_rng(3)
    z = rng.standard_normal((50, 80)) * 1e-4
    out = kalman_denoise_series(z)
    assert np.all(np.isfinite(out))


def test_window_one_is_causal_filter():
    rng = np.random.default_rng(4)
    z = rng.standard_normal((7, 90))
    spec = KalmanSpec(window_len=1, measurement_noise_var=0.5, process_noise_var=0.01)
    out = kalman_denoise_series(z, spec)
    R, Q = _resolve_variances(z, spec)
    xf, _, _ = _forward_pass(z, R, Q)
    assert np.array_equal(out, xf)


def test_window_limits_lookahead():
    # the smoothed value at frame k must not depend on measurements past
    # k + window_len - 1
    rng = np.random.default_rng(5)
    z = rng.standard_normal(100)
    spec = KalmanSpec(window_len=13, measurement_noise_var=0.2, process_noise_var=0.02)
    base = kalman_denoise_series(z, spec)
    z2 = z.copy()
    k = 40
    z2[k + 13:] += 5.0
    out = kalman_denoise_series(z2, spec)
    assert np.array_equal(out[:k + 1], base[:k + 1])
    assert not np.allclose(out[k + 1:], base[k + 1:])


def test_longer_window_smooths_more():
    rng = np.random.default_rng(6)
    z = rng.standard_normal((2000, 80))
    spec1 = KalmanSpec(window_len=1, measurement_noise_var=1.0, process_noise_var=0.05)
    spec13 = KalmanSpec(window_len=13, measurement_noise_var=1.0, process_noise_var=0.05)
    assert kalman_denoise_series(z, spec13).var() < kalman_denoise_series(z, spec1).var()


def test_stack_wrapper_preserves_shape_and_time():
    rng = np.random.default_rng(7)
    stack = StrainStack(rng.standard_normal((30, 5, 4)) * 1e-3, 0.25, "incremental")
    out = kalman_denoise(stack)
    assert out.frames.shape == (30, 5, 4)
    assert out.sample_time_s == 0.25
    assert out.kind == "incremental"
    # per-pixel operation: one pixel's series run alone matches the stack run
    series = kalman_denoise_series(stack.frames[:, 2, 1])
    assert np.allclose(out.frames[:, 2, 1], series, rtol=1e-12, atol=0)


def test_spec_validation():
    with pytest.raises(ValueError):
        KalmanSpec(window_len=0)
    with pytest.raises(ValueError):
        KalmanSpec(measurement_noise_var=-1.0)
    with pytest.raises(ValueError):
        KalmanSpec(process_noise_var=0.0)


def test_constant_input_auto_variances():
    # var(diff) = 0 floors internally instead of dividing by zero
    out = kalman_denoise_series(np.full(50, 3.3))
    assert np.allclose(out, 3.3, rtol=0, atol=1e-12)

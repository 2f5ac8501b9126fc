import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from smalltarget.early_vision import (
    EarlyVisionConfig,
    EarlyVisionState,
    early_vision_step,
    lamina_step,
    medulla_step,
    rectify,
    retina_step,
)
from smalltarget.kernels import GammaSpec, make_gaussian, make_lmc_filter, sample_gamma

from . import oracles


def test_defaults_follow_parameter_table():
    cfg = EarlyVisionConfig()
    assert cfg.sigma1 == 1.0
    assert cfg.lmc_fast == GammaSpec(2, 3.0) and cfg.lmc_slow == GammaSpec(6, 9.0)
    assert cfg.stmd_delay == GammaSpec(5, 25.0)
    assert cfg.lptc_delay == GammaSpec(25, 30.0)


def test_retina_constant_and_impulse():
    np.testing.assert_allclose(retina_step(np.full((9, 9), 100.0)), 100.0, atol=1e-6)
    img = np.zeros((11, 11))
    img[5, 5] = 255.0
    out = retina_step(img)
    k = make_gaussian(1.0).weights
    np.testing.assert_allclose(out, oracles.convolve2d_replicate(img, k), rtol=1e-12, atol=1e-12)
    assert out[5, 5] == pytest.approx(255.0 * k[3, 3])


def test_lamina_static_video_decays_to_zero():
    state = EarlyVisionState(EarlyVisionConfig(), (6, 6))
    n = state.lmc.support_len
    for t in range(n + 3):
        L = lamina_step(state, np.full((6, 6), 80.0))
    assert np.abs(L).max() < 1e-6


def test_lamina_step_increase_is_positive():
    state = EarlyVisionState(EarlyVisionConfig(), (3, 3))
    for _ in range(state.lmc.support_len):
        lamina_step(state, np.full((3, 3), 50.0))
    out = [lamina_step(state, np.full((3, 3), 150.0))[1, 1] for _ in range(4)]
    assert all(v > 0 for v in out[1:])


def test_lamina_matches_fir_oracle():
    rng = np.random.default_rng(4)
    frames = rng.uniform(0, 255, size=(10, 4, 5))
    state = EarlyVisionState(EarlyVisionConfig(), (4, 5))
    taps = make_lmc_filter(GammaSpec(2, 3.0), GammaSpec(6, 9.0), 1.0).taps
    want = oracles.fir_stream(frames, taps)
    for t, f in enumerate(frames):
        np.testing.assert_allclose(lamina_step(state, f), want[t], rtol=0, atol=1e-10)


def test_medulla_rectification():
    state = EarlyVisionState(EarlyVisionConfig(), (3, 4))
    L = -np.arange(1.0, 13.0).reshape(3, 4)
    med = medulla_step(state, L)
    assert np.all(med.tm3 == 0)
    np.testing.assert_array_equal(med.tm2, -L)


def test_zero_stream_gives_zero_outputs():
    state = EarlyVisionState(EarlyVisionConfig(), (3, 3))
    for _ in range(5):
        med = medulla_step(state, np.zeros((3, 3)))
    for arr in (med.tm3, med.tm2, med.tm1_stmd, med.tm1_lptc, med.mi1_lptc):
        assert np.all(arr == 0)


def test_tm1_impulse_peaks_at_delay():
    state = EarlyVisionState(EarlyVisionConfig(), (1, 1))
    resp = []
    for t in range(150):
        L = np.array([[-1.0]]) if t == 0 else np.zeros((1, 1))
        resp.append(medulla_step(state, L).tm1_stmd[0, 0])
    # [DERIVED] argmax of the sampled Gamma(5, 25) taps
    taps = sample_gamma(GammaSpec(5, 25.0), 1.0).taps
    assert abs(int(np.argmax(resp)) - int(np.argmax(taps))) <= 2
    assert abs(int(np.argmax(resp)) - 25) <= 2


def test_static_sequence_converges_to_zero():
    state = EarlyVisionState(EarlyVisionConfig(), (8, 8))
    img = np.random.default_rng(5).uniform(0, 255, size=(8, 8))
    for _ in range(state.warmup_frames + state.lmc.support_len + 2):
        _, _, med = early_vision_step(state, img)
    for arr in (med.tm3, med.tm2, med.tm1_stmd, med.tm1_lptc, med.mi1_lptc):
        assert np.abs(arr).max() < 1e-6
    assert not state.warming_up


def test_shape_mismatch_rejected():
    state = EarlyVisionState(EarlyVisionConfig(), (4, 4))
    with pytest.raises(ValueError):
        early_vision_step(state, np.zeros((4, 5)))


@settings(max_examples=15, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(2, 6), st.integers(2, 6)),
              elements=st.floats(0, 255, allow_nan=False)))
def test_property_channel_invariants(frames):
    state = EarlyVisionState(EarlyVisionConfig(), frames.shape[1:])
    for f in frames:
        _, L, med = early_vision_step(state, f)
        assert np.all(med.tm3 * med.tm2 == 0)
        np.testing.assert_array_equal(med.tm3 - med.tm2, L)
        for arr in (med.tm1_stmd, med.tm1_lptc, med.mi1_lptc):
            assert np.all(arr >= 0)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_property_rectify_splits(L):
    on, off = rectify(L)
    assert np.all(on >= 0) and np.all(off >= 0)
    np.testing.assert_array_equal(on - off, L)

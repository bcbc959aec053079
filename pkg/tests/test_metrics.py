import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anchorpipe.core import AU_DIM, AUPSVector, FrameImage
from anchorpipe.errors import EmptyInputError, EvaluationError, ShapeError
from anchorpipe.metrics import (SampleMetrics, aggregate, au_mse, format_metric, psnr, score_sample, ssim,
                                temporal_l1)


def _frame(value: float, size: int = 8) -> FrameImage:
    return FrameImage(np.full((size, size, 3), value, dtype=np.float32))


def _noise(seed: int, size: int = 16) -> FrameImage:
    rng = np.random.default_rng(seed)
    return FrameImage(rng.uniform(-1, 1, size=(size, size, 3)).astype(np.float32))


def test_identical_frames():
    f = _noise(0)
    assert psnr(f, f) == math.inf
    assert ssim(f, f) == pytest.approx(1.0)
    assert temporal_l1([f, f, f], [f, f, f]) == 0.0


def test_psnr_uses_a_peak_to_peak_of_two():
    # mse = 0.25 → 10 log10(4 / 0.25)
    assert psnr(_frame(0.0), _frame(0.5)) == pytest.approx(10 * math.log10(16.0))
    assert psnr(_frame(-1.0), _frame(1.0)) == pytest.approx(0.0)


@given(st.floats(-1.0, 1.0), st.floats(0.01, 1.0))
def test_psnr_matches_the_closed_form(base, delta):
    other = max(-1.0, base - delta) if base + delta > 1.0 else base + delta
    a, b = _frame(base), _frame(other)
    mse = float(np.mean((a.pixels.astype(np.float64) - b.pixels.astype(np.float64)) ** 2))
    assert psnr(a, b) == pytest.approx(10 * math.log10(4.0 / mse))


def test_ssim_needs_a_full_window():
    with pytest.raises(ShapeError):
        ssim(_frame(0.0, 6), _frame(0.0, 6))
    with pytest.raises(ShapeError):
        psnr(_frame(0.0, 8), _frame(0.0, 9))


def test_ssim_drops_for_unrelated_frames():
    assert ssim(_noise(1), _noise(2)) < 0.2


def test_temporal_l1_on_a_single_frame_is_zero():
    assert temporal_l1([_noise(0)], [_noise(1)]) == 0.0
    with pytest.raises(EmptyInputError):
        temporal_l1([], [])


def test_temporal_l1_compares_motion_not_content():
    a = [_frame(0.0), _frame(0.2)]
    b = [_frame(0.5), _frame(0.7)]
    assert temporal_l1(a, b) == pytest.approx(0.0, abs=1e-7)
    assert temporal_l1(a, [_frame(0.5), _frame(0.5)]) == pytest.approx(0.2, abs=1e-7)


def test_au_mse_aligns_to_the_shorter_sequence():
    z = AUPSVector.zeros()
    one = AUPSVector(tuple([1.0] * AU_DIM), (0.0, 0.0, 0.0), True)
    assert au_mse([z, z, one], [z, z]) == 0.0
    assert au_mse([one], [z, z]) == pytest.approx(AU_DIM / 20)
    with pytest.raises(EvaluationError):
        au_mse([], [z])
    with pytest.raises(EvaluationError):
        au_mse([AUPSVector.zeros(normalized=False)], [z])


def test_format_metric():
    assert format_metric(math.inf) == "inf"
    assert format_metric(0.5) == "0.500000"


def test_score_and_aggregate():
    z = AUPSVector.zeros()
    frames = [_noise(i) for i in range(3)]
    same = score_sample("s0", [z] * 3, [z] * 3, frames, frames)
    assert same.psnr_db == math.inf and same.au_mse == 0.0 and same.temporal_l1 == 0.0
    noisy = score_sample("s1", [z] * 2, [z] * 3, [_noise(9), _noise(8)], frames)
    assert (noisy.frames_pred, noisy.frames_true) == (2, 3)
    assert math.isfinite(noisy.psnr_db)

    report = aggregate([same, noisy])
    assert report.psnr_db == noisy.psnr_db
    assert (same.psnr_identical, noisy.psnr_identical, report.psnr_identical) == (3, 0, 3)
    assert report.ssim == pytest.approx((same.ssim + noisy.ssim) / 2)
    assert aggregate([same]).psnr_db == math.inf
    with pytest.raises(EvaluationError):
        aggregate([])


def test_sample_metrics_dict_keys():
    m = SampleMetrics("s", 1, 1, 0.0, 1.0, 1.0, 0.0)
    assert list(m.as_dict()) == ["id", "frames_pred", "frames_true", "au_mse", "psnr_db", "psnr_identical", "ssim",
                                 "temporal_l1"]


def test_identical_frames_are_counted_and_left_out_of_the_mean():
    z = AUPSVector.zeros()
    truth = [_noise(i) for i in range(3)]
    pred = [truth[0], _noise(7), truth[2]]
    m = score_sample("s", [z] * 3, [z] * 3, pred, truth)
    assert m.psnr_identical == 2
    assert m.psnr_db == pytest.approx(psnr(pred[1], truth[1]))

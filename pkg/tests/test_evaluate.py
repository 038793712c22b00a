import numpy as np
import pytest

from straintc.degrade import NoiseSpec, add_noise, place_bad_frames
from straintc.evaluate import (DetectorConfig, compute_pre, detect_bad_frames,
                               format_grid_table, region_masks, run_grid)
from straintc.fit import TCImage
from straintc.phantom import StrainStack, preset, synth_incremental, tau_map


def image(tau, truth, converged=None):
    tau = np.asarray(tau, dtype=float)
    conv = np.ones(tau.shape, bool) if converged is None else converged
    return TCImage(tau, conv, np.asarray(truth, dtype=float))


def disk_mask(h, w, r):
    y, x = np.ogrid[:h, :w]
    return (y - (h - 1) / 2) ** 2 + (x - (w - 1) / 2) ** 2 < r ** 2


def test_pre_identity_is_exactly_zero():
    truth = np.where(disk_mask(16, 16, 4), 4.66, 11.42)
    tc = image(truth.copy(), truth)
    inc = disk_mask(16, 16, 4)
    for region in ("inclusion", "background", "whole"):
        assert compute_pre(tc, region, inc).pre_percent == 0.0


def test_pre_doubling_is_plus_100():
    inc = disk_mask(16, 16, 4)
    truth = np.where(inc, 4.66, 11.42)
    tc = image(np.where(inc, 2 * 4.66, 11.42), truth)
    assert compute_pre(tc, "inclusion", inc).pre_percent == pytest.approx(100.0)
    assert compute_pre(tc, "background", inc).pre_percent == 0.0


def test_pre_direct_arithmetic():
    inc = disk_mask(8, 8, 2)
    truth = np.full((8, 8), 4.0)
    tc = image(np.full((8, 8), 5.0), truth)
    r = compute_pre(tc, "background", inc)
    assert r.pre_percent == pytest.approx(25.0)
    assert r.mean_estimated_tau == pytest.approx(5.0)
    assert r.true_tau == pytest.approx(4.0)
    assert r.coverage == 1.0


def test_pre_sign_retained_per_region():
    inc = disk_mask(16, 16, 4)
    truth = np.where(inc, 4.0, 10.0)
    tc = image(np.where(inc, 3.0, 10.0), truth)
    assert compute_pre(tc, "inclusion", inc).pre_percent == pytest.approx(-25.0)
    # the whole-image summary combines absolute per-region errors
    whole = compute_pre(tc, "whole", inc)
    n_inc = inc.sum()
    expected = 25.0 * n_inc / inc.size
    assert whole.pre_percent == pytest.approx(expected)


def test_pre_excludes_non_converged_and_reports_coverage():
    inc = disk_mask(8, 8, 2)
    truth = np.full((8, 8), 4.0)
    tau = np.full((8, 8), 4.0)
    conv = np.ones((8, 8), bool)
    bg = ~inc
    idx = np.argwhere(bg)[:3]
    tau[tuple(idx.T)] = 400.0
    conv[tuple(idx.T)] = False  # garbage pixels are masked out
    r = compute_pre(image(tau, truth, conv), "background", inc)
    assert r.pre_percent == 0.0
    assert r.coverage == pytest.approx(1 - 3 / bg.sum())


def test_pre_empty_region_raises():
    inc = disk_mask(8, 8, 2)
    truth = np.full((8, 8), 4.0)
    conv = ~inc  # nothing converged inside the inclusion
    with pytest.raises(ValueError, match="empty region"):
        compute_pre(image(truth, truth, conv), "inclusion", inc)


def test_pre_requires_truth():
    tc = TCImage(np.ones((4, 4)), np.ones((4, 4), bool), None)
    with pytest.raises(ValueError, match="truth"):
        compute_pre(tc, "whole", disk_mask(4, 4, 1))


def tiny_grid(**kw):
    args = dict(samples=("A",), snrs=(60.0,), fractions=(0.75,), trials=2,
                seed=3, width=8, height=8)
    args.update(kw)
    return run_grid(**args)


def test_grid_shape_and_determinism():
    a = tiny_grid()
    b = tiny_grid()
    assert len(a) == 3 * 3  # 3 methods x 3 regions
    for ra, rb in zip(a, b):  # every field except wall time is reproducible
        assert (ra.sample, ra.method, ra.snr_db, ra.good_fraction, ra.region,
                ra.trials) == (rb.sample, rb.method, rb.snr_db,
                               rb.good_fraction, rb.region, rb.trials)
        assert ra.pre_mean == rb.pre_mean
        assert ra.pre_std == rb.pre_std
        assert ra.coverage == rb.coverage


def test_grid_parallel_matches_serial():
    serial = tiny_grid()
    parallel = tiny_grid(jobs=2)
    for rs, rp in zip(serial, parallel):
        assert (rs.sample, rs.method, rs.region) == (rp.sample, rp.method, rp.region)
        assert rs.pre_mean == rp.pre_mean
        assert rs.pre_std == rp.pre_std
        assert rs.coverage == rp.coverage


def test_grid_near_clean_round_trip():
    # all frames good at extreme SNR: every method is a near-identity and
    # PRE collapses
    res = run_grid(samples=("A",), methods=("noisy", "spline"), snrs=(120.0,),
                   fractions=(1.0,), trials=1, seed=0, width=8, height=8)
    for r in res:
        assert r.pre_mean < 0.1
        assert r.coverage == 1.0


def test_grid_map_callback():
    seen = []
    run_grid(samples=("A",), methods=("noisy",), snrs=(60.0,), fractions=(0.75,),
             trials=1, seed=0, width=8, height=8,
             map_callback=lambda *args: seen.append(args))
    assert len(seen) == 1
    sample, method, snr, fraction, tc = seen[0]
    assert (sample, method, snr, fraction) == ("A", "noisy", 60.0, 0.75)
    assert tc.tau_map.shape == (8, 8)


def test_grid_rejects_zero_trials():
    with pytest.raises(ValueError, match="trials"):
        tiny_grid(trials=0)


def test_format_grid_table():
    res = run_grid(samples=("A",), snrs=(30.0, 60.0), fractions=(0.5, 0.75),
                   trials=1, seed=1, width=8, height=8)
    table = format_grid_table(res, "A")
    lines = table.strip().splitlines()
    assert lines[0].startswith("Sample A")
    assert lines[1].split() == ["PGF", "(%)", "50", "75"]
    assert lines[2].split() == ["SNR", "(dB)", "30", "60", "30", "60"]
    assert [ln.split()[0] for ln in lines[3:]] == ["noisy", "kalman", "spline"]
    assert all(len(ln.split()) == 5 for ln in lines[3:])
    with pytest.raises(ValueError, match="no grid results"):
        format_grid_table(res, "B")


def test_region_masks_partition():
    spec = preset("A", width_px=16, height_px=16)
    inc, bg = region_masks(spec)
    assert np.array_equal(inc ^ bg, np.ones((16, 16), bool))
    assert np.array_equal(tau_map(spec) == 4.66, inc)


# ---------------------------------------------------------------------------
# bad-frame detector

def test_detector_clean_stack_all_good():
    stack = synth_incremental(preset("A", width_px=16, height_px=16))
    mask = detect_bad_frames(stack)
    assert mask.good.all()
    assert np.isnan(mask.applied_snr_db).all()


def test_detector_identical_frames_all_good():
    stack = StrainStack(np.full((40, 8, 8), 1e-3), 0.5, "incremental")
    assert detect_bad_frames(stack).good.all()


def test_detector_flags_pure_noise_frame():
    spec = preset("A", width_px=32, height_px=32, n_frames=80)
    clean = synth_incremental(spec)
    rng = np.random.default_rng(0)
    hits = 0
    trials = 100
    for _ in range(trials):
        frames = clean.frames.copy()
        # replace one interior frame with pure 0 dB noise; the first and last
        # frames have degenerate detection windows and are documented blind
        k = int(rng.integers(1, spec.n_frames - 1))
        sigma = np.sqrt(np.mean(frames[k] ** 2))
        frames[k] = rng.standard_normal(frames[k].shape) * sigma
        mask = detect_bad_frames(StrainStack(frames, 0.5, "incremental"))
        flagged = np.flatnonzero(~mask.good)
        if flagged.size and k in flagged:
            hits += 1
    assert hits / trials > 0.99


def test_detector_flags_bad_frames_in_noisy_stack():
    spec = preset("A", width_px=32, height_px=32)
    clean = synth_incremental(spec)
    ns = NoiseSpec(base_snr_db=60.0, good_frame_fraction=0.9, rng_seed=2)
    mask = place_bad_frames(spec.n_frames, ns)
    degraded = add_noise(clean, mask, ns)
    detected = detect_bad_frames(degraded)
    interior_bad = mask.bad_indices[(mask.bad_indices > 0)
                                    & (mask.bad_indices < spec.n_frames - 1)]
    found = set(detected.bad_indices)
    recall = np.mean([b in found for b in interior_bad])
    assert recall > 0.95
    # good frames adjacent to runs of bad frames may be flagged too (the
    # contaminated moving median pulls them over threshold); anything flagged
    # farther than the window half-width from a true bad frame is a real
    # false alarm
    half = 3
    stray = [f for f in detected.bad_indices
             if np.abs(mask.bad_indices - f).min() > half]
    assert not stray


def test_detector_validation():
    stack = StrainStack(np.zeros((5, 4, 4)), 0.5, "incremental")
    with pytest.raises(ValueError, match="at least 8"):
        detect_bad_frames(stack)
    with pytest.raises(ValueError):
        DetectorConfig(window_len=1)
    with pytest.raises(ValueError):
        DetectorConfig(threshold=-1.0)

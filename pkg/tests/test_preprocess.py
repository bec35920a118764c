"""Detector and windowing behavior against synthetic records with known peaks."""

import numpy as np
import pytest

from ecgvae.data import EcgRecord, RPeakList
from ecgvae.errors import DimensionError
from ecgvae.preprocess import (
    cut_segments,
    detect_r_peaks,
    extract_cycles,
    preprocess_records,
)
from ecgvae.synth import MorphologyParams, gen_corpus, gen_record


def match_counts(found: np.ndarray, truth: np.ndarray, tol: int = 10):
    """Greedy one-to-one matching within tol samples; returns (tp, fn, fp)."""
    used = np.zeros(found.size, dtype=bool)
    tp = 0
    for t in truth:
        d = np.abs(found - t)
        d[used] = tol + 1
        if d.size and d.min() <= tol:
            used[int(np.argmin(d))] = True
            tp += 1
    return tp, truth.size - tp, int((~used).sum())


class TestCutSegments:
    def test_splits_and_drops_tail(self):
        rec = EcgRecord(np.zeros((2, 5000), dtype=np.float32), 500.0, "r0")
        segs = cut_segments(rec, seconds=9.0)
        assert len(segs) == 1
        assert segs[0].n_samples == 4500
        assert segs[0].n_leads == 2
        assert segs[0].record_id == "r0#0"

    def test_multiple_segments(self):
        rec = EcgRecord(np.zeros((1, 14000), dtype=np.float32), 500.0, "r1")
        segs = cut_segments(rec, seconds=9.0)
        assert [s.record_id for s in segs] == ["r1#0", "r1#1", "r1#2"]

    def test_short_record_yields_nothing(self):
        rec = EcgRecord(np.zeros((1, 100), dtype=np.float32), 500.0)
        assert cut_segments(rec, seconds=9.0) == []

    def test_bad_length(self):
        rec = EcgRecord(np.zeros((1, 100), dtype=np.float32), 500.0)
        with pytest.raises(ValueError):
            cut_segments(rec, seconds=0.0)


class TestDetector:
    def test_clean_record_exact_recovery(self):
        record, truth = gen_record(MorphologyParams(heart_rate_bpm=72.0),
                                   duration_s=10.0)
        peaks = detect_r_peaks(record.leads[0], record.sampling_rate_hz)
        assert peaks.warning is None
        assert peaks.detector_name == "bandpass-mwi"
        tp, fn, fp = match_counts(peaks.indices, truth, tol=10)
        assert fn == 0 and fp == 0

    @pytest.mark.parametrize("bpm", [50.0, 60.0, 90.0, 120.0])
    def test_rate_sweep(self, bpm):
        record, truth = gen_record(MorphologyParams(heart_rate_bpm=bpm),
                                   duration_s=10.0)
        peaks = detect_r_peaks(record.leads[0], record.sampling_rate_hz)
        tp, fn, fp = match_counts(peaks.indices, truth, tol=10)
        assert fn == 0 and fp == 0

    def test_noisy_record(self):
        p = MorphologyParams(heart_rate_bpm=66.0, noise_std=0.05,
                             rr_jitter=0.05, seed=2)
        record, truth = gen_record(p, duration_s=10.0)
        peaks = detect_r_peaks(record.leads[0], record.sampling_rate_hz)
        tp, fn, fp = match_counts(peaks.indices, truth, tol=10)
        assert tp / truth.size >= 0.95
        assert tp / max(1, len(peaks)) >= 0.95

    def test_flat_lead_warns_instead_of_failing(self):
        peaks = detect_r_peaks(np.zeros(5000), 500.0)
        assert len(peaks) == 0
        assert peaks.warning is not None

    def test_peaks_strictly_increasing_and_refractory(self):
        record, _ = gen_record(MorphologyParams(heart_rate_bpm=90.0, rr_jitter=0.05,
                                                seed=8), duration_s=10.0)
        peaks = detect_r_peaks(record.leads[0], record.sampling_rate_hz)
        gaps = np.diff(peaks.indices)
        assert (gaps > 0).all()
        assert gaps.min() >= int(0.2 * record.sampling_rate_hz) * 0.8

    def test_short_lead_rejected(self):
        with pytest.raises(DimensionError):
            detect_r_peaks(np.zeros(400), 500.0)

    def test_bad_fs(self):
        with pytest.raises(ValueError):
            detect_r_peaks(np.zeros(5000), 0.0)


class TestExtractCycles:
    def test_window_bounds_and_skips(self):
        lead = np.arange(1000, dtype=np.float32)
        rows, skipped = extract_cycles(lead, np.array([100, 500, 950]),
                                       half_width=200, remove_baseline=False)
        # 100 - 200 < 0 and 950 + 200 > 1000 both cross the boundary
        assert skipped == 2
        assert rows.shape == (1, 400)
        np.testing.assert_array_equal(rows[0], lead[300:700])

    def test_baseline_removal_hand_value(self):
        lead = np.full(600, 3.0, dtype=np.float32)
        lead[300] = 5.0
        rows, _ = extract_cycles(lead, np.array([300]), half_width=100)
        # edge mean is 3.0, so the window drops to zero with a 2.0 spike
        assert np.isclose(rows[0][:10].mean(), 0.0, atol=1e-6)
        assert np.isclose(rows[0][100], 2.0, atol=1e-6)

    def test_no_baseline_keeps_offset(self):
        lead = np.full(600, 3.0, dtype=np.float32)
        rows, _ = extract_cycles(lead, np.array([300]), half_width=100,
                                 remove_baseline=False)
        assert rows[0][0] == 3.0

    def test_accepts_rpeaklist(self):
        lead = np.zeros(1000, dtype=np.float32)
        peaks = RPeakList(np.array([500]))
        rows, skipped = extract_cycles(lead, peaks)
        assert rows.shape == (1, 400) and skipped == 0

    def test_empty_peaks(self):
        rows, skipped = extract_cycles(np.zeros(1000, dtype=np.float32),
                                       np.array([], dtype=np.int64))
        assert rows.shape == (0, 400) and skipped == 0

    def test_bad_half_width(self):
        with pytest.raises(ValueError):
            extract_cycles(np.zeros(100), np.array([50]), half_width=0)


class TestPreprocessRecords:
    def test_pipeline_counts_and_meta(self):
        corpus = gen_corpus(3, seed=21, duration_s=10.0)
        records = [rec for rec, _ in corpus]
        cycles, meta, stats = preprocess_records(records)
        assert stats["records"] == 3
        assert stats["segments"] == 3  # one 9 s segment per 10 s record
        assert cycles.shape[0] == len(meta)
        assert cycles.shape[1] == 400
        assert cycles.dtype == np.float32
        # every 9 s segment at 50-90 bpm holds several beats; edge windows drop
        assert cycles.shape[0] >= 3 * 4
        assert all(rid.startswith("rec_") and "#" in rid for rid, _ in meta)

    def test_windows_are_r_centered(self):
        record, _ = gen_record(MorphologyParams(heart_rate_bpm=60.0), duration_s=10.0)
        cycles, meta, _ = preprocess_records([record])
        assert cycles.shape[0] > 0
        peaks_at_center = np.abs(np.argmax(cycles, axis=1) - 200) <= 1
        assert peaks_at_center.all()

    def test_empty_input(self):
        cycles, meta, stats = preprocess_records([])
        assert cycles.shape == (0, 400) and meta == [] and stats["records"] == 0

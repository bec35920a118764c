"""Record preprocessing: segmentation, R-peak detection, cycle extraction.

The detector follows the classic energy-based recipe: zero-phase band-pass
around the QRS band (5-15 Hz), squared derivative, moving-window integration,
then peak picking against half of a rolling maximum. Detections are refined
to the raw-signal maximum near the center of the energy window, so reported
indices land on the R peak itself.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import maximum_filter1d
from scipy.signal import butter, filtfilt, find_peaks

from .data import CYCLE_LEN, EcgRecord, RPeakList
from .errors import DimensionError

REFRACTORY_S = 0.2  # minimum believable gap between two R peaks
SEGMENT_S = 9.0


def cut_segments(record: EcgRecord, seconds: float = SEGMENT_S) -> list[EcgRecord]:
    """Split a record into non-overlapping fixed-length segments; drop the tail."""
    if seconds <= 0:
        raise ValueError(f"segment length must be positive, got {seconds}")
    seg_len = int(round(seconds * record.sampling_rate_hz))
    if seg_len < 1:
        raise ValueError("segment shorter than one sample")
    k = record.n_samples // seg_len
    out = []
    for i in range(k):
        out.append(EcgRecord(
            record.leads[:, i * seg_len:(i + 1) * seg_len],
            record.sampling_rate_hz,
            record_id=f"{record.record_id}#{i}",
        ))
    return out


def detect_r_peaks(lead: np.ndarray, fs: float) -> RPeakList:
    """Locate R peaks in one lead; an empty result carries a warning, not an error."""
    lead = np.asarray(lead, dtype=np.float64).reshape(-1)
    if fs <= 0:
        raise ValueError(f"sampling rate must be positive, got {fs}")
    if lead.shape[0] < int(fs):
        raise DimensionError(
            f"lead too short for detection: {lead.shape[0]} samples at {fs} Hz"
        )

    nyq = fs / 2.0
    b, a = butter(1, [5.0 / nyq, 15.0 / nyq], btype="bandpass")
    filtered = filtfilt(b, a, lead)
    deriv = np.diff(filtered, prepend=filtered[:1])
    energy = deriv * deriv

    win = max(1, int(round(0.15 * fs)))
    csum = np.cumsum(np.concatenate(([0.0], energy)))
    mwi = (csum[win:] - csum[:-win]) / win
    mwi = np.concatenate((np.full(win - 1, mwi[0] if mwi.size else 0.0), mwi))

    # adaptive threshold: half the local (~2 s window) maximum of the envelope
    roll = maximum_filter1d(mwi, size=max(1, int(round(2.0 * fs))), mode="nearest")
    refractory = max(1, int(round(REFRACTORY_S * fs)))
    cand, _ = find_peaks(mwi, distance=refractory)
    cand = cand[mwi[cand] >= 0.5 * roll[cand]]

    # the integration window trails the QRS by ~win/2; search raw near its center
    half = int(round(0.05 * fs))
    refined: list[int] = []
    for c in cand:
        anchor = max(0, c - win // 2)
        lo = max(0, anchor - half)
        hi = min(lead.shape[0], anchor + half + 1)
        refined.append(lo + int(np.argmax(lead[lo:hi])))

    # duplicates can refine to the same peak; keep the taller of close pairs
    kept: list[int] = []
    for p in sorted(refined):
        if kept and p - kept[-1] < refractory:
            if lead[p] > lead[kept[-1]]:
                kept[-1] = p
        else:
            kept.append(p)

    indices = np.asarray(kept, dtype=np.int64)
    warning = None if indices.size else "no QRS-like activity above threshold"
    return RPeakList(indices=indices, detector_name="bandpass-mwi", warning=warning)


def extract_cycles(lead: np.ndarray, peaks, half_width: int = CYCLE_LEN // 2,
                   remove_baseline: bool = True) -> tuple[np.ndarray, int]:
    """Cut [r - half_width, r + half_width) windows around each peak.

    Peaks whose window would cross a record boundary are skipped and counted.
    Baseline removal subtracts the mean of the first and last 10 samples of
    each window. Returns (windows [n, 2 * half_width] float32, n_skipped).
    """
    lead = np.asarray(lead, dtype=np.float32).reshape(-1)
    if half_width < 1:
        raise ValueError(f"half_width must be >= 1, got {half_width}")
    idx = peaks.indices if isinstance(peaks, RPeakList) else np.asarray(peaks, dtype=np.int64)
    n = lead.shape[0]
    rows = []
    skipped = 0
    for r in idx:
        lo = int(r) - half_width
        hi = int(r) + half_width
        if lo < 0 or hi > n:
            skipped += 1
            continue
        w = lead[lo:hi].astype(np.float32)
        if remove_baseline:
            edges = np.concatenate((w[:10], w[-10:]))
            w = w - np.float32(edges.mean(dtype=np.float64))
        rows.append(w)
    if rows:
        return np.stack(rows), skipped
    return np.empty((0, 2 * half_width), dtype=np.float32), skipped


def preprocess_records(
    records, seconds: float = SEGMENT_S, half_width: int = CYCLE_LEN // 2,
    remove_baseline: bool = True,
) -> tuple[np.ndarray, list[tuple[str, int]], dict]:
    """records -> segments -> peaks -> cycles, with per-cycle provenance.

    Returns (cycles [n, 2 * half_width], [(record_id, lead_id)] per cycle,
    stats with detected/skipped counts).
    """
    all_rows = []
    meta: list[tuple[str, int]] = []
    stats = {"records": 0, "segments": 0, "peaks": 0, "skipped_windows": 0,
             "empty_segments": 0}
    for rec in records:
        stats["records"] += 1
        for seg in cut_segments(rec, seconds):
            stats["segments"] += 1
            for lead_id in range(seg.n_leads):
                peaks = detect_r_peaks(seg.leads[lead_id], seg.sampling_rate_hz)
                if peaks.warning is not None:
                    stats["empty_segments"] += 1
                stats["peaks"] += len(peaks)
                rows, skipped = extract_cycles(
                    seg.leads[lead_id], peaks, half_width, remove_baseline
                )
                stats["skipped_windows"] += skipped
                if rows.shape[0]:
                    all_rows.append(rows)
                    meta.extend([(seg.record_id, lead_id)] * rows.shape[0])
    if all_rows:
        cycles = np.concatenate(all_rows, axis=0)
    else:
        cycles = np.empty((0, 2 * half_width), dtype=np.float32)
    return cycles, meta, stats

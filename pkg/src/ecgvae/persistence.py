"""On-disk formats: cycle datasets, model checkpoints, records, CSVs, SVG plots.

Binary layouts share one envelope: 4 magic bytes, a little-endian body, and a
trailing CRC32 of the body. Readers check magic, then version, then that the
declared sizes fit the file, then the checksum, in that order, raising the
matching FormatError subclass at the first failure.

Plots are written as hand-rolled SVG with fixed decimal formatting, so the
same data always produces byte-identical files (nothing in them depends on
wall clock, locale, or library versions).
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .data import EcgRecord
from .errors import (
    BadMagicError,
    DimensionError,
    FormatError,
    IntegrityError,
    TruncatedFileError,
    VersionError,
)
from .model import ModelConfig, VaeModel
from .training import EpochStats

DATASET_MAGIC = b"ECGC"
MODEL_MAGIC = b"ECGV"
RECORD_MAGIC = b"ECGR"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# envelope helpers


def _wrap(magic: bytes, body: bytes) -> bytes:
    return magic + body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def _unwrap(buf: bytes, magic: bytes, kind: str) -> bytes:
    if len(buf) < 4:
        raise TruncatedFileError(f"{kind}: file shorter than its magic")
    if buf[:4] != magic:
        raise BadMagicError(
            f"{kind}: bad magic {buf[:4]!r}, expected {magic!r}"
        )
    if len(buf) < 8:
        raise TruncatedFileError(f"{kind}: missing checksum")
    body = buf[4:-4]
    (crc,) = struct.unpack("<I", buf[-4:])
    if (zlib.crc32(body) & 0xFFFFFFFF) != crc:
        raise IntegrityError(f"{kind}: CRC32 mismatch, file is corrupt")
    return body


class _Reader:
    """Sequential struct reader that turns overruns into TruncatedFileError."""

    def __init__(self, body: bytes, kind: str):
        self.body = body
        self.pos = 0
        self.kind = kind

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.body):
            raise TruncatedFileError(
                f"{self.kind}: body ends at byte {len(self.body)}, "
                f"needed {self.pos + n}"
            )
        out = self.body[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> None:
        if self.pos != len(self.body):
            raise FormatError(
                f"{self.kind}: {len(self.body) - self.pos} trailing bytes"
            )


def _check_version(version: int, kind: str) -> None:
    if version != FORMAT_VERSION:
        raise VersionError(
            f"{kind}: format version {version} not supported (expected {FORMAT_VERSION})"
        )


# ---------------------------------------------------------------------------
# cycle dataset (.ecgc)


def save_dataset(path, cycles: np.ndarray, sampling_rate_hz: float = 500.0,
                 ids: Optional[Sequence[tuple[str, int]]] = None) -> None:
    """Write a [n, length] float32 cycle matrix, optionally with provenance ids."""
    cycles = np.ascontiguousarray(np.asarray(cycles, dtype=np.float32))
    if cycles.ndim != 2:
        raise DimensionError(f"cycles must be rank 2, got rank {cycles.ndim}")
    if ids is not None and len(ids) != cycles.shape[0]:
        raise DimensionError(
            f"{len(ids)} ids for {cycles.shape[0]} cycles"
        )
    n, length = cycles.shape
    flags = 1 if ids is not None else 0
    body = struct.pack("<HIQfB", FORMAT_VERSION, length, n, float(sampling_rate_hz), flags)
    body += cycles.astype("<f4").tobytes()
    if ids is not None:
        blob = json.dumps([[rid, int(lid)] for rid, lid in ids],
                          separators=(",", ":")).encode("utf-8")
        body += struct.pack("<Q", len(blob)) + blob
    Path(path).write_bytes(_wrap(DATASET_MAGIC, body))


def load_dataset(path) -> tuple[np.ndarray, float, Optional[list[tuple[str, int]]]]:
    """Read back (cycles, sampling_rate_hz, ids-or-None)."""
    buf = Path(path).read_bytes()
    r = _Reader(_unwrap(buf, DATASET_MAGIC, "dataset"), "dataset")
    version, length, n, fs, flags = r.unpack("<HIQfB")
    _check_version(version, "dataset")
    raw = r.take(int(n) * int(length) * 4)
    cycles = np.frombuffer(raw, dtype="<f4").reshape(int(n), int(length)).copy()
    ids = None
    if flags & 1:
        (blob_len,) = r.unpack("<Q")
        try:
            entries = json.loads(r.take(int(blob_len)).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"dataset: bad id footer: {e}") from e
        if len(entries) != n:
            raise IntegrityError(
                f"dataset: footer has {len(entries)} ids for {n} cycles"
            )
        ids = [(str(rid), int(lid)) for rid, lid in entries]
    r.done()
    return cycles, float(fs), ids


# ---------------------------------------------------------------------------
# raw record (.ecgr)


def save_record(path, record: EcgRecord) -> None:
    rid = record.record_id.encode("utf-8")
    body = struct.pack("<HHQfH", FORMAT_VERSION, record.n_leads, record.n_samples,
                       record.sampling_rate_hz, len(rid))
    body += rid
    body += record.leads.astype("<f4").tobytes()
    Path(path).write_bytes(_wrap(RECORD_MAGIC, body))


def load_record(path) -> EcgRecord:
    buf = Path(path).read_bytes()
    r = _Reader(_unwrap(buf, RECORD_MAGIC, "record"), "record")
    version, n_leads, n_samples, fs, id_len = r.unpack("<HHQfH")
    _check_version(version, "record")
    rid = r.take(id_len).decode("utf-8")
    raw = r.take(int(n_leads) * int(n_samples) * 4)
    leads = np.frombuffer(raw, dtype="<f4").reshape(int(n_leads), int(n_samples)).copy()
    r.done()
    return EcgRecord(leads, float(fs), rid)


# ---------------------------------------------------------------------------
# model checkpoint (.ecgv)


def _tensor_block(name: str, arr: np.ndarray) -> bytes:
    nm = name.encode("utf-8")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    head = struct.pack("<H", len(nm)) + nm + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def save_model(path, model: VaeModel) -> None:
    """Checkpoint = JSON manifest (config + layer table) + named f32 tensors."""
    manifest = {
        "model_config": model.config.to_dict(),
        "layers": model.layer_specs(),
        "train_config": model.train_config_dict,
        "train_seed": model.train_seed,
        "dtype": str(model.dtype),
    }
    blob = json.dumps(manifest, separators=(",", ":"), sort_keys=True).encode("utf-8")
    tensors = [(name, p.data) for name, p in model.named_parameters()]
    tensors += model.named_state()
    body = struct.pack("<H", FORMAT_VERSION)
    body += struct.pack("<I", len(blob)) + blob
    body += struct.pack("<I", len(tensors))
    for name, arr in tensors:
        body += _tensor_block(name, arr)
    Path(path).write_bytes(_wrap(MODEL_MAGIC, body))


def load_model(path) -> VaeModel:
    """Rebuild the architecture from the manifest and pour the tensors back in."""
    buf = Path(path).read_bytes()
    r = _Reader(_unwrap(buf, MODEL_MAGIC, "model"), "model")
    (version,) = r.unpack("<H")
    _check_version(version, "model")
    (blob_len,) = r.unpack("<I")
    try:
        manifest = json.loads(r.take(blob_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"model: bad manifest JSON: {e}") from e
    (n_tensors,) = r.unpack("<I")
    loaded: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        raw = r.take(int(np.prod(shape, dtype=np.int64)) * 4)
        loaded[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    r.done()

    try:
        config = ModelConfig.from_dict(manifest["model_config"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"model: bad model_config in manifest: {e}") from e
    model = VaeModel.build(config, seed=0)
    if manifest.get("layers") != json.loads(json.dumps(model.layer_specs())):
        raise IntegrityError("model: manifest layer table does not match the "
                             "architecture rebuilt from its config")
    params = dict(model.named_parameters())
    state_names = {name for name, _ in model.named_state()}
    expected = set(params) | state_names
    if set(loaded) != expected:
        missing = sorted(expected - set(loaded))[:3]
        extra = sorted(set(loaded) - expected)[:3]
        raise IntegrityError(
            f"model: tensor names do not match (missing {missing}, extra {extra})"
        )
    for name, arr in loaded.items():
        if name in params:
            if params[name].data.shape != arr.shape:
                raise IntegrityError(
                    f"model: tensor '{name}' has shape {arr.shape}, "
                    f"expected {params[name].data.shape}"
                )
            params[name].data = arr
        else:
            try:
                model.load_state_value(name, arr)
            except DimensionError as e:
                raise IntegrityError(f"model: {e}") from e
    model.train_seed = manifest.get("train_seed")
    model.train_config_dict = manifest.get("train_config")
    return model


# ---------------------------------------------------------------------------
# CSV writers (plain text, one canonical float format)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_loss_history(path, history: Sequence[EpochStats]) -> None:
    lines = ["epoch,train_recon,train_kl,eval_recon,eval_kl"]
    for h in history:
        lines.append(f"{h.epoch},{_fmt(h.train_recon)},{_fmt(h.train_kl)},"
                     f"{_fmt(h.eval_recon)},{_fmt(h.eval_kl)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_mmd_report(path, reports) -> None:
    rows = reports if isinstance(reports, (list, tuple)) else [reports]
    lines = ["label_a,label_b,n_a,n_b,sigma,mmd2_biased,mmd2_unbiased,seed"]
    for m in rows:
        lines.append(f"{m.label_a},{m.label_b},{m.n_a},{m.n_b},{_fmt(m.sigma)},"
                     f"{_fmt(m.mmd2_biased)},{_fmt(m.mmd2_unbiased)},{m.seed}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_features_csv(path, mu: np.ndarray) -> None:
    mu = np.asarray(mu)
    if mu.ndim != 2:
        raise DimensionError(f"feature matrix must be rank 2, got rank {mu.ndim}")
    header = ",".join(f"f{i:02d}" for i in range(mu.shape[1]))
    lines = [header]
    for row in mu:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_r_truth_csv(path, entries: Sequence[tuple[str, int]]) -> None:
    """entries: (record_id, r_index) pairs, one row each."""
    lines = ["record_id,r_index"]
    for rid, idx in entries:
        lines.append(f"{rid},{int(idx)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_r_truth_csv(path) -> dict[str, np.ndarray]:
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0] != "record_id,r_index":
        raise FormatError("r-truth CSV: missing or wrong header")
    out: dict[str, list[int]] = {}
    for line in text[1:]:
        rid, _, idx = line.partition(",")
        out.setdefault(rid, []).append(int(idx))
    return {k: np.asarray(v, dtype=np.int64) for k, v in out.items()}


# ---------------------------------------------------------------------------
# SVG plotting


_SVG_W = 1000
_MARGIN_L = 90
_MARGIN_R = 25
_MARGIN_T = 30
_MARGIN_B = 50
_BAND_H = 64
_COLORS = ("#1f6fb2", "#b23a1f", "#2a8a4a", "#7a4ab2", "#b2861f")


def _f(v: float) -> str:
    return f"{v:.2f}"


def emit_plot(traces, labels: Optional[Sequence[str]] = None, path=None,
              title: str = "") -> str:
    """Render stacked traces as SVG; returns the markup, writes it if path given.

    Each trace gets its own horizontal band (fixed vertical offsets), all bands
    share one value scale, and the x axis is labeled in samples. Output bytes
    depend only on the inputs.
    """
    rows = [np.asarray(t, dtype=np.float64).reshape(-1) for t in traces]
    if not rows:
        raise DimensionError("nothing to plot")
    length = rows[0].shape[0]
    if any(r.shape[0] != length for r in rows):
        raise DimensionError("all traces must have the same length")
    if labels is not None and len(labels) != len(rows):
        raise DimensionError(f"{len(labels)} labels for {len(rows)} traces")

    gmin = min(float(r.min()) for r in rows)
    gmax = max(float(r.max()) for r in rows)
    spread = gmax - gmin
    if spread <= 0:
        spread = 1.0
    plot_w = _SVG_W - _MARGIN_L - _MARGIN_R
    height = _MARGIN_T + _BAND_H * len(rows) + _MARGIN_B
    xs = _MARGIN_L + np.arange(length) * (plot_w / max(1, length - 1))

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{height}" '
        f'viewBox="0 0 {_SVG_W} {height}">',
        f'<rect x="0" y="0" width="{_SVG_W}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{_MARGIN_L}" y="20" font-family="monospace" '
                   f'font-size="13" fill="#222222">{escape(title)}</text>')

    for i, r in enumerate(rows):
        mid = _MARGIN_T + _BAND_H * i + _BAND_H / 2.0
        scale = (_BAND_H * 0.9) / spread
        ys = mid + (0.5 * (gmin + gmax) - r) * scale
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys))
        color = _COLORS[i % len(_COLORS)]
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.0"/>')
        if labels is not None:
            out.append(f'<text x="4" y="{_f(mid + 4)}" font-family="monospace" '
                       f'font-size="11" fill="#222222">{escape(str(labels[i]))}</text>')

    axis_y = _MARGIN_T + _BAND_H * len(rows) + 8
    out.append(f'<line x1="{_MARGIN_L}" y1="{axis_y}" x2="{_SVG_W - _MARGIN_R}" '
               f'y2="{axis_y}" stroke="#444444" stroke-width="1.0"/>')
    step = max(1, (length - 1) // 8)
    ticks = list(range(0, length, step))
    if ticks[-1] != length - 1:
        ticks.append(length - 1)
    for t in ticks:
        x = _f(float(xs[t]))
        out.append(f'<line x1="{x}" y1="{axis_y}" x2="{x}" y2="{axis_y + 5}" '
                   f'stroke="#444444" stroke-width="1.0"/>')
        out.append(f'<text x="{x}" y="{axis_y + 18}" font-family="monospace" '
                   f'font-size="10" fill="#444444" text-anchor="middle">{t}</text>')
    out.append(f'<text x="{_SVG_W - _MARGIN_R}" y="{axis_y + 34}" font-family="monospace" '
               f'font-size="10" fill="#444444" text-anchor="end">samples</text>')
    # vertical scale bar: full band height corresponds to `spread` millivolts
    bar_top = _MARGIN_T + _BAND_H * 0.05
    out.append(f'<line x1="{_MARGIN_L - 10}" y1="{_f(bar_top)}" x2="{_MARGIN_L - 10}" '
               f'y2="{_f(bar_top + _BAND_H * 0.9)}" stroke="#444444" stroke-width="1.0"/>')
    out.append(f'<text x="{_MARGIN_L - 14}" y="{_f(_MARGIN_T + _BAND_H / 2)}" '
               f'font-family="monospace" font-size="10" fill="#444444" '
               f'text-anchor="end">{spread:.3g} mV</text>')
    out.append("</svg>")
    markup = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(markup, encoding="utf-8")
    return markup

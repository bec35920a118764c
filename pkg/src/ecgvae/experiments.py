"""Model-driven experiments: sampling the prior, latent traversals."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import SampleSet
from .errors import DimensionError
from .model import VaeModel, decode_batch
from .persistence import emit_plot

TRAVERSAL_GRID = tuple(np.linspace(-3.0, 3.0, 10))


def sample_synthetic(model: VaeModel, n: int, seed: int, batch: int = 256,
                     label: str = "generated") -> SampleSet:
    """Decode n prior draws z ~ N(0, I) into cycles, deterministically per seed."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.config.latent_dim)).astype(model.dtype)
    return SampleSet(decode_batch(model, z, batch=batch), label=label)


def latent_traversal(model: VaeModel, base_z: np.ndarray, feature: int,
                     values: Sequence[float]) -> np.ndarray:
    """Decode copies of base_z with one coordinate swept over `values`."""
    base_z = np.asarray(base_z, dtype=model.dtype).reshape(-1)
    latent = model.config.latent_dim
    if base_z.shape[0] != latent:
        raise DimensionError(f"base_z must have length {latent}, got {base_z.shape[0]}")
    if not 0 <= feature < latent:
        raise IndexError(f"feature index {feature} outside [0, {latent})")
    vals = np.asarray(list(values), dtype=model.dtype)
    if vals.size < 1:
        raise ValueError("traversal needs at least one value")
    z = np.tile(base_z, (vals.size, 1))
    z[:, feature] = vals
    return decode_batch(model, z)


def traversal_sweep(model: VaeModel, out_dir, seed: int,
                    values: Optional[Sequence[float]] = None,
                    features: Optional[Sequence[int]] = None,
                    base: str = "zero") -> list[Path]:
    """One SVG per latent feature, each stacking the traversal's decoded traces.

    base_z is the zero vector by default or a single posterior-style draw
    ("random", seeded) shared by every feature. Files are named by feature
    index and written deterministically.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    latent = model.config.latent_dim
    if base == "zero":
        base_z = np.zeros(latent, dtype=model.dtype)
    elif base == "random":
        base_z = np.random.default_rng(seed).standard_normal(latent).astype(model.dtype)
    else:
        raise ValueError(f"base must be 'zero' or 'random', got {base!r}")
    vals = np.asarray(TRAVERSAL_GRID if values is None else list(values), dtype=np.float64)
    feats = range(latent) if features is None else list(features)
    paths = []
    for f in feats:
        traces = latent_traversal(model, base_z, int(f), vals)
        labels = [f"z[{int(f)}]={v:+.2f}" for v in vals]
        p = out_dir / f"traversal_feature_{int(f):02d}.svg"
        emit_plot(traces, labels, p, title=f"latent feature {int(f)} sweep")
        paths.append(p)
    return paths


def traversal_effect(traces_lo: np.ndarray, traces_hi: np.ndarray) -> float:
    """L2 distance between two decoded cycles (effect size of a sweep)."""
    d = np.asarray(traces_lo, dtype=np.float64) - np.asarray(traces_hi, dtype=np.float64)
    return float(np.sqrt(np.sum(d * d)))

"""Command-line interface.

Subcommands cover the full pipeline: synth -> preprocess -> train ->
generate / encode / traverse / mmd / plot. Exit codes are stable: 0 success,
1 usage error, 2 unreadable or inconsistent data, 3 numeric failure. Errors
are a single line on stderr. Options may come from --config files with flat
key=value lines; explicit flags win over config values, config values win
over built-in defaults.
"""

from __future__ import annotations

import os


def _configure_threads() -> None:
    """Pin BLAS pools before numpy loads; ECGVAE_THREADS overrides (default 1)."""
    raw = os.environ.get("ECGVAE_THREADS", "1").strip()
    n = raw if raw.isdigit() and int(raw) > 0 else "1"
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ.setdefault(var, n)


_configure_threads()

import argparse  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import persistence  # noqa: E402
from .data import MAX_LEADS  # noqa: E402
from .errors import DimensionError, FormatError, NumericsError, StateError  # noqa: E402
from .experiments import sample_synthetic, traversal_sweep  # noqa: E402
from .metrics import compare_sets  # noqa: E402
from .model import encode_batch  # noqa: E402
from .preprocess import preprocess_records  # noqa: E402
from .synth import DEFAULT_FS, gen_corpus  # noqa: E402
from .training import DEFAULT_BETA_KL, TrainConfig, train  # noqa: E402


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so main() owns the exit code."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="ecgvae", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def new(name: str, help_: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, default=None,
                        help="key=value file supplying defaults for this command")
        return sp

    sp = new("synth", "generate a corpus of synthetic records with R-peak truth")
    sp.add_argument("--records", type=int, default=None, help="number of records (default 200)")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", type=Path, required=True, help="output directory")
    sp.add_argument("--duration", type=float, default=None, help="seconds per record (default 10)")
    sp.add_argument("--leads", type=int, default=None, help="leads per record (default 1)")
    sp.add_argument("--noise-lo", type=float, default=None, help="noise std range low")
    sp.add_argument("--noise-hi", type=float, default=None, help="noise std range high")

    sp = new("preprocess", "records directory -> cycle dataset (.ecgc)")
    sp.add_argument("--in", dest="in_dir", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--half-width", type=int, default=None,
                    help="samples kept on each side of an R peak (default 200)")

    sp = new("train", "fit the autoencoder on a cycle dataset")
    sp.add_argument("--data", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True, help="checkpoint path (.ecgv)")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--beta", type=float, default=None, help="KL weight")
    sp.add_argument("--history", type=Path, default=None,
                    help="loss history CSV (default: <out>.loss.csv)")
    sp.add_argument("--quiet", action="store_true", help="suppress per-epoch lines")

    sp = new("generate", "decode prior samples from a trained model")
    sp.add_argument("--model", type=Path, required=True)
    sp.add_argument("--count", type=int, default=None, help="cycles to generate (default 100)")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", type=Path, required=True, help="output dataset (.ecgc)")

    sp = new("encode", "write the 25-feature posterior means of a dataset to CSV")
    sp.add_argument("--model", type=Path, required=True)
    sp.add_argument("--data", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)

    sp = new("traverse", "latent traversal plots (one SVG per feature)")
    sp.add_argument("--model", type=Path, required=True)
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--feature", type=int, default=None)
    group.add_argument("--all", action="store_true")
    sp.add_argument("--min", dest="vmin", type=float, default=None, help="sweep start (default -3)")
    sp.add_argument("--max", dest="vmax", type=float, default=None, help="sweep end (default 3)")
    sp.add_argument("--steps", type=int, default=None, help="sweep points (default 10)")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", type=Path, required=True, help="output directory")

    sp = new("mmd", "compare two cycle datasets with kernel MMD^2")
    sp.add_argument("--a", dest="set_a", type=Path, required=True)
    sp.add_argument("--b", dest="set_b", type=Path, required=True)
    sp.add_argument("--sigma", type=str, default=None,
                    help="'median' (default) or a positive bandwidth")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", type=Path, required=True, help="report CSV")

    sp = new("plot", "render selected cycles of a dataset as stacked SVG traces")
    sp.add_argument("--data", type=Path, required=True)
    sp.add_argument("--indices", type=int, nargs="+", required=True)
    sp.add_argument("--out", type=Path, required=True)

    return p


# ---------------------------------------------------------------------------
# config files


def _load_config(path: Path) -> dict[str, str]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for ln, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise UsageError(f"{path}:{ln}: expected key=value, got {s!r}")
        key, _, value = s.partition("=")
        out[key.strip()] = value.strip()
    return out


class _Options:
    """Merges CLI flags, config entries and defaults, in that order."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_config(args.config) if args.config else {}

    def get(self, key: str, cast, default):
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        if key in self.config:
            try:
                return cast(self.config[key])
            except ValueError:
                raise UsageError(
                    f"config: bad value for {key}: {self.config[key]!r}"
                )
        return default


def _positive(value: int | float, name: str):
    if value <= 0:
        raise UsageError(f"{name} must be positive, got {value}")
    return value


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_synth(args) -> int:
    opt = _Options(args)
    n_records = _positive(opt.get("records", int, 200), "--records")
    duration = _positive(opt.get("duration", float, 10.0), "--duration")
    leads = opt.get("leads", int, 1)
    if not 1 <= leads <= MAX_LEADS:
        raise UsageError(f"--leads must be in [1, {MAX_LEADS}], got {leads}")
    noise_lo = opt.get("noise_lo", float, None)
    noise_hi = opt.get("noise_hi", float, None)
    from .synth import ParamRanges
    ranges = ParamRanges()
    if (noise_lo is None) != (noise_hi is None):
        raise UsageError("--noise-lo and --noise-hi must be given together")
    if noise_lo is not None:
        if noise_lo < 0 or noise_hi < noise_lo:
            raise UsageError("need 0 <= noise-lo <= noise-hi")
        from dataclasses import replace
        ranges = replace(ranges, noise_std=(noise_lo, noise_hi))
    out_dir: Path = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = gen_corpus(n_records, seed=args.seed, ranges=ranges,
                        duration_s=duration, n_leads=leads)
    truth = []
    n_beats = 0
    for record, positions in corpus:
        persistence.save_record(out_dir / f"{record.record_id}.ecgr", record)
        truth.extend((record.record_id, int(r)) for r in positions)
        n_beats += positions.size
    persistence.write_r_truth_csv(out_dir / "r_peaks_truth.csv", truth)
    print(f"wrote {n_records} records ({n_beats} beats, {leads} lead(s)) to {out_dir}")
    return 0


def _cmd_preprocess(args) -> int:
    opt = _Options(args)
    half_width = _positive(opt.get("half_width", int, 200), "--half-width")
    in_dir: Path = args.in_dir
    if not in_dir.is_dir():
        raise FormatError(f"input is not a directory: {in_dir}")
    files = sorted(in_dir.glob("*.ecgr"))
    if not files:
        raise FormatError(f"no .ecgr records in {in_dir}")
    records = [persistence.load_record(f) for f in files]
    fs = records[0].sampling_rate_hz
    cycles, meta, stats = preprocess_records(records, half_width=half_width)
    if cycles.shape[0] == 0:
        raise FormatError("preprocessing produced zero cycles")
    persistence.save_dataset(args.out, cycles, sampling_rate_hz=fs, ids=meta)
    print(f"extracted {cycles.shape[0]} cycles from {stats['records']} records "
          f"({stats['segments']} segments, {stats['skipped_windows']} windows skipped) "
          f"-> {args.out}")
    return 0


def _cmd_train(args) -> int:
    opt = _Options(args)
    config = TrainConfig(
        seed=args.seed,
        epochs=opt.get("epochs", int, 50),
        batch_size=opt.get("batch_size", int, 64),
        lr=opt.get("lr", float, 1e-3),
        beta_kl=opt.get("beta", float, DEFAULT_BETA_KL),
    )
    cycles, _, _ = persistence.load_dataset(args.data)
    log = None if args.quiet else print
    model, history = train(cycles, config, log=log)
    persistence.save_model(args.out, model)
    history_path = args.history if args.history else Path(f"{args.out}.loss.csv")
    persistence.write_loss_history(history_path, history)
    last = history[-1]
    print(f"trained {config.epochs} epochs on {cycles.shape[0]} cycles; "
          f"final eval_recon {last.eval_recon:.6f}, eval_kl {last.eval_kl:.4f}; "
          f"model -> {args.out}, history -> {history_path}")
    return 0


def _cmd_generate(args) -> int:
    opt = _Options(args)
    count = _positive(opt.get("count", int, 100), "--count")
    model = persistence.load_model(args.model)
    out = sample_synthetic(model, count, seed=args.seed)
    persistence.save_dataset(args.out, out.cycles, sampling_rate_hz=DEFAULT_FS)
    print(f"generated {count} cycles -> {args.out}")
    return 0


def _cmd_encode(args) -> int:
    model = persistence.load_model(args.model)
    cycles, _, _ = persistence.load_dataset(args.data)
    if cycles.shape[0] == 0:
        raise FormatError(f"dataset {args.data} is empty")
    mu, _ = encode_batch(model, cycles)
    persistence.write_features_csv(args.out, mu)
    print(f"encoded {mu.shape[0]} cycles into {mu.shape[1]} features -> {args.out}")
    return 0


def _cmd_traverse(args) -> int:
    opt = _Options(args)
    vmin = opt.get("vmin", float, -3.0)
    vmax = opt.get("vmax", float, 3.0)
    steps = opt.get("steps", int, 10)
    if steps < 1:
        raise UsageError(f"--steps must be >= 1, got {steps}")
    if vmax < vmin:
        raise UsageError(f"--max {vmax} is below --min {vmin}")
    model = persistence.load_model(args.model)
    latent = model.config.latent_dim
    if args.all:
        features = None
    else:
        if not 0 <= args.feature < latent:
            raise UsageError(
                f"--feature must be in [0, {latent}), got {args.feature}"
            )
        features = [args.feature]
    values = np.linspace(vmin, vmax, steps)
    paths = traversal_sweep(model, args.out, seed=args.seed,
                            values=values, features=features)
    print(f"wrote {len(paths)} traversal plot(s) to {args.out}")
    return 0


def _cmd_mmd(args) -> int:
    opt = _Options(args)
    sigma_raw = opt.get("sigma", str, "median")
    if sigma_raw == "median":
        sigma = None
    else:
        try:
            sigma = float(sigma_raw)
        except ValueError:
            raise UsageError(f"--sigma must be 'median' or a number, got {sigma_raw!r}")
        if sigma <= 0:
            raise UsageError(f"--sigma must be positive, got {sigma}")
    a, _, _ = persistence.load_dataset(args.set_a)
    b, _, _ = persistence.load_dataset(args.set_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise FormatError("mmd needs non-empty datasets on both sides")
    report = compare_sets(a, b, label_a=args.set_a.stem, label_b=args.set_b.stem,
                          sigma=sigma, seed=args.seed)
    persistence.write_mmd_report(args.out, report)
    print(f"mmd2_biased={report.mmd2_biased:.6e} mmd2_unbiased={report.mmd2_unbiased:.6e} "
          f"sigma={report.sigma:.6g} n_a={report.n_a} n_b={report.n_b} -> {args.out}")
    return 0


def _cmd_plot(args) -> int:
    cycles, _, _ = persistence.load_dataset(args.data)
    for i in args.indices:
        if not 0 <= i < cycles.shape[0]:
            raise UsageError(
                f"--indices value {i} outside dataset of {cycles.shape[0]} cycles"
            )
    traces = cycles[list(args.indices)]
    labels = [f"cycle {i}" for i in args.indices]
    persistence.emit_plot(traces, labels, args.out, title=str(args.data.name))
    print(f"plotted {len(args.indices)} cycle(s) -> {args.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "encode": _cmd_encode,
    "traverse": _cmd_traverse,
    "mmd": _cmd_mmd,
    "plot": _cmd_plot,
}


def _fail(category: str, exc: BaseException) -> None:
    msg = " ".join(str(exc).split())
    print(f"error: {category}: {msg}", file=sys.stderr)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as e:
        _fail("usage", e)
        return 1
    except NumericsError as e:
        _fail("numeric", e)
        return 3
    except (FormatError, DimensionError, StateError) as e:
        _fail("data", e)
        return 2
    except OSError as e:
        _fail("io", e)
        return 2
    except ValueError as e:
        _fail("usage", e)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

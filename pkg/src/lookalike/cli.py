"""Command-line front end: synthesize, detect, train, index, search, eval, tune.

Every command takes an explicit ``--seed`` when it is stochastic, and writes
a ``run.json`` capturing the resolved arguments next to its outputs, so any
run can be replayed bit-for-bit with ``lookalike replay <run.json>``.

Exit codes: 0 success, 1 data/file errors, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bvae
from .bvae.model import ModelConfig
from .embedding import EmbeddingConfig
from .energy import (
    DEFAULT_THRESHOLD,
    balance_dataset,
    bandpass_correct,
    calibrate_threshold,
    detect,
    hits_csv_lines,
)
from .errors import EmptyDataset, LookalikeError
from .evalmetrics import (
    EvalConfig,
    SignalRanges,
    SnippetFactorPairs,
    build_eval_set,
    bvae_encoder,
    flatten_eval_set,
    naive_raw_features,
    run_benchmark,
)
from .pgm import write_pgm
from .search import (
    build_index,
    frequency_histogram,
    query,
    read_rssi,
    results_csv_lines,
    write_rssi,
)
from .spectrogram import (
    SNIPPET_BINS,
    SNIPPET_ROWS,
    SignalParams,
    Spectrogram,
    gen_noise,
    inject_signal,
    normalize_snippet,
    read_rssg,
    shift_positive,
    snippets_from_spectrogram,
    write_rssg,
)

DEFAULT_COARSE_HZ = 1024 * 2.79


def _range_pair(text: str) -> tuple:
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}")
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"range must satisfy lo < hi, got {text!r}")
    return lo, hi


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _write_run_json(out_dir: Path, command: str, argv: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "argv": argv}
    (out_dir / "run.json").write_text(json.dumps(payload, indent=2) + "\n")


def _load_snippets_dir(data_dir: Path) -> list:
    files = sorted(data_dir.glob("*.rssg"))
    snippets = []
    for f in files:
        spec = read_rssg(f)
        snippets.extend(snippets_from_spectrogram(spec, SNIPPET_BINS, source_id=f.stem))
    if not snippets:
        raise EmptyDataset(f"no .rssg snippets under {data_dir}")
    return snippets


def _snippet_rssg(snippet) -> Spectrogram:
    window = snippet.raw if snippet.raw is not None else snippet.data
    f_start = snippet.center_freq - (SNIPPET_BINS // 2) * 2.79
    return Spectrogram(window, f_start=f_start)


def _ranges_from_args(args) -> SignalRanges:
    return SignalRanges(snr=args.snr, drift=args.drift, width=args.width)


def cmd_synth(args, argv) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    manifest = ["file,class_id,snr,drift_rate_hz_s,width_hz,center_freq_hz"]
    if args.mode == "classes":
        classes = build_eval_set(args.classes, args.per_class, _ranges_from_args(args),
                                 seed=args.seed, nuisance_rate=args.nuisance_rate,
                                 freq_jitter_hz=args.freq_jitter)
        count = 0
        for c in classes:
            for j, s in enumerate(c.snippets):
                name = f"c{c.class_id:03d}_{j:04d}.rssg"
                write_rssg(out / name, _snippet_rssg(s))
                manifest.append(f"{name},{c.class_id},{c.params.snr:.4f},"
                                f"{c.params.drift_rate:.4f},{c.params.width:.4f},"
                                f"{s.center_freq:.4f}")
                count += 1
        print(f"wrote {count} snippet files to {out}")
    else:  # band
        spec = gen_noise(SNIPPET_ROWS, args.n_freq, seed=args.seed, f_start=args.band[0])
        n_windows = args.n_freq // SNIPPET_BINS
        slots = rng.choice(n_windows, size=min(args.n_signals, n_windows), replace=False)
        for w in sorted(slots):
            p = SignalParams(
                snr=float(rng.uniform(*args.snr)),
                drift_rate=float(rng.uniform(*args.drift)),
                width=float(rng.uniform(*args.width)),
                f_center=spec.bin_freq(int(w) * SNIPPET_BINS + int(rng.integers(20, 60))),
            )
            spec = inject_signal(spec, p)
            manifest.append(f"band.rssg,{w},{p.snr:.4f},{p.drift_rate:.4f},"
                            f"{p.width:.4f},{p.f_center:.4f}")
        write_rssg(out / "band.rssg", spec)
        print(f"wrote band.rssg ({spec.n_time}x{spec.n_freq}) with {len(slots)} signals")
    (out / "manifest.csv").write_text("\n".join(manifest) + "\n")
    _write_run_json(out, "synth", argv)
    return 0


def cmd_detect(args, argv) -> int:
    spec = read_rssg(args.input)
    if not args.no_bandpass:
        spec = bandpass_correct(spec, args.coarse_width_hz, args.knot_spacing)
    threshold = args.threshold
    if args.calibrate:
        threshold = calibrate_threshold(n_windows=300, seed=args.seed)
        print(f"calibrated threshold {threshold:.2f} (operating default {DEFAULT_THRESHOLD})")
    hits = detect(spec, threshold=threshold, invert=args.invert)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(hits_csv_lines(hits, source_id=Path(args.input).stem)) + "\n")
    _write_run_json(out.parent, "detect", argv)
    print(f"{len(hits)} {'noise' if args.invert else 'signal'} windows -> {out}")
    return 0


def _model_config_from_args(args) -> ModelConfig:
    return ModelConfig(
        latent_dim=args.latent_dim, conv_filters=args.conv_filters,
        dense_sizes=args.dense_sizes, beta=args.beta, learning_rate=args.lr,
        batch_size=args.batch_size, max_epochs=args.max_epochs,
        patience=args.patience, seed=args.seed,
    )


def cmd_train(args, argv) -> int:
    snippets = _load_snippets_dir(Path(args.data))
    cfg = _model_config_from_args(args)
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(snippets))
    n_val = max(1, int(round(args.val_frac * len(snippets))))
    val = [snippets[i] for i in order[:n_val]]
    tr = [snippets[i] for i in order[n_val:]]
    params, tlog = bvae.train(tr, val, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bvae.save_checkpoint(out, params, cfg)
    log_path = Path(args.log) if args.log else out.with_suffix(".losses.csv")
    log_path.write_text("\n".join(tlog.csv_lines()) + "\n")
    _write_run_json(out.parent, "train", argv)
    kind = "plain autoencoder" if cfg.beta == 0 else "beta-VAE"
    print(f"trained {kind} for {len(tlog.rows)} epochs "
          f"(best epoch {tlog.best_epoch}, val {tlog.best_val:.6f}) -> {out}")
    return 0


def cmd_index(args, argv) -> int:
    params, cfg = bvae.load_checkpoint(args.model)
    snippets = _load_snippets_dir(Path(args.data))
    ecfg = None
    if args.embed:
        ecfg = EmbeddingConfig(d=cfg.latent_dim, n=args.embed_n, seq_len=args.seq_len,
                               band_start=args.band[0], band_width=args.band[1],
                               weight=args.embed_weight)
    index = build_index(snippets, (params, cfg), ecfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_rssi(out, index)
    _write_run_json(out.parent, "index", argv)
    dropped = f", {index.dropped} zero-norm dropped" if index.dropped else ""
    print(f"indexed {len(index)} records (embedded={index.embedded}{dropped}) -> {out}")
    return 0


def cmd_search(args, argv) -> int:
    params, cfg = bvae.load_checkpoint(args.model)
    index = read_rssi(args.index, model=(params, cfg))
    if index.embedded and args.soi_freq is None:
        print("error: index uses frequency embedding; --soi-freq is required",
              file=sys.stderr)
        return 2
    soi_spec = read_rssg(args.soi)
    soi = snippets_from_spectrogram(soi_spec, SNIPPET_BINS,
                                    source_id=Path(args.soi).stem)[0]
    results = query(index, soi, soi_freq=args.soi_freq, k=args.k,
                    exclude_self=args.exclude_self, workers=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(results_csv_lines(results, index)) + "\n")
    if args.hist:
        hist = frequency_histogram(results, index, args.hist_bin_width)
        lines = ["bin_start_hz,count"] + [f"{b:.6f},{c}" for b, c in hist.items()]
        Path(args.hist).write_text("\n".join(lines) + "\n")
    if args.dump_dir:
        dump = Path(args.dump_dir)
        dump.mkdir(parents=True, exist_ok=True)
        write_pgm(dump / "soi.pgm", soi.data)
        data_dir = Path(args.data) if args.data else Path(args.soi).parent
        for rank, r in enumerate(results, 1):
            m = index.meta[r.record_ref]
            src = data_dir / f"{m.source_id}.rssg"
            if src.exists():
                spec = read_rssg(src)
                snip = snippets_from_spectrogram(spec, SNIPPET_BINS)[0]
                write_pgm(dump / f"rank{rank:03d}_{m.source_id}.pgm", snip.data)
    _write_run_json(out.parent, "search", argv)
    print(f"top {len(results)} matches -> {out}"
          + (f" (best score {results[0].score:.6f})" if results else ""))
    return 0


def _make_training_snippets(n, seed, ranges, nuisance_rate):
    """Balanced signal/noise snippets drawn from the synthesis distribution."""
    gen = SnippetFactorPairs(ranges, nuisance_rate=nuisance_rate)
    rng = np.random.default_rng(seed)
    signal = []
    for _ in range((n // 2 + 1) // 2):
        a, b = gen(int(rng.integers(gen.n_factors)), 1, rng)
        signal.extend([a[0], b[0]])
    noise = []
    for i in range(n - len(signal)):
        noise.extend(snippets_from_spectrogram(gen_noise(16, SNIPPET_BINS,
                                                         seed=seed * 9173 + i)))
    return balance_dataset(signal, noise, seed=seed)


def cmd_eval(args, argv) -> int:
    names = [n.strip() for n in args.extractors.split(",") if n.strip()]
    ranges = _ranges_from_args(args)
    eval_cfg = EvalConfig(n_classes=args.classes, per_class=args.per_class, ranges=ranges,
                          nuisance_rate=args.nuisance_rate, n_votes=args.n_votes,
                          n_pairs_per_vote=args.n_pairs)
    extractors = {}
    disent = {}
    needed = [n for n in names if n in ("ae", "bvae")]
    if needed:
        data = _make_training_snippets(args.train_snippets, args.seed + 1,
                                       ranges, args.nuisance_rate)
        n_val = max(1, len(data) // 6)
        tr, va = data[n_val:], data[:n_val]
        for name in needed:
            beta = 0.0 if name == "ae" else args.beta
            cfg = replace(_model_config_from_args(args), beta=beta)
            print(f"training extractor {name} (beta={beta}) on {len(tr)} snippets ...")
            params, tlog = bvae.train(tr, va, cfg)
            print(f"  {len(tlog.rows)} epochs, best val {tlog.best_val:.6f}")
            enc = bvae_encoder(params, cfg)
            extractors[name] = enc
            disent[name] = enc
    for name in names:
        if name == "naive":
            extractors["naive"] = lambda snips: np.stack(
                [naive_raw_features(s) for s in snips])
        elif name not in ("ae", "bvae"):
            print(f"error: unknown extractor {name!r}", file=sys.stderr)
            return 2
    report = run_benchmark(extractors, eval_cfg, n_trials=args.trials, seed=args.seed,
                           disent_encoders=disent)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(report.csv_lines()) + "\n")
    _write_run_json(out.parent, "eval", argv)
    print(report.table_str())
    return 0


def cmd_tune(args, argv) -> int:
    classes = build_eval_set(args.classes, args.per_class, _ranges_from_args(args),
                             seed=args.seed, nuisance_rate=args.nuisance_rate)
    base = _model_config_from_args(args)
    best = bvae.tune(bvae.table_grid(), budget=args.budget, eval_set=classes,
                     seed=args.seed, trial_epochs=args.trial_epochs, base=base)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(best.to_json() + "\n")
    _write_run_json(out.parent, "tune", argv)
    print(f"best config -> {out}\n{best}")
    return 0


def cmd_pipeline(args, argv) -> int:
    """Small end-to-end demo: synth band -> detect -> train -> index -> search."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rc = cmd_synth(argparse.Namespace(
        mode="band", out=str(out / "data"), seed=args.seed, n_freq=args.n_freq,
        n_signals=args.n_signals, snr=(30.0, 60.0), drift=(-2.0, 2.0),
        width=(20.0, 70.0), classes=0, per_class=0, nuisance_rate=0.0,
        freq_jitter=None, band=(1.8e9, 1.1e9)), argv)
    if rc:
        return rc
    band_file = out / "data" / "band.rssg"
    spec = bandpass_correct(read_rssg(band_file), DEFAULT_COARSE_HZ)
    sig_hits = detect(spec)
    noi_hits = detect(spec, invert=True)
    (out / "hits.csv").write_text(
        "\n".join(hits_csv_lines(sig_hits + noi_hits, source_id="band")) + "\n")
    raw = read_rssg(band_file)
    sig_snips = [normalize_snippet(shift_positive(raw.data[:16, h.start_bin:h.start_bin + 256]),
                                   source_id=f"win{h.start_bin}", start_bin=h.start_bin,
                                   center_freq=raw.f_start + (h.start_bin + 128) * raw.df)
                 for h in sig_hits]
    noi_snips = [normalize_snippet(shift_positive(raw.data[:16, h.start_bin:h.start_bin + 256]),
                                   source_id=f"win{h.start_bin}", start_bin=h.start_bin,
                                   center_freq=raw.f_start + (h.start_bin + 128) * raw.df)
                 for h in noi_hits]
    if not sig_snips:
        print("error: no signal windows detected; pipeline cannot continue", file=sys.stderr)
        return 1
    training = balance_dataset(sig_snips, noi_snips, seed=args.seed)
    cfg = ModelConfig(latent_dim=args.latent_dim, conv_filters=args.conv_filters,
                      dense_sizes=args.dense_sizes, beta=args.beta, learning_rate=args.lr,
                      batch_size=8, max_epochs=args.max_epochs, patience=args.max_epochs,
                      seed=args.seed)
    n_val = max(1, len(training) // 5)
    params, tlog = bvae.train(training[n_val:], training[:n_val], cfg)
    bvae.save_checkpoint(out / "model.rssm", params, cfg)
    (out / "losses.csv").write_text("\n".join(tlog.csv_lines()) + "\n")
    index = build_index(sig_snips, (params, cfg))
    write_rssi(out / "index.rssi", index)
    soi = sig_snips[0]
    results = query(index, soi, k=min(10, len(index)), workers=args.threads)
    (out / "results.csv").write_text("\n".join(results_csv_lines(results, index)) + "\n")
    hist = frequency_histogram(results, index, bin_width=1e5)
    (out / "hist.csv").write_text(
        "\n".join(["bin_start_hz,count"] + [f"{b:.6f},{c}" for b, c in hist.items()]) + "\n")
    dump = out / "matches"
    dump.mkdir(exist_ok=True)
    write_pgm(dump / "soi.pgm", soi.data)
    for rank, r in enumerate(results, 1):
        m = index.meta[r.record_ref]
        snip = next(s for s in sig_snips if s.source_id == m.source_id)
        write_pgm(dump / f"rank{rank:03d}_{m.source_id}.pgm", snip.data)
    _write_run_json(out, "pipeline", argv)
    print(f"pipeline complete: {len(sig_hits)} detections, "
          f"{len(tlog.rows)} training epochs, top score {results[0].score:.6f}")
    return 0


def cmd_replay(args, argv) -> int:
    payload = json.loads(Path(args.run_json).read_text())
    print(f"replaying: lookalike {' '.join(payload['argv'])}")
    return main(payload["argv"])


def _add_model_flags(p, beta_default=2.0):
    p.add_argument("--latent-dim", type=int, default=5)
    p.add_argument("--conv-filters", type=_int_list, default=(16, 32, 32, 32, 32))
    p.add_argument("--dense-sizes", type=_int_list, default=(32, 16))
    p.add_argument("--beta", type=float, default=beta_default,
                   help="KL weight; 0 trains a plain autoencoder")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)


def _add_range_flags(p):
    p.add_argument("--snr", type=_range_pair, default=(20.0, 70.0))
    p.add_argument("--drift", type=_range_pair, default=(-2.0, 2.0))
    p.add_argument("--width", type=_range_pair, default=(20.0, 70.0))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lookalike",
        description="Reverse search for lookalike signals in radio spectrograms.")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for blocked similarity scoring")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic spectrograms with ground truth")
    p.add_argument("--mode", choices=("classes", "band"), default="classes")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--n-freq", type=int, default=8192, help="band mode: total bins")
    p.add_argument("--n-signals", type=int, default=8, help="band mode: injections")
    p.add_argument("--nuisance-rate", type=float, default=0.0)
    p.add_argument("--freq-jitter", type=float, default=None,
                   help="localize each class within this many Hz of a home frequency")
    p.add_argument("--band", type=_range_pair, default=(1.8e9, 1.1e9),
                   metavar="START:WIDTH")
    _add_range_flags(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("detect", help="bandpass-correct and flag excess-energy windows")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--invert", action="store_true", help="select noise-consistent windows")
    p.add_argument("--coarse-width-hz", type=float, default=DEFAULT_COARSE_HZ)
    p.add_argument("--knot-spacing", type=int, default=64)
    p.add_argument("--no-bandpass", action="store_true")
    p.add_argument("--calibrate", action="store_true",
                   help="re-derive the threshold on synthetic noise and use it")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("train", help="train the feature extractor on snippet files")
    p.add_argument("--data", required=True, help="directory of .rssg snippet files")
    p.add_argument("--out", required=True, help="checkpoint path (.rssm)")
    p.add_argument("--log", default=None, help="per-epoch loss CSV path")
    p.add_argument("--val-frac", type=float, default=0.2)
    p.add_argument("--seed", type=int, required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index", help="encode snippets into a searchable index")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embed", action="store_true", help="add frequency embedding")
    p.add_argument("--seq-len", type=int, default=1000)
    p.add_argument("--band", type=_range_pair, default=(1.8e9, 1.1e9),
                   metavar="START:WIDTH")
    p.add_argument("--embed-weight", type=float, default=1.0)
    p.add_argument("--embed-n", type=float, default=10_000.0)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="top-k lookalike retrieval for a signal of interest")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--soi", required=True, help="RSSG file holding the query snippet")
    p.add_argument("--soi-freq", type=float, default=None)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--hist", default=None, help="frequency histogram CSV of the results")
    p.add_argument("--hist-bin-width", type=float, default=1e6)
    p.add_argument("--dump-dir", default=None, help="write PGM images of the matches")
    p.add_argument("--data", default=None, help="snippet directory for PGM dumps")
    p.add_argument("--exclude-self", action="store_true")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="benchmark feature extractors on synthetic classes")
    p.add_argument("--extractors", default="naive,ae,bvae")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--nuisance-rate", type=float, default=0.3)
    p.add_argument("--train-snippets", type=int, default=640)
    p.add_argument("--n-votes", type=int, default=80)
    p.add_argument("--n-pairs", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_range_flags(p)
    _add_model_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tune", help="random-search hyperparameters on a labeled set")
    p.add_argument("--budget", type=int, default=16)
    p.add_argument("--trial-epochs", type=int, default=5)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--nuisance-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_range_flags(p)
    _add_model_flags(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("pipeline", help="end-to-end demo on one synthetic band")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-freq", type=int, default=8192)
    p.add_argument("--n-signals", type=int, default=10)
    _add_model_flags(p, beta_default=0.003)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("replay", help="re-run a command from its run.json")
    p.add_argument("run_json")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, list(argv))
    except LookalikeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

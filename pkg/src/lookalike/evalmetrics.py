"""Synthetic labeled test sets and representation-quality metrics.

A test set is built from classes of injected signals: within a class the
(snr, drift, width) signature is fixed and only the frequency position
varies. Feature extractors are compared on three axes: the standard
silhouette score, a centroid-variant silhouette used for fast tuning, a
cluster tightness ratio (max over mean distance to centroid), and a
disentanglement score probing whether single latent dimensions track single
generative factors.

Backgrounds are pure Gaussian noise by default. ``nuisance_rate`` mixes in
unrelated interferers of random brightness, making the background pool
heterogeneous the way sampled real observations are; benchmark orderings
between learned and pixel-space extractors depend on that heterogeneity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bvae.adam import AdamState, adam_step
from .bvae.model import ModelConfig, encode_mu
from .errors import (
    DegenerateCluster,
    EmptyDataset,
    InvalidClustering,
    InvalidConfig,
)
from .spectrogram import (
    SNIPPET_BINS,
    SignalParams,
    Snippet,
    gen_noise,
    inject_signal,
    normalize_snippet,
    shift_positive,
)

log = logging.getLogger(__name__)

FACTOR_NAMES = ("snr", "drift_rate", "width", "freq_pos")


@dataclass
class SignalRanges:
    snr: tuple = (20.0, 70.0)
    drift: tuple = (-2.0, 2.0)
    width: tuple = (20.0, 70.0)

    def __post_init__(self):
        for name in ("snr", "drift", "width"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise InvalidConfig(f"range {name} must satisfy lo < hi, got ({lo}, {hi})")
        if self.snr[0] <= 0 or self.width[0] <= 0:
            raise InvalidConfig("snr and width ranges must be positive")


@dataclass
class EvalClass:
    class_id: int
    params: SignalParams  # shared (snr, drift_rate, width); f_center varies per snippet
    snippets: list


@dataclass
class FactorSample:
    factors: tuple
    fixed_index: int
    diff: np.ndarray


# nuisance interferers: log-uniform brightness with a heavy tail so a few
# backgrounds are dominated by an unrelated signal, as happens in randomly
# drawn real observations
_NUISANCE_SNR = (10.0, 10_000.0)
_NUISANCE_WIDTH = (10.0, 100.0)
_NUISANCE_DRIFT = (-3.0, 3.0)


def _synth_snippet(rng, p_class: SignalParams, f_start: float, nuisance_rate: float,
                   source_id: str) -> Snippet:
    spec = gen_noise(16, SNIPPET_BINS, seed=int(rng.integers(2**62)), f_start=f_start)
    if nuisance_rate > 0 and rng.random() < nuisance_rate:
        lo, hi = np.log(_NUISANCE_SNR[0]), np.log(_NUISANCE_SNR[1])
        nuisance = SignalParams(
            snr=float(np.exp(rng.uniform(lo, hi))),
            drift_rate=float(rng.uniform(*_NUISANCE_DRIFT)),
            width=float(rng.uniform(*_NUISANCE_WIDTH)),
            f_center=spec.bin_freq(int(rng.integers(20, SNIPPET_BINS - 20))),
        )
        spec = inject_signal(spec, nuisance)
    pos_bin = int(rng.integers(20, SNIPPET_BINS - 20))
    p = SignalParams(snr=p_class.snr, drift_rate=p_class.drift_rate,
                     width=p_class.width, f_center=spec.bin_freq(pos_bin))
    spec = inject_signal(spec, p)
    return normalize_snippet(
        shift_positive(spec.data), source_id=source_id, start_bin=0,
        center_freq=spec.f_start + (SNIPPET_BINS // 2) * spec.df)


def build_eval_set(n_classes: int, per_class: int, ranges: SignalRanges, seed: int,
                   band: tuple = (1.8e9, 1.1e9), freq_jitter_hz: float | None = None,
                   nuisance_rate: float = 0.0) -> list[EvalClass]:
    """Labeled classes of injected signals on fresh synthetic backgrounds.

    Each class draws one (snr, drift, width) signature; its snippets place
    that signature at random positions. Snippet carrier frequencies spread
    over ``band``; with ``freq_jitter_hz`` set, each class instead stays
    within that jitter of a class home frequency (a frequency-localized set).
    """
    if n_classes < 2 or per_class < 2:
        raise InvalidConfig(f"need n_classes >= 2 and per_class >= 2, got {n_classes}, {per_class}")
    ranges = ranges or SignalRanges()
    rng = np.random.default_rng(seed)
    band_start, band_width = band
    window_hz = SNIPPET_BINS * 2.79
    classes = []
    for cid in range(n_classes):
        sig = SignalParams(
            snr=float(rng.uniform(*ranges.snr)),
            drift_rate=float(rng.uniform(*ranges.drift)),
            width=float(rng.uniform(*ranges.width)),
            f_center=0.0,
        )
        home = band_start + rng.uniform(0, band_width - window_hz)
        snippets = []
        for j in range(per_class):
            if freq_jitter_hz is None:
                f_start = band_start + rng.uniform(0, band_width - window_hz)
            else:
                lo = max(band_start, home - freq_jitter_hz / 2)
                hi = min(band_start + band_width - window_hz, home + freq_jitter_hz / 2)
                f_start = rng.uniform(lo, hi)
            snippets.append(_synth_snippet(rng, sig, f_start, nuisance_rate,
                                           source_id=f"c{cid}_{j}"))
        classes.append(EvalClass(class_id=cid, params=sig, snippets=snippets))
    return classes


def flatten_eval_set(eval_set: list[EvalClass]):
    snippets = [s for c in eval_set for s in c.snippets]
    labels = np.array([c.class_id for c in eval_set for _ in c.snippets])
    return snippets, labels


def _pairwise_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def _check_clusters(labels, min_size=2):
    labels = np.asarray(labels)
    uniq, counts = np.unique(labels, return_counts=True)
    if uniq.size < 2:
        raise InvalidClustering("need at least two distinct labels")
    if (counts < min_size).any():
        small = uniq[counts < min_size]
        raise InvalidClustering(f"clusters {small.tolist()} have fewer than {min_size} members")
    return labels, uniq


def silhouette_score(features, labels) -> float:
    """Mean standard silhouette with Euclidean distances."""
    x = np.asarray(features, dtype=np.float64)
    labels, uniq = _check_clusters(labels, min_size=2)
    dist = _pairwise_distances(x)
    onehot = (labels[:, None] == uniq[None, :]).astype(np.float64)
    counts = onehot.sum(axis=0)
    sums = dist @ onehot  # (n, k): total distance from each point to each cluster
    own_col = np.searchsorted(uniq, labels)
    rows = np.arange(x.shape[0])
    a = sums[rows, own_col] / (counts[own_col] - 1)
    means = sums / counts
    means[rows, own_col] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom == 0, 0.0, (b - a) / np.where(denom == 0, 1.0, denom))
    return float(s.mean())


def modified_silhouette(features, labels) -> float:
    """Centroid variant used for tuning: intra = mean per-dimension standard
    deviation within a cluster, inter = mean pairwise centroid distance,
    combined on the silhouette's normalized-difference scale."""
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise InvalidClustering("need at least two distinct labels")
    centroids = np.stack([x[labels == c].mean(axis=0) for c in uniq])
    intra = float(np.mean([x[labels == c].std(axis=0).mean() for c in uniq]))
    cd = _pairwise_distances(centroids)
    inter = float(cd[np.triu_indices(uniq.size, k=1)].mean())
    denom = max(inter, intra)
    return 0.0 if denom == 0 else (inter - intra) / denom


def clustering_metric(features, labels) -> float:
    """Mean over clusters of (max / mean) distance to the cluster centroid;
    lower is tighter."""
    x = np.asarray(features, dtype=np.float64)
    labels, uniq = _check_clusters(labels, min_size=2)
    ratios = []
    for c in uniq:
        pts = x[labels == c]
        d = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
        mean_d = d.mean()
        if mean_d == 0:
            raise DegenerateCluster(f"cluster {c} members coincide")
        ratios.append(d.max() / mean_d)
    return float(np.mean(ratios))


def naive_features(snippet: Snippet) -> np.ndarray:
    """Row-major flattening of the normalized snippet, nothing else."""
    return np.asarray(snippet.data, dtype=np.float64).ravel().copy()


def naive_raw_features(snippet: Snippet) -> np.ndarray:
    """Row-major flattening of the raw (pre-normalization) window."""
    if snippet.raw is None:
        return naive_features(snippet)
    return np.asarray(snippet.raw, dtype=np.float64).ravel().copy()


class SnippetFactorPairs:
    """Generates snippet pairs sharing one fixed generative factor.

    Factors are (snr, drift rate, width, frequency position); the fixed one
    is drawn once per pair, the rest independently per side.
    """

    n_factors = len(FACTOR_NAMES)

    def __init__(self, ranges: SignalRanges | None = None, nuisance_rate: float = 0.0):
        self.ranges = ranges or SignalRanges()
        self.nuisance_rate = nuisance_rate

    def _draw(self, rng):
        return np.array([
            rng.uniform(*self.ranges.snr),
            rng.uniform(*self.ranges.drift),
            rng.uniform(*self.ranges.width),
            rng.integers(20, SNIPPET_BINS - 20),
        ])

    def _snippet(self, rng, factors):
        spec = gen_noise(16, SNIPPET_BINS, seed=int(rng.integers(2**62)))
        if self.nuisance_rate > 0 and rng.random() < self.nuisance_rate:
            lo, hi = np.log(_NUISANCE_SNR[0]), np.log(_NUISANCE_SNR[1])
            spec = inject_signal(spec, SignalParams(
                snr=float(np.exp(rng.uniform(lo, hi))),
                drift_rate=float(rng.uniform(*_NUISANCE_DRIFT)),
                width=float(rng.uniform(*_NUISANCE_WIDTH)),
                f_center=spec.bin_freq(int(rng.integers(20, SNIPPET_BINS - 20)))))
        p = SignalParams(snr=float(factors[0]), drift_rate=float(factors[1]),
                         width=float(factors[2]), f_center=spec.bin_freq(int(factors[3])))
        return normalize_snippet(shift_positive(inject_signal(spec, p).data))

    def __call__(self, fixed_index: int, n_pairs: int, rng):
        a_items, b_items = [], []
        for _ in range(n_pairs):
            fa, fb = self._draw(rng), self._draw(rng)
            fb[fixed_index] = fa[fixed_index]
            a_items.append(self._snippet(rng, fa))
            b_items.append(self._snippet(rng, fb))
        return a_items, b_items


class FactorVectorPairs:
    """Pair generator whose items are the factor vectors themselves;
    lets synthetic encoders (identity, noise) be scored directly."""

    n_factors = len(FACTOR_NAMES)

    def __init__(self, ranges: SignalRanges | None = None):
        self.ranges = ranges or SignalRanges()

    def _draw(self, rng):
        return np.array([
            rng.uniform(*self.ranges.snr),
            rng.uniform(*self.ranges.drift),
            rng.uniform(*self.ranges.width),
            rng.uniform(0, SNIPPET_BINS),
        ])

    def __call__(self, fixed_index: int, n_pairs: int, rng):
        a_items, b_items = [], []
        for _ in range(n_pairs):
            fa, fb = self._draw(rng), self._draw(rng)
            fb[fixed_index] = fa[fixed_index]
            a_items.append(fa)
            b_items.append(fb)
        return a_items, b_items


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _fit_linear_classifier(x, y, n_classes, iters=200, lr=0.05):
    """Multinomial logistic regression trained full-batch with Adam."""
    params = {"w": np.zeros((x.shape[1], n_classes)), "b": np.zeros(n_classes)}
    state = AdamState(m={k: np.zeros_like(v) for k, v in params.items()},
                      v={k: np.zeros_like(v) for k, v in params.items()})
    onehot = np.eye(n_classes)[y]
    for t in range(1, iters + 1):
        p = _softmax(x @ params["w"] + params["b"])
        g = (p - onehot) / x.shape[0]
        grads = {"w": x.T @ g, "b": g.sum(axis=0)}
        params, state = adam_step(params, grads, state, lr, t)
    return params


def disentanglement_score(encoder, factor_generator, n_votes: int = 100,
                          n_pairs_per_vote: int = 12, seed: int = 0,
                          train_frac: float = 0.7, return_votes: bool = False):
    """Held-out accuracy of a linear classifier naming the fixed factor.

    Per vote: draw pairs sharing one fixed factor, encode both sides, and
    average |z_a - z_b| into one feature vector labeled by the fixed-factor
    index. Chance level is 1/n_factors.
    """
    rng = np.random.default_rng(seed)
    n_factors = getattr(factor_generator, "n_factors", len(FACTOR_NAMES))
    votes: list[FactorSample] = []
    for _ in range(n_votes):
        fixed = int(rng.integers(n_factors))
        a_items, b_items = factor_generator(fixed, n_pairs_per_vote, rng)
        za = np.asarray(encoder(a_items), dtype=np.float64)
        zb = np.asarray(encoder(b_items), dtype=np.float64)
        diff = np.abs(za - zb).mean(axis=0)
        votes.append(FactorSample(factors=(), fixed_index=fixed, diff=diff))
    labels = np.array([v.fixed_index for v in votes])
    if np.unique(labels).size < 2:
        raise InvalidConfig("votes cover fewer than two distinct fixed factors")
    feats = np.stack([v.diff for v in votes])

    order = rng.permutation(n_votes)
    n_train = max(2, int(round(train_frac * n_votes)))
    tr, te = order[:n_train], order[n_train:]
    if te.size == 0:
        raise InvalidConfig("vote budget too small for a held-out split")
    mean, std = feats[tr].mean(axis=0), feats[tr].std(axis=0)
    std[std == 0] = 1.0
    xtr, xte = (feats[tr] - mean) / std, (feats[te] - mean) / std
    clf = _fit_linear_classifier(xtr, labels[tr], n_factors)
    pred = np.argmax(xte @ clf["w"] + clf["b"], axis=1)
    acc = float((pred == labels[te]).mean())
    if return_votes:
        return acc, votes
    return acc


def bvae_encoder(params, cfg: ModelConfig):
    """Adapts a trained model to the encoder protocol used by the metrics."""
    def encode(items):
        return encode_mu(items, params, cfg)
    return encode


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)  # (extractor, metric, mean, std, n_trials)

    def csv_lines(self) -> list[str]:
        lines = ["extractor,metric,mean,std,n_trials"]
        for name, metric, mean, std, n in self.rows:
            lines.append(f"{name},{metric},{mean:.6f},{std:.6f},{n}")
        return lines

    def table_str(self) -> str:
        width = max(len(r[0]) for r in self.rows) + 2
        out = [f"{'extractor':<{width}}{'metric':<16}{'mean':>12}{'std':>12}"]
        for name, metric, mean, std, _ in self.rows:
            out.append(f"{name:<{width}}{metric:<16}{mean:>12.4f}{std:>12.4f}")
        return "\n".join(out)


@dataclass
class EvalConfig:
    n_classes: int = 10
    per_class: int = 100
    ranges: SignalRanges = field(default_factory=SignalRanges)
    band: tuple = (1.8e9, 1.1e9)
    nuisance_rate: float = 0.0
    freq_jitter_hz: float | None = None
    n_votes: int = 80
    n_pairs_per_vote: int = 10


def run_benchmark(extractors: dict, eval_cfg: EvalConfig, n_trials: int, seed: int = 0,
                  disent_encoders: dict | None = None) -> BenchmarkReport:
    """Mean and standard deviation of each metric over fresh-set trials.

    ``extractors`` maps a name to a callable turning a snippet list into a
    feature matrix. ``disent_encoders`` optionally maps names to latent
    encoders scored with the disentanglement metric.
    """
    if not extractors:
        raise EmptyDataset("no extractors given")
    scores: dict[tuple, list] = {}
    for trial in range(n_trials):
        eval_set = build_eval_set(eval_cfg.n_classes, eval_cfg.per_class, eval_cfg.ranges,
                                  seed=seed + trial, band=eval_cfg.band,
                                  freq_jitter_hz=eval_cfg.freq_jitter_hz,
                                  nuisance_rate=eval_cfg.nuisance_rate)
        snippets, labels = flatten_eval_set(eval_set)
        for name, extractor in extractors.items():
            feats = np.asarray(extractor(snippets), dtype=np.float64)
            scores.setdefault((name, "silhouette"), []).append(silhouette_score(feats, labels))
            scores.setdefault((name, "clustering"), []).append(clustering_metric(feats, labels))
        for name, encoder in (disent_encoders or {}).items():
            gen = SnippetFactorPairs(eval_cfg.ranges, nuisance_rate=eval_cfg.nuisance_rate)
            acc = disentanglement_score(encoder, gen, n_votes=eval_cfg.n_votes,
                                        n_pairs_per_vote=eval_cfg.n_pairs_per_vote,
                                        seed=seed * 7919 + trial)
            scores.setdefault((name, "disentanglement"), []).append(acc)
        log.info("benchmark trial %d/%d done", trial + 1, n_trials)
    report = BenchmarkReport()
    for (name, metric), vals in scores.items():
        arr = np.asarray(vals)
        report.rows.append((name, metric, float(arr.mean()),
                            float(arr.std()) if len(vals) > 1 else 0.0, n_trials))
    return report

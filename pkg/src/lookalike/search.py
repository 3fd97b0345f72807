"""Feature index and top-k cosine retrieval over encoded snippets.

Features are inference-mode latent means, optionally adjusted by the
frequency embedding. Queries score every stored row with a blocked
matrix-vector product (exact, no approximation) and return the k best.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .bvae.model import ModelConfig, encode_mu
from .embedding import EmbeddingConfig, embedding_table, freq_to_index
from .errors import (
    EmptyDataset,
    FormatError,
    InvalidConfig,
    MissingFrequency,
    ShapeError,
)
from .spectrogram import Snippet

_RSSI_MAGIC = b"RSSI"
_RSSI_VERSION = 1

DEFAULT_BLOCK_ROWS = 4096


@dataclass
class RecordMeta:
    source_id: str
    start_bin: int
    center_freq: float


@dataclass
class SearchResult:
    record_ref: int
    score: float


@dataclass
class Index:
    features: np.ndarray  # (n_records, d) float32
    meta: list[RecordMeta]
    embedded: bool = False
    ecfg: EmbeddingConfig | None = None
    model: tuple | None = field(default=None, repr=False)  # (params, ModelConfig)
    dropped: int = 0

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]


def _encode_features(snippets, params, mcfg, ecfg):
    feats = encode_mu(snippets, params, mcfg)
    if ecfg is not None:
        table = embedding_table(ecfg)
        if feats.shape[1] != ecfg.d:
            raise ShapeError(f"latent dim {feats.shape[1]} != embedding d {ecfg.d}")
        ks = np.array([freq_to_index(s.center_freq, ecfg) for s in snippets])
        feats = feats + ecfg.weight * table[ks]
    return feats


def build_index(snippets: list[Snippet], model, ecfg: EmbeddingConfig | None = None) -> Index:
    """Encode snippets (z = mu) into a feature matrix with provenance.

    ``model`` is a (params, ModelConfig) pair. Zero-norm feature rows are
    dropped (cosine undefined) and counted in ``Index.dropped``.
    """
    if not snippets:
        raise EmptyDataset("no snippets to index")
    params, mcfg = model
    feats = _encode_features(snippets, params, mcfg, ecfg)
    norms = np.linalg.norm(feats, axis=1)
    keep = norms > 0
    dropped = int((~keep).sum())
    if not keep.any():
        raise EmptyDataset("all feature vectors have zero norm")
    meta = [RecordMeta(s.source_id, s.start_bin, s.center_freq)
            for s, k in zip(snippets, keep) if k]
    return Index(features=feats[keep].astype(np.float32), meta=meta,
                 embedded=ecfg is not None, ecfg=ecfg, model=(params, mcfg),
                 dropped=dropped)


def index_from_features(features, meta=None, ecfg: EmbeddingConfig | None = None) -> Index:
    """Wrap precomputed feature vectors (used by tests and tooling)."""
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2 or features.shape[0] == 0:
        raise EmptyDataset("need a non-empty (n, d) feature matrix")
    if meta is None:
        meta = [RecordMeta(str(i), 0, 0.0) for i in range(features.shape[0])]
    return Index(features=features, meta=list(meta), embedded=ecfg is not None, ecfg=ecfg)


def query_vector(index: Index, q: np.ndarray, k: int,
                 block_rows: int = DEFAULT_BLOCK_ROWS,
                 workers: int = 1) -> list[SearchResult]:
    """Top-k cosine scores of a raw query vector against the index.

    Row blocks score independently into disjoint slices of one output
    array, so results are identical for any ``workers`` count.
    """
    if k < 1:
        raise InvalidConfig(f"k must be >= 1, got {k}")
    q = np.asarray(q, dtype=np.float64).ravel()
    if q.shape[0] != index.d:
        raise ShapeError(f"query dim {q.shape[0]} != index dim {index.d}")
    qn = np.linalg.norm(q)
    if qn == 0:
        raise ShapeError("query vector has zero norm")
    n = len(index)
    scores = np.empty(n, dtype=np.float64)

    def score_block(lo):
        block = index.features[lo:lo + block_rows].astype(np.float64)
        norms = np.linalg.norm(block, axis=1)
        scores[lo:lo + block.shape[0]] = (block @ q) / (norms * qn)

    starts = range(0, n, block_rows)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(score_block, starts))
    else:
        for lo in starts:
            score_block(lo)
    k = min(k, n)
    # stable sort on descending score: ties resolve to ascending record index
    order = np.argsort(-scores, kind="stable")[:k]
    return [SearchResult(int(i), float(scores[i])) for i in order]


def query(index: Index, soi: Snippet, soi_freq: float | None = None, k: int = 10,
          exclude_self: bool = False, block_rows: int = DEFAULT_BLOCK_ROWS,
          workers: int = 1) -> list[SearchResult]:
    """Encode a signal of interest exactly like the index build and rank records.

    ``soi_freq`` (falls back to the snippet's own center frequency) is
    required when the index was built with frequency embedding. With
    ``exclude_self`` records carrying the SOI's (source_id, start_bin)
    provenance are suppressed.
    """
    if index.model is None:
        raise InvalidConfig("index has no attached encoder model")
    params, mcfg = index.model
    ecfg = index.ecfg
    snip = soi
    if index.embedded:
        if soi_freq is None:
            raise MissingFrequency("embedded index requires a query frequency")
        snip = Snippet(soi.data, source_id=soi.source_id, start_bin=soi.start_bin,
                       center_freq=soi_freq, degenerate=soi.degenerate)
    q = _encode_features([snip], params, mcfg, ecfg)[0]
    extra = 0
    if exclude_self:
        extra = sum(1 for m in index.meta
                    if m.source_id == soi.source_id and m.start_bin == soi.start_bin)
    results = query_vector(index, q, min(k + extra, len(index)), block_rows=block_rows,
                           workers=workers)
    if exclude_self:
        results = [r for r in results
                   if not (index.meta[r.record_ref].source_id == soi.source_id
                           and index.meta[r.record_ref].start_bin == soi.start_bin)]
    return results[:k]


def frequency_histogram(results: list[SearchResult], index: Index, bin_width: float) -> dict:
    """Counts of result center frequencies per ``bin_width`` Hz bin."""
    if bin_width <= 0:
        raise InvalidConfig(f"bin_width must be positive, got {bin_width}")
    if not results:
        raise EmptyDataset("no results to histogram")
    hist: dict[float, int] = {}
    for r in results:
        f = index.meta[r.record_ref].center_freq
        start = np.floor(f / bin_width) * bin_width
        hist[start] = hist.get(start, 0) + 1
    return dict(sorted(hist.items()))


def results_csv_lines(results: list[SearchResult], index: Index) -> list[str]:
    lines = ["rank,score,source_id,start_bin,center_freq_hz"]
    for rank, r in enumerate(results, 1):
        m = index.meta[r.record_ref]
        lines.append(f"{rank},{r.score:.8f},{m.source_id},{m.start_bin},{m.center_freq:.6f}")
    return lines


def write_rssi(path, index: Index) -> None:
    """Little-endian RSSI index container."""
    with open(path, "wb") as fh:
        fh.write(_RSSI_MAGIC)
        fh.write(struct.pack("<HIQB", _RSSI_VERSION, index.d, len(index), int(index.embedded)))
        if index.embedded:
            blob = index.ecfg.to_json().encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
        fh.write(np.ascontiguousarray(index.features, dtype="<f4").tobytes())
        for m in index.meta:
            sid = m.source_id.encode("utf-8")
            fh.write(struct.pack("<I", len(sid)))
            fh.write(sid)
            fh.write(struct.pack("<qd", m.start_bin, m.center_freq))


def _read_exact(fh, count, path):
    buf = fh.read(count)
    if len(buf) != count:
        raise FormatError(f"{path}: truncated index file")
    return buf


def read_rssi(path, model=None) -> Index:
    """Load an RSSI file; ``model`` (params, config) re-attaches the encoder."""
    with open(path, "rb") as fh:
        if fh.read(4) != _RSSI_MAGIC:
            raise FormatError(f"{path}: not an RSSI index")
        version, d, count, embedded = struct.unpack("<HIQB", _read_exact(fh, 15, path))
        if version != _RSSI_VERSION:
            raise FormatError(f"{path}: unsupported RSSI version {version}")
        ecfg = None
        if embedded:
            (blob_len,) = struct.unpack("<I", _read_exact(fh, 4, path))
            ecfg = EmbeddingConfig.from_json(_read_exact(fh, blob_len, path).decode("utf-8"))
        feats = np.frombuffer(_read_exact(fh, 4 * d * count, path), dtype="<f4")
        feats = feats.reshape(count, d).copy()
        meta = []
        for _ in range(count):
            (sid_len,) = struct.unpack("<I", _read_exact(fh, 4, path))
            sid = _read_exact(fh, sid_len, path).decode("utf-8")
            start_bin, center = struct.unpack("<qd", _read_exact(fh, 16, path))
            meta.append(RecordMeta(sid, start_bin, center))
    return Index(features=feats, meta=meta, embedded=bool(embedded), ecfg=ecfg, model=model)

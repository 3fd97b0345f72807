import numpy as np
import pytest

from lookalike.bvae.model import ModelConfig, init_params
from lookalike.embedding import EmbeddingConfig, embedding_table, freq_to_index
from lookalike.errors import (
    EmptyDataset,
    FormatError,
    InvalidConfig,
    MissingFrequency,
    ShapeError,
)
from lookalike.search import (
    Index,
    RecordMeta,
    build_index,
    frequency_histogram,
    index_from_features,
    query,
    query_vector,
    read_rssi,
    results_csv_lines,
    write_rssi,
)
from lookalike.spectrogram import SignalParams, gen_noise, inject_signal, snippets_from_spectrogram

SMALL_CFG = ModelConfig(latent_dim=5, conv_filters=(2, 4, 4), dense_sizes=(16, 8), seed=11)


def make_snippets(n, seed, band_start=1.8e9):
    """Signal-bearing snippets spread over a wide band."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        f_start = band_start + rng.uniform(0, 1.0e9)
        spec = gen_noise(16, 256, seed=seed * 1000 + i, f_start=f_start)
        p = SignalParams(snr=rng.uniform(20, 70), drift_rate=rng.uniform(-2, 2),
                         width=rng.uniform(20, 70), f_center=spec.bin_freq(rng.integers(40, 216)))
        out.extend(snippets_from_spectrogram(inject_signal(spec, p), source_id=f"s{seed}_{i}"))
    return out


@pytest.fixture(scope="module")
def model():
    return init_params(SMALL_CFG), SMALL_CFG


@pytest.fixture(scope="module")
def plain_index(model):
    return build_index(make_snippets(40, seed=1), model)


class TestBuildIndex:
    def test_record_count_and_flags(self, plain_index):
        assert len(plain_index) == 40
        assert not plain_index.embedded
        assert plain_index.dropped == 0

    def test_embedding_adds_exact_adjustment(self, model):
        snips = make_snippets(15, seed=2)
        ecfg = EmbeddingConfig(d=5, band_start=1.8e9, band_width=1.1e9)
        base = build_index(snips, model)
        emb = build_index(snips, model, ecfg)
        table = embedding_table(ecfg)
        ks = np.array([freq_to_index(s.center_freq, ecfg) for s in snips])
        expect = base.features.astype(np.float64) + ecfg.weight * table[ks]
        assert np.abs(emb.features - expect).max() < 1e-5

    def test_deterministic(self, model):
        snips = make_snippets(10, seed=3)
        a = build_index(snips, model)
        b = build_index(snips, model)
        assert np.array_equal(a.features, b.features)

    def test_empty_rejected(self, model):
        with pytest.raises(EmptyDataset):
            build_index([], model)


class TestQuery:
    def test_self_retrieval_rank_one(self, model, plain_index):
        snips = make_snippets(5, seed=4)
        idx = build_index(make_snippets(30, seed=5) + snips, model)
        for s in snips:
            top = query(idx, s, k=3)[0]
            assert idx.meta[top.record_ref].source_id == s.source_id
            assert abs(top.score - 1.0) < 1e-6

    def test_orthogonal_features_score_zero(self):
        idx = index_from_features(np.eye(4, dtype=np.float32)[:1])
        res = query_vector(idx, np.array([0.0, 1.0, 0.0, 0.0]), k=1)
        assert res[0].score == pytest.approx(0.0, abs=1e-9)

    def test_k_clamped_to_index_size(self, plain_index, model):
        soi = make_snippets(1, seed=6)[0]
        res = query(plain_index, soi, k=10_000)
        assert len(res) == len(plain_index)
        scores = [r.score for r in res]
        assert scores == sorted(scores, reverse=True)

    def test_tie_break_by_record_index(self):
        feats = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]], dtype=np.float32)
        idx = index_from_features(feats)
        res = query_vector(idx, np.array([2.0, 0.0]), k=3)
        assert [r.record_ref for r in res] == [0, 2, 1]

    def test_missing_frequency_raises(self, model):
        snips = make_snippets(8, seed=7)
        idx = build_index(snips, model, EmbeddingConfig(d=5))
        with pytest.raises(MissingFrequency):
            query(idx, snips[0], soi_freq=None, k=3)

    def test_exclude_self(self, model):
        snips = make_snippets(10, seed=8)
        idx = build_index(snips, model)
        soi = snips[0]
        res = query(idx, soi, k=5, exclude_self=True)
        for r in res:
            m = idx.meta[r.record_ref]
            assert not (m.source_id == soi.source_id and m.start_bin == soi.start_bin)

    def test_blocked_equals_naive(self):
        rng = np.random.default_rng(9)
        feats = rng.normal(size=(1000, 8)).astype(np.float32)
        q = rng.normal(size=8)
        idx = index_from_features(feats)
        res = query_vector(idx, q, k=1000, block_rows=64)
        naive = {}
        for i, f in enumerate(feats.astype(np.float64)):
            naive[i] = float(f @ q / (np.linalg.norm(f) * np.linalg.norm(q)))
        for r in res:
            assert abs(r.score - naive[r.record_ref]) < 1e-6

    def test_scale_invariance(self):
        rng = np.random.default_rng(10)
        feats = rng.normal(size=(50, 6)).astype(np.float32)
        q = rng.normal(size=6)
        a = query_vector(index_from_features(feats), q, k=50)
        scaled = feats.copy()
        scaled[7] *= 3.7
        b = query_vector(index_from_features(scaled), q, k=50)
        assert [r.record_ref for r in a] == [r.record_ref for r in b]
        for ra, rb in zip(a, b):
            assert abs(ra.score - rb.score) < 1e-6

    def test_invalid_k(self, plain_index):
        with pytest.raises(InvalidConfig):
            query_vector(plain_index, np.ones(plain_index.d), k=0)

    def test_dim_mismatch(self, plain_index):
        with pytest.raises(ShapeError):
            query_vector(plain_index, np.ones(3), k=1)


class TestFrequencyHistogram:
    def test_single_frequency(self):
        idx = index_from_features(
            np.ones((5, 2), dtype=np.float32),
            meta=[RecordMeta(str(i), 0, 1.23e9) for i in range(5)],
        )
        res = query_vector(idx, np.ones(2), k=5)
        hist = frequency_histogram(res, idx, bin_width=1e6)
        assert list(hist.values()) == [5]

    def test_uniform_multinomial_bound(self):
        rng = np.random.default_rng(11)
        n = 1000
        freqs = rng.uniform(0, 10e6, size=n)
        idx = index_from_features(
            np.ones((n, 2), dtype=np.float32),
            meta=[RecordMeta(str(i), 0, f) for i, f in enumerate(freqs)],
        )
        res = query_vector(idx, np.ones(2), k=n)
        hist = frequency_histogram(res, idx, bin_width=1e6)
        assert sum(hist.values()) == n
        for count in hist.values():
            assert abs(count - 100) <= 40  # 3-sigma multinomial

    def test_bad_bin_width(self):
        idx = index_from_features(np.ones((2, 2), dtype=np.float32))
        res = query_vector(idx, np.ones(2), k=2)
        with pytest.raises(InvalidConfig):
            frequency_histogram(res, idx, bin_width=0.0)


class TestRssiFormat:
    def test_round_trip_bit_exact(self, tmp_path, model):
        snips = make_snippets(12, seed=12)
        idx = build_index(snips, model, EmbeddingConfig(d=5))
        path = tmp_path / "a.rssi"
        write_rssi(path, idx)
        blob = path.read_bytes()
        back = read_rssi(path)
        assert np.array_equal(back.features, idx.features)
        assert back.meta == idx.meta
        assert back.embedded and back.ecfg == idx.ecfg
        write_rssi(tmp_path / "b.rssi", back)
        assert (tmp_path / "b.rssi").read_bytes() == blob

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.rssi"
        idx = index_from_features(np.ones((2, 3), dtype=np.float32))
        write_rssi(path, idx)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"WHAT"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            read_rssi(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "cut.rssi"
        write_rssi(path, index_from_features(np.ones((4, 3), dtype=np.float32)))
        path.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(FormatError):
            read_rssi(path)

    def test_csv_lines(self, model):
        snips = make_snippets(4, seed=13)
        idx = build_index(snips, model)
        res = query(idx, snips[0], k=3)
        lines = results_csv_lines(res, idx)
        assert lines[0] == "rank,score,source_id,start_bin,center_freq_hz"
        assert len(lines) == 4
        assert lines[1].split(",")[0] == "1"

import math

import numpy as np
import pytest

from lookalike.embedding import (
    EmbeddingConfig,
    embed_feature,
    embedding_table,
    freq_to_index,
    positional_embedding,
)
from lookalike.errors import InvalidConfig, OutOfBand, ShapeError


def direct_reference(k, d, n):
    """Independent scalar evaluation of the adjustment formula."""
    out = []
    for i in range(d):
        if i % 2 == 0:
            out.append(math.sin(k / n ** (i / d)))
        else:
            out.append(math.cos(k / n ** ((i - 1) / d)))
    return np.array(out)


class TestPositionalEmbedding:
    def test_k0_d4(self):
        cfg = EmbeddingConfig(d=4)
        assert np.array_equal(positional_embedding(0, cfg), [0.0, 1.0, 0.0, 1.0])

    def test_k1_d4_values(self):
        cfg = EmbeddingConfig(d=4, n=10_000)
        got = positional_embedding(1, cfg)
        assert got == pytest.approx([0.8414709848, 0.5403023059, 0.0099998333, 0.9999500004], abs=1e-9)

    def test_k10_d4_values(self):
        cfg = EmbeddingConfig(d=4, n=10_000)
        got = positional_embedding(10, cfg)
        assert got == pytest.approx([-0.5440211109, -0.8390715291, 0.0998334166, 0.9950041653], abs=1e-9)

    @pytest.mark.parametrize("d", [4, 5])
    def test_matches_direct_reference_everywhere(self, d):
        cfg = EmbeddingConfig(d=d, n=10_000, seq_len=1000)
        table = embedding_table(cfg)
        for k in range(0, 1000):
            assert np.abs(table[k] - direct_reference(k, d, 10_000)).max() < 1e-12

    @pytest.mark.parametrize("d", [4, 5])
    def test_injective_over_index_range(self, d):
        cfg = EmbeddingConfig(d=d, n=10_000, seq_len=1000)
        table = embedding_table(cfg)[:1000]
        gaps = np.abs(table[:, None, :] - table[None, :, :]).max(axis=2)
        gaps[np.diag_indices(1000)] = np.inf
        assert gaps.min() > 1e-9

    def test_bounded_in_unit_interval(self):
        cfg = EmbeddingConfig(d=5)
        table = embedding_table(cfg)
        assert table.min() >= -1.0 and table.max() <= 1.0

    def test_k_out_of_range(self):
        cfg = EmbeddingConfig(d=4, seq_len=100)
        with pytest.raises(IndexError):
            positional_embedding(101, cfg)
        with pytest.raises(IndexError):
            positional_embedding(-1, cfg)
        positional_embedding(100, cfg)  # inclusive upper bound allowed


class TestFreqToIndex:
    CFG = EmbeddingConfig(d=5, seq_len=1000, band_start=1.8e9, band_width=1.1e9)

    def test_band_start_maps_to_zero(self):
        assert freq_to_index(1.8e9, self.CFG) == 0

    def test_midpoint(self):
        assert freq_to_index(1.8e9 + 0.55e9, self.CFG) == 500

    def test_band_end_is_out(self):
        with pytest.raises(OutOfBand):
            freq_to_index(2.9e9, self.CFG)

    def test_last_chunk(self):
        assert freq_to_index(2.9e9 - 1.0, self.CFG) == 999


class TestEmbedFeature:
    CFG = EmbeddingConfig(d=5)

    def test_zero_weight_identity(self):
        cfg = EmbeddingConfig(d=5, weight=0.0)
        z = np.arange(5.0)
        assert np.array_equal(embed_feature(z, 42, cfg), z)

    def test_zero_vector_yields_embedding(self):
        got = embed_feature(np.zeros(5), 17, self.CFG)
        assert np.array_equal(got, positional_embedding(17, self.CFG))

    def test_distinct_indices_distinct_outputs(self):
        z = np.full(5, 0.3)
        table = embedding_table(self.CFG)[:1000] + z[None, :]
        gaps = np.abs(table[:, None, :] - table[None, :, :]).max(axis=2)
        gaps[np.diag_indices(1000)] = np.inf
        assert gaps.min() > 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            embed_feature(np.zeros(4), 0, self.CFG)

    def test_adjustment_bounded_by_weight(self):
        cfg = EmbeddingConfig(d=5, weight=0.25)
        z = np.zeros(5)
        for k in (0, 1, 500, 999):
            assert np.abs(embed_feature(z, k, cfg)).max() <= 0.25


class TestLocality:
    def test_similarity_locality(self):
        # With ||z|| >> weight, mean cosine similarity between embed(z, k) and
        # embed(z, k + delta) decays over the first few chunks and stays
        # strictly below the delta=0 value for every delta up to 50. (The
        # sin(k), cos(k) dimensions revisit high similarity near delta = 2*pi,
        # so the decay is not monotone beyond the first quarter period.)
        cfg = EmbeddingConfig(d=5)
        table = embedding_table(cfg)
        rng = np.random.default_rng(0)

        def mean_sim(z, delta):
            ks = np.arange(0, 950)
            a = z[None, :] + table[ks]
            b = z[None, :] + table[ks + delta]
            num = (a * b).sum(axis=1)
            den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            return (num / den).mean()

        curves = []
        for _ in range(10):
            z = rng.normal(size=5)
            z *= 10.0 / np.linalg.norm(z)
            curves.append([mean_sim(z, d) for d in range(51)])
        mean_curve = np.mean(curves, axis=0)
        assert (np.diff(mean_curve[:4]) < 0).all()
        assert (mean_curve[1:] < mean_curve[0]).all()


class TestConfig:
    def test_invalid_configs_rejected(self):
        with pytest.raises(InvalidConfig):
            EmbeddingConfig(d=0)
        with pytest.raises(InvalidConfig):
            EmbeddingConfig(n=1.0)
        with pytest.raises(InvalidConfig):
            EmbeddingConfig(band_width=0.0)

    def test_json_round_trip(self):
        cfg = EmbeddingConfig(d=4, n=5000, seq_len=256, band_start=1e9, band_width=2e8, weight=0.5)
        assert EmbeddingConfig.from_json(cfg.to_json()) == cfg

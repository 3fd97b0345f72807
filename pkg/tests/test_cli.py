import json
from pathlib import Path

import numpy as np
import pytest

from lookalike.cli import main
from lookalike.spectrogram import gen_noise, write_rssg

TINY_MODEL = ["--latent-dim", "3", "--conv-filters", "2,4", "--dense-sizes", "8,4",
              "--batch-size", "8", "--max-epochs", "2", "--patience", "2",
              "--lr", "1e-3"]


def synth_args(out, classes=2, per_class=4, seed=3):
    return ["synth", "--classes", str(classes), "--per-class", str(per_class),
            "--seed", str(seed), "--out", str(out)]


class TestSynth:
    def test_classes_mode_counts(self, tmp_path):
        out = tmp_path / "d"
        assert main(synth_args(out)) == 0
        files = sorted(out.glob("*.rssg"))
        assert len(files) == 8
        manifest = (out / "manifest.csv").read_text().strip().splitlines()
        assert len(manifest) == 9  # header + one row per snippet
        assert (out / "run.json").exists()

    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(synth_args(a)) == 0
        assert main(synth_args(b)) == 0
        fa, fb = sorted(a.glob("*.rssg")), sorted(b.glob("*.rssg"))
        assert [f.name for f in fa] == [f.name for f in fb]
        for x, y in zip(fa, fb):
            assert x.read_bytes() == y.read_bytes()
        assert (a / "manifest.csv").read_text() == (b / "manifest.csv").read_text()

    def test_invalid_range_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(synth_args(tmp_path) + ["--snr", "70:20"])
        assert err.value.code == 2

    def test_missing_seed_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["synth", "--out", str(tmp_path)])
        assert err.value.code == 2

    def test_band_mode(self, tmp_path):
        out = tmp_path / "band"
        assert main(["synth", "--mode", "band", "--n-freq", "2048", "--n-signals", "3",
                     "--seed", "5", "--out", str(out)]) == 0
        assert (out / "band.rssg").exists()
        rows = (out / "manifest.csv").read_text().strip().splitlines()
        assert len(rows) == 4


class TestDetect:
    @pytest.fixture()
    def band_dir(self, tmp_path):
        out = tmp_path / "band"
        main(["synth", "--mode", "band", "--n-freq", "4096", "--n-signals", "4",
              "--snr", "40:70", "--seed", "11", "--out", str(out)])
        return out

    def test_detect_finds_signals(self, band_dir, tmp_path):
        out_csv = tmp_path / "hits.csv"
        assert main(["detect", "--input", str(band_dir / "band.rssg"),
                     "--out", str(out_csv)]) == 0
        rows = out_csv.read_text().strip().splitlines()
        assert rows[0] == "source_id,start_bin,center_freq_hz,s_score,is_signal"
        truth_rows = (band_dir / "manifest.csv").read_text().strip().splitlines()[1:]
        truth = {int(r.split(",")[1]) for r in truth_rows}
        found = {int(r.split(",")[1]) // 256 for r in rows[1:]}
        assert truth == found

    def test_invert_complementary(self, band_dir, tmp_path):
        sig, noi = tmp_path / "s.csv", tmp_path / "n.csv"
        main(["detect", "--input", str(band_dir / "band.rssg"), "--out", str(sig)])
        main(["detect", "--input", str(band_dir / "band.rssg"), "--out", str(noi),
              "--invert"])
        sig_bins = {r.split(",")[1] for r in sig.read_text().strip().splitlines()[1:]}
        noi_bins = {r.split(",")[1] for r in noi.read_text().strip().splitlines()[1:]}
        assert sig_bins.isdisjoint(noi_bins)
        assert len(sig_bins) + len(noi_bins) == 4096 // 256

    def test_bad_magic_exit_1(self, tmp_path):
        bad = tmp_path / "bad.rssg"
        bad.write_bytes(b"NOPE" + b"\x00" * 64)
        assert main(["detect", "--input", str(bad), "--out", str(tmp_path / "x.csv")]) == 1

    def test_missing_file_exit_1(self, tmp_path):
        assert main(["detect", "--input", str(tmp_path / "absent.rssg"),
                     "--out", str(tmp_path / "x.csv")]) == 1


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Shared synth -> train -> index chain for the heavier commands."""
    root = tmp_path_factory.mktemp("ws")
    data = root / "data"
    main(synth_args(data, classes=2, per_class=8, seed=21))
    model = root / "model.rssm"
    rc = main(["train", "--data", str(data), "--out", str(model),
               "--seed", "4", "--beta", "0.003"] + TINY_MODEL)
    assert rc == 0
    index = root / "index.rssi"
    rc = main(["index", "--model", str(model), "--data", str(data), "--out", str(index)])
    assert rc == 0
    return root


class TestTrain:
    def test_checkpoint_and_log_written(self, workspace):
        assert (workspace / "model.rssm").exists()
        log = (workspace / "model.losses.csv").read_text().strip().splitlines()
        assert log[0].startswith("epoch,train_total")
        assert len(log) >= 2

    def test_empty_data_dir_exit_1(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["train", "--data", str(empty), "--out", str(tmp_path / "m.rssm"),
                     "--seed", "1"] + TINY_MODEL) == 1


class TestIndexAndSearch:
    def test_search_self_retrieval(self, workspace, tmp_path):
        soi = sorted((workspace / "data").glob("*.rssg"))[0]
        out = tmp_path / "results.csv"
        rc = main(["search", "--index", str(workspace / "index.rssi"),
                   "--model", str(workspace / "model.rssm"), "--soi", str(soi),
                   "--k", "5", "--out", str(out),
                   "--hist", str(tmp_path / "hist.csv"),
                   "--dump-dir", str(tmp_path / "pgm"), "--data", str(workspace / "data")])
        assert rc == 0
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "rank,score,source_id,start_bin,center_freq_hz"
        assert len(rows) == 6
        first = rows[1].split(",")
        assert first[2] == soi.stem
        assert abs(float(first[1]) - 1.0) < 1e-6
        assert (tmp_path / "hist.csv").exists()
        pgms = list((tmp_path / "pgm").glob("*.pgm"))
        assert len(pgms) == 6  # soi + 5 matches
        assert (tmp_path / "pgm" / "soi.pgm").read_bytes().startswith(b"P5\n256 16\n255\n")

    def test_embedded_index_requires_freq(self, workspace, tmp_path):
        emb_index = tmp_path / "emb.rssi"
        rc = main(["index", "--model", str(workspace / "model.rssm"),
                   "--data", str(workspace / "data"), "--out", str(emb_index), "--embed"])
        assert rc == 0
        soi = sorted((workspace / "data").glob("*.rssg"))[0]
        rc = main(["search", "--index", str(emb_index),
                   "--model", str(workspace / "model.rssm"), "--soi", str(soi),
                   "--k", "3", "--out", str(tmp_path / "r.csv")])
        assert rc == 2
        rc = main(["search", "--index", str(emb_index),
                   "--model", str(workspace / "model.rssm"), "--soi", str(soi),
                   "--soi-freq", "2.0e9", "--k", "3", "--out", str(tmp_path / "r.csv")])
        assert rc == 0


class TestEval:
    def test_report_rows(self, tmp_path):
        out = tmp_path / "report.csv"
        rc = main(["eval", "--extractors", "naive,ae,bvae", "--trials", "1",
                   "--classes", "2", "--per-class", "6", "--train-snippets", "24",
                   "--n-votes", "12", "--n-pairs", "2", "--seed", "4",
                   "--out", str(out), "--nuisance-rate", "0.2"] + TINY_MODEL)
        assert rc == 0
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "extractor,metric,mean,std,n_trials"
        assert len(rows) - 1 >= 6  # 3 extractors x 2 metrics + disentanglement rows
        assert all(r.split(",")[4] == "1" for r in rows[1:])

    def test_unknown_extractor_exit_2(self, tmp_path):
        assert main(["eval", "--extractors", "resnet", "--trials", "1",
                     "--seed", "1", "--out", str(tmp_path / "r.csv")]) == 2


class TestTuneCli:
    def test_budget_one(self, tmp_path):
        out = tmp_path / "best.json"
        rc = main(["tune", "--budget", "1", "--trial-epochs", "1", "--classes", "2",
                   "--per-class", "6", "--seed", "3", "--out", str(out)] + TINY_MODEL)
        assert rc == 0
        best = json.loads(out.read_text())
        assert "latent_dim" in best and "conv_filters" in best


class TestPipeline:
    def test_end_to_end(self, tmp_path):
        out = tmp_path / "run"
        rc = main(["pipeline", "--out", str(out), "--seed", "9", "--n-freq", "4096",
                   "--n-signals", "6", "--conv-filters", "2,4", "--dense-sizes", "8,4",
                   "--latent-dim", "3", "--max-epochs", "2", "--lr", "1e-3"])
        assert rc == 0
        for name in ("data/band.rssg", "hits.csv", "model.rssm", "losses.csv",
                     "index.rssi", "results.csv", "hist.csv", "run.json"):
            assert (out / name).exists(), name
        assert list((out / "matches").glob("*.pgm"))


class TestReplay:
    def test_replay_reproduces_outputs(self, tmp_path):
        first = tmp_path / "a"
        assert main(synth_args(first, seed=13)) == 0
        run = json.loads((first / "run.json").read_text())
        # redirect the stored argv to a new output directory
        argv = [str(tmp_path / "b") if a == str(first) else a for a in run["argv"]]
        (first / "run.json").write_text(json.dumps({"command": "synth", "argv": argv}))
        assert main(["replay", str(first / "run.json")]) == 0
        fa, fb = sorted(first.glob("*.rssg")), sorted((tmp_path / "b").glob("*.rssg"))
        assert [f.name for f in fa] == [f.name for f in fb]
        for x, y in zip(fa, fb):
            assert x.read_bytes() == y.read_bytes()

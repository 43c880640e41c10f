import json

import numpy as np
import pytest

from adnet import cli, io as storage, model, numerics
from adnet.io import Checkpoint, ClipFeatureSequence
from adnet.model import ADNetConfig
from adnet.training import TrainConfig


def run(capsys, argv):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


SMALL_SYNTH = {"num_videos": 4, "clips_min": 12, "clips_max": 20, "input_dim": 5,
               "seed": 3}
SMALL_MODEL = {"window_width": 8, "num_stages": 1, "num_layers": 3,
               "hidden_channels": 8}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> train -> infer, shared by the read-only assertions below."""
    root = tmp_path_factory.mktemp("pipeline")
    corpus = root / "corpus"
    config_path = write_config(root / "run.json", {
        "synth": SMALL_SYNTH,
        "model": SMALL_MODEL,
        "train": {"epochs": 3, "seed": 3},
        "paths": {"features_dir": str(corpus / "features"),
                  "annotations_dir": str(corpus / "annotations"),
                  "checkpoint": str(root / "model.adnc"),
                  "out_dir": str(root / "out")},
    })
    assert cli.main(["synth", "--config", config_path, "--out", str(corpus)]) == 0
    assert cli.main(["train", "--config", config_path]) == 0
    assert cli.main(["infer", "--checkpoint", str(root / "model.adnc"),
                     "--features", str(corpus / "features"),
                     "--out", str(root / "pred")]) == 0
    return root, corpus, config_path


class TestSynth:
    def test_default_video_count(self, tmp_path, capsys):
        config = write_config(tmp_path / "c.json", {"synth": {"seed": 1}})
        code, out, _ = run(capsys, ["synth", "--config", config,
                                    "--out", str(tmp_path / "corpus")])
        assert code == 0
        assert len(list((tmp_path / "corpus" / "features").glob("*.adnf"))) == 40
        assert len(list((tmp_path / "corpus" / "annotations").glob("*.json"))) == 40

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        config = write_config(tmp_path / "c.json", {"synth": SMALL_SYNTH})
        for name in ("one", "two"):
            code, _, _ = run(capsys, ["synth", "--config", config,
                                      "--out", str(tmp_path / name)])
            assert code == 0
        for sub in ("features", "annotations"):
            for path in sorted((tmp_path / "one" / sub).iterdir()):
                assert path.read_bytes() == (tmp_path / "two" / sub / path.name).read_bytes()

    def test_unknown_config_key_names_it(self, tmp_path, capsys):
        config = write_config(tmp_path / "c.json", {"synth": {"bogus": 1}})
        code, _, err = run(capsys, ["synth", "--config", config,
                                    "--out", str(tmp_path / "corpus")])
        assert code == 2
        assert "bogus" in err


class TestTrain:
    def test_checkpoint_and_log_lines(self, pipeline):
        root, _, _ = pipeline
        assert (root / "model.adnc").exists()
        lines = (root / "out" / "train_log.jsonl").read_text().strip().splitlines()
        assert len(lines) == 3
        records = [json.loads(line) for line in lines]
        assert [r["epoch"] for r in records] == [0, 1, 2]
        assert all({"epoch", "mean_mse", "mean_ad", "mean_total"} <= set(r)
                   for r in records)

    def test_resume_continues_epoch_numbering(self, pipeline, tmp_path, capsys):
        _, corpus, _ = pipeline
        config = write_config(tmp_path / "resume.json", {
            "model": SMALL_MODEL,
            "train": {"epochs": 3, "seed": 3},
            "paths": {"features_dir": str(corpus / "features"),
                      "annotations_dir": str(corpus / "annotations"),
                      "checkpoint": str(tmp_path / "m.adnc"),
                      "out_dir": str(tmp_path / "out")},
        })
        assert run(capsys, ["train", "--config", config])[0] == 0
        code, out, _ = run(capsys, ["train", "--config", config, "--resume"])
        assert code == 0
        epochs = [json.loads(line)["epoch"] for line in out.splitlines()
                  if line.startswith("{")]
        assert epochs == [3, 4, 5]
        lines = (tmp_path / "out" / "train_log.jsonl").read_text().strip().splitlines()
        assert [json.loads(line)["epoch"] for line in lines] == [0, 1, 2, 3, 4, 5]
        ckpt = storage.load_checkpoint(tmp_path / "m.adnc")
        assert ckpt.epochs_completed == 6

    def test_excess_layers_cites_bound(self, pipeline, tmp_path, capsys):
        _, corpus, _ = pipeline
        config = write_config(tmp_path / "deep.json", {
            "model": {"window_width": 8, "num_stages": 1, "num_layers": 4,
                      "hidden_channels": 8},
            "paths": {"features_dir": str(corpus / "features"),
                      "annotations_dir": str(corpus / "annotations"),
                      "checkpoint": str(tmp_path / "m.adnc")},
        })
        code, _, err = run(capsys, ["train", "--config", config])
        assert code == 2
        assert "max_layers" in err

    def test_missing_corpus(self, tmp_path, capsys):
        config = write_config(tmp_path / "c.json", {
            "paths": {"features_dir": str(tmp_path / "nowhere"),
                      "annotations_dir": str(tmp_path / "nowhere"),
                      "checkpoint": str(tmp_path / "m.adnc")},
        })
        code, _, err = run(capsys, ["train", "--config", config])
        assert code == 2


class TestInfer:
    def test_documents_match_library_scores(self, pipeline):
        root, corpus, _ = pipeline
        ckpt = storage.load_checkpoint(root / "model.adnc")
        docs = sorted((root / "pred").glob("*.json"))
        assert len(docs) == 4
        for doc_path in docs:
            doc = json.loads(doc_path.read_text())
            seq = storage.read_features(corpus / "features" / f"{doc['video_id']}.adnf")
            expected = model.score_sequence(ckpt.params, seq.features)
            np.testing.assert_allclose(doc["clip_scores"], expected, atol=1e-15)
            assert doc["tool"] == "adnet"
            assert "config" in doc
            assert len(doc["frame_scores"]) == 16 * seq.num_clips
            assert doc["clip_labels"] == [int(s >= 0.5) for s in doc["clip_scores"]]

    def test_zero_weight_model_scores_exactly_half(self, pipeline, tmp_path, capsys):
        # analytic fixture: with all parameters 0 every head emits
        # sigmoid(0) = 0.5 at unmasked positions, so merged clip scores
        # are exactly 0.5 and the 0.5 threshold labels everything abnormal
        _, corpus, _ = pipeline
        cfg = ADNetConfig(window_width=8, num_stages=2, num_layers=3, input_dim=5,
                          hidden_channels=8)
        params = model.build(cfg, seed=0)
        for tensor in params.tensor_list():
            tensor.value[:] = 0.0
        fixture = Checkpoint(model_config=cfg, train_config=TrainConfig(seed=0),
                             seed=0, frames_per_clip=16, epochs_completed=0,
                             params=params)
        path = tmp_path / "zero.adnc"
        storage.save_checkpoint(fixture, path)
        code, _, _ = run(capsys, ["infer", "--checkpoint", str(path),
                                  "--features", str(corpus / "features"),
                                  "--out", str(tmp_path / "pred")])
        assert code == 0
        for doc_path in (tmp_path / "pred").glob("*.json"):
            doc = json.loads(doc_path.read_text())
            assert doc["clip_scores"] == [0.5] * len(doc["clip_scores"])
            assert doc["clip_labels"] == [1] * len(doc["clip_labels"])

    def test_missing_checkpoint(self, tmp_path, capsys):
        code, _, err = run(capsys, ["infer", "--checkpoint", str(tmp_path / "no.adnc"),
                                    "--features", str(tmp_path),
                                    "--out", str(tmp_path / "pred")])
        assert code == 2
        assert "cannot read" in err

    def test_single_clip_video(self, pipeline, tmp_path, capsys):
        root, _, _ = pipeline
        seq = ClipFeatureSequence("tiny", np.random.default_rng(0).normal(size=(5, 1)))
        features = tmp_path / "features"
        features.mkdir()
        storage.write_features(seq, features / "tiny.adnf")
        code, _, _ = run(capsys, ["infer", "--checkpoint", str(root / "model.adnc"),
                                  "--features", str(features),
                                  "--out", str(tmp_path / "pred")])
        assert code == 0
        doc = json.loads((tmp_path / "pred" / "tiny.json").read_text())
        assert len(doc["clip_scores"]) == 1

    def test_threshold_flag_overrides(self, pipeline, tmp_path, capsys):
        root, corpus, _ = pipeline
        code, _, _ = run(capsys, ["infer", "--checkpoint", str(root / "model.adnc"),
                                  "--features", str(corpus / "features"),
                                  "--out", str(tmp_path / "pred"),
                                  "--threshold", "0.9"])
        assert code == 0
        doc = json.loads(next((tmp_path / "pred").glob("*.json")).read_text())
        assert doc["config"]["threshold"] == 0.9
        assert doc["clip_labels"] == [int(s >= 0.9) for s in doc["clip_scores"]]

    def test_nan_scores_exit_numeric(self, pipeline, tmp_path, capsys):
        _, corpus, _ = pipeline
        cfg = ADNetConfig(window_width=8, num_stages=1, num_layers=3, input_dim=5,
                          hidden_channels=8)
        params = model.build(cfg, seed=0)
        params.tensors["stage0.proj.weight"].value[0, 0] = np.nan
        broken = Checkpoint(model_config=cfg, train_config=TrainConfig(seed=0),
                            seed=0, frames_per_clip=16, epochs_completed=0,
                            params=params,
                            adam=numerics.init_adam(params.tensor_list(), 5e-4))
        path = tmp_path / "nan.adnc"
        storage.save_checkpoint(broken, path)
        code, _, err = run(capsys, ["infer", "--checkpoint", str(path),
                                    "--features", str(corpus / "features"),
                                    "--out", str(tmp_path / "pred")])
        assert code == 3
        assert "numeric" in err


class TestEval:
    def test_end_to_end_report(self, pipeline, capsys):
        root, corpus, _ = pipeline
        code, out, _ = run(capsys, ["eval", "--pred", str(root / "pred"),
                                    "--gt", str(corpus / "annotations")])
        assert code == 0
        doc = json.loads(out)
        assert list(doc["segmental"]) == ["abnormal", "normal", "all"]
        assert set(doc["segmental"]["all"]) == {"f1@10", "f1@25", "f1@50"}
        assert 0.0 <= doc["frame_auc"] <= 1.0

    def test_perfect_predictions_score_100(self, tmp_path, capsys):
        gt_dir = tmp_path / "gt"
        pred_dir = tmp_path / "pred"
        gt_dir.mkdir()
        pred_dir.mkdir()
        manifest = {"video_id": "v", "frames_per_clip": 4, "total_frames": 24,
                    "segments": [{"start_frame": 0, "end_frame": 12, "label": 0},
                                 {"start_frame": 12, "end_frame": 24, "label": 1}]}
        (gt_dir / "v.json").write_text(json.dumps(manifest))
        pred = {"video_id": "v", "frames_per_clip": 4,
                "clip_scores": [0.0, 0.0, 0.0, 1.0, 1.0, 1.0]}
        (pred_dir / "v.json").write_text(json.dumps(pred))
        code, out, _ = run(capsys, ["eval", "--pred", str(pred_dir), "--gt", str(gt_dir)])
        assert code == 0
        doc = json.loads(out)
        assert doc["frame_auc"] == 1.0
        for scope in ("abnormal", "normal", "all"):
            for block in doc["segmental"][scope].values():
                assert block["f1"] == 100.0

    def test_fragmented_prediction_fixture(self, tmp_path, capsys):
        # the motivating failure mode of plain AUC: fragments keep AUC high
        # while segmental F1 collapses
        gt_dir = tmp_path / "gt"
        pred_dir = tmp_path / "pred"
        gt_dir.mkdir()
        pred_dir.mkdir()
        manifest = {"video_id": "v", "frames_per_clip": 10, "total_frames": 1000,
                    "segments": [{"start_frame": 0, "end_frame": 300, "label": 0},
                                 {"start_frame": 300, "end_frame": 700, "label": 1},
                                 {"start_frame": 700, "end_frame": 1000, "label": 0}]}
        (gt_dir / "v.json").write_text(json.dumps(manifest))
        scores = np.full(100, 0.1)
        scores[30:70] = 0.9
        scores[list(range(35, 70, 5))] = 0.1
        scores[10] = 0.9
        pred = {"video_id": "v", "frames_per_clip": 10, "clip_scores": scores.tolist()}
        (pred_dir / "v.json").write_text(json.dumps(pred))
        code, out, _ = run(capsys, ["eval", "--pred", str(pred_dir), "--gt", str(gt_dir),
                                    "--k", "10,25,50"])
        assert code == 0
        doc = json.loads(out)
        assert doc["frame_auc"] >= 0.70
        assert doc["segmental"]["abnormal"]["f1@25"]["f1"] <= 35.0

    def test_custom_k_list(self, tmp_path, capsys):
        gt_dir = tmp_path / "gt"
        pred_dir = tmp_path / "pred"
        gt_dir.mkdir()
        pred_dir.mkdir()
        manifest = {"video_id": "v", "frames_per_clip": 1, "total_frames": 4,
                    "segments": [{"start_frame": 0, "end_frame": 2, "label": 0},
                                 {"start_frame": 2, "end_frame": 4, "label": 1}]}
        (gt_dir / "v.json").write_text(json.dumps(manifest))
        pred = {"video_id": "v", "frames_per_clip": 1,
                "clip_scores": [0.0, 0.0, 1.0, 1.0]}
        (pred_dir / "v.json").write_text(json.dumps(pred))
        code, out, _ = run(capsys, ["eval", "--pred", str(pred_dir), "--gt", str(gt_dir),
                                    "--k", "20,80"])
        assert code == 0
        doc = json.loads(out)
        assert set(doc["segmental"]["all"]) == {"f1@20", "f1@80"}


class TestUsageErrors:
    def test_missing_required_flag(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["synth", "--out", "somewhere"])
        assert excinfo.value.code == 1

    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["transmogrify"])
        assert excinfo.value.code == 1

    def test_bad_k_list(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["eval", "--pred", "p", "--gt", "g", "--k", "10,banana"])
        assert excinfo.value.code == 1

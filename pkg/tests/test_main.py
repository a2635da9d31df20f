from __future__ import annotations

import csv
import json

import pytest

from stfactor.config import settings
from stfactor.main import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, run
from stfactor.models import VIDEO_ARCHS, build_arch


def output_lines(capsys) -> list[str]:
    return [line for line in capsys.readouterr().out.splitlines() if line]


class TestCountParams:
    def test_json_report(self, capsys):
        assert run(["count-params", "--arch", "fully3d", "--json"]) == EXIT_OK
        report = json.loads(output_lines(capsys)[0])
        assert report["total_weights"] == 779_328
        assert report["decrease_factor"] == 1.0
        assert report["flops"] is None

    def test_all_video_archs(self, capsys):
        assert run(["count-params", "--all"]) == EXIT_OK
        lines = output_lines(capsys)
        assert len(lines) == len(VIDEO_ARCHS)
        assert lines[-1].startswith("two-block3: 336960 conv weights")

    def test_flops(self, capsys):
        assert run(["count-params", "--arch", "two-block3", "--flops", "16,64,64", "--json"]) == EXIT_OK
        assert json.loads(output_lines(capsys)[0])["flops"] > 0

    def test_audio_model(self, capsys):
        assert run(["count-params", "--arch", "audio-dnn-256-128", "--input-dim", "4", "--json"]) == EXIT_OK
        payload = json.loads(output_lines(capsys)[0])
        assert payload == {
            "name": "audio-dnn-256",
            "total_params": build_arch("audio-dnn-256", None, input_dim=4).parameter_count(),
        }

    def test_needs_a_name(self):
        assert run(["count-params"]) == EXIT_USAGE

    def test_unknown_arch(self):
        assert run(["count-params", "--arch", "fully4d"]) == EXIT_USAGE

    def test_bad_channel_list(self):
        assert run(["count-params", "--arch", "fully3d", "--channels", "3,64"]) == EXIT_USAGE


class TestAuditAndGradcheck:
    def test_audit(self, capsys, tmp_path):
        out = tmp_path / "audit.jsonl"
        assert run(["audit", "--out", str(out)]) == EXIT_OK
        assert len(output_lines(capsys)) == 8
        assert out.exists()

    def test_gradcheck_seeds(self, capsys):
        assert run(["gradcheck", "--target", "layer", "--name", "linear", "--seeds", "2"]) == EXIT_OK
        reports = [json.loads(line) for line in output_lines(capsys)]
        assert [r["seed"] for r in reports] == [0, 1]
        assert all(r["passed"] for r in reports)

    def test_gradcheck_unknown_layer(self):
        assert run(["gradcheck", "--target", "layer", "--name", "conv9d"]) == EXIT_USAGE


class TestPipeline:
    @pytest.fixture
    def dataset(self, tmp_path, capsys):
        out = tmp_path / "feats"
        args = ["gen-synth", "--kind", "features", "--out", str(out), "--train", "6", "--val", "4", "--test", "4"]
        assert run([*args, "--seed", "1", "--feat-dim", "3", "--steps", "4"]) == EXIT_OK
        summary = json.loads(output_lines(capsys)[0])
        assert summary["samples"] == 14
        return out

    def test_train_eval_fuse(self, dataset, tmp_path, capsys):
        ckpt = tmp_path / "ckpt" / "feat.stc"
        history = tmp_path / "history.csv"
        code = run([
            "train", "--arch", "feat-lstm", "--data", str(dataset), "--epochs", "2", "--seed", "3",
            "--checkpoint", str(ckpt), "--history", str(history), "--lr", "0.01",
        ])
        assert code == EXIT_OK
        result = json.loads(output_lines(capsys)[0])
        assert result["arch"] == "feat-lstm"
        with history.open(newline="") as handle:
            assert len(list(csv.reader(handle))) == 3

        preds = tmp_path / "preds.csv"
        assert run(["eval", "--arch", "feat-lstm", "--checkpoint", str(ckpt), "--data", str(dataset),
                    "--split", "val", "--preds", str(preds)]) == EXIT_OK
        metrics = json.loads(output_lines(capsys)[0])
        assert metrics["accuracy"] == result["best_val_acc"]
        assert metrics["tp"] + metrics["fp"] + metrics["tn"] + metrics["fn"] == 4

        fused = tmp_path / "fused.csv"
        code = run(["fuse", "--preds", f"{preds},{preds}", "--weights", "1,3", "--out", str(fused),
                    "--labels", str(dataset / "manifest.jsonl")])
        assert code == EXIT_OK
        lines = output_lines(capsys)
        assert len(lines) == 3
        assert json.loads(lines[-1])["model"] == "ensemble"
        original = [float(row.split(",")[1]) for row in preds.read_text().splitlines()[1:]]
        combined = [float(row.split(",")[1]) for row in fused.read_text().splitlines()[1:]]
        assert combined == pytest.approx(original)

    def test_compare_with_writes_second_checkpoint(self, dataset, tmp_path):
        ckpt = tmp_path / "a.stc"
        history = tmp_path / "h.csv"
        code = run([
            "train", "--arch", "feat-lstm", "--data", str(dataset), "--epochs", "1", "--seed", "0",
            "--checkpoint", str(ckpt), "--compare-with", "feat-lstm", "--history", str(history),
        ])
        assert code == EXIT_OK
        assert ckpt.exists()
        assert (tmp_path / "a.feat-lstm.stc").exists()
        with history.open(newline="") as handle:
            assert len(list(csv.reader(handle))) == 3

    def test_default_checkpoint_lives_under_data_dir(self, dataset, capsys):
        code = run(["train", "--arch", "feat-lstm", "--data", str(dataset), "--epochs", "1", "--seed", "0"])
        assert code == EXIT_OK
        assert (settings.checkpoint_dir / "feat-lstm.stc").is_file()
        assert json.loads(output_lines(capsys)[0])["arch"] == "feat-lstm"

    def test_batch_norm_rejects_batch_of_one(self, dataset, tmp_path):
        code = run(["train", "--arch", "feat-lstm", "--data", str(dataset), "--epochs", "1", "--seed", "0",
                    "--checkpoint", str(tmp_path / "c.stc"), "--batch-size", "1"])
        assert code == EXIT_USAGE

    def test_missing_checkpoint(self, dataset, tmp_path):
        code = run(["eval", "--arch", "feat-lstm", "--checkpoint", str(tmp_path / "absent.stc"), "--data", str(dataset)])
        assert code == EXIT_FAILURE

    def test_fuse_weight_flags_are_exclusive(self, tmp_path):
        code = run(["fuse", "--preds", "a.csv", "--weights", "1", "--val-acc", "0.5", "--out", str(tmp_path / "f.csv")])
        assert code == EXIT_USAGE

    def test_threads_must_be_positive(self):
        assert run(["--threads", "0", "count-params", "--all"]) == EXIT_USAGE

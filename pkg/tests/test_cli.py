"""End-to-end runs of the `jcl` command line."""

import subprocess
import sys
from pathlib import Path

import pytest

from joint_cache_lab import __version__
from joint_cache_lab.cachesim import EVENT_CSV_HEADER
from joint_cache_lab.cli import main

SMALL = [
    "--set", "history_length=4", "--set", "embed_dim=4", "--set", "hidden_dim=6",
    "--set", "shared_dim=4", "--set", "projection_dim=4", "--set", "max_epochs=1",
    "--set", "pretrain_epochs=1", "--set", "batch_size=16",
]


@pytest.fixture
def coupled_csv(tmp_path):
    path = tmp_path / "coupled.csv"
    assert main(["-q", "gen", "--kind", "coupled", "--phases", "20", "--phase-len", "50",
                 "--seed", "1", "-o", str(path)]) == 0
    return path


@pytest.fixture
def labeled(tmp_path, coupled_csv):
    labels = tmp_path / "coupled.labels.csv"
    assert main(["-q", "label", str(coupled_csv), "-o", str(labels)]) == 0
    return coupled_csv, labels


def output_fields(text):
    return dict(line.split(": ", 1) for line in text.strip().splitlines())


class TestParser:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_missing_required_flag(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "-o", str(tmp_path / "t.csv")])
        assert exc.value.code == 2

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["shuffle"])
        assert exc.value.code == 2

    def test_verbose_and_quiet_conflict(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["-v", "-q", "label", str(tmp_path / "t.csv")])
        assert exc.value.code == 2


class TestGen:
    def test_writes_trace_and_sidecar(self, coupled_csv):
        lines = coupled_csv.read_text().splitlines()
        assert len(lines) == 1001
        sidecar = coupled_csv.with_name("coupled.csv.meta").read_text()
        assert "kind = coupled" in sidecar
        assert "trace_digest = " in sidecar

    def test_byte_identical_reruns(self, tmp_path, coupled_csv):
        again = tmp_path / "again.csv"
        main(["-q", "gen", "--kind", "coupled", "--phases", "20", "--phase-len", "50",
              "--seed", "1", "-o", str(again)])
        assert again.read_bytes() == coupled_csv.read_bytes()

    def test_invalid_params_exit_1(self, tmp_path, capsys):
        code = main(["-q", "gen", "--kind", "stride", "--stride", "0", "-o", str(tmp_path / "s.csv")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error: ")

    def test_gen_leaves_model_stack_unloaded(self, tmp_path):
        script = (
            "import sys\n"
            "from joint_cache_lab.cli import main\n"
            f"assert main(['-q', 'gen', '--kind', 'loop', '-o', {str(tmp_path / 'l.csv')!r}]) == 0\n"
            "heavy = ('joint_cache_lab.features', 'joint_cache_lab.nnkit', 'joint_cache_lab.models',\n"
            "         'joint_cache_lab.pipeline')\n"
            "loaded = [m for m in sys.modules if m.startswith(heavy)]\n"
            "assert not loaded, loaded\n"
        )
        subprocess.run([sys.executable, "-c", script], check=True, cwd=Path(__file__).resolve().parents[1])


class TestLabelAndSimulate:
    def test_label_summary(self, coupled_csv, capsys):
        assert main(["-q", "label", str(coupled_csv)]) == 0
        fields = output_fields(capsys.readouterr().out)
        assert int(fields["insertions"]) > 0
        assert float(fields["friendly"]) + float(fields["averse"]) == pytest.approx(1.0, abs=1e-3)

    def test_label_file_has_digest_sidecar(self, labeled):
        _, labels = labeled
        assert labels.read_text().startswith("insertion_id,position,block,pc,set,label\n")
        assert "trace_digest = " in labels.with_name("coupled.labels.csv.meta").read_text()

    def test_simulate_lru(self, coupled_csv, tmp_path, capsys):
        events = tmp_path / "events.csv"
        assert main(["-q", "simulate", str(coupled_csv), "--events-out", str(events)]) == 0
        fields = output_fields(capsys.readouterr().out)
        assert int(fields["hits"]) + int(fields["misses"]) == 1000
        assert events.read_text().splitlines()[0].split(",")[:len(EVENT_CSV_HEADER)] == EVENT_CSV_HEADER

    def test_oracle_policy(self, coupled_csv, capsys):
        assert main(["-q", "simulate", str(coupled_csv), "--policy", "oracle", "--set", "associativity=4",
                     "--set", "num_sets=4", "--set", "prefetcher=none"]) == 0
        oracle = output_fields(capsys.readouterr().out)
        assert int(oracle["hits"]) + int(oracle["misses"]) == 1000

    def test_model_policy_needs_checkpoint(self, coupled_csv):
        assert main(["-q", "simulate", str(coupled_csv), "--policy", "model"]) == 1

    def test_missing_trace(self, tmp_path, capsys):
        assert main(["-q", "label", str(tmp_path / "nope.csv")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_override(self, coupled_csv):
        assert main(["-q", "label", str(coupled_csv), "--set", "num_sets=3"]) == 1


class TestTrainEvalReport:
    def test_joint_round_trip(self, labeled, tmp_path, capsys):
        trace, labels = labeled
        runs = tmp_path / "runs"
        assert main(["-q", "train", str(trace), "--labels", str(labels), "--mode", "joint",
                     "-o", str(runs)] + SMALL) == 0
        fields = output_fields(capsys.readouterr().out)
        run_dir = Path(fields["run"])
        assert run_dir.parent == runs / "joint"
        assert run_dir.name.endswith("-s0")
        for name in ("effective.conf", "checkpoint.bin", "metrics.csv", "report.csv"):
            assert (run_dir / name).exists(), name
        assert "history_length = 4" in (run_dir / "effective.conf").read_text()

        assert main(["-q", "eval", str(trace), "--checkpoint", str(run_dir / "checkpoint.bin"),
                     "--labels", str(labels)] + SMALL) == 0
        text = capsys.readouterr().out
        assert text.startswith("mode,trace_name,seed,")
        assert "\njoint,coupled,0," in text

        table = tmp_path / "table"
        assert main(["-q", "report", str(run_dir / "report.csv"), "-o", str(table)]) == 0
        assert "| Method | coupled |" in capsys.readouterr().out
        assert (tmp_path / "table.md").exists() and (tmp_path / "table.csv").exists()

    def test_baseline_writes_both_halves(self, coupled_csv, tmp_path, capsys):
        assert main(["-q", "train", str(coupled_csv), "--mode", "baseline", "-o", str(tmp_path / "runs")] + SMALL) == 0
        run_dir = next((tmp_path / "runs" / "baseline").iterdir())
        halves = [str(run_dir / "checkpoint_repl.bin"), str(run_dir / "checkpoint_pf.bin")]
        capsys.readouterr()
        assert main(["-q", "eval", str(coupled_csv), "--checkpoint", *halves, "-o",
                     str(tmp_path / "eval.csv")] + SMALL) == 0
        assert (tmp_path / "eval.csv").read_text().splitlines()[1].startswith("baseline,")

    def test_contrastive_writes_stage1_curve(self, coupled_csv, tmp_path):
        assert main(["-q", "train", str(coupled_csv), "--mode", "contrastive", "-o", str(tmp_path / "runs")] + SMALL) == 0
        run_dir = next((tmp_path / "runs" / "contrastive").iterdir())
        assert (run_dir / "stage1_loss.csv").read_text().startswith("epoch,loss\n")

    def test_labels_for_another_trace(self, tmp_path, labeled, capsys):
        _, labels = labeled
        other = tmp_path / "loop.csv"
        main(["-q", "gen", "--kind", "loop", "--length", "400", "-o", str(other)])
        assert main(["-q", "train", str(other), "--labels", str(labels), "--mode", "joint",
                     "-o", str(tmp_path / "runs")] + SMALL) == 1
        assert "trace digest" in capsys.readouterr().err

    def test_labels_without_sidecar(self, labeled, tmp_path):
        trace, labels = labeled
        labels.with_name("coupled.labels.csv.meta").unlink()
        assert main(["-q", "train", str(trace), "--labels", str(labels), "--mode", "joint",
                     "-o", str(tmp_path / "runs")] + SMALL) == 1

    def test_labels_for_another_cache_geometry(self, tmp_path, coupled_csv, capsys):
        labels = tmp_path / "small.labels.csv"
        assert main(["-q", "label", str(coupled_csv), "-o", str(labels), "--set", "num_sets=4"]) == 0
        assert "num_sets = 4" in labels.with_name("small.labels.csv.meta").read_text()
        assert main(["-q", "train", str(coupled_csv), "--labels", str(labels), "--mode", "joint",
                     "-o", str(tmp_path / "runs")] + SMALL) == 1
        assert "num_sets" in capsys.readouterr().err

    def test_eval_under_another_cache_geometry(self, labeled, tmp_path, capsys):
        trace, labels = labeled
        assert main(["-q", "train", str(trace), "--labels", str(labels), "--mode", "joint",
                     "-o", str(tmp_path / "runs")] + SMALL) == 0
        checkpoint = next((tmp_path / "runs" / "joint").iterdir()) / "checkpoint.bin"
        capsys.readouterr()
        assert main(["-q", "eval", str(trace), "--checkpoint", str(checkpoint)]
                    + SMALL + ["--set", "num_sets=8"]) == 1
        assert "num_sets" in capsys.readouterr().err

    def test_eval_takes_history_length_from_checkpoint(self, labeled, tmp_path, capsys):
        trace, labels = labeled
        assert main(["-q", "train", str(trace), "--labels", str(labels), "--mode", "joint",
                     "-o", str(tmp_path / "runs")] + SMALL) == 0
        checkpoint = next((tmp_path / "runs" / "joint").iterdir()) / "checkpoint.bin"
        capsys.readouterr()
        assert main(["-q", "eval", str(trace), "--checkpoint", str(checkpoint), "--labels", str(labels)]) == 0
        assert "\njoint,coupled,0," in capsys.readouterr().out

    def test_eval_with_edited_labels(self, labeled, tmp_path, capsys):
        trace, labels = labeled
        assert main(["-q", "train", str(trace), "--labels", str(labels), "--mode", "joint",
                     "-o", str(tmp_path / "runs")] + SMALL) == 0
        checkpoint = next((tmp_path / "runs" / "joint").iterdir()) / "checkpoint.bin"
        text = labels.read_text()
        assert ",friendly\n" in text
        labels.write_text(text.replace(",friendly\n", ",averse\n", 1))
        capsys.readouterr()
        assert main(["-q", "eval", str(trace), "--checkpoint", str(checkpoint), "--labels", str(labels)]
                    + SMALL) == 1
        assert "trained on labels" in capsys.readouterr().err

    def test_report_rejects_foreign_csv(self, coupled_csv):
        assert main(["-q", "report", str(coupled_csv)]) == 1

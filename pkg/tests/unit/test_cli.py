import json
import math

import pytest

from ckav import __version__, read_checkpoint
from ckav.cli import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, grid, run
from ckav.objectives import QuadraticTaskSpec


@pytest.fixture
def quadratic(tmp_path, capsys):
    spec = QuadraticTaskSpec(dim=16, noise_sigma=0.5, num_checkpoints=6, seed=3)
    spec_path = tmp_path / "quadratic.json"
    spec_path.write_text(json.dumps(spec.to_dict()))
    out_dir = tmp_path / "series"
    code = run(["gen-quadratic", "--spec", str(spec_path), "--out-dir", str(out_dir)])
    assert code == EXIT_OK
    capsys.readouterr()
    paths = sorted(str(p) for p in out_dir.glob("ckpt-*.ckav"))
    return str(spec_path), paths


@pytest.fixture
def toy_run(tmp_path, capsys):
    spec_path = tmp_path / "toy.json"
    spec_path.write_text(
        json.dumps(
            {
                "input_dim": 3,
                "hidden_dim": 4,
                "num_classes": 3,
                "n_train": 60,
                "n_dev": 20,
            }
        )
    )
    adam_path = tmp_path / "adam.json"
    adam_path.write_text(
        json.dumps({"lr": 0.01, "steps": 20, "checkpoint_every": 10, "batch_size": 8})
    )
    out_dir = tmp_path / "toy"
    argv = ["train-toy", "--spec", str(spec_path), "--adam", str(adam_path)]
    assert run([*argv, "--out-dir", str(out_dir)]) == EXIT_OK
    return str(spec_path), json.loads(capsys.readouterr().out)


class TestGrid:
    def test_comma_separated(self):
        assert grid("0, 0.5,1e3") == [0.0, 0.5, 1000.0]

    def test_json_array(self):
        assert grid("[1, 2.5]") == [1.0, 2.5]

    @pytest.mark.parametrize("text", ["", "[]", "a,b"])
    def test_rejects_invalid(self, text):
        with pytest.raises(ValueError):
            grid(text)


class TestExitCodes:
    def test_version(self, capsys):
        assert run(["--version"]) == EXIT_OK
        assert capsys.readouterr().out.strip() == f"ckav {__version__}"

    def test_subcommand_version(self, capsys):
        assert run(["sweep", "k", "--version"]) == EXIT_OK
        assert __version__ in capsys.readouterr().out

    def test_help(self, capsys):
        assert run(["sweep", "--help"]) == EXIT_OK
        assert "simplex" in capsys.readouterr().out

    def test_missing_command(self):
        assert run([]) == EXIT_USAGE

    def test_unknown_command(self, capsys):
        assert run(["frobnicate"]) == EXIT_USAGE
        assert "invalid choice" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert run(["inspect", str(tmp_path / "missing.ckav")]) == EXIT_IO
        assert capsys.readouterr().err.startswith("ckav: error:")

    def test_corrupt_file(self, tmp_path, capsys):
        path = tmp_path / "bad.ckav"
        path.write_bytes(b"NOPE" + bytes(12))
        assert run(["inspect", str(path)]) == EXIT_DATA
        assert "bad magic" in capsys.readouterr().err


class TestGenQuadratic:
    def test_writes_series(self, tmp_path, capsys):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({"dim": 4, "num_checkpoints": 3}))
        out_dir = tmp_path / "out"
        argv = ["gen-quadratic", "--spec", str(spec_path), "--out-dir", str(out_dir)]
        assert run([*argv, "--seed", "7"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["spec"]["seed"] == 7
        assert [c["step"] for c in payload["checkpoints"]] == [0, 1, 2]
        assert len(list(out_dir.glob("*.ckav"))) == 3

    def test_spec_without_center_is_shared(self, tmp_path, capsys):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({"dim": 4, "num_checkpoints": 3}))
        out_dir = tmp_path / "out"
        argv = ["gen-quadratic", "--spec", str(spec_path), "--out-dir", str(out_dir)]
        assert run(argv) == EXIT_OK
        paths = sorted(str(p) for p in out_dir.glob("ckpt-*.ckav"))
        assert run(["sweep", "k", "--spec", str(spec_path), *paths]) == EXIT_OK
        capsys.readouterr()
        assert run(["eval", "--spec", str(spec_path), paths[0]]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["dev_ppl"] == read_checkpoint(paths[0]).meta.dev_ppl

    @pytest.mark.parametrize(
        "values", [{"center": 5}, {"dim": None}, {"dim": 2, "noise_sigma": "high"}]
    )
    def test_rejects_wrongly_typed_spec(self, tmp_path, capsys, values):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(values))
        argv = ["gen-quadratic", "--spec", str(spec_path), "--out-dir", str(tmp_path)]
        assert run(argv) == EXIT_DATA
        assert "invalid quadratic task spec" in capsys.readouterr().err


class TestInspect:
    def test_describes_checkpoint(self, quadratic, capsys):
        _, paths = quadratic
        assert run(["inspect", paths[0]]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["meta"]["step"] == 0
        assert payload["meta"]["tag"] == "quadratic"
        assert payload["has_grads"] is True
        assert payload["num_params"] == 16
        assert payload["tensors"] == {"theta": [16]}
        assert payload["all_finite"] is True


class TestAverage:
    def test_single_checkpoint_is_reproduced(self, quadratic, tmp_path, capsys):
        _, paths = quadratic
        out = str(tmp_path / "avg.ckav")
        assert run(["average", "--out", out, paths[2]]) == EXIT_OK
        assert read_checkpoint(out).params == read_checkpoint(paths[2]).params
        assert json.loads(capsys.readouterr().out)["weights"] == [1.0]

    def test_uniform_average_meta(self, quadratic, tmp_path, capsys):
        _, paths = quadratic
        out = str(tmp_path / "avg.ckav")
        assert run(["average", "--out", out, *paths]) == EXIT_OK
        ckpt = read_checkpoint(out)
        assert ckpt.meta.step == 5
        assert ckpt.meta.tag == "uniform"
        assert ckpt.meta.dev_ppl is None
        assert not ckpt.has_grads

    def test_ppl_softmax_with_selection(self, quadratic, tmp_path, capsys):
        _, paths = quadratic
        ppls = {c.meta.step: c.meta.dev_ppl for c in map(read_checkpoint, paths)}
        best_two = sorted(ppls, key=ppls.get)[:2]
        out = str(tmp_path / "avg.ckav")
        argv = ["average", "--scheme", "ppl-softmax", "--select", "top-k", "--k", "2"]
        assert run([*argv, "--out", out, *paths]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert sorted(payload["steps"]) == sorted(best_two)
        assert payload["meta"]["tag"] == "ppl-softmax"

    def test_explicit_weights(self, quadratic, tmp_path, capsys):
        _, paths = quadratic
        out = str(tmp_path / "avg.ckav")
        argv = ["average", "--weights", "0,1", "--out", out, paths[0], paths[1]]
        assert run(argv) == EXIT_OK
        assert read_checkpoint(out).params == read_checkpoint(paths[1]).params
        assert read_checkpoint(out).meta.tag == "explicit"

    def test_weights_conflict_with_selection(self, quadratic, tmp_path):
        _, paths = quadratic
        argv = ["average", "--weights", "0.5,0.5", "--select", "top-k", "--k", "2"]
        assert run([*argv, "--out", str(tmp_path / "x.ckav"), *paths]) == EXIT_USAGE

    def test_k_requires_selection(self, quadratic, tmp_path, capsys):
        _, paths = quadratic
        argv = ["average", "--k", "2", "--out", str(tmp_path / "x.ckav"), *paths]
        assert run(argv) == EXIT_USAGE
        assert "--k requires --select" in capsys.readouterr().err

    def test_weight_count_mismatch(self, quadratic, tmp_path, capsys):
        _, paths = quadratic
        argv = ["average", "--weights", "0.5,0.5", "--out", str(tmp_path / "x.ckav")]
        assert run([*argv, *paths[:3]]) == EXIT_DATA

    def test_gradient_step_needs_gradients(self, quadratic, tmp_path, capsys):
        _, paths = quadratic
        avg = str(tmp_path / "avg.ckav")
        assert run(["average", "--out", avg, *paths[:2]]) == EXIT_OK
        argv = ["average", "--grad-step", "0.1", "--out", str(tmp_path / "x.ckav")]
        assert run([*argv, avg, paths[2]]) == EXIT_DATA
        assert "gradient required" in capsys.readouterr().err


class TestEval:
    def test_quadratic(self, quadratic, capsys):
        spec_path, paths = quadratic
        assert run(["eval", "--spec", spec_path, paths[1]]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["dev_ppl"] == read_checkpoint(paths[1]).meta.dev_ppl
        assert payload["dev_ppl"] == math.exp(payload["dev_loss"])
        assert "accuracy" not in payload

    def test_toy_model_needs_dev_set(self, toy_run, capsys):
        spec_path, result = toy_run
        path = result["out_dir"] + "/ckpt-000010.ckav"
        assert run(["eval", "--spec", spec_path, path]) == EXIT_USAGE
        assert "--dev" in capsys.readouterr().err

    def test_toy_model_matches_training(self, toy_run, capsys):
        spec_path, result = toy_run
        path = result["out_dir"] + "/ckpt-000020.ckav"
        assert run(["eval", "--spec", spec_path, "--dev", result["dev"], path]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["dev_ppl"] == result["checkpoints"][-1]["dev_ppl"]
        assert 0.0 <= payload["accuracy"] <= 1.0


class TestTrainToy:
    def test_output(self, toy_run):
        _, result = toy_run
        assert [c["step"] for c in result["checkpoints"]] == [10, 20]
        assert result["adam"]["seed"] == 0
        assert result["spec"] == {
            "input_dim": 3,
            "hidden_dim": 4,
            "num_classes": 3,
            "activation": "tanh",
        }

    def test_rejects_unknown_adam_setting(self, tmp_path, capsys):
        adam_path = tmp_path / "adam.json"
        adam_path.write_text(json.dumps({"momentum": 0.9}))
        argv = ["train-toy", "--adam", str(adam_path), "--out-dir", str(tmp_path)]
        assert run(argv) == EXIT_DATA
        assert "momentum" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "option,values",
        [
            ("--spec", {"input_dim": None}),
            ("--spec", {"n_train": None}),
            ("--adam", {"lr": "fast"}),
            ("--adam", {"steps": [10]}),
        ],
    )
    def test_rejects_wrongly_typed_settings(self, tmp_path, capsys, option, values):
        path = tmp_path / "settings.json"
        path.write_text(json.dumps(values))
        argv = ["train-toy", option, str(path), "--out-dir", str(tmp_path / "out")]
        assert run(argv) == EXIT_DATA
        assert capsys.readouterr().err.startswith("ckav: error:")


class TestOptimizeWeights:
    def test_report_and_average(self, quadratic, tmp_path, capsys):
        spec_path, paths = quadratic
        report = tmp_path / "report.json"
        out = tmp_path / "opt.ckav"
        argv = ["optimize-weights", "--spec", spec_path, "--eta", "2"]
        assert run([*argv, "--report", str(report), "--out", str(out), *paths]) == 0
        payload = json.loads(report.read_text())
        assert payload["eta"] == 2.0
        assert len(payload["weights"]) == 6
        assert payload["dev_loss_after"] <= payload["dev_loss_before"]
        assert read_checkpoint(out).meta.tag == "optimized"
        assert capsys.readouterr().out == ""

    def test_needs_two_checkpoints(self, quadratic, capsys):
        spec_path, paths = quadratic
        argv = ["optimize-weights", "--spec", spec_path, paths[0]]
        assert run(argv) == EXIT_DATA


class TestSweep:
    def test_k_sweep_csv(self, quadratic, capsys):
        spec_path, paths = quadratic
        assert run(["sweep", "k", "--spec", spec_path, *paths]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "k,dev_loss,dev_ppl"
        assert len(lines) == 7
        best = min(read_checkpoint(p).meta.dev_ppl for p in paths)
        assert float(lines[1].split(",")[2]) == best

    def test_json_file_output(self, quadratic, tmp_path, capsys):
        spec_path, paths = quadratic
        out = tmp_path / "sweep.json"
        argv = ["sweep", "temp", "--spec", spec_path, "--grid", "[0, 1]"]
        argv += ["--select", "last-k-end", "--format", "json", "--out", str(out)]
        assert run([*argv, *paths]) == 0
        records = json.loads(out.read_text())["records"]
        assert [r["tau"] for r in records] == [0.0, 1.0]
        assert "w_5" in records[0]
        assert capsys.readouterr().out == ""

    def test_temp_sweep_defaults_to_last_k_from_best(self, quadratic, capsys):
        spec_path, paths = quadratic
        argv = ["sweep", "temp", "--spec", spec_path, "--grid", "0,1"]
        assert run([*argv, *paths]) == EXIT_OK
        default = capsys.readouterr().out
        assert run([*argv, "--select", "last-k-best", *paths]) == EXIT_OK
        assert capsys.readouterr().out == default

    def test_grad_eta_sweep(self, quadratic, capsys):
        spec_path, paths = quadratic
        argv = ["sweep", "grad-eta", "--spec", spec_path, "--k", "3", "--grid", "0,0.5"]
        assert run([*argv, *paths]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "eta,dev_loss,dev_ppl,w_0,w_1,w_2"
        assert len(lines) == 3

    def test_opt_eta_sweep_default_grid(self, quadratic, capsys):
        spec_path, paths = quadratic
        assert run(["sweep", "opt-eta", "--spec", spec_path, *paths[:3]]) == 0
        assert len(capsys.readouterr().out.splitlines()) == 10

    def test_simplex(self, quadratic, capsys):
        spec_path, paths = quadratic
        argv = ["sweep", "simplex", "--spec", spec_path, "--resolution", "4"]
        assert run([*argv, "--format", "json", *paths[:3]]) == EXIT_OK
        captured = capsys.readouterr()
        payload = json.loads(captured.out)
        assert len(payload["records"]) == 15
        assert set(payload["summary"]) == {"interior_spread", "grid_spread"}
        assert "grid spread" in captured.err

    def test_simplex_needs_three_checkpoints(self, quadratic):
        spec_path, paths = quadratic
        argv = ["sweep", "simplex", "--spec", spec_path, *paths[:2]]
        assert run(argv) == EXIT_USAGE

    def test_series(self, quadratic, capsys):
        spec_path, paths = quadratic
        assert run(["sweep", "series", "--spec", spec_path, *paths[::-1]]) == 0
        rows = capsys.readouterr().out.splitlines()[1:]
        assert [int(row.split(",")[0]) for row in rows] == list(range(6))

    def test_verbose_logs_to_stderr(self, quadratic, capsys):
        spec_path, paths = quadratic
        assert run(["sweep", "series", "-v", "--spec", spec_path, *paths]) == 0
        assert "INFO" in capsys.readouterr().err

    def test_threads_from_environment(self, quadratic, capsys, monkeypatch):
        spec_path, paths = quadratic
        argv = ["sweep", "simplex", "--spec", spec_path, "--resolution", "5"]
        assert run([*argv, *paths[:3]]) == EXIT_OK
        serial = capsys.readouterr().out
        monkeypatch.setenv("CKAV_THREADS", "4")
        assert run([*argv, *paths[:3]]) == EXIT_OK
        assert capsys.readouterr().out == serial

    @pytest.mark.parametrize("value", ["0", "four"])
    def test_invalid_thread_count(self, quadratic, monkeypatch, value):
        spec_path, paths = quadratic
        monkeypatch.setenv("CKAV_THREADS", value)
        assert run(["sweep", "series", "--spec", spec_path, *paths]) == EXIT_USAGE

    def test_invalid_threads_option(self, quadratic, capsys):
        spec_path, paths = quadratic
        argv = ["sweep", "series", "--threads", "0", "--spec", spec_path, *paths]
        assert run(argv) == EXIT_USAGE
        assert "threads must be at least 1" in capsys.readouterr().err

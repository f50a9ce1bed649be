import json
import shutil
from pathlib import Path

import pytest

from notemine import cli, pipeline

DATA = Path(pipeline.__file__).parent / "data"


def demo_config(tmp_path, **overrides):
    shutil.copy(DATA / "synthetic_spec.json", tmp_path / "synthetic_spec.json")
    text = (DATA / "synthetic.ini").read_text()
    for key, value in overrides.items():
        text = text.replace(key, value)
    path = tmp_path / "run.ini"
    path.write_text(text)
    return path


def test_run_produces_report_bundle(tmp_path, capsys):
    cfg = demo_config(tmp_path)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 0
    out = tmp_path / "out"
    for name in ("table1.md", "table2.md", "table1.csv", "table2.csv", "model.json",
                 "manifest.json", "funnel.txt", "coherence.svg", "sweep.tsv"):
        assert (out / name).is_file(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"] == cfg.read_text()
    assert manifest["final_K"] == json.loads((out / "sweep.json").read_text())["selected_K"]
    assert "stages run: synth, ingest" in capsys.readouterr().out


def test_config_relative_paths_and_fixed_k(tmp_path):
    cfg = pipeline.parse_config(demo_config(tmp_path, **{"k = auto": "k = 3"}))
    assert cfg.synth_spec == tmp_path / "synthetic_spec.json"
    assert cfg.fixed_k == 3 and cfg.lda.K == 3


def test_missing_input_names_the_ingest_stage(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(f"[input]\npath = nowhere.jsonl\n[output]\ndir = {tmp_path / 'out'}\n")
    assert cli.main(["run", str(cfg)]) != 0
    err = capsys.readouterr().err
    assert "ingest" in err and "nowhere.jsonl" in err


def test_unreadable_config_is_an_error(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "none.ini")]) == 2
    assert "error" in capsys.readouterr().err


def test_resume_after_interrupted_fit(tmp_path, monkeypatch):
    cfg = pipeline.parse_config(demo_config(tmp_path, **{"k = auto": "k = 4"}))
    cfg.output_dir = tmp_path / "out"
    real_fit = pipeline.stage_fit

    def interrupted(*args, **kwargs):
        raise KeyboardInterrupt

    monkeypatch.setattr(pipeline, "stage_fit", interrupted)
    with pytest.raises(KeyboardInterrupt):
        pipeline.run_pipeline(cfg)
    monkeypatch.setattr(pipeline, "stage_fit", real_fit)
    assert pipeline.run_pipeline(cfg, resume=True) == ["fit", "discriminate", "report"]
    assert pipeline.run_pipeline(cfg, resume=True) == []

    # changing one fit parameter reruns fit and everything after it
    cfg.lda.iterations += 10
    assert pipeline.run_pipeline(cfg, resume=True) == ["fit", "discriminate", "report"]
    # a tampered artifact is detected and regenerated
    (cfg.output_dir / "vocab.tsv").write_text("tampered\n")
    assert pipeline.run_pipeline(cfg, resume=True)[0] == "vectorize"


def test_failing_stage_reports_its_name(tmp_path, monkeypatch):
    cfg = pipeline.parse_config(demo_config(tmp_path, **{"k = auto": "k = 4"}))
    cfg.output_dir = tmp_path / "out"

    def broken(*args, **kwargs):
        raise ValueError("bad weights")

    monkeypatch.setattr(pipeline, "stage_discriminate", broken)
    with pytest.raises(pipeline.PipelineError) as info:
        pipeline.run_pipeline(cfg)
    assert info.value.stage == "discriminate" and "bad weights" in str(info.value)


def test_stagewise_subcommands(tmp_path, capsys):
    out = str(tmp_path / "w")
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"docs_per_topic": [40] * 5, "missing_impression_rate": 0.25,
                                "stopword_notes": 5, "negation_rate": 0.2, "seed": 3}))
    assert cli.main(["synth", "--spec", str(spec), "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["ingest", "--input", str(tmp_path / "s" / "notes.jsonl"), "--out", out]) == 0
    assert cli.main(["preprocess", "--out", out]) == 0
    assert cli.main(["negate", "--out", out]) == 0
    assert "notes loaded:" in capsys.readouterr().out
    assert cli.main(["vectorize", "--out", out]) == 0
    assert cli.main(["sweep", "--out", out, "--kmin", "3", "--kmax", "6", "--iterations", "60",
                     "--burn-in", "30", "--threads", "1"]) == 0
    assert "selected K = " in capsys.readouterr().out
    assert cli.main(["fit", "--out", out, "--k", "5", "--iterations", "100", "--burn-in", "50",
                     "--seed", "2"]) == 0
    assert cli.main(["discriminate", "--out", out]) == 0
    labels = tmp_path / "labels.txt"
    labels.write_text("alpha\nbeta\ngamma\ndelta\nepsilon\n")
    assert cli.main(["report", "--model", str(Path(out) / "model.json"), "--labels", str(labels),
                     "--out", str(tmp_path / "r")]) == 0
    printed = capsys.readouterr().out
    assert "1. alpha" in printed
    assert (tmp_path / "r" / "table2.md").is_file()
    funnel = json.loads((Path(out) / "funnel.json").read_text())
    assert funnel["total_notes"] == 200 and funnel["notes_with_impression"] == 150
    assert funnel["notes_nonempty_after_preprocess"] == 145


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert cli.main(["preprocess", "--out", str(tmp_path)]) == 2
    assert "error: preprocess" in capsys.readouterr().err

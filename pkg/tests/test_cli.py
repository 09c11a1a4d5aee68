import csv
import json
import subprocess
import sys

import pytest

from cliquecycles import cli, graphs, rhobound


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_complete_writes_file_and_sidecar(tmp_path, capsys):
    out = tmp_path / "k4.txt"
    code, _, err = run(["gen", "complete", "4", "--seed", "1", "--out", str(out)], capsys)
    assert code == 0
    assert graphs.read_edgelist(out).num_edges == 6
    side = json.loads((tmp_path / "k4.txt.stats.json").read_text())
    assert side["t"] == 4 and side["x"] == 4 and side["schema_version"] == 1
    assert "runspec:" in err


def test_gen_is_byte_identical_per_seed(tmp_path, capsys):
    paths = []
    for name in ("a.txt", "b.txt"):
        p = tmp_path / name
        run(["gen", "erdos_renyi", "--n", "30", "--param", "edge_prob=0.2", "--seed", "9",
             "--out", str(p)], capsys)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_gen_planted_five_cycles(tmp_path, capsys):
    p = tmp_path / "c5.txt"
    code, _, _ = run(["gen", "planted_disjoint_cycles", "--n", "20", "--param", "count=2",
                      "--h", "5", "--seed", "0", "--out", str(p)], capsys)
    assert code == 0
    assert json.loads((tmp_path / "c5.txt.stats.json").read_text())["t"] >= 2


def test_gen_omits_stats_past_oracle_limit(tmp_path, capsys, caplog):
    p = tmp_path / "big.txt"
    code, _, _ = run(["gen", "complete", "--n", "1100", "--seed", "0", "--out", str(p)], capsys)
    assert code == 0
    assert "t" not in json.loads((tmp_path / "big.txt.stats.json").read_text())
    assert "omitted" in caplog.text


def test_seed_is_generated_and_printed(tmp_path, capsys):
    code, _, err = run(["gen", "complete", "4", "--out", str(tmp_path / "g.txt")], capsys)
    assert code == 0 and "seed: " in err


def test_detect_main_on_k4(tmp_path, capsys):
    g = tmp_path / "k4.txt"
    graphs.write_edgelist(graphs.generate("complete", {"n": 4}), g)
    code, out, _ = run(["detect", "--algo", "main", "--h", "3", "--graph", str(g),
                        "--seed", "2"], capsys)
    res = json.loads(out)
    assert code == 0 and res["answer"] is True
    for key in ("algorithm", "n", "h", "directed", "t", "x", "delta", "rounds", "seed",
                "schedule", "runspec"):
        assert key in res


def test_detect_fvic_on_tree(tmp_path, capsys):
    code, out, _ = run(["detect", "--algo", "fvic", "--gen", "random_tree", "--n", "40",
                        "--seed", "3"], capsys)
    assert code == 0 and json.loads(out)["answer"] is False


def test_detect_q_fast_reports_charged_rounds(tmp_path, capsys):
    code, out, _ = run(["detect", "--algo", "q_fast", "--gen", "planted_disjoint_cycles",
                        "--n", "64", "--param", "count=16", "--seed", "3"], capsys)
    assert code == 0 and "charged_quantum_rounds" in json.loads(out)


def test_qsim_rejects_non_quantum(capsys):
    code, _, err = run(["qsim", "--gen", "complete", "--n", "8", "--h", "4", "--seed", "1"],
                       capsys)
    assert code == 2 and "triangles" in err


def test_replay_reproduces(tmp_path, capsys):
    out1 = tmp_path / "r1.json"
    run(["detect", "--gen", "erdos_renyi", "--n", "32", "--param", "edge_prob=0.2",
         "--seed", "11", "--out", str(out1)], capsys)
    first = json.loads(out1.read_text())
    spec = first["runspec"]
    spec["out"] = str(tmp_path / "r2.json")
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    code, _, _ = run(["--replay", str(tmp_path / "spec.json")], capsys)
    second = json.loads((tmp_path / "r2.json").read_text())
    assert code == 0
    assert (second["answer"], second["rounds"], second["schedule"]) == (
        first["answer"], first["rounds"], first["schedule"])


def test_bad_inputs_give_nonzero_exit(tmp_path, capsys):
    assert run(["detect", "--seed", "1"], capsys)[0] == 2
    assert run(["detect", "--graph", str(tmp_path / "missing.txt"), "--seed", "1"], capsys)[0] == 1
    assert run(["detect", "--gen", "complete", "--n", "8", "--constants", "nope"], capsys)[0] == 2
    with pytest.raises(SystemExit):
        cli.main(["detect", "--algo", "bogus"])
    assert run([], capsys)[0] == 2


def _bench(tmp_path, capsys, ts, extra=()):
    out = tmp_path / "b.csv"
    code, _, _ = run(["bench", "--n", "64", "--t", ts, "--algo", "main,dlp", "--runs", "2",
                      "--seed", "5", "--out", str(out), *extra], capsys)
    assert code == 0
    with out.open() as fh:
        return list(csv.DictReader(fh))


def test_bench_rows_predictions_and_resume(tmp_path, capsys):
    rows = _bench(tmp_path, capsys, "1,8")
    assert len(rows) == 4
    assert list(rows[0]) == cli.BENCH_FIELDS
    for r in rows:
        want = rhobound.predicted_rounds(cli.PREDICT_TAG[r["algorithm"]], int(r["n"]), h=3,
                                         t=int(r["t"]), x=int(r["x"]), delta=float(r["delta"]))
        assert float(r["predicted_rounds"]) == pytest.approx(want)
        assert int(r["answers_true"]) == 2
    rows = _bench(tmp_path, capsys, "1,8,16")
    assert len(rows) == 6
    assert [r["planted"] for r in rows].count("16") == 2


def test_bench_parallel_and_figure(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "2")
    rows = _bench(tmp_path, capsys, "1,8", ["--figures"])
    assert len(rows) == 4
    assert (tmp_path / "b.png").stat().st_size > 0


def test_thread_env_validated(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    with pytest.raises(cli.RunSpecError):
        cli.thread_count()


def test_rho_outputs(tmp_path, capsys):
    code, _, _ = run(["rho", "--out", str(tmp_path), "--figures"], capsys)
    assert code == 0
    with (tmp_path / "table.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 63
    line = dict(csv.reader((tmp_path / "line.csv").open()))
    assert float(line["threshold_exponent"]) == pytest.approx(0.3992, abs=5e-4)
    with (tmp_path / "curves.csv").open() as fh:
        header = next(csv.reader(fh))
    assert header[0] == "tau" and "main" in header
    assert (tmp_path / "curves.png").stat().st_size > 0
    assert (tmp_path / "step_line.png").stat().st_size > 0


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cliquecycles.cli", "rho", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr

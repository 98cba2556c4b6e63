import csv
import json

import pytest
import yaml

from gridco.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, EXIT_RUNTIME, build_parser, main
from gridco.grid_model import dump_case

from builders import two_bus

SMALL = {"hidden": 8, "batch_size": 4, "warmup_batches": 1, "actor_layers": 3, "critic_layers": 3}


@pytest.fixture
def bids_file(tmp_path):
    p = tmp_path / "bids.yaml"
    p.write_text("[10, 20]\n")
    return p


def write_config(tmp_path, name="train.yaml", **kw):
    doc = {"case": "toy2", "episodes": 10, "seed": 5, "output_dir": str(tmp_path / "run"), "maddpg": dict(SMALL)}
    doc.update(kw)
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return p


def exit_code(argv):
    """main() return value, or the exit status of an argparse error."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


def rows(text):
    return {r[0]: r[1:] for r in csv.reader(text.strip().splitlines())}


def test_clear_two_bus(bids_file, capsys):
    assert main(["clear", "toy2", str(bids_file)]) == EXIT_OK
    out = rows(capsys.readouterr().out)
    assert out["lmp"] == ["10", "20"]
    assert out["dispatch"] == ["30", "30"]
    assert out["operational_cost"] == ["900"]


def test_clear_mapping_bids_and_design(tmp_path, capsys):
    p = tmp_path / "bids.yaml"
    p.write_text("A: 10\nB: 20\n")
    assert main(["clear", "toy2", str(p), "--design", "40"]) == EXIT_OK
    out = rows(capsys.readouterr().out)
    assert out["lmp"] == ["10", "10"]
    assert out["dispatch"] == ["60", "0"]


def test_clear_writes_file(bids_file, tmp_path):
    out = tmp_path / "res.csv"
    assert main(["clear", "toy2", str(bids_file), "--out", str(out)]) == EXIT_OK
    assert rows(out.read_text())["lmp"] == ["10", "20"]


def test_clear_infeasible(tmp_path, bids_file, capsys):
    case = tmp_path / "big.case"
    dump_case(two_bus(demand=250.0), case)
    assert main(["clear", str(case), str(bids_file)]) == EXIT_INFEASIBLE
    assert "infeasible" in capsys.readouterr().err
    # shedding makes the same snapshot feasible
    assert main(["clear", str(case), str(bids_file), "--shed-penalty", "10000"]) == EXIT_OK


@pytest.mark.parametrize(
    "argv",
    [
        ["clear", "toy2", "missing.yaml"],
        ["clear", "no_such_case", "BIDS"],
        ["clear", "toy2", "BIDS", "--t", "5"],
        ["clear"],
        ["frobnicate"],
    ],
)
def test_clear_input_errors(argv, bids_file):
    argv = [str(bids_file) if a == "BIDS" else a for a in argv]
    assert exit_code(argv) == EXIT_INPUT


def test_clear_wrong_bid_count(tmp_path, capsys):
    p = tmp_path / "bids.yaml"
    p.write_text("[10]\n")
    assert main(["clear", "toy2", str(p)]) == EXIT_INPUT
    assert "2 generators" in capsys.readouterr().err


def test_clear_leaves_inputs_untouched(bids_file):
    before = bids_file.read_bytes()
    main(["clear", "toy2", str(bids_file)])
    assert bids_file.read_bytes() == before


def test_train_ten_episodes_with_override(tmp_path, capsys):
    cfg = write_config(tmp_path)
    before = cfg.read_bytes()
    assert main(["train", str(cfg), "--override", "design.n_up=5", "-q"]) == EXIT_OK
    lines = (tmp_path / "run" / "metrics.jsonl").read_text().splitlines()
    header = json.loads(lines[0])
    assert header["type"] == "header" and header["config"]["design"]["n_up"] == 5
    assert "version" in header and header["seed"] == 5
    assert sum(json.loads(x)["type"] == "episode" for x in lines) == 10
    for name in ("summary.csv", "design.out"):
        assert (tmp_path / "run" / name).is_file()
    assert "total" in capsys.readouterr().out
    assert cfg.read_bytes() == before


def test_train_output_dir_flag(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["-q", "train", str(cfg), "--output-dir", str(tmp_path / "elsewhere")]) == EXIT_OK
    assert (tmp_path / "elsewhere" / "metrics.jsonl").is_file()


def test_train_bad_mode(tmp_path, capsys):
    cfg = write_config(tmp_path, mode="co-opt-sideways")
    assert main(["train", str(cfg)]) == EXIT_INPUT
    assert "mode must be one of" in capsys.readouterr().err


def test_train_rejects_two_stage(tmp_path):
    cfg = write_config(tmp_path, mode="two-stage", scenario={"A": 10.0, "B": 20.0})
    assert main(["train", str(cfg)]) == EXIT_INPUT


def test_train_unknown_key(tmp_path, capsys):
    cfg = write_config(tmp_path, episods=3)
    assert main(["train", str(cfg)]) == EXIT_INPUT
    assert "unknown config keys" in capsys.readouterr().err


def test_train_runtime_failure(tmp_path, capsys):
    case = tmp_path / "big.case"
    dump_case(two_bus(demand=250.0), case)
    cfg = write_config(tmp_path, case=str(case), shed_penalty=None)
    assert main(["train", str(cfg)]) == EXIT_RUNTIME
    assert "partial artifacts" in capsys.readouterr().err
    assert (tmp_path / "run" / "metrics.jsonl").is_file()


def test_benchmark(tmp_path):
    cfg = write_config(tmp_path, mode="two-stage", scenario={"A": 10.0, "B": 90.0})
    assert main(["benchmark", str(cfg), "-q"]) == EXIT_OK
    with open(tmp_path / "run" / "summary.csv", newline="") as fh:
        summary = next(csv.DictReader(fh))
    assert float(summary["dL_1-2"]) == pytest.approx(30.0)
    assert {"planned_total_cost", "total_cost", "planned_operational_cost", "operational_cost"} <= set(summary)


def test_benchmark_missing_scenario_bid(tmp_path, capsys):
    cfg = write_config(tmp_path, mode="two-stage", scenario={"A": 10.0})
    assert main(["benchmark", str(cfg)]) == EXIT_INPUT
    assert "strategic generators" in capsys.readouterr().err
    assert not (tmp_path / "run").exists()


def test_benchmark_rejects_co_opt(tmp_path):
    assert main(["benchmark", str(write_config(tmp_path))]) == EXIT_INPUT


def test_report_single_run(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["-q", "train", str(cfg)]) == EXIT_OK
    assert main(["report", str(tmp_path / "run"), "--out", str(tmp_path / "rep")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "bid constraints hold" in out
    with open(tmp_path / "rep" / "breakdown.csv", newline="") as fh:
        row = next(csv.DictReader(fh))
    for key in ("operational_cost", "expansion_cost", "total_cost", "revenue_A", "profit_A", "revenue_B"):
        assert key in row
    total = float(row["operational_cost"]) + float(row["expansion_cost"])
    assert float(row["total_cost"]) == pytest.approx(total, rel=1e-12)
    for name in ("bids.csv", "mu.csv", "breakdown.png", "bids.png", "mu.png"):
        assert (tmp_path / "rep" / name).is_file()


def test_report_two_runs(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["-q", "train", str(cfg), "--output-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main(["-q", "train", str(cfg), "--output-dir", str(tmp_path / "b"), "--override", "seed=6"]) == EXIT_OK
    rep = tmp_path / "rep"
    assert main(["-q", "report", str(tmp_path / "a"), str(tmp_path / "b"), "--out", str(rep), "--no-plots"]) == EXIT_OK
    with open(rep / "comparison.csv", newline="") as fh:
        ids = [r["run"] for r in csv.DictReader(fh)]
    assert ids == ["a", "b"]
    assert (rep / "bids_a.csv").is_file() and (rep / "mu_b.csv").is_file()
    assert not list(rep.glob("*.png"))


def test_report_empty_directory(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty")]) == EXIT_INPUT
    assert "not a run directory" in capsys.readouterr().err


def test_report_flags_violation(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["-q", "train", str(cfg)]) == EXIT_OK
    path = tmp_path / "run" / "metrics.jsonl"
    lines = path.read_text().splitlines()
    recs = [json.loads(x) for x in lines]
    ep = next(r for r in recs if r["type"] == "episode")
    ep["bids"][0] = [10.0, 30.0]
    path.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
    assert main(["report", str(tmp_path / "run"), "--no-plots"]) == EXIT_RUNTIME
    assert "max/min" in capsys.readouterr().err


def test_every_subcommand_has_help(capsys):
    parser = build_parser()
    for cmd in ("clear", "train", "benchmark", "report"):
        with pytest.raises(SystemExit) as info:
            parser.parse_args([cmd, "--help"])
        assert info.value.code == 0
        assert "--verbose" in capsys.readouterr().out


def test_report_tolerates_logs_without_revenue(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["-q", "train", str(cfg)]) == EXIT_OK
    path = tmp_path / "run" / "metrics.jsonl"
    recs = [json.loads(x) for x in path.read_text().splitlines()]
    for r in recs:
        r.pop("revenue", None)
    path.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
    assert main(["-q", "report", str(tmp_path / "run"), "--no-plots"]) == EXIT_OK
    with open(tmp_path / "run" / "breakdown.csv", newline="") as fh:
        row = next(csv.DictReader(fh))
    assert row["revenue_A"] == "" and row["profit_A"] != ""

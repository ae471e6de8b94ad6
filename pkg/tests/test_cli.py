import csv
import json

import pytest

from bss_usage.cli import EXIT_OK, EXIT_STAGE, EXIT_VALIDATION, main


def nrows(path):
    with open(path, newline="") as f:
        return sum(1 for _ in csv.reader(f)) - 1


@pytest.fixture(scope="module")
def chain(six_city, tmp_path_factory):
    """Run every stage of one city through the CLI."""
    raw = six_city.parent / "raw"
    out = tmp_path_factory.mktemp("cli")
    period = ["--period", "2023-10-02", "2023-10-15"]
    steps = {
        "ingest": ["ingest", "--city", "NY", "--schema", "NY", "--input", str(raw / "ny_*.csv"),
                   *period, "--out", str(out / "NY" / "events.csv")],
        "distributions": ["distributions", "--events", str(out / "NY" / "events.csv"), "--city", "NY",
                          "--out", str(out / "NY" / "distributions.csv")],
        "jsd-matrix": ["jsd-matrix", "--dist", str(out / "NY" / "distributions.csv"), "--city", "NY",
                       "--out", str(out / "jsd.csv")],
        "rank-fit": ["rank-fit", "--events", str(out / "NY" / "events.csv"), "--day-class", "weekday",
                     "--rank-out", str(out / "rank_weekday.csv"), "--out", str(out / "fit.json")],
        "rank-compare": ["rank-compare", "--events", str(out / "NY" / "events.csv"),
                         "--out", str(out / "corr.csv")],
        "model-fit": ["model-fit", "--correspondence", str(out / "corr.csv"), "--city", "NY",
                      "--out", str(out / "model.json")],
    }
    codes = {name: main(argv) for name, argv in steps.items()}
    return out, codes


def test_each_stage_succeeds(chain):
    out, codes = chain
    assert codes == dict.fromkeys(codes, EXIT_OK)
    for name in ("NY/events.csv", "NY/events.summary.json", "NY/events.report.json",
                 "NY/distributions.csv", "jsd.csv", "jsd.json", "fit.json", "rank_weekday.csv",
                 "corr.csv", "model.json"):
        assert (out / name).is_file(), name
    assert json.loads((out / "model.json").read_text())["a"] > 0


def test_cli_stage_matches_pipeline(chain, six_city_run):
    out, _ = chain
    run, _ = six_city_run
    assert (out / "NY" / "events.csv").read_bytes() == (run / "cities" / "NY" / "events.csv").read_bytes()
    assert (out / "jsd.csv").read_bytes() == (run / "cities" / "NY" / "jsd_matrix.csv").read_bytes()


def test_network_and_plot_data(chain, tmp_path):
    out, _ = chain
    dist_dir = tmp_path / "dists"
    dist_dir.mkdir()
    (dist_dir / "NY.csv").write_bytes((out / "NY" / "distributions.csv").read_bytes())
    assert main(["jsd-network", "--dist-dir", str(dist_dir), "--top", "5",
                 "--out", str(tmp_path / "net")]) == EXIT_OK
    assert nrows(tmp_path / "net" / "edges.csv") == 21
    assert main(["plot-data", "--figure", "fig3", "--input", str(tmp_path / "net"),
                 "--out", str(tmp_path / "f3.csv")]) == EXIT_OK
    assert main(["plot-data", "--figure", "fig1", "--input", str(out / "NY" / "distributions.csv"),
                 "--out", str(tmp_path / "f1.csv")]) == EXIT_OK
    assert nrows(tmp_path / "f1.csv") == 7 * 2 * 24
    assert main(["plot-data", "--figure", "fig2", "--input", str(out / "jsd.csv"),
                 "--out", str(tmp_path / "f2.csv")]) == EXIT_OK
    assert nrows(tmp_path / "f2.csv") == 49


def test_simulate_model(tmp_path):
    out = tmp_path / "sim.csv"
    assert main(["simulate-model", "--a", "0.5", "--m", "20", "--n", "40", "--trials", "200",
                 "--seed", "1", "--out", str(out)]) == EXIT_OK
    assert nrows(out) == 40


def test_run_subcommand(six_city, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--config", str(six_city), "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["complete"]


def test_validation_errors_exit_2(six_city, tmp_path, capsys):
    assert main(["ingest", "--city", "NY", "--schema", "NY", "--input", str(tmp_path / "none*.csv"),
                 "--out", str(tmp_path / "e.csv")]) == EXIT_VALIDATION
    assert "no files match" in capsys.readouterr().err
    assert main(["run"]) == EXIT_VALIDATION
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_VALIDATION
    assert main(["not-a-command"]) == EXIT_VALIDATION
    assert main(["model-fit", "--correspondence", "x.csv", "--city", "LON", "--out", "m.json"]) == EXIT_VALIDATION
    assert main(["plot-data", "--figure", "fig2", "--input", str(tmp_path / "nope"), "--out", "x"]) == EXIT_VALIDATION


def test_stage_failure_exits_3(six_city, tmp_path):
    raw = six_city.parent / "raw"
    code = main(["ingest", "--city", "NY", "--schema", "NY", "--input", str(raw / "ny_*.csv"),
                 "--malformed-threshold", "0", "--out", str(tmp_path / "e.csv")])
    assert code == EXIT_STAGE

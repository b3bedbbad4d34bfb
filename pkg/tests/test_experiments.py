import csv
import math
from pathlib import Path

import pytest

from hmm_helmholtz.cli import main
from hmm_helmholtz.config import ExperimentConfig, load_config, parse_text
from hmm_helmholtz.errors import ConfigError, NonMonotoneMesh, NonPositiveError
from hmm_helmholtz.experiments import ResultTable, compute_eoc, run, threshold_level

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_eoc_examples():
    assert compute_eoc([(1.0, 1.0), (0.5, 0.5)]) == pytest.approx([1.0])
    assert compute_eoc([(1.0, 1.0), (0.5, 0.25)]) == pytest.approx([2.0])
    # Two rows of a reference convergence table (H1 error at two mesh labels).
    p = compute_eoc([(math.sqrt(2) / 8, 0.47302), (math.sqrt(2) / 12, 0.36022)])
    assert p[0] == pytest.approx(0.672, abs=0.01)
    assert compute_eoc([(1.0, 1.0)]) == []


def test_eoc_recovers_synthetic_rate():
    for rate in (0.5, 1.0, 2.0, 3.7):
        hs = [0.1 / 2**i for i in range(5)]
        ps = compute_eoc([(h, 3.0 * h**rate) for h in hs])
        assert all(abs(p - rate) < 1e-12 for p in ps)


def test_eoc_errors():
    with pytest.raises(NonPositiveError):
        compute_eoc([(1.0, 0.0), (0.5, 1.0)])
    with pytest.raises(NonMonotoneMesh):
        compute_eoc([(0.5, 1.0), (0.5, 0.5)])


def test_threshold_level():
    assert threshold_level([1.0, 0.8, 0.49, 0.1]) == 2
    assert threshold_level([1.0, 0.9]) is None


def test_parse_text():
    vals = parse_text("k = 34  # comment\nlevels = 8, 16\n\neps_i_inv = 10-0.01j\nwrite-fields = no\n")
    assert vals == {"k": 34.0, "levels": (8, 16), "eps_i_inv": 10 - 0.01j, "write_fields": False}
    with pytest.raises(ConfigError):
        parse_text("nonsense")
    with pytest.raises(ConfigError):
        parse_text("unknown_key = 1")
    with pytest.raises(ConfigError):
        parse_text("k = abc")


def test_shipped_configs_load():
    for path in CONFIGS.glob("*.cfg"):
        experiment = path.stem.replace("_", "-")
        cfg = load_config(path, experiment)
        assert cfg.experiment == experiment


@pytest.mark.parametrize("overrides", [
    {"k": "0.5"},                                   # below k0
    {"levels": "8, 8"},                             # not increasing
    {"levels": "10"},                               # scatterer off the grid
    {"omega": "0, 0, 1, 1"},                        # not inside G
    {"eps_i_inv": "10+0.01j"},                      # wrong sign of losses
    {"delta": "-1"},
])
def test_invalid_configs(overrides):
    with pytest.raises(ConfigError):
        load_config(None, "eoc", overrides)


def test_digest_ignores_output_dir():
    a = ExperimentConfig(out="x")
    assert a.digest() == ExperimentConfig(out="y").digest()
    assert a.digest() != ExperimentConfig(k=30.0).digest()


def test_result_table_header_only(tmp_path):
    path = ResultTable(["n", "err"], [], {"note": 1.0}).write(tmp_path / "t.csv")
    assert path.read_text().splitlines() == ["# note: 1", "n,err"]


def test_result_table_float_format(tmp_path):
    path = ResultTable(["v"], [[0.1], [float("nan")], [True]]).write(tmp_path / "t.csv")
    rows = list(csv.reader(path.open()))
    assert rows == [["v"], ["0.10000000000000001"], [""], ["true"]]


def test_cli_dump_mesh(tmp_path, capsys):
    assert main(["dump-mesh", "--config", str(CONFIGS / "dump_mesh.cfg"), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "mesh_triangles.csv").read_text().splitlines()
    assert lines[0].startswith("# run: ")
    assert any(line.startswith("# config_hash: ") for line in lines)
    assert sum(not line.startswith("#") for line in lines) == 129
    assert "mesh_vertices.csv" in capsys.readouterr().out


def test_cli_error_line(tmp_path, capsys):
    code = main(["eoc", "--k", "0.5", "--out", str(tmp_path)])
    assert code != 0
    err = capsys.readouterr().err.strip()
    assert err.startswith("error code=ConfigError message=")
    assert not any(tmp_path.iterdir())


def test_cli_missing_config(capsys):
    assert main(["eoc", "--config", "/nonexistent.cfg"]) != 0
    assert "code=ConfigError" in capsys.readouterr().err


def test_runs_are_deterministic(tmp_path):
    outputs = []
    for name in ("a", "b"):
        cfg = load_config(None, "manufactured", {"levels": "8, 16", "out": str(tmp_path / name)})
        run(cfg)
        text = (tmp_path / name / "manufactured.csv").read_text().splitlines()
        outputs.append([line for line in text if not line.startswith("# run:")])
    assert outputs[0] == outputs[1]


def test_small_eoc_run(tmp_path):
    cfg = load_config(None, "eoc", {"levels": "8, 16", "n_ref": "32", "out": str(tmp_path)})
    table = run(cfg).tables["eoc"]
    assert table.column("n") == [8, 16]
    assert math.isnan(table.column("eoc_l2")[0])
    assert table.column("h1k_error")[1] < table.column("h1k_error")[0]
    assert table.metadata["max_residual"] < 1e-10


def test_small_mueff_sweep(tmp_path):
    cfg = load_config(None, "mueff-sweep",
                      {"n_cell": "32", "k_min": "20", "k_max": "36", "k_step": "2", "out": str(tmp_path)})
    res = run(cfg)
    assert len(res.tables["mueff"].rows) == 9
    assert [c.direction for c in res.summary["crossings"]] == ["down", "up"]
    assert (tmp_path / "mueff_crossings.csv").exists()

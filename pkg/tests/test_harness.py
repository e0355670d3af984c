import json
import math

import pytest

from critwin.harness.cli import main
from critwin.harness.config import ConfigError, parse_config
from critwin.harness.output import ResultRow, read_csv, write_csv
from critwin.harness.verify import format_table, mutated_si, progeny_checks, run_suite


def _cfg(tmp_path, name, body):
    p = tmp_path / f"{name}.cfg"
    p.write_text("critwin-config v1\n" + body)
    return str(p)


def _rows(prefix, statistic=None):
    rows = read_csv(prefix + ".csv")
    return [r for r in rows if statistic is None or r["statistic"] == statistic]


# ---------------------------------------------------------------- config

def test_parse_full_config():
    c = parse_config("""critwin-config v1
# comment line
experiment = tail
gamma = 0, 0.3
n = 1e4, 20000     # trailing comment
alpha = -1, 0
seeds = 1..3, 10
k_grid = 1, 8, 64
kernel = exponential_lower
max_edges = 1000000
wall_time = 60
output = out/run
""")
    assert c.gamma == (0.0, 0.3) and c.n == (10000, 20000)
    assert c.seeds == (1, 2, 3, 10) and c.k_grid == (1, 8, 64)
    assert c.kernel.value == "exponential_lower"
    assert c.caps.max_edges == 10**6 and c.caps.wall_time == 60.0
    assert len(c.cells()) == 8
    assert c.with_seed_offset(5).seeds == (6, 7, 8, 15)
    assert len(c.content_hash()) == 40
    assert c.echo()["alpha"] == [-1.0, 0.0]


@pytest.mark.parametrize("body", [
    "experiment = tail\nbeta = 0.1\nalpha = 0\n",          # both window and beta
    "experiment = tail\n",                                 # neither
    "experiment = tail\nbeta = 0.1\nseeds = 1, 1\n",       # repeated seed
    "experiment = tail\nbeta = 0.1\nk_grid = 8, 4\n",      # not increasing
    "experiment = tail\nbeta = 0.1\nbogus = 1\n",          # unknown key
    "experiment = tail\nbeta = 0.1\nbeta = 0.2\n",         # duplicate key
    "experiment = nonsense\nbeta = 0.1\n",
    "experiment = tail\nbeta = 0.1\nn = 1.5\n",
    "experiment = tail\nbeta = 0.1\ngamma =\n",            # empty grid
    "experiment = tail\nbeta = 0.1\nseeds = 5..2\n",
    "experiment = tail\ngamma = 0.3\nn = 10000\nalpha = -10\n",  # negative beta
    "experiment = tail\nbeta = 0.1\nkernel = cubic\n",
    "experiment = coupling_audit\nbeta = 0.1\nmodes = middle\n",
    "experiment = tail\nbeta = 0.1\nno equals sign\n",
])
def test_config_errors(body):
    with pytest.raises(ConfigError):
        parse_config("critwin-config v1\n" + body)


def test_header_and_subcommand_agreement():
    with pytest.raises(ConfigError):
        parse_config("experiment = tail\nbeta = 0.1\n")
    with pytest.raises(ConfigError):
        parse_config("critwin-config v1\nexperiment = tail\nbeta = 0.1\n", "susceptibility")
    c = parse_config("critwin-config v1\nbeta = 0.1\n", "local-limit")
    assert c.experiment == "local_limit"


def test_bad_config_exit_code(tmp_path, capsys):
    path = _cfg(tmp_path, "bad", "experiment = tail\n")
    assert main(["tail", "--config", path, "--out", str(tmp_path / "x")]) == 2
    assert "alpha" in capsys.readouterr().err


# ---------------------------------------------------------------- output

def test_result_row_rules(tmp_path):
    with pytest.raises(ValueError):
        ResultRow("x", "s", 1.0, half_width=-1.0)
    with pytest.raises(ValueError):
        ResultRow("x", "s", 1.0, half_width=math.nan)
    assert ResultRow("x", "s", 1.0, censored_fraction=0.02).flagged
    assert not ResultRow("x", "s", 1.0, censored_fraction=0.005).flagged
    rows = [ResultRow("x", "b", 2.0, gamma=0.3, seed=2), ResultRow("x", "a", 1.0, gamma=0.0),
            ResultRow("x", "b", 3.0, gamma=0.3, seed=1, half_width=math.inf)]
    write_csv(rows, tmp_path / "r.csv")
    back = read_csv(tmp_path / "r.csv")
    assert [r["statistic"] for r in back] == ["a", "b", "b"]
    assert [r["seed"] for r in back] == ["all", "1", "2"]
    assert back[1]["half_width"] == "inf"


# ---------------------------------------------------------------- runs

def test_susceptibility_run_and_determinism(tmp_path):
    cfg = _cfg(tmp_path, "sus", "gamma = 0, 0.3\nn = 3000\nalpha = 0\nseeds = 1..4\n")
    a, b, c = (str(tmp_path / x) for x in "abc")
    assert main(["susceptibility", "--config", cfg, "--out", a]) == 0
    assert main(["susceptibility", "--config", cfg, "--out", b, "--threads", "2"]) == 0
    assert open(a + ".csv", "rb").read() == open(b + ".csv", "rb").read()
    assert main(["susceptibility", "--config", cfg, "--out", c, "--seed-offset", "100"]) == 0
    assert open(a + ".csv", "rb").read() != open(c + ".csv", "rb").read()
    summ = json.load(open(a + ".json"))
    assert summ["experiment"] == "susceptibility" and not summ["partial"]
    assert summ["config"]["seeds"] == [1, 2, 3, 4] and "wall_time" in summ
    assert json.load(open(c + ".json"))["config"]["seeds"] == [101, 102, 103, 104]
    agg = [r for r in _rows(a, "susceptibility") if r["seed"] == "all"]
    assert len(agg) == 2 and all(float(r["half_width"]) > 0 for r in agg)
    assert all(float(r["estimate"]) >= 1.0 for r in _rows(a, "susceptibility"))


def test_tail_run_k1_equals_one(tmp_path):
    cfg = _cfg(tmp_path, "tail", "gamma = 0\nn = 2000\nbeta = 0.25\nseeds = 1..3\n"
                                 "k_grid = 1, 4, 16\n")
    out = str(tmp_path / "t")
    assert main(["tail", "--config", cfg, "--out", out]) == 0
    tp = _rows(out, "tail_prob")
    assert all(float(r["estimate"]) == 1.0 for r in tp if r["k"] == "1")
    agg = sorted((int(r["k"]), float(r["estimate"])) for r in tp if r["seed"] == "all")
    assert [e for _, e in agg] == sorted((e for _, e in agg), reverse=True)
    assert _rows(out, "compensated_tail")


def test_single_seed_half_width_is_inf(tmp_path):
    cfg = _cfg(tmp_path, "one", "n = 500\nbeta = 0.2\nseeds = 7\n")
    out = str(tmp_path / "o")
    assert main(["susceptibility", "--config", cfg, "--out", out]) == 0
    agg = [r for r in _rows(out, "susceptibility") if r["seed"] == "all"]
    assert agg[0]["half_width"] == "inf"


def test_window_scan_run(tmp_path):
    cfg = _cfg(tmp_path, "ws", "gamma = 0\nn = 2000, 8000\nalpha = -5, 0, 5\nseeds = 1..3\n")
    out = str(tmp_path / "w")
    assert main(["window-scan", "--config", cfg, "--out", out]) == 0
    viol = _rows(out, "monotone_violations")
    assert viol and all(float(r["estimate"]) == 0 for r in viol)
    assert _rows(out, "normalized") and _rows(out, "median_normalized")


def test_local_limit_run(tmp_path):
    cfg = _cfg(tmp_path, "ll", "gamma = 0\nn = 5000\nalpha = 0\nseeds = 1..3\n"
                               "k_grid = 1, 8\nreps = 2000\n")
    out = str(tmp_path / "l")
    assert main(["local-limit", "--config", cfg, "--out", out]) == 0
    t1 = [r for r in _rows(out, "graph_tail") if r["k"] == "1"]
    assert t1 and all(float(r["estimate"]) == 1.0 for r in t1)
    assert _rows(out, "z_trunc_mean") and _rows(out, "exact_mean_progeny")


def test_coupling_audit_run(tmp_path):
    cfg = _cfg(tmp_path, "ca", "gamma = 0.3\nn = 300\nalpha = 0\nseeds = 1, 2\nreps = 4\n"
                               "v = 1, 2, 10\nmodes = lower, upper\n")
    out = str(tmp_path / "c")
    assert main(["coupling-audit", "--config", cfg, "--out", out]) == 0
    rows = _rows(out)
    viol = [r for r in rows if "violation" in r["statistic"]]
    assert viol and all(float(r["estimate"]) == 0 for r in viol)


def test_gen_writes_edge_files(tmp_path):
    cfg = _cfg(tmp_path, "gen", "gamma = 0.2\nn = 500\nbeta = 0.1\nseeds = 3\n")
    out = str(tmp_path / "g")
    assert main(["gen", "--config", cfg, "--out", out]) == 0
    files = list(tmp_path.glob("g_*.edges"))
    assert len(files) == 1
    assert files[0].read_text().startswith("# critwin-edges v1 n=500")


def test_partial_marker_on_edge_cap(tmp_path):
    cfg = _cfg(tmp_path, "cap", "gamma = 0\nn = 20000\nbeta = 0.25\nseeds = 1..3\n"
                                "max_edges = 10\n")
    out = str(tmp_path / "p")
    assert main(["susceptibility", "--config", cfg, "--out", out]) == 0
    summ = json.load(open(out + ".json"))
    assert summ["partial"] is True
    assert any("ResourceError" in r for r in summ["partial_reasons"])
    assert _rows(out, "partial")


def test_partial_marker_on_wall_time(tmp_path):
    cfg = _cfg(tmp_path, "wt", "gamma = 0\nn = 20000\nbeta = 0.25\nseeds = 1..3\n"
                               "wall_time = 0\n")
    out = str(tmp_path / "q")
    assert main(["susceptibility", "--config", cfg, "--out", out]) == 0
    summ = json.load(open(out + ".json"))
    assert summ["partial"] is True and "wall_time" in summ["partial_reasons"]


# ---------------------------------------------------------------- verify

@pytest.fixture(scope="module")
def suite():
    return run_suite(seed=1, reps=100_000)


def test_verify_suite_passes(suite):
    failed = [c for c in suite if not c.passed]
    assert not failed, format_table(failed)
    assert len(suite) > 90


def test_verify_suite_detects_mutated_window_function():
    with mutated_si(1.02):
        checks = progeny_checks()
    assert sum(not c.passed for c in checks) >= 6


def test_verify_cli(tmp_path, capsys):
    out = str(tmp_path / "v")
    assert main(["verify", "--out", out]) == 0
    text = capsys.readouterr().out
    assert "checks passed" in text and "FAIL" not in text
    summ = json.load(open(out + ".json"))
    assert summ["checks_failed"] == 0
    assert all("reference" in c for c in summ["checks"])


@pytest.mark.slow
def test_verify_cli_mutation_fails(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path / "m"), "--mutate-si", "1.02"]) == 1
    assert "FAIL" in capsys.readouterr().out

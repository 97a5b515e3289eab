import csv
import json

import pytest

from iwsn_trust import cli
from iwsn_trust.errors import ConfigError
from iwsn_trust.netsim import METRIC_COLUMNS
from iwsn_trust.netsim.metrics import SUMMARY_FIELDS

FAST = "codec_epochs = 5\ncodec_update_epochs = 1\nredemption_epochs = 1\nrounds = 50\nwarmup_rounds = 40\n"


@pytest.fixture
def fast_cfg(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text(FAST)
    return path


def test_empty_file_gives_table_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("# nothing here\n\n")
    sim = cli.parse_config(path).sim
    assert (sim.p_head, sim.p_attack, sim.p_bad, sim.initial_energy) == (0.07, 0.1, 0.1, 1.3)
    assert (sim.l_w1, sim.l_w2, sim.alpha, sim.beta) == (10, 4, 0.5, 0.5)


def test_out_of_range_flag_is_rejected():
    with pytest.raises(ConfigError, match="malicious_pct"):
        cli.parse_config(None, {"malicious_pct": 150.0})


def test_flags_override_file(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("rounds = 300\nmalicious_pct = 20  # trailing comment\nseeds = 3, 4\n")
    exp = cli.parse_config(path, {"rounds": 100})
    assert exp.sim.rounds == 100
    assert exp.sim.malicious_pct == 20.0
    assert exp.seeds == (3, 4)


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("p_head = 0.1\nwibble = 3\n")
    with pytest.raises(ConfigError, match="wibble"):
        cli.parse_config(path)


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# header\nrounds 300\n")
    with pytest.raises(cli.ConfigParseError, match=":2:"):
        cli.parse_config(path)


def test_bad_value_names_key(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("rounds = many\n")
    with pytest.raises(ConfigError, match="rounds"):
        cli.parse_config(path)


def test_typed_values(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("trust_enabled = false\ntier_shares = 0.2, 0.3, 0.5\nchannel_mode = link\n")
    sim = cli.parse_config(path).sim
    assert sim.trust_enabled is False
    assert sim.tier_shares == (0.2, 0.3, 0.5)
    assert sim.channel_mode == "link"


def test_empty_seed_list_rejected():
    with pytest.raises(ConfigError, match="seed"):
        cli.parse_config(None, {"seeds": ()})


def test_missing_config_file_fails(tmp_path, capsys):
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.cfg")]) == 1
    assert "nope.cfg" in capsys.readouterr().err


def test_simulate_twice_is_byte_identical(tmp_path, fast_cfg):
    for name in ("a", "b"):
        assert cli.main(["simulate", "--config", str(fast_cfg), "--seed", "1", "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    header = a.decode().splitlines()[0]
    assert header == ",".join(METRIC_COLUMNS)
    assert len(a.decode().splitlines()) == 51


def test_summary_json_fields(tmp_path, fast_cfg):
    out = tmp_path / "run"
    cli.main(["simulate", "--config", str(fast_cfg), "--seed", "2", "--out", str(out), "--malicious-pct", "30"])
    doc = json.loads((out / "summary.json").read_text())
    assert set(doc) == set(SUMMARY_FIELDS) | {"config", "seed"}
    assert doc["seed"] == 2 and doc["config"]["malicious_pct"] == 30.0


def test_trace_flag_writes_decisions(tmp_path, fast_cfg):
    out = tmp_path / "run"
    cli.main(["simulate", "--config", str(fast_cfg), "--out", str(out), "--trace-decisions"])
    rows = list(csv.reader(open(out / "decisions.csv")))
    assert rows[0] == list(cli.TRACE_COLUMNS)


def test_multiple_seeds_get_subdirectories(tmp_path, fast_cfg):
    out = tmp_path / "run"
    cli.main(["simulate", "--config", str(fast_cfg), "--seed", "1", "--seed", "2", "--out", str(out)])
    assert (out / "seed_1" / "metrics.csv").exists() and (out / "seed_2" / "metrics.csv").exists()


def test_baseline_flag_disables_trust(tmp_path, fast_cfg):
    out = tmp_path / "run"
    cli.main(["simulate", "--config", str(fast_cfg), "--out", str(out), "--baseline", "--malicious-pct", "50"])
    doc = json.loads((out / "summary.json").read_text())
    assert doc["config"]["trust_enabled"] is False and doc["det_total_malicious"] == 0


def test_sweep_writes_one_row_per_percentage(tmp_path, fast_cfg, capsys):
    out = tmp_path / "sweep"
    argv = ["sweep", "--config", str(fast_cfg), "--seed", "1", "--seed", "2", "--out", str(out), "--baseline"]
    assert cli.main(argv) == 0
    rows = list(csv.DictReader(open(out / "report.csv")))
    assert [float(r["malicious_pct"]) for r in rows] == [10, 20, 30, 40, 50]
    assert all(r["n_runs"] == "2" for r in rows)
    assert all(float(r["throughput_std"]) >= 0 for r in rows)


def test_report_recomputes_and_prints_nr(tmp_path, fast_cfg, capsys):
    out = tmp_path / "sweep"
    cli.main(["sweep", "--config", str(fast_cfg), "--seed", "1", "--out", str(out), "--percentages", "10,50", "--baseline"])
    swept = (out / "report.csv").read_text()
    (out / "report.csv").unlink()
    capsys.readouterr()
    assert cli.main(["report", "--out", str(out)]) == 0
    assert (out / "report.csv").read_text() == swept
    assert "N_r = 196.35" in capsys.readouterr().out


def test_report_without_runs_fails(tmp_path):
    assert cli.main(["report", "--out", str(tmp_path)]) == 1


def test_train_writes_checkpoint(tmp_path, fast_cfg):
    out = tmp_path / "models"
    assert cli.main(["train", "--config", str(fast_cfg), "--out", str(out)]) == 0
    from iwsn_trust.classifier import load_codec

    model, th = load_codec(out / "codec.npz")
    assert th is not None and th.tr1 <= th.tr2


def test_report_rows_statistics():
    rows = cli.report_rows([(10, {"detection_rate": 0.5, "throughput": 10}), (10, {"detection_rate": None, "throughput": 20})])
    (row,) = rows
    assert row.n_runs == 2
    assert row.stats["detection_rate"] == (0.5, 0.0)
    assert row.stats["throughput"] == (15.0, 5.0)
    assert row.stats["lifetime"] is None

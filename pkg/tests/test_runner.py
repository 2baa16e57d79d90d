import math

import numpy as np
import pytest

from xlirs.baselines import SchemeId
from xlirs.cli import main
from xlirs.metrics import MetricsRecord
from xlirs.runner import (AGGREGATE_HEADER, DETAIL_HEADER, ConfigError,
                          aggregate_records, dump_channel, emit_results,
                          load_config, overhead_table, resolve_output_dir,
                          run_experiment)

SMALL_YAML = """\
geometry:
  wavelength: 0.03
  m_bs: 8
  nx: 12
  ny: 1
  element_spacing: 0.015
  bs_center: [0.0, 0.8, 1.3]
  irs_center: [0.0, 0.0, 1.5]
  anchor_position: [0.2, 1.5, 1.4]
  n_users: 2
  user_disc_center: [0.0, 2.0, 0.0]
  user_disc_radius: 1.0
  user_height: 0.0
  bs_link_gain: 1.0e5
vr:
  rho_bs: 0.5
  rho_user: 0.5
  user_mode: random
pilot:
  threshold_multiplier: 5.0
sweep:
  snr_db: [10, 30]
  trials: 2
  base_seed: 7
run:
  coherence_slots: 5000
"""


def small_config(tmp_path, text=SMALL_YAML):
    path = tmp_path / "exp.yaml"
    path.write_text(text)
    return load_config(path)


# --------------------------------------------------------------- config

def test_load_config_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    cfg = load_config(path)
    assert cfg.geometry.m_bs == 128
    assert cfg.snr_db == (0, 5, 10, 15, 20, 25, 30)
    assert cfg.k_users == (cfg.geometry.n_users,)
    assert cfg.trials == 500
    assert cfg.base_seed == 1
    assert cfg.schemes == tuple(SchemeId)
    assert cfg.output_dir == "results"
    assert cfg.coherence_slots == 5000


def test_load_config_rejections(tmp_path):
    cases = [
        "nonsense_section: {}",
        "pilot:\n  noise_var: 0.1",
        "run:\n  schemes: [proposed, warp_drive]",
        "sweep:\n  trials: 0",
        "sweep:\n  snr_db: []",
        "sweep:\n  step: 5",
        "sweep:\n  k_users: [0]",
        "geometry:\n  m_bs: [8]",
        "run: 12",
    ]
    for text in cases:
        path = tmp_path / "bad.yaml"
        path.write_text(text)
        with pytest.raises(ConfigError):
            load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_resolve_output_dir_env_override(tmp_path, monkeypatch):
    cfg = small_config(tmp_path)
    monkeypatch.delenv("XLIRS_OUTPUT_DIR", raising=False)
    assert str(resolve_output_dir(cfg)) == "results"
    monkeypatch.setenv("XLIRS_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    assert resolve_output_dir(cfg) == tmp_path / "elsewhere"


# ----------------------------------------------------------- experiment

def test_run_experiment_covers_grid(tmp_path):
    cfg = small_config(tmp_path)
    records = run_experiment(cfg)
    assert len(records) == len(cfg.schemes) * len(cfg.snr_db) * cfg.trials
    keys = [(r.scheme.value, r.k_users, r.snr_db, r.seed) for r in records]
    assert keys == sorted(keys)
    combos = {(r.scheme, r.snr_db, r.seed) for r in records}
    assert len(combos) == len(records)
    assert {r.seed for r in records} == {7, 8}


def test_run_experiment_deterministic(tmp_path):
    cfg = small_config(tmp_path)
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert a == b
    emit_results(a, tmp_path / "ra", cfg, timestamp="T0")
    emit_results(b, tmp_path / "rb", cfg, timestamp="T0")
    for name in ("details.csv", "aggregate.csv", "manifest.txt"):
        assert (tmp_path / "ra" / name).read_bytes() == \
            (tmp_path / "rb" / name).read_bytes()


def rec(scheme, snr, seed, value, rate, flags=""):
    return MetricsRecord(scheme=scheme, k_users=2, snr_db=snr, seed=seed,
                         nmse=value, pilot_overhead=4,
                         effective_sum_rate=rate, coherence_slots=100,
                         training_slots=4, flags=flags)


def test_aggregate_excludes_flagged_rows():
    records = [rec(SchemeId.DFT, 0.0, 1, 0.1, 1.0),
               rec(SchemeId.DFT, 0.0, 2, 0.3, 3.0),
               rec(SchemeId.DFT, 0.0, 3, float("nan"), float("nan"),
                   flags="EstimationError: boom"),
               rec(SchemeId.COMMON, 0.0, 1, float("nan"), float("nan"),
                   flags="ValueError: bad")]
    rows = aggregate_records(records)
    assert len(rows) == 2
    common_row = next(r for r in rows if r[0] == "common")
    dft_row = next(r for r in rows if r[0] == "dft")
    assert dft_row[3:5] == (3, 1)
    assert dft_row[5] == pytest.approx(0.2)
    assert dft_row[6] == pytest.approx(2.0)
    assert common_row[3:5] == (1, 1)
    assert math.isnan(common_row[5]) and math.isnan(common_row[6])


def test_emit_round_trip(tmp_path):
    cfg = small_config(tmp_path)
    records = run_experiment(cfg)
    paths = emit_results(records, tmp_path / "out", cfg, timestamp="T1")
    detail_lines = paths["details"].read_text().splitlines()
    assert detail_lines[0] == DETAIL_HEADER
    assert len(detail_lines) == 1 + len(records)

    # recompute the aggregate from the emitted detail file alone
    groups = {}
    for line in detail_lines[1:]:
        scheme, k, snr, seed, value, ovh, rate, flags = line.split(",")
        if flags:
            continue
        groups.setdefault((scheme, int(k), float(snr)), []).append(
            (float(value), float(rate)))
    agg_lines = paths["aggregate"].read_text().splitlines()
    assert agg_lines[0] == AGGREGATE_HEADER
    for line in agg_lines[1:]:
        scheme, k, snr, n_all, n_bad, m_nmse, m_rate = line.split(",")
        good = groups.get((scheme, int(k), float(snr)), [])
        assert int(n_all) - int(n_bad) == len(good)
        if good:
            assert float(m_nmse) == pytest.approx(
                np.mean([g[0] for g in good]), rel=1e-12)
            assert float(m_rate) == pytest.approx(
                np.mean([g[1] for g in good]), rel=1e-12)

    manifest = paths["manifest"].read_text()
    assert manifest.rstrip().endswith("timestamp: T1")
    assert "base_seed: 7" in manifest
    assert paths["plots"].read_text().startswith("# gnuplot")


def test_training_longer_than_coherence_is_flagged(tmp_path):
    # 12-element surface: per-user training costs K*N = 24 slots, which
    # no longer fits a 20-slot block; the anchor schemes still do
    text = SMALL_YAML.replace("coherence_slots: 5000",
                              "coherence_slots: 20")
    cfg = small_config(tmp_path, text)
    records = run_experiment(cfg)
    dft = [r for r in records if r.scheme is SchemeId.DFT]
    assert dft and all("coherence" in r.flags for r in dft)
    assert all(math.isnan(r.nmse) for r in dft)
    prop = [r for r in records if r.scheme is SchemeId.PROPOSED]
    assert prop and all(not r.flags for r in prop)
    rows = aggregate_records(records)
    dft_rows = [r for r in rows if r[0] == "dft"]
    assert all(r[4] == r[3] for r in dft_rows)


# ------------------------------------------------- overhead, dump, CLI

def test_overhead_table_full_scale(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    table = overhead_table(load_config(path))
    rows = {}
    for line in table.splitlines()[2:]:
        k, scheme, exact, amort = line.split()
        rows[scheme] = (int(exact), int(amort))
    # amortized column reproduces the closed forms at M=128, N=480,
    # N~=128, K=8; exact column adds ceil(480/64)=8 anchor slots to the
    # two anchor-based schemes
    assert rows["proposed"] == (16, 8)
    assert rows["proposed_no_vr"] == (38, 30)
    assert rows["common"] == (507, 507)
    assert rows["dft"] == (3840, 3840)


def test_dump_channel_sections(tmp_path):
    cfg = small_config(tmp_path)
    path = dump_channel(cfg, tmp_path / "dump")
    lines = path.read_text().splitlines()
    n, m, k = 12, 8, 2
    assert len(lines) == 1 + m * n + k * n + n
    assert lines[1].startswith("G 0 0 ")
    assert sum(1 for ln in lines if ln.startswith("A ")) == n


def test_cli_run_and_overhead(tmp_path, monkeypatch):
    monkeypatch.delenv("XLIRS_OUTPUT_DIR", raising=False)
    cfg_path = tmp_path / "exp.yaml"
    cfg_path.write_text(SMALL_YAML)
    out = tmp_path / "cli_out"
    assert main(["run", str(cfg_path), "-o", str(out), "-q"]) == 0
    for name in ("details.csv", "aggregate.csv", "manifest.txt", "plots.gp"):
        assert (out / name).exists()
    assert main(["overhead", str(cfg_path), "-o", str(out)]) == 0
    assert (out / "overhead.txt").exists()
    assert main(["dump-channel", str(cfg_path), "-o", str(out)]) == 0
    assert (out / "channel_dump.txt").exists()


def test_cli_output_precedence(tmp_path, monkeypatch):
    cfg_path = tmp_path / "exp.yaml"
    cfg_path.write_text(SMALL_YAML)
    env_dir = tmp_path / "from_env"
    monkeypatch.setenv("XLIRS_OUTPUT_DIR", str(env_dir))
    assert main(["overhead", str(cfg_path)]) == 0
    assert (env_dir / "overhead.txt").exists()
    flag_dir = tmp_path / "from_flag"
    assert main(["overhead", str(cfg_path), "-o", str(flag_dir)]) == 0
    assert (flag_dir / "overhead.txt").exists()


def test_cli_exit_codes(tmp_path, monkeypatch):
    monkeypatch.delenv("XLIRS_OUTPUT_DIR", raising=False)
    bad = tmp_path / "bad.yaml"
    bad.write_text("pilot:\n  noise_var: 1.0")
    assert main(["run", str(bad), "-q"]) == 2
    assert main(["run", str(tmp_path / "missing.yaml"), "-q"]) == 2
    cfg_path = tmp_path / "exp.yaml"
    cfg_path.write_text(SMALL_YAML)
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    assert main(["overhead", str(cfg_path), "-o", str(blocker)]) == 1

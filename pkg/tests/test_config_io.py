import dataclasses
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zenoswitch import config as cfgmod
from zenoswitch.cli import default_config_text
from zenoswitch.cmt_core import ResonatorParams
from zenoswitch.config import ConfigError, SessionConfig
from zenoswitch.traces_io import (
    HEADER,
    TraceSchemaError,
    read_table,
    read_trace,
    read_trace_dir,
    trace_from_csv,
    trace_to_csv,
    trial_filename,
    write_table,
    write_trace,
)
from zenoswitch.vapor_tpa import VaporParams
from zenoswitch.virtual_experiment import ScanConfig, ScanTrace, run_trial


def assert_same_config(a: SessionConfig, b: SessionConfig):
    assert a == b
    for f in dataclasses.fields(SessionConfig):
        assert getattr(a, f.name) == getattr(b, f.name)


# ---------------------------------------------------------------- config

def test_shipped_default_is_session_default():
    assert_same_config(cfgmod.loads(default_config_text()), SessionConfig())


def test_round_trip_default(tmp_path):
    path = tmp_path / "c.toml"
    cfgmod.save(SessionConfig(), path)
    assert_same_config(cfgmod.load(path), SessionConfig())
    assert "span_hz" in path.read_text()


@settings(max_examples=40, deadline=None)
@given(
    q=st.floats(1e3, 1e8), frac=st.floats(0, 1), n=st.floats(1e9, 1e14), temp=st.floats(200, 500),
    eta=st.floats(0, 1), pump=st.floats(0, 1e4), span=st.floats(1e6, 1e11), samples=st.integers(3, 5000),
    trials=st.integers(1, 1000), seed=st.integers(0, 2**32), target=st.floats(0, 0.5),
)
def test_round_trip_property(q, frac, n, temp, eta, pump, span, samples, trials, seed, target):
    cfg = SessionConfig(
        device=ResonatorParams.critically_coupled(loaded_q=q, drop_fraction=frac),
        vapor=VaporParams(density=n, temperature=temp, overlap_fraction=eta),
        operating_point=cfgmod.TpaOperatingPoint(pump_intensity=pump),
        scan=ScanConfig(span=span, samples=samples, trials=trials),
        calibration_target=target,
        seed=seed,
    )
    assert_same_config(cfgmod.loads(cfgmod.dumps(cfg)), cfg)


def test_seed_is_authoritative():
    cfg = SessionConfig(scan=ScanConfig(rng_seed=5), seed=9)
    assert cfg.scan.rng_seed == 9


def test_device_shorthand():
    cfg = cfgmod.loads("[device]\nloaded_q = 2e5\nwavelength_m = 1.53e-6\ndrop_fraction = 1.0\n")
    assert cfg.device.loaded_q == pytest.approx(2e5, rel=1e-12)
    assert cfg.device.intrinsic_loss_rate == 0.0


def test_partial_sections_fall_back_to_defaults():
    cfg = cfgmod.loads("seed = 3\n[scan]\ntrials = 7\n")
    assert cfg.scan.trials == 7 and cfg.scan.samples == 501
    assert cfg.seed == 3 and cfg.scan.rng_seed == 3
    assert cfg.vapor == VaporParams()


@pytest.mark.parametrize("text", [
    "[scan]\nsamples = 2\n",
    "[scan]\nsamples = 10.5\n",
    "[scan]\nspan_ghz = 5\n",
    "[vapor]\ndensity_per_cm3 = 1e16\n",
    "[vapor]\noverlap_fraction = 2.0\n",
    "[vapor]\ntemperature_k = 'hot'\n",
    "[device]\nresonance_frequency_hz = 1e14\n",
    "[device]\nloaded_q = -5.0\n",
    "[operating_point]\npump_intensity_w_per_cm2 = -1.0\n",
    "seed = -1\n",
    "seed = true\n",
    "calibration_target = 'x'\n",
    "output_dir = 3\n",
    "colour = 'blue'\n",
    "[scan\n",
    "[vapor]\ndensity_per_cm3 = inf\n",
])
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        cfgmod.loads(text)


def test_missing_file():
    with pytest.raises(ConfigError):
        cfgmod.load("/nonexistent/session.toml")


# ------------------------------------------------------------------- CSV

@pytest.fixture
def trace(device, vapor, alpha):
    return run_trial(ScanConfig(samples=51), device, vapor, "tpa", alpha, trial_id=12)


def test_csv_round_trip(tmp_path, trace):
    path = tmp_path / trial_filename(trace)
    write_trace(trace, path)
    back = read_trace(path)
    assert np.array_equal(back.axis, trace.axis)
    assert np.array_equal(back.through, trace.through)
    assert np.array_equal(back.drop, trace.drop)
    assert (back.condition, back.trial_id) == ("tpa", 12)
    assert path.read_text().splitlines()[0] == ",".join(HEADER)
    assert path.name == "trial_0012_tpa.csv"


def test_csv_rewrite_byte_identical(tmp_path, trace):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace(trace, a)
    write_trace(read_trace(a), b)
    assert a.read_bytes() == b.read_bytes()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 2), st.floats(-1, 2)), min_size=1, max_size=30), st.integers(-1, 9999))
def test_csv_round_trip_property(rows, tid):
    x = np.arange(len(rows), dtype=float) * 1e7 - 3.3e9
    t = ScanTrace(x, np.array([r[0] for r in rows]), np.array([r[1] for r in rows]), "control", tid)
    text = trace_to_csv(t)
    back = trace_from_csv(text)
    assert np.array_equal(back.through, t.through) and np.array_equal(back.drop, t.drop)
    assert trace_to_csv(back) == text


@pytest.mark.parametrize("text,row,column", [
    ("delta,through,drop,condition,trial_id\n1,0.5,0.5,tpa,0\n", 1, None),
    ("delta_hz,through,drop,condition,trial_id\n1,abc,0.5,tpa,0\n", 2, "through"),
    ("delta_hz,through,drop,condition,trial_id\n1,0.5,0.5,tpa,0\n2,0.5,nan,tpa,0\n", 3, "drop"),
    ("delta_hz,through,drop,condition,trial_id\n1,0.5,0.5,sideways,0\n", 2, "condition"),
    ("delta_hz,through,drop,condition,trial_id\n1,0.5,0.5,tpa,x\n", 2, "trial_id"),
    ("delta_hz,through,drop,condition,trial_id\n1,0.5,0.5,tpa\n", 2, None),
    ("delta_hz,through,drop,condition,trial_id\n1,0.5,0.5,tpa,0\n2,0.5,0.5,control,0\n", 3, "condition"),
    ("delta_hz,through,drop,condition,trial_id\n2,0.5,0.5,tpa,0\n1,0.5,0.5,tpa,0\n", None, "delta_hz"),
    ("delta_hz,through,drop,condition,trial_id\n", None, None),
    ("", None, None),
])
def test_schema_violations(text, row, column):
    with pytest.raises(TraceSchemaError) as err:
        trace_from_csv(text, "f.csv")
    assert err.value.row == row
    assert err.value.column == column
    if row is not None:
        assert f"row {row}" in str(err.value)


def test_read_trace_dir(tmp_path, trace):
    with pytest.raises(TraceSchemaError):
        read_trace_dir(tmp_path)
    with pytest.raises(TraceSchemaError):
        read_trace_dir(tmp_path / "missing")
    write_trace(trace, tmp_path / "trials" / trial_filename(trace))
    assert len(read_trace_dir(tmp_path)) == 1


def test_table_round_trip(tmp_path):
    cols = {"intrinsic_q": np.geomspace(1e5, 1e7, 5), "through_change": np.linspace(0, 0.3, 5)}
    write_table(cols, tmp_path / "t.csv")
    back = read_table(tmp_path / "t.csv")
    for k in cols:
        assert np.array_equal(back[k], cols[k])


def test_atomic_write_leaves_no_temp_files(tmp_path, trace):
    write_trace(trace, tmp_path / "x.csv")
    write_trace(trace, tmp_path / "x.csv")
    assert os.listdir(tmp_path) == ["x.csv"]

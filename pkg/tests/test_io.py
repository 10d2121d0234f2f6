import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lerspin.io import SchemaError, config_hash, emit_plot, ingest_csv, read_traceset, write_map, write_traceset
from lerspin.traces import TraceSet
from lerspin.transmission import TransmissionMap

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(1, 20), elements=finite), st.data())
def test_traceset_round_trip_is_bit_identical(x, data):
    n = x.size
    y = data.draw(arrays(np.float64, n, elements=finite))
    z = data.draw(arrays(np.float64, n, elements=finite)) + 1j * data.draw(arrays(np.float64, n, elements=finite))
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as d:
        path = write_traceset(TraceSet("t_s", x, {"y": y, "z": z}, {"note": "x"}), Path(d) / "a.csv")
        back = read_traceset(path)
    assert back.axis_name == "t_s"
    np.testing.assert_array_equal(back.axis_values, x)
    np.testing.assert_array_equal(back["y"], y)
    np.testing.assert_array_equal(back["z"], z)
    assert back.metadata["note"] == "x"


def test_map_round_trip(tmp_path):
    b = np.array([0.07, 0.071])
    f = np.array([1e9, 2e9, 3e9])
    s = np.arange(6).reshape(2, 3) * (1 + 0.5j)
    path = write_map(TransmissionMap(b, f, s), tmp_path / "m.csv")
    back = ingest_csv(path, "s21_map")
    np.testing.assert_array_equal(back.b_axis, b)
    np.testing.assert_array_equal(back.f_axis, f)
    np.testing.assert_array_equal(back.s21, s)


def test_ragged_map_names_the_row(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("b_T,f_Hz,s21_re,s21_im\n0.1,1,1,0\n0.1,2,1,0\n0.2,1,1,0\n")
    with pytest.raises(SchemaError, match="b_T=0.2.*row 3"):
        ingest_csv(p, "s21_map")


def test_nan_and_short_rows_are_rejected(tmp_path):
    p = tmp_path / "n.csv"
    p.write_text("f_Hz,s21_re,s21_im\n1,nan,0\n")
    with pytest.raises(SchemaError, match="NaN cell in line 2"):
        ingest_csv(p, "s21_sweep")
    p.write_text("f_Hz,s21_re,s21_im\n1,1\n")
    with pytest.raises(SchemaError, match="line 2"):
        ingest_csv(p, "s21_sweep")
    with pytest.raises(SchemaError):
        ingest_csv(p, "bogus")


def test_units_and_db_are_converted(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("f_GHz,mag_dB\n2.0,-20\n2.5,0\n")
    ds = ingest_csv(p, "s21_sweep")
    np.testing.assert_allclose(ds.axis_values, [2e9, 2.5e9])
    np.testing.assert_allclose(ds["s21"], [0.1, 1.0])
    q = tmp_path / "t.csv"
    q.write_text("t_pump_ns,shift_kHz\n10,1\n20,2\n")
    tr = ingest_csv(q, "shift_trace")
    np.testing.assert_allclose(tr.axis_values, [10e-9, 20e-9])
    np.testing.assert_allclose(tr["shift_Hz"], [1e3, 2e3])


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_svg_is_valid_and_deterministic(tmp_path):
    tr = TraceSet("t_s", np.geomspace(1e-6, 1.0, 50), {"y": np.linspace(0, 1, 50)})
    a = emit_plot(tr, "line", tmp_path / "a.svg")
    b = emit_plot(tr, "line", tmp_path / "b.svg")
    ET.parse(a)
    assert a.read_bytes() == b.read_bytes()
    m = TransmissionMap([0.1, 0.2], [1e9, 2e9, 3e9], np.ones((2, 3)))
    ET.parse(emit_plot(m, "map", tmp_path / "m.svg"))


def test_empty_dataset_writes_nothing(tmp_path):
    out = tmp_path / "e.svg"
    with pytest.raises(ValueError):
        emit_plot(TraceSet("t_s", [], {"y": []}), "line", out)
    assert not out.exists()

import json

import numpy as np
import pytest

from higgslab.fieldio import read_fld, read_matrix_field, write_fld
from higgslab.lattice import LatticeDomain
from higgslab.presets import hitchin_section, random_metric, rng_for


def test_form_roundtrip(tmp_path):
    d = LatticeDomain.patch(1, 16, 2.0)
    phi = hitchin_section(d, d.z(0) + 0.5j)
    write_fld(tmp_path / "phi.fld", d, phi)
    d2, f, header = read_fld(tmp_path / "phi.fld")
    assert d2 == d
    assert f.bidegree == (1, 0)
    assert np.array_equal(f.values, phi.values)
    assert header["rank"] == 2 and header["kind"] == "dirichlet-patch"


def test_metric_roundtrip(tmp_path):
    d = LatticeDomain.torus(1, 8)
    H = random_metric(d, 3, rng_for(0, "fld"), amplitude=0.5)
    write_fld(tmp_path / "H.fld", d, H)
    _, H2, header = read_matrix_field(tmp_path / "H.fld")
    assert np.array_equal(H, H2)
    assert header["bidegree"] == [0, 0]


def test_layout_is_row_major_interleaved(tmp_path):
    d = LatticeDomain.torus(1, 8)
    vals = np.arange(64, dtype=float).reshape(8, 8) + 1j
    H = vals[..., None, None] * np.ones((1, 1))
    write_fld(tmp_path / "s.fld", d, H)
    raw = (tmp_path / "s.fld").read_bytes()
    head, payload = raw.split(b"\n", 1)
    json.loads(head)
    data = np.frombuffer(payload, dtype="<f8")
    assert data[0] == 0.0 and data[1] == 1.0 and data[2] == 1.0 and data[16] == 8.0


def test_rejects_truncated(tmp_path):
    d = LatticeDomain.torus(1, 8)
    write_fld(tmp_path / "x.fld", d, np.ones((8, 8, 2, 2), dtype=complex))
    p = tmp_path / "x.fld"
    p.write_bytes(p.read_bytes()[:-16])
    with pytest.raises(ValueError):
        read_fld(p)


def test_rejects_foreign_header(tmp_path):
    p = tmp_path / "y.fld"
    p.write_bytes(b'{"format": "other"}\n')
    with pytest.raises(ValueError):
        read_fld(p)

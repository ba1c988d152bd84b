from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tracelab.geometry import GridDomain, Metric
from tracelab.maskio import atomic_write, encode_pbm, load_domain, read_pbm, save_domain, sidecar_path, write_pbm


@settings(max_examples=40, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 20), st.integers(1, 20))), st.booleans())
def test_round_trip(tmp_path_factory, mask, binary):
    path = tmp_path_factory.mktemp("pbm") / "m.pbm"
    write_pbm(path, mask, binary)
    assert np.array_equal(read_pbm(path), mask)


def test_p1_with_comments(tmp_path):
    p = tmp_path / "c.pbm"
    p.write_bytes(b"P1\n# a comment\n3 2 # size\n1 0 1\n# row two\n0 1 0\n")
    assert read_pbm(p).tolist() == [[True, False, True], [False, True, False]]


def test_p4_bit_order(tmp_path):
    p = tmp_path / "b.pbm"
    p.write_bytes(b"P4\n10 1\n" + bytes([0b10000000, 0b01000000]))
    row = read_pbm(p)[0]
    assert row.tolist() == [True] + [False] * 8 + [True]
    assert encode_pbm(row[None]) == p.read_bytes()


@pytest.mark.parametrize("data", [b"P2\n1 1\n0\n", b"P1\n2 2\n1 0\n", b"P4\n8 2\n\x00", b"P1\n"])
def test_bad_files(tmp_path, data):
    p = tmp_path / "bad.pbm"
    p.write_bytes(data)
    with pytest.raises(ValueError):
        read_pbm(p)


def test_sidecar_precedence(tmp_path):
    m = np.zeros((4, 5), bool)
    m[1:3, 1:4] = True
    p = tmp_path / "d.pbm"
    write_pbm(p, m)
    d = load_domain(p)
    assert d.spacing == 1.0 and d.metric is Metric.L1
    save_domain(p, GridDomain(m, 0.25, Metric.CROFTON16))
    assert json.loads(sidecar_path(p).read_text()) == {"metric": "crofton16", "spacing": 0.25}
    d = load_domain(p)
    assert d.spacing == 0.25 and d.metric is Metric.CROFTON16
    d = load_domain(p, spacing=2.0, metric="l1")
    assert d.spacing == 2.0 and d.metric is Metric.L1


def test_atomic_write_leaves_no_temporaries(tmp_path):
    p = tmp_path / "out.txt"
    atomic_write(p, "one")
    atomic_write(p, b"two")
    assert p.read_text() == "two"
    assert sorted(x.name for x in tmp_path.iterdir()) == ["out.txt"]

import math

import pytest

import hvf


def test_registry():
    names = hvf.registered()
    assert {"euclid2", "grushin", "heisenberg", "martinet"} <= set(names)
    m = hvf.system("martinet")
    assert (m.dim, m.nfields, m.step) == (3, 2, 3)
    assert "(1,1,2)" in m.commutators


def test_martinet_brackets():
    m = hvf.system("martinet")
    assert hvf.commutator(m, "(1,2)", [0.25, 0.0, 0.0]) == pytest.approx([0, 0, 0.5])
    assert hvf.commutator(m, "(1,1,2)", [0.1, 0.2, 0.3]) == pytest.approx([0, 0, 2])
    assert hvf.rank(m, [0.0, 0.0, 0.0]) == 3


def test_heisenberg_flows():
    h = hvf.system("heisenberg")
    assert hvf.exp(h, 1, 0.5, [0, 0, 0]) == pytest.approx([0.5, 0, 0])
    # Group commutator of the two generators moves t^2 up the centre.
    assert hvf.quasi_exp(h, "(1,2)", 0.1, [0, 0, 0]) == pytest.approx([0, 0, 0.01], abs=1e-12)
    assert hvf.expansion_residual(h, "(1,2)", [0.1, -0.2, 0.3], 0.01) < 1e-7


def test_connect_and_distance():
    g = hvf.system("grushin")
    path = hvf.connect(g, [0.1, 0.2], [-0.3, 0.1])
    assert path["end"] == pytest.approx([-0.3, 0.1], abs=1e-9)
    assert path["hitting_time"] >= path["bound"] - 1e-12
    assert hvf.distance(g, [0, 0], [0.1, 0]) == pytest.approx(0.1, rel=0.05)


def test_ball_and_poincare():
    e = hvf.system("euclid2")
    assert hvf.ball_volume(e, [0, 0], 0.1) == pytest.approx(math.pi * 0.01, rel=0.05)
    lhs, rhs, c = hvf.poincare(e, "u1", [0, 0], 0.1, samples=20000)
    assert lhs > 0 and rhs > 0 and c == pytest.approx(lhs / rhs)


def test_errors():
    with pytest.raises(hvf.ParseError):
        hvf.parse_system("dim = \n")
    with pytest.raises(hvf.Error):
        hvf.system("no_such_system")


def test_certify_subset():
    s = hvf.certify([1, 3], systems=["heisenberg"])
    assert s["schema"] == 1
    assert s["estimate"]["passed"] is True
    assert [c["status"] for c in s["estimate"]["criteria"]] == ["pass", "pass"]

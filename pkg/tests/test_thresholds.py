import numpy as np
import pytest

from fdpexact import thresholds as th
from fdpexact.exceptions import DomainError


def test_linear():
    t = th.linear(0.05, 4)
    assert np.allclose(t.values, [0.0125, 0.025, 0.0375, 0.05])
    assert t.m == 4 and len(t) == 4
    assert t.ratio_trend() == "constant"


def test_values_read_only():
    t = th.linear(0.05, 4)
    with pytest.raises(ValueError):
        t.values[0] = 0.3


def test_validation():
    with pytest.raises(DomainError):
        th.Threshold([0.2, 0.1])
    with pytest.raises(DomainError):
        th.Threshold([0.2, 1.1])
    with pytest.raises(DomainError):
        th.Threshold([])


def test_trends():
    assert th.gavrilov(0.05, 10).ratio_trend() == "nondecreasing"
    assert th.power_law(0.9, 0.9, 50).ratio_trend() == "nonincreasing"
    assert th.piecewise_linear(0.5, 0.6, 4, 50).ratio_trend() == "nondecreasing"


def test_piecewise_joins_alpha():
    t = th.piecewise_linear(0.5, 0.6, 4, 50)
    assert t.values[-1] == pytest.approx(0.5)
    assert t.values[3] == pytest.approx(0.5 * 0.6 * 4 / 50)


def test_finner_capped():
    assert th.finner2009(0.5, 10).values.max() <= 1.0


def test_parse(tmp_path):
    assert th.parse("linear:0.1", 5).kind == "linear"
    assert th.parse("power:0.9,0.9", 5).kind == "power_law"
    assert th.parse("piecewise:0.5,0.6,4", 50).params["a"] == 4
    f = tmp_path / "t.txt"
    f.write_text("# custom\n0.01\n0.02\n\n0.04\n")
    assert np.allclose(th.parse(f"file:{f}", 3).values, [0.01, 0.02, 0.04])
    with pytest.raises(DomainError):
        th.parse(f"file:{f}", 4)
    with pytest.raises(DomainError):
        th.parse("linear:0.1,2", 5)
    with pytest.raises(DomainError):
        th.parse("nope:1", 5)

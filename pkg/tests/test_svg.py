import math
import re
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnet_energy.errors import ValidationError
from qnet_energy.svg import Axes, Series, emit_bar_svg, emit_svg

NS = "{http://www.w3.org/2000/svg}"


def polylines(svg):
    return ET.fromstring(svg).findall(f".//{NS}polyline")


def dropped(svg):
    return int(re.search(r"dropped-points: (\d+)", svg).group(1))


def test_two_points_one_polyline():
    svg = emit_svg([Series("a", [0, 1], [1, 2])])
    (line,) = polylines(svg)
    assert len(line.get("points").split()) == 2
    assert dropped(svg) == 0


def test_log_zero_is_dropped_and_counted():
    svg = emit_svg([Series("a", [1, 2, 3], [0.0, 1.0, 10.0])], Axes(y_log=True))
    assert dropped(svg) == 1
    assert len(polylines(svg)[0].get("points").split()) == 2


def test_non_finite_dropped():
    svg = emit_svg([Series("a", [1, 2, 3, 4], [1.0, math.nan, math.inf, 2.0])])
    assert dropped(svg) == 2


def test_one_polyline_per_non_empty_series_with_legend():
    svg = emit_svg(
        [Series("first", [1, 2], [1, 2]), Series("empty", [1], [math.nan]), Series("third", [1, 2], [3, 4])],
        Axes(title="t & u"),
    )
    assert len(polylines(svg)) == 2
    assert "first" in svg and "third" in svg and "t &amp; u" in svg


@pytest.mark.parametrize("series", [[], [Series("a", [1], [1])], [Series("a", [1, 2], [math.nan, math.nan])]])
def test_too_little_data(series):
    with pytest.raises(ValidationError):
        emit_svg(series)


def test_mismatched_lengths():
    with pytest.raises(ValidationError):
        Series("a", [1, 2], [1])


def test_self_contained_and_deterministic():
    s = [Series("a", [1, 10, 100], [5, 50, 500])]
    a, b = emit_svg(s, Axes(x_log=True, y_log=True)), emit_svg(s, Axes(x_log=True, y_log=True))
    assert a == b
    assert "href" not in a and "<script" not in a
    ET.fromstring(a)


@given(ys=st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=30))
def test_points_inside_plot_area(ys):
    ax = Axes()
    svg = emit_svg([Series("a", list(range(len(ys))), ys)], ax)
    top, right, bottom, left = ax.margin
    for pair in polylines(svg)[0].get("points").split():
        x, y = map(float, pair.split(","))
        assert left - 0.01 <= x <= ax.width - right + 0.01
        assert top - 0.01 <= y <= ax.height - bottom + 0.01


def test_bar_chart():
    svg = emit_bar_svg([("bb84", [("snspd", 0.75), ("laser", 0.25)]), ("e91", [("snspd", 1.0)])])
    root = ET.fromstring(svg)
    assert len(root.findall(f".//{NS}rect")) >= 3
    with pytest.raises(ValidationError):
        emit_bar_svg([])
    with pytest.raises(ValidationError):
        emit_bar_svg([("x", [("a", 0.0)])])

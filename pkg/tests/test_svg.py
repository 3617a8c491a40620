import xml.etree.ElementTree as ET

import numpy as np
import pytest

from glucosindy.svg import _ticks, line_chart

NS = "{http://www.w3.org/2000/svg}"


def test_well_formed_and_deterministic():
    x = np.arange(10.0)
    svg = line_chart(x, {"actual": x ** 2, "model <fit>": x}, title="Day & night", x_label="h", y_label="mg/dL")
    assert svg == line_chart(x, {"actual": x ** 2, "model <fit>": x}, title="Day & night",
                             x_label="h", y_label="mg/dL")
    root = ET.fromstring(svg)
    assert len(root.findall(f"{NS}polyline")) == 2
    texts = [t.text for t in root.iter(f"{NS}text")]
    assert "Day & night" in texts and "model <fit>" in texts


def test_non_finite_points_are_skipped():
    svg = line_chart([0, 1, 2], {"a": [1.0, np.nan, 3.0]})
    pts = ET.fromstring(svg).find(f"{NS}polyline").get("points").split()
    assert len(pts) == 2


def test_flat_series():
    ET.fromstring(line_chart([0, 1], {"a": [5.0, 5.0]}))


def test_bad_input():
    with pytest.raises(ValueError):
        line_chart([0], {"a": [1]})
    with pytest.raises(ValueError):
        line_chart([0, 1], {"a": [1]})


def test_ticks():
    assert _ticks(0, 24) == [0, 5, 10, 15, 20]
    t = _ticks(93.2, 251.7)
    assert t[0] >= 93.2 and t[-1] <= 251.7 and 3 <= len(t) <= 12

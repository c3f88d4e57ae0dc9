import xml.etree.ElementTree as ET

import numpy as np

from losml.plots import beeswarm_svg, calibration_svg, roc_svg


def _curves():
    return [("model", np.array([0.0, 0.2, 1.0]), np.array([0.0, 0.7, 1.0]), 0.85)]


def test_fixed_timestamp_gives_identical_bytes():
    a = roc_svg(_curves(), timestamp="suppressed")
    b = roc_svg(_curves(), timestamp="suppressed")
    assert a == b
    assert "<metadata>generated suppressed</metadata>" in a


def test_default_timestamp_is_recorded():
    svg = roc_svg(_curves())
    assert "<metadata>generated 20" in svg


def test_outputs_are_well_formed_xml(tmp_path):
    p = tmp_path / "cal.svg"
    docs = [
        roc_svg(_curves(), timestamp="t"),
        calibration_svg([("m", [0.1, 0.5, 0.9], [0.12, 0.48, 0.88])], path=p, timestamp="t"),
        beeswarm_svg(["age", "nihss"], [(1, 0.1, 0.2), (1, -0.05, 0.9), (2, 0.02, 0.5)], timestamp="t"),
    ]
    assert p.read_text(encoding="utf-8") == docs[1]
    for d in docs:
        root = ET.fromstring(d)
        assert root.tag.endswith("svg")


def test_beeswarm_all_zero_shap_does_not_divide_by_zero():
    svg = beeswarm_svg(["a"], [(1, 0.0, 0.5)], timestamp="t")
    assert "nan" not in svg.lower()

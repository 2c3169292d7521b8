import xml.etree.ElementTree as ET

import numpy as np
import pytest

from siqr.odeint import IntegratorConfig, integrate
from siqr.plotting import PlotSpec, render_svg


@pytest.fixture
def traj(endemic, endemic_start):
    p, inc = endemic
    return integrate(p, inc, endemic_start, IntegratorConfig(t_end=50.0))


def test_spec_validation():
    with pytest.raises(ValueError):
        PlotSpec(series=())
    with pytest.raises(ValueError):
        PlotSpec(series=("X",))
    with pytest.raises(ValueError):
        PlotSpec(series=("S", "I"), log_I=True)


def test_svg_well_formed_and_stable(traj, tmp_path):
    spec = PlotSpec(series=("S", "I", "N"), title="a & b", path=str(tmp_path / "p.svg"))
    text = render_svg(traj, spec)
    root = ET.fromstring(text)
    assert root.tag.endswith("svg")
    assert len([e for e in root.iter() if e.tag.endswith("polyline")]) == 3
    assert (tmp_path / "p.svg").read_text() == text
    assert render_svg(traj, PlotSpec(series=("S", "I", "N"), title="a & b")) == text


def test_log_scale_handles_zero(traj):
    traj.y[-1, 1] = 0.0
    text = render_svg(traj, PlotSpec(log_I=True))
    assert "log10 I" in text
    assert "nan" not in text.lower()


def test_ranges_clip(traj):
    text = render_svg(traj, PlotSpec(series=("I",), x_range=(10.0, 20.0), y_range=(0.0, 1.0)))
    pts = ET.fromstring(text).find("{http://www.w3.org/2000/svg}polyline").get("points")
    xy = np.array([[float(v) for v in p.split(",")] for p in pts.split()])
    assert len(xy) == 11
    assert np.all(xy[:, 1] >= 36) and np.all(xy[:, 1] <= 420 - 44)

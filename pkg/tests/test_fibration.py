import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slagfib.ambient import PartitionedIndex
from slagfib.config import RunConfig
from slagfib.fibration import (
    AtlasChart, FibrationAtlas, FibreRecord, OutputExistsError, ParamPoint, chart_overlap_compare, dumps,
    export_atlas, grid_around, overlap_initial_guess, param_point_of, read_index, resample_on_angles,
    scale_nu, sweep, tangent_map, torus_distance,
)
from slagfib.errors import ParameterError
from slagfib.local_model import model_torus

CONST_CFG = {"polynomial": [{"exp": [0, 0, 0], "re": 2.0}]}


@pytest.fixture(scope="module")
def const_spec():
    return RunConfig.from_dict(CONST_CFG).chart(grid=[8, 8])


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(-1.0, 1.0))
def test_param_point_round_trip(xi, log_r):
    part = PartitionedIndex(2, (0, 1), (2,))
    pt = ParamPoint((xi,), (log_r,))
    assert ParamPoint.from_vector(part, pt.vector(part)) == pt
    spec = RunConfig.default().chart()
    nu = scale_nu(spec, pt)
    back = param_point_of(pt.to_params(spec, nu), nu)
    assert back.xi[0] == pytest.approx(xi, rel=1e-12, abs=1e-15)
    assert back.log_r[0] == pytest.approx(log_r, abs=1e-12)


def test_grid_around_is_tensor_grid():
    part = PartitionedIndex(2, (0, 1), (2,))
    pts = grid_around(ParamPoint((0.2,), (0.0,)), part, [[-0.1, 0, 0.1], [-0.05, 0, 0.05]])
    assert len(pts) == 9
    assert len({p.vector(part).tobytes() for p in pts}) == 9


def test_dumps_is_deterministic():
    doc = {"b": [1.0 / 3.0, float("nan")], "a": {"z": True, "y": None}, "c": np.float64(0.1)}
    text = dumps(doc)
    assert text == dumps(json.loads(json.dumps({"c": 0.1, "a": {"y": None, "z": True}, "b": [1.0 / 3.0, None]})))
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert "0.33333333333333331" in text
    assert json.loads(text)["b"][1] is None


def test_resampling_is_grid_independent(desk):
    geom, params = desk
    coarse = model_torus(params, geom.pot, geom.p, (8, 16)).points
    fine = model_torus(params, geom.pot, geom.p, (16, 16)).points
    assert torus_distance(coarse, fine, (12, 12), geom.p, geom.t) < 1e-12
    res = resample_on_angles(coarse, (4, 4), geom.p, geom.t)
    assert res.shape == (4, 4, 3)


def test_sweep_gates_non_normal_points(const_spec):
    center = ParamPoint((0.2,), (0.0,))
    chart = sweep(const_spec, center, [center, ParamPoint((0.2,), (-3.0,))])
    assert [f.status for f in chart.fibres] == ["verified", "skipped"]
    assert "epsilon_small" in chart.fibres[1].message
    assert chart.fibres[0].moduli == pytest.approx([0.0, 0.0], abs=1e-12)


def test_constant_p_tangent_map(const_spec):
    tm = tangent_map(const_spec, ParamPoint((0.2,), (0.0,)), 0.02)
    assert tm.matrix[0, 0] == pytest.approx(1.0, abs=1e-10)
    assert abs(tm.matrix[0, 1]) < 1e-10 and abs(tm.matrix[1, 0]) < 1e-10
    # flat rho: d|z_2|^2 / d log r_2 = 2 r^2, up to the eta-correction of the calibration
    assert tm.matrix[1, 1] == pytest.approx(2.0, rel=1e-3)


def test_constant_p_overlap(const_spec):
    params = const_spec.params([0.5], [0.0, 0.002])
    rec = chart_overlap_compare(const_spec, params, PartitionedIndex(2, (0, 1, 2), ()))
    assert rec.distance <= 1e-10
    assert rec.matched_c[2] == pytest.approx(0.25, rel=1e-6)


def test_overlap_initial_guess_rejects_bad_partition(const_spec):
    params = const_spec.params([0.5], [0.0, 0.002])
    with pytest.raises(ParameterError):
        overlap_initial_guess(const_spec, params, PartitionedIndex(2, (0,), (1, 2)))


def _record(i, points, moduli):
    return FibreRecord(i, {"r": [1.0], "c": [0.0, 0.01 * i]}, "verified", "", points,
                       {"phase_residual": 1e-12, "passed": True}, [{"s": 1.0, "residual": 1e-11}], None, moduli)


def test_export_round_trip_and_refusal(tmp_path, desk):
    geom, params = desk
    pts = model_torus(params, geom.pot, geom.p, (4, 8)).points
    spec = RunConfig.default().chart()
    rng = np.random.default_rng(7)
    fibres = [_record(i, pts, list(rng.standard_normal(2) / 3)) for i in range(3)]
    fibres.append(FibreRecord(3, {"r": [1.0], "c": [0.0, 9.0]}, "skipped", "not normal"))
    atlas = FibrationAtlas([AtlasChart(spec, ParamPoint((0.2,), (0.0,)), np.array([0.1, 0.1, 1.0]), fibres)])
    files = export_atlas(atlas, tmp_path / "atlas")
    assert len(files) == 4
    idx = read_index(tmp_path / "atlas")
    assert idx["fibre_count"] == 3
    for f, rec in zip(idx["charts"][0]["fibres"], fibres):
        assert f["moduli"] == rec.moduli
    assert idx["charts"][0]["fibres"][3]["csv"] is None
    with pytest.raises(OutputExistsError):
        export_atlas(atlas, tmp_path / "atlas")
    first = (tmp_path / "atlas" / "index.json").read_bytes()
    export_atlas(atlas, tmp_path / "atlas", force=True)
    assert (tmp_path / "atlas" / "index.json").read_bytes() == first


def test_empty_atlas(tmp_path):
    export_atlas(FibrationAtlas(), tmp_path / "empty")
    idx = read_index(tmp_path / "empty")
    assert idx == {"charts": [], "fibre_count": 0, "overlaps": []}

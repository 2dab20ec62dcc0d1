import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polytext.detect import Detection
from polytext.errors import InvalidArgumentError, InvalidInputError, ParseError
from polytext.formats import (
    DatasetSpec,
    Settings,
    dump_config,
    dump_detections,
    load_config,
    load_detections,
    parse_annotations,
    parse_curved_14pt,
    parse_icdar_quad,
    parse_polygon_json,
    read_mask_pgm,
    write_mask_pgm,
    write_polygon_json,
)
from polytext.geometry import Polygon
from polytext.labelgen import Annotation, LevelSpec
from polytext.losses import LossConfig

# ---------------------------------------------------------------- ICDAR quads


def test_icdar_basic():
    (ann,) = parse_icdar_quad("0,0,10,0,10,10,0,10,hello\n")
    assert not ann.ignore and ann.text == "hello"
    assert ann.polygon.vertices.tolist() == [[0, 0], [10, 0], [10, 10], [0, 10]]


def test_icdar_dont_care():
    (ann,) = parse_icdar_quad("0,0,10,0,10,10,0,10,###")
    assert ann.ignore


def test_icdar_transcription_with_commas_and_decimals():
    (ann,) = parse_icdar_quad("1.5,2,11,2,11,12.25,1.5,12,a,b,c")
    assert ann.text == "a,b,c"
    assert ann.polygon.vertices[2].tolist() == [11, 12.25]


def test_icdar_bom_blank_lines_and_negative_coordinates():
    anns = parse_icdar_quad("﻿-3,0,10,0,10,10,-3,10,x\n\n0,0,5,0,5,5,0,5,y\n")
    assert len(anns) == 2 and anns[0].polygon.vertices[0].tolist() == [-3, 0]


def test_icdar_counter_clockwise_is_normalized():
    (ann,) = parse_icdar_quad("0,0,0,10,10,10,10,0,t")
    assert ann.polygon.signed_area > 0


def test_icdar_errors_name_the_line():
    with pytest.raises(ParseError) as err:
        parse_icdar_quad("0,0,10,0,10,10,0,10,ok\n0,0,10,0,10,10,0\n")
    assert err.value.where == 2 and "line 2" in str(err.value)
    with pytest.raises(ParseError) as err:
        parse_icdar_quad("0,0,10,zero,10,10,0,10,bad")
    assert err.value.where == 1


# ---------------------------------------------------------------- curved 14-point


def test_curved_valid_and_empty():
    line = ",".join(str(v) for v in np.arange(28))
    # any 28 values parse; geometry validity is not the parser's job
    (ann,) = parse_curved_14pt(line)
    assert len(ann.polygon) == 14
    assert parse_curved_14pt("") == []


def test_curved_wrong_count():
    with pytest.raises(ParseError) as err:
        parse_curved_14pt(",".join(["1"] * 27))
    assert err.value.where == 1


# ---------------------------------------------------------------- canonical JSON


def test_polygon_json_triangle():
    (ann,) = parse_polygon_json('[{"points": [[0,0],[4,0],[0,3]], "ignore": false}]')
    assert ann.polygon.area == 6 and ann.text is None


@pytest.mark.parametrize(
    "doc,where",
    [
        ('[{"points": [[0,0],[1,1]]}]', 1),
        ('[{"points": [[0,0],[1,0],[1,1]]}, {"points": [[0,0],[1,"a"],[1,1]]}]', 2),
        ('[{"points": [[0,0],[1,0],[1,1]], "ignore": "no"}]', 1),
        ('[{"points": [[0,0],[1,0],[1,1]], "text": 5}]', 1),
        ("[3]", 1),
    ],
)
def test_polygon_json_schema_errors(doc, where):
    with pytest.raises(ParseError) as err:
        parse_polygon_json(doc)
    assert err.value.where == where


def test_polygon_json_not_a_list():
    with pytest.raises(ParseError):
        parse_polygon_json('{"points": []}')
    with pytest.raises(ParseError):
        parse_polygon_json("[{")


@given(
    st.lists(
        st.tuples(
            st.lists(st.tuples(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4)), min_size=3, max_size=12),
            st.booleans(),
            st.one_of(st.none(), st.text(max_size=8)),
        ),
        max_size=5,
    )
)
def test_polygon_json_roundtrip(records):
    anns = [Annotation(Polygon(pts, normalize=False), ign, txt) for pts, ign, txt in records]
    again = parse_polygon_json(write_polygon_json(anns))
    assert len(again) == len(anns)
    for a, b in zip(anns, again):
        assert np.array_equal(Polygon(a.polygon.vertices).vertices, b.polygon.vertices)
        assert (a.ignore, a.text) == (b.ignore, b.text)


def test_parse_annotations_dispatch():
    assert len(parse_annotations("0,0,1,0,1,1,0,1,x", "icdar2015-quad")) == 1
    with pytest.raises(InvalidArgumentError):
        parse_annotations("", "total-text-mat")


# ---------------------------------------------------------------- dataset spec


def test_dataset_spec_loads_directory(tmp_path):
    (tmp_path / "b.txt").write_text("0,0,10,0,10,10,0,10,b\n")
    (tmp_path / "a.txt").write_text("0,0,10,0,10,10,0,10,a\n0,0,5,0,5,5,0,5,###\n")
    spec = DatasetSpec("icdar2015-quad", str(tmp_path))
    loaded = spec.load()
    assert list(loaded) == [str(tmp_path / "a.txt"), str(tmp_path / "b.txt")]
    assert len(loaded[str(tmp_path / "a.txt")]) == 2


def test_dataset_spec_errors_carry_path(tmp_path):
    (tmp_path / "x.txt").write_text("1,2,3\n")
    with pytest.raises(ParseError) as err:
        DatasetSpec("icdar2015-quad", str(tmp_path)).load()
    assert "x.txt" in str(err.value) and "line 1" in str(err.value)


def test_dataset_spec_validation():
    with pytest.raises(InvalidArgumentError):
        DatasetSpec("png", ".")
    with pytest.raises(InvalidArgumentError):
        DatasetSpec("polygon-json", ".", n=2)


# ---------------------------------------------------------------- PGM


def test_pgm_examples(tmp_path):
    path = tmp_path / "m.pgm"
    write_mask_pgm(np.ones((2, 2)), path)
    assert path.read_text() == "P2 2 2 255\n255 255\n255 255\n"
    write_mask_pgm(np.zeros((2, 2)), path)
    assert path.read_text() == "P2 2 2 255\n0 0\n0 0\n"
    write_mask_pgm([[0.5, 0.25]], path)
    assert path.read_text() == "P2 2 1 255\n128 64\n"


def test_pgm_is_byte_stable_and_readable(tmp_path, rng):
    mask = rng.uniform(0, 1, (7, 5))
    write_mask_pgm(mask, tmp_path / "a.pgm")
    write_mask_pgm(mask.copy(), tmp_path / "b.pgm")
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()
    np.testing.assert_allclose(read_mask_pgm(tmp_path / "a.pgm"), mask, atol=0.5 / 255 + 1e-12)


def test_pgm_errors(tmp_path):
    with pytest.raises(InvalidInputError):
        write_mask_pgm(np.full((2, 2), 1.5), tmp_path / "m.pgm")
    bad = tmp_path / "missing" / "m.pgm"
    with pytest.raises(OSError) as err:
        write_mask_pgm(np.zeros((2, 2)), bad)
    assert str(bad) in str(err.value)


# ---------------------------------------------------------------- detections and config


def test_detections_roundtrip():
    dets = [Detection(Polygon([(0, 0), (2, 0), (2, 1)]), 0.75, 2, (3, 4)), Detection([(1, 1), (3, 1), (3, 3)], 1.0)]
    again = load_detections(dump_detections(dets))
    assert again == dets
    assert all(json.loads(line) for line in dump_detections(dets).splitlines())


def test_detection_record_errors():
    with pytest.raises(ParseError) as err:
        load_detections('{"points": [[0,0],[1,0],[1,1]], "confidence": 0.5}\n{"points": [[0,0]]}\n')
    assert err.value.where == 2


def test_default_config_constants():
    text = dump_config()
    assert "lambda_cls = 40.0" in text and "lambda_acc_switch_iteration = 60000" in text
    assert "score_threshold = 0.7" in text and "nms_iou = 0.3" in text


def test_config_roundtrip_and_override():
    custom = Settings(loss=LossConfig(gamma=1.5, mask_resolution=32), nms_iou=0.4, n=16,
                      levels=(LevelSpec(0, 16, 32, 1.0, 50.0),))
    again = load_config(dump_config(custom, include_levels=True))
    assert again == custom
    partial = load_config("[loss]\nalpha = 0.5\n")
    assert partial.loss.alpha == 0.5 and partial.loss.gamma == 2.0


@pytest.mark.parametrize(
    "text",
    ["[bogus]\nx = 1\n", "[loss]\nbeta = 1\n", "[loss]\ngamma = two\n", "[levels]\nL0 = 1, 2\n", "not ini"],
)
def test_config_errors(text):
    with pytest.raises(ParseError):
        load_config(text)

import json

import numpy as np
import pytest

from geocert import io
from geocert.errors import FormatError
from geocert.pipeline import FitConfig, bounds_to_dict, fit_image
from geocert.transforms import Attack, Image


def test_pgm_ascii_with_comments(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_text("P2\n# a comment\n3 2 # trailing\n4\n0 1 2\n3 4 0\n")
    img = io.read_pgm(p)
    assert img.pixels.shape == (2, 3)
    assert np.array_equal(img.pixels, np.array([[0, 1, 2], [3, 4, 0]]) / 4.0)


def test_pgm_binary_8_and_16_bit(tmp_path):
    p = tmp_path / "b.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 51, 255, 102]))
    assert np.allclose(io.read_pgm(p).pixels, [[0.0, 0.2], [1.0, 0.4]])
    q = tmp_path / "c.pgm"
    q.write_bytes(b"P5 2 1 1000\n" + np.array([250, 1000], ">u2").tobytes())
    assert np.allclose(io.read_pgm(q).pixels, [[0.25, 1.0]])


@pytest.mark.parametrize("content", [b"P3\n1 1\n255\n0\n", b"P2\n2 2\n255\n1 2 3\n", b"P5\n4 4\n255\n\x00",
                                     b"P2\n1 1\n10\n11\n", b"P2\n2\n"])
def test_pgm_errors(tmp_path, content):
    p = tmp_path / "bad.pgm"
    p.write_bytes(content)
    with pytest.raises(FormatError):
        io.read_pgm(p)


def test_pgm_round_trip(tmp_path):
    img = Image(np.random.default_rng(0).integers(0, 256, (5, 7)) / 255.0)
    for binary in (False, True):
        p = tmp_path / f"r{binary}.pgm"
        io.write_pgm(p, img, binary=binary)
        assert np.allclose(io.read_image(p).pixels, img.pixels, atol=1e-12)


def test_csv_round_trip_is_exact(tmp_path):
    img = Image(np.random.default_rng(1).random((3, 4)))
    p = tmp_path / "x.csv"
    io.write_csv_image(p, img)
    assert np.array_equal(io.read_image(p).pixels, img.pixels)


def test_csv_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0.1,0.2\n0.3\n")
    with pytest.raises(FormatError, match=r"bad.csv:2"):
        io.read_csv_image(p)
    p.write_text("0.1,0.2\n0.3,abc\n")
    with pytest.raises(FormatError, match=r"bad.csv:2"):
        io.read_csv_image(p)
    p.write_text("\n")
    with pytest.raises(FormatError):
        io.read_csv_image(p)


def test_unknown_suffix(tmp_path):
    with pytest.raises(FormatError):
        io.read_image(tmp_path / "x.png")


def test_labels(tmp_path):
    p = tmp_path / "l.txt"
    p.write_text("3\n# skip\n\n7 # seven\n")
    assert io.read_labels(p) == [3, 7]
    p.write_text("3\nx\n")
    with pytest.raises(FormatError, match=":2"):
        io.read_labels(p)


def test_attack_degrees(tmp_path):
    p = tmp_path / "a.json"
    p.write_text(json.dumps({"transforms": [{"kind": "rotation", "lo": -5, "hi": 5, "unit": "deg"}]}))
    att = io.read_attack(p)
    assert att.box.hi[0] == pytest.approx(np.deg2rad(5))


@pytest.mark.parametrize("spec", [{"transforms": [{"kind": "rotation", "lo": 1, "hi": 0}]},
                                  {"transforms": [{"kind": "warp", "lo": 0, "hi": 1}]},
                                  {"transforms": []},
                                  {"transforms": [{"kind": "rotation", "lo": 0, "hi": 1}],
                                   "contrast": [1.2, 0.8]}])
def test_invalid_attacks(tmp_path, spec):
    p = tmp_path / "a.json"
    p.write_text(json.dumps(spec))
    with pytest.raises(FormatError):
        io.read_attack(p)


def test_json_syntax_error(tmp_path):
    p = tmp_path / "a.json"
    p.write_text("{\n\"x\": }")
    with pytest.raises(FormatError, match=":2"):
        io.read_json(p)


def test_bound_file_round_trip(tmp_path):
    img = Image(np.random.default_rng(2).random((3, 3)))
    att = Attack.single("rotation", -0.05, 0.05)
    d = bounds_to_dict(fit_image(img, att, FitConfig(samples=20)), "img.csv")
    p = tmp_path / "img.bounds.json"
    io.write_json(p, d)
    again = bounds_to_dict(io.read_bounds(p), "img.csv")
    assert io.dumps(again) == p.read_text()


def test_bound_file_missing_keys(tmp_path):
    p = tmp_path / "b.json"
    p.write_text(json.dumps({"format": "geocert-bounds/1"}))
    with pytest.raises(FormatError):
        io.read_bounds(p)

import pytest
from hypothesis import given
from hypothesis import strategies as st

from elsepupil.params import ElseParams, ParamsError, dump_params, load_params, parse_param_value


def test_published_defaults():
    p = ElseParams()
    assert p.radi_ratio == 3
    assert p.min_area == 0.005
    assert p.max_area == 0.10
    assert p.validity_threshold == 10
    assert (p.shrink_start, p.shrink_end, p.shrink_step) == (0.95, 0.80, 0.01)
    assert p.radius_scale == 5
    assert p.size_neighbourhood == 2
    assert p.border_fraction == 0.10
    assert not p.use_algorithmic_split


def test_shrink_factors():
    f = ElseParams().shrink_factors()
    assert f[0] == 0.95 and f[-1] == 0.80 and len(f) == 16


def test_roundtrip(tmp_path):
    p = ElseParams(validity_threshold=7.5, radius_scale=4, use_algorithmic_split=True)
    path = tmp_path / "p.txt"
    path.write_text(dump_params(p))
    assert load_params(path) == p


def test_comments_and_blank_lines(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("# tuned\n\nradi_ratio = 2.5  # stricter\nmin_line_length=7\n")
    p = load_params(path)
    assert p.radi_ratio == 2.5 and p.min_line_length == 7


def test_unknown_key(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("radius=3\n")
    with pytest.raises(ParamsError, match="radius"):
        load_params(path)


def test_missing_equals(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("radi_ratio 3\n")
    with pytest.raises(ParamsError, match=":1:"):
        load_params(path)


@pytest.mark.parametrize(
    "name,text,value",
    [("radius_scale", "6", 6), ("radius_scale", "6.0", 6), ("radi_ratio", "2", 2.0), ("use_algorithmic_split", "yes", True)],
)
def test_parse(name, text, value):
    v = parse_param_value(name, text)
    assert v == value and type(v) is type(value)


@pytest.mark.parametrize("name,text", [("radius_scale", "6.5"), ("radi_ratio", "abc"), ("use_algorithmic_split", "maybe")])
def test_parse_errors(name, text):
    with pytest.raises(ParamsError):
        parse_param_value(name, text)


@pytest.mark.parametrize(
    "changes",
    [
        {"min_area": 0.2, "max_area": 0.1},
        {"border_fraction": 0.5},
        {"shrink_end": 0.99},
        {"radi_ratio": 0},
        {"radius_scale": 0},
        {"validity_threshold": -1},
        {"canny_percentile": 100},
    ],
)
def test_constraints(changes):
    with pytest.raises(ParamsError):
        ElseParams().replace(**changes)


def test_replace_unknown():
    with pytest.raises(ParamsError):
        ElseParams().replace(bogus=1)


@given(st.floats(0, 100), st.integers(1, 12), st.floats(1.01, 6))
def test_dump_load_property(tmp_path_factory, v, rs, ratio):
    p = ElseParams(validity_threshold=v, radius_scale=rs, radi_ratio=ratio)
    path = tmp_path_factory.mktemp("p") / "p.txt"
    path.write_text(dump_params(p))
    assert load_params(path) == p

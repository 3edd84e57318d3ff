import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rdrot import Forbidden, GroupLasso, Hypentropic, Quadratic, WeightedL1, Zero
from rdrot.datagen import PointCloud
from rdrot.groups import GroupPartition
from rdrot.io import (
    FormatError,
    build_regularizer,
    file_digest,
    parse_groups,
    parse_reg_flag,
    read_matrix,
    read_points,
    read_vector,
    write_binary,
    write_matrix,
    write_points,
    write_vector,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=30)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite))
def test_csv_round_trip_exact(tmp_path_factory, M):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    write_matrix(path, M)
    np.testing.assert_array_equal(read_matrix(path), M)


@settings(max_examples=30)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite))
def test_binary_round_trip_exact(tmp_path_factory, M):
    path = tmp_path_factory.mktemp("bin") / "m.otpb"
    write_binary(path, M)
    np.testing.assert_array_equal(read_matrix(path), M)


def test_vector_round_trip(tmp_path):
    v = np.array([0.1, 0.2, 0.7])
    write_vector(tmp_path / "v.csv", v)
    np.testing.assert_array_equal(read_vector(tmp_path / "v.csv"), v)
    write_matrix(tmp_path / "m.csv", np.ones((2, 2)))
    with pytest.raises(FormatError):
        read_vector(tmp_path / "m.csv")


def test_binary_rejects_bad_files(tmp_path):
    write_binary(tmp_path / "a.otpb", np.ones((2, 3)))
    raw = (tmp_path / "a.otpb").read_bytes()
    (tmp_path / "short.otpb").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "short.otpb")
    (tmp_path / "hdr.otpb").write_bytes(raw[:10])
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "hdr.otpb")
    (tmp_path / "bad.csv").write_text("1,2\n3,x\n")
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "bad.csv")


def test_digest_changes_with_content(tmp_path):
    write_matrix(tmp_path / "a.csv", np.eye(2))
    write_matrix(tmp_path / "b.csv", np.eye(2))
    assert file_digest(tmp_path / "a.csv") == file_digest(tmp_path / "b.csv")
    write_matrix(tmp_path / "b.csv", 2 * np.eye(2))
    assert file_digest(tmp_path / "a.csv") != file_digest(tmp_path / "b.csv")


# --- groups ------------------------------------------------------------------

def test_parse_explicit_groups():
    G = parse_groups("# two groups\ng a: (0,0) (1,0)\ng b: (0,1)\n", (2, 2))
    assert G.labels == ("a", "b")
    np.testing.assert_array_equal(G.groups[0], [0, 2])
    np.testing.assert_array_equal(G.group_ids, [0, 1, 0, -1])


def test_parse_column_range_groups():
    G = parse_groups("cols c: 1..2 rows 0..1\n", (3, 3))
    assert G.labels == ("c@1", "c@2")
    np.testing.assert_array_equal(G.groups[0], [1, 4])
    np.testing.assert_array_equal(G.groups[1], [2, 5])


def test_column_range_matches_class_blocks():
    G = parse_groups("cols 0: 0..2 rows 0..1\ncols 1: 0..2 rows 2..3\n", (4, 3))
    ref = GroupPartition.class_blocks(np.array([0, 0, 1, 1]), 3)
    assert sorted(map(tuple, G.groups)) == sorted(map(tuple, ref.groups))


@pytest.mark.parametrize("text", [
    "g a: (0,0) junk",
    "g a:",
    "cols c: 2..1 rows 0..0",
    "whatever",
    "g a: (5,5)",
    "g a: (0,0)\ng b: (0,0)",
])
def test_group_parse_errors(text):
    with pytest.raises(FormatError):
        parse_groups(text, (2, 2))


# --- point clouds ------------------------------------------------------------

def test_points_round_trip(tmp_path, rng):
    cloud = PointCloud(rng.normal(size=(5, 3)), np.array([0, 1, 1, 0, 2]))
    write_points(tmp_path / "p.csv", cloud)
    back = read_points(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.points, cloud.points)
    np.testing.assert_array_equal(back.labels, cloud.labels)


def test_points_without_labels_and_string_labels(tmp_path):
    (tmp_path / "a.csv").write_text("x0,x1\n1,2\n3,4\n")
    assert read_points(tmp_path / "a.csv").labels is None
    (tmp_path / "b.csv").write_text("x0,label\n1,cat\n2,dog\n")
    assert list(read_points(tmp_path / "b.csv").labels) == ["cat", "dog"]
    (tmp_path / "c.csv").write_text("a,b\n1,2\n")
    with pytest.raises(FormatError):
        read_points(tmp_path / "c.csv")


# --- regularizer flag --------------------------------------------------------

def test_parse_reg_flag():
    assert parse_reg_flag("none") == ("none", {})
    assert parse_reg_flag("quad:alpha=0.5") == ("quad", {"alpha": 0.5})
    assert parse_reg_flag("wl1: w=2 ") == ("wl1", {"w": 2.0})


@pytest.mark.parametrize("flag", ["ent:eps=1", "quad:beta=1", "quad:alpha=abc", "quad:alpha"])
def test_parse_reg_flag_errors(flag):
    with pytest.raises(ValueError, match="--reg"):
        parse_reg_flag(flag)


def test_build_regularizer(tmp_path):
    G = GroupPartition.class_blocks(np.array([0, 1]), 2)
    assert isinstance(build_regularizer("none", (2, 2)), Zero)
    assert build_regularizer("quad:alpha=3", (2, 2)).alpha == 3.0
    assert isinstance(build_regularizer("gl:lambda=0.1", (2, 2), G), GroupLasso)
    assert isinstance(build_regularizer("hypent", (2, 2)), Hypentropic)
    assert isinstance(build_regularizer("wl1:w=0.5", (2, 2)), WeightedL1)
    write_matrix(tmp_path / "mask.csv", np.eye(2))
    reg = build_regularizer(f"forbid:mask={tmp_path / 'mask.csv'}", (2, 2))
    assert isinstance(reg, Forbidden)
    np.testing.assert_array_equal(reg.mask, np.eye(2, dtype=bool))


@pytest.mark.parametrize("flag", ["quad:alpha=0", "quad:alpha=-1", "gl:lambda=0.1", "forbid", "hypent:beta=-2"])
def test_build_regularizer_errors(flag):
    with pytest.raises(ValueError, match="--reg"):
        build_regularizer(flag, (2, 2))


def test_build_regularizer_shape_mismatch(tmp_path):
    write_matrix(tmp_path / "w.csv", np.ones((3, 3)))
    with pytest.raises(ValueError, match="shape"):
        build_regularizer(f"wl1:weights={tmp_path / 'w.csv'}", (2, 2))
    assert isinstance(build_regularizer("quad:alpha=1", (2, 2)), Quadratic)

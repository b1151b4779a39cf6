import csv
import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpoly.harness import (
    DocumentError,
    ExperimentConfig,
    PolyhedronDocument,
    Result,
    canonical,
    emit_report,
    main,
    parse_polyhedron,
    read_document,
    run_experiment,
    write_atomic,
)
from rpoly.complex import classify_facets
from rpoly.harness.cli import ConfigError
from rpoly.metric import PiecewiseMetric

from conftest import fixture_path as _fixture_path, unit_square


def fixture_path(name):
    return _fixture_path(name + ".poly")


def interfaces(c):
    return [f.facet for f in classify_facets(c) if f.is_interface]


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main([*argv, "--out", str(out)])
    return code, out


# ---------------------------------------------------------------- documents


def test_two_triangle_document_has_one_interface():
    poly = parse_polyhedron(fixture_path("unit_square").read_text())
    assert poly.valid
    assert interfaces(poly.complex) == [(0, 2)]
    assert set(poly.subsets) == {"bottom", "left", "right", "patch"}
    assert poly.subsets["patch"].interval == (0.2, 0.8)


def test_identity_metric_is_default():
    poly = parse_polyhedron(fixture_path("unit_square").read_text())
    import numpy as np

    for k in range(poly.complex.n_top):
        assert np.allclose(poly.metric[k].value((0.5, 0.5)), np.eye(2))


def test_non_spd_metric_is_positioned():
    with pytest.raises(DocumentError) as err:
        parse_polyhedron(fixture_path("bad_metric").read_text())
    assert err.value.line == 7
    assert "positive definite" in str(err.value)


@pytest.mark.parametrize(
    "text, line, needle",
    [
        ("polyhedron 1\ndim 2\nvertex 0 0 0\nsimplex 0 1 2\n", 4, "unknown vertex"),
        ("polyhedron 1\ndim 2\nvertex 0 0 0\nvertex 1 1 0\nvertex 2 2 0\nsimplex 0 1 2\n", 6, "degenerate"),
        ("polyhedron 1\ndim 2\nvertex 0 0 zero\n", 3, ""),
        ("polyhedron 1\ndim 2\nbogus 1\n", 3, ""),
    ],
)
def test_document_errors_carry_line(text, line, needle):
    with pytest.raises(DocumentError) as err:
        parse_polyhedron(text)
    assert err.value.line == line
    assert needle in str(err.value)


def test_gamma_must_be_boundary_interval():
    base = fixture_path("unit_square").read_text()
    with pytest.raises(DocumentError):
        parse_polyhedron(base + "gamma diag 0 2\n")
    with pytest.raises(DocumentError):
        parse_polyhedron(base + "gamma empty 0 1 0.5 0.5\n")


@pytest.mark.parametrize("name", ["unit_square", "two_rect", "smooth_strip", "bowtie", "dangling_edge"])
def test_emit_parse_round_trip(name):
    text = fixture_path(name).read_text()
    once = canonical(text)
    assert canonical(once) == once
    assert read_document(once).emit() == once


@settings(max_examples=40)
@given(st.permutations([0, 1, 2, 3]), st.lists(st.integers(10, 99), min_size=4, max_size=4, unique=True))
def test_relabel_round_trip(order, ids):
    doc = read_document(fixture_path("unit_square").read_text())
    mapping = {v: ids[order[k]] for k, v in enumerate(sorted(doc.vertices))}
    text = doc.relabeled(mapping).emit()
    poly = parse_polyhedron(text)
    assert len(interfaces(poly.complex)) == 1
    assert canonical(text) == text


def test_from_objects_matches_fixture():
    m = PiecewiseMetric.euclidean(unit_square())
    doc = PolyhedronDocument.from_objects(m, {}, "square")
    assert parse_polyhedron(doc.emit()).complex.top == m.complex.top


# ----------------------------------------------------------------- reports


def test_empty_report_is_header_only():
    art = emit_report([], "t")
    assert art["report.txt"] == "# t\n"
    assert art["checks.csv"] == "check,passed,detail\n"


def test_report_lines():
    art = emit_report([Result("a", True, "x"), Result("b", False), Result("c", None, "n")])
    assert art["report.txt"].splitlines()[1:] == ["PASS a: x", "FAIL b", "INFO c: n"]


def test_config_rejects_nonpositive_tolerance():
    with pytest.raises(ConfigError):
        ExperimentConfig("spectrum", ("x",), params={"tol_eig": 0.0})
    with pytest.raises(ConfigError):
        ExperimentConfig("spectrum", ("x",), params={"h": -1.0})
    with pytest.raises(ConfigError):
        ExperimentConfig("frobnicate", ("x",))


def test_write_atomic_leaves_no_partial_file(tmp_path, monkeypatch):
    import os

    target = tmp_path / "a.txt"
    write_atomic(target, "old")

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(os, "fsync", boom)
    with pytest.raises(OSError):
        write_atomic(target, "new")
    assert target.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]


def test_failed_run_writes_nothing(tmp_path):
    code, out = run(tmp_path, "validate", str(fixture_path("bad_metric")))
    assert code == 1
    assert not out.exists()
    code, out = run(tmp_path, "spectrum", str(tmp_path / "missing.poly"))
    assert code == 1
    assert not out.exists()


# --------------------------------------------------------------------- CLI


def test_validate_bowtie_not_chainable(tmp_path, capsys):
    code, out = run(tmp_path, "validate", str(fixture_path("bowtie")))
    assert code == 2
    assert "FAIL (n-1)-chainable: not (n-1)-chainable" in (out / "report.txt").read_text()


def test_validate_dangling_not_homogeneous(tmp_path):
    code, out = run(tmp_path, "validate", str(fixture_path("dangling_edge")))
    assert code == 2
    assert "not dimensionally homogeneous" in (out / "report.txt").read_text()


def test_validate_proper_and_chambers(tmp_path):
    code, out = run(tmp_path, "validate", str(fixture_path("edge_pair")))
    assert code == 0
    code, out = run(tmp_path, "validate", str(fixture_path("two_rect")))
    assert code == 0
    assert "chambers: 2" in (out / "report.txt").read_text()


def test_validate_bad_metric_reports_position(tmp_path, capsys):
    code, _ = run(tmp_path, "validate", str(fixture_path("bad_metric")))
    assert code == 1
    assert "line 7, col 1" in capsys.readouterr().err


def test_spectrum_square(tmp_path):
    code, out = run(tmp_path, "spectrum", str(fixture_path("unit_square")), "--count", "10", "--h", "0.02")
    assert code == 0
    rows = read_csv(out / "eigenvalues.csv")
    assert rows[0] == ["index", "eigenvalue", "residual"]
    lam = [float(r[1]) for r in rows[1:]]
    assert len(lam) == 10
    assert abs(lam[0]) < 1e-8
    assert lam[1] == pytest.approx(math.pi**2, rel=0.01)


def test_bsd_compare_relabeled_copy(tmp_path):
    doc = read_document(fixture_path("unit_square").read_text())
    other = tmp_path / "relabeled.poly"
    other.write_text(doc.relabeled({0: 7, 1: 3, 2: 11, 3: 5}).emit())
    code, out = run(tmp_path, "bsd-compare", str(fixture_path("unit_square")), str(other),
                    "--gamma", "bottom", "--h", "0.05", "--count", "12")
    assert code == 0
    assert "PASS boundary spectral data: equivalent" in (out / "report.txt").read_text()
    assert (out / "bsd_a.bin").stat().st_size > 0


def test_bsd_compare_different_geometry(tmp_path):
    code, out = run(tmp_path, "bsd-compare", str(fixture_path("unit_square")), str(fixture_path("two_rect")),
                    "--gamma", "left", "--h", "0.05", "--count", "12")
    assert code == 2
    assert "not equivalent" in (out / "report.txt").read_text()


def test_echo_csv_and_verdict(tmp_path):
    code, out = run(tmp_path, "echo", str(fixture_path("unit_square")), "--facet", "1", "2",
                    "--p0", "0.35", "0.5", "--direction", "1", "0", "--eps", "0.1", "--h", "0.05",
                    "--count", "120", "--max-truncation", "0.5")
    rows = read_csv(out / "echo.csv")
    assert rows[0] == ["t", "ball_energy", "ratio"]
    assert len(rows) > 2
    text = (out / "report.txt").read_text()
    assert any(line.startswith(("PASS echo", "FAIL echo")) for line in text.splitlines())
    assert code in (0, 2)


SMALL_RUNS = {
    "validate": ["validate", "two_rect"],
    "spectrum": ["spectrum", "unit_square", "--count", "6"],
    "bsd-compare": ["bsd-compare", "unit_square", "unit_square", "--gamma", "bottom", "--count", "8"],
    "beam-trace": ["beam-trace", "two_rect", "--p0", "0.3", "0.5", "--direction", "1", "0.2", "--T", "1.0"],
    "echo": ["echo", "unit_square", "--facet", "1", "2", "--p0", "0.35", "0.5", "--direction", "1", "0",
             "--eps", "0.1", "--count", "100", "--max-truncation", "0.5"],
    "dtn": ["dtn", "unit_square", "--gamma", "bottom", "--T", "0.25", "--steps", "64"],
}


def _argv(args):
    return [str(fixture_path(a)) if a.isidentifier() and fixture_path(a).is_file() else a for a in args]


def artifact_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(Path(out).iterdir())}


@pytest.mark.parametrize("command", sorted(SMALL_RUNS))
def test_reruns_are_byte_identical(tmp_path, command):
    argv = _argv(SMALL_RUNS[command])
    a, b = tmp_path / "a", tmp_path / "b"
    code_a = main([*argv, "--out", str(a)])
    code_b = main([*argv, "--out", str(b)])
    assert code_a == code_b and code_a in (0, 2)
    assert artifact_bytes(a) == artifact_bytes(b)
    assert "report.txt" in artifact_bytes(a)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surveybias.raster import (
    Raster,
    RasterFormatError,
    build_rook_adjacency,
    format_ascii_grid,
    read_ascii_grid,
    write_ascii_grid,
)


def _write(tmp_path, text, name="g.asc"):
    p = tmp_path / name
    p.write_text(text)
    return p


HEADER_2x2 = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n"


def test_read_2x2(tmp_path):
    r = read_ascii_grid(_write(tmp_path, HEADER_2x2 + "1 2\n3 4\n"))
    assert (r.nrows, r.ncols) == (2, 2)
    assert r.values.tolist() == [1, 2, 3, 4]


def test_header_keys_case_insensitive(tmp_path):
    text = HEADER_2x2.upper().replace("NODATA_VALUE", "nodata_Value") + "1 2 3 4\n"
    r = read_ascii_grid(_write(tmp_path, text))
    assert r.values.tolist() == [1, 2, 3, 4]


def test_nodata_optional(tmp_path):
    text = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n5\n"
    assert read_ascii_grid(_write(tmp_path, text)).nodata == -9999


def test_value_count_mismatch_has_line(tmp_path):
    with pytest.raises(RasterFormatError, match="value count mismatch") as ei:
        read_ascii_grid(_write(tmp_path, HEADER_2x2 + "1 2\n3\n"))
    assert ei.value.line == 8


def test_too_many_values(tmp_path):
    with pytest.raises(RasterFormatError, match="value count mismatch"):
        read_ascii_grid(_write(tmp_path, HEADER_2x2 + "1 2\n3 4 5\n"))


def test_non_numeric_token_line(tmp_path):
    with pytest.raises(RasterFormatError, match="non-numeric token") as ei:
        read_ascii_grid(_write(tmp_path, HEADER_2x2 + "1 2\n3 x\n"))
    assert ei.value.line == 8
    assert ":8:" in str(ei.value)


def test_malformed_header(tmp_path):
    with pytest.raises(RasterFormatError, match="malformed header"):
        read_ascii_grid(_write(tmp_path, "ncols 2\nnrows 2\ncellsize 1\n1 2 3 4\n"))
    with pytest.raises(RasterFormatError, match="malformed header"):
        read_ascii_grid(_write(tmp_path, "ncols 2 3\nnrows 2\n"))
    with pytest.raises(RasterFormatError, match="cellsize"):
        read_ascii_grid(_write(tmp_path, HEADER_2x2.replace("cellsize 1", "cellsize 0") + "1 2 3 4"))


def test_round_trip_random(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(100):
        nr, nc = rng.integers(1, 12, size=2)
        vals = rng.normal(scale=10 ** rng.uniform(-6, 6), size=(nr, nc))
        vals[rng.random((nr, nc)) < 0.1] = -9999.0
        r = Raster.from_array(vals, xll=rng.uniform(-1e5, 1e5), yll=rng.uniform(-1e5, 1e5),
                              cellsize=rng.uniform(0.1, 100))
        path = tmp_path / f"r{i}.asc"
        write_ascii_grid(r, path)
        back = read_ascii_grid(path)
        assert (back.nrows, back.ncols, back.xll, back.yll, back.cellsize, back.nodata) == \
            (r.nrows, r.ncols, r.xll, r.yll, r.cellsize, r.nodata)
        assert np.array_equal(back.values, r.values)


def test_nodata_survives_and_1x1(tmp_path):
    r = Raster.from_array([[-9999.0, 2.5]])
    write_ascii_grid(r, tmp_path / "a.asc")
    back = read_ascii_grid(tmp_path / "a.asc")
    assert back.values[0] == -9999.0 and not back.valid[0]
    one = Raster.from_array([[3.25]], xll=10, yll=20, cellsize=2)
    write_ascii_grid(one, tmp_path / "b.asc")
    assert read_ascii_grid(tmp_path / "b.asc").values.tolist() == [3.25]


def test_written_values_have_enough_digits():
    r = Raster.from_array([[1 / 3]])
    last = format_ascii_grid(r).strip().splitlines()[-1]
    assert len(last.replace("0.", "")) >= 9


def test_invariants():
    with pytest.raises(ValueError, match="value count"):
        Raster(2, 2, 0, 0, 1, -9999, [1, 2, 3])
    with pytest.raises(ValueError):
        Raster(1, 1, 0, 0, 0, -9999, [1])
    with pytest.raises(ValueError):
        Raster(1, 2, 0, 0, 1, -9999, [1, np.nan])
    r = Raster.from_array([[1.0]])
    with pytest.raises(ValueError):
        r.values[0] = 2


def test_cell_of_conventions():
    r = Raster.from_array(np.zeros((5, 6)), xll=10, yll=20, cellsize=2)
    assert r.cell_of(10, 20) == (4, 0)
    x, y = r.center_of(2, 3)
    assert r.cell_of(x, y) == (2, 3)
    assert r.cell_of(22, 30) == (0, 5)  # max edges belong to the last cells
    assert r.cell_of(9.99, 25) is None
    assert r.cell_of(15, 30.01) is None


def test_cell_of_matches_rectangle_scan():
    rng = np.random.default_rng(1)
    r = Raster.from_array(np.zeros((7, 9)), xll=-3.5, yll=4.25, cellsize=1.5)
    xmin, xmax, ymin, ymax = r.extent()
    for _ in range(1000):
        x = rng.uniform(xmin - 1, xmax + 1)
        y = rng.uniform(ymin - 1, ymax + 1)
        hits = []
        for row in range(r.nrows):
            for col in range(r.ncols):
                x0 = r.xll + col * r.cellsize
                y0 = r.yll + (r.nrows - 1 - row) * r.cellsize
                if x0 <= x < x0 + r.cellsize and y0 <= y < y0 + r.cellsize:
                    hits.append((row, col))
        assert r.cell_of(x, y) == (hits[0] if hits else None)


def test_center_round_trip_every_cell():
    rng = np.random.default_rng(2)
    for _ in range(10):
        nr, nc = rng.integers(1, 15, size=2)
        r = Raster.from_array(np.zeros((nr, nc)), xll=rng.normal() * 100, yll=rng.normal() * 100,
                              cellsize=rng.uniform(0.01, 50))
        rows, cols = np.divmod(np.arange(r.ncells), nc)
        x, y = r.center_of(rows, cols)
        got_r, got_c = r.cells_of(x, y)
        assert np.array_equal(got_r, rows) and np.array_equal(got_c, cols)


def test_adjacency_small_cases():
    assert build_rook_adjacency(1, 1).nedges == 0
    a = build_rook_adjacency(2, 2)
    assert a.nedges == 4 and a.degree().tolist() == [2, 2, 2, 2]
    b = build_rook_adjacency(3, 3)
    assert b.nedges == 12 and b.neighbors[4] == (1, 3, 5, 7)


def test_adjacency_exhaustive():
    for nr in range(1, 9):
        for nc in range(1, 9):
            a = build_rook_adjacency(nr, nc)
            assert a.nedges == nr * (nc - 1) + nc * (nr - 1)
            for i, nb in enumerate(a.neighbors):
                assert i not in nb
                assert list(nb) == sorted(nb)
                r, c = divmod(i, nc)
                expect = sorted(rr * nc + cc for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1))
                                if 0 <= rr < nr and 0 <= cc < nc)
                assert list(nb) == expect
                for j in nb:
                    assert i in a.neighbors[j]
            if nr >= 3 and nc >= 3:
                assert len(a.neighbors[nc + 1]) == 4
            if nr >= 2 and nc >= 2:
                assert len(a.neighbors[0]) == 2


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6),
       st.lists(st.floats(-1e12, 1e12, allow_nan=False, allow_subnormal=False), min_size=36, max_size=36))
def test_format_round_trip_property(nr, nc, vals):
    import os
    import tempfile
    r = Raster.from_array(np.array(vals[: nr * nc]).reshape(nr, nc))
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "x.asc")
        write_ascii_grid(r, p)
        assert np.array_equal(read_ascii_grid(p).values, r.values)

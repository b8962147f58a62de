import math
import warnings

import numpy as np
import pytest

from rootembed import Barrier, build_grid, extract_barrier, read_barrier, solve_vi, write_barrier
from rootembed.errors import IOFailure, ParseFailure, TrivialBarrierWarning
from rootembed.barrier import exit_barrier, point_barrier

from conftest import D0, PM1, SIGMA1


def first_contact_holds(s, b):
    u = s.frames
    gap = u - s.obstacle[None, :]
    for i in np.nonzero(np.isfinite(b.R))[0]:
        n = int(round(b.R[i] / s.grid.dt))
        assert gap[n, i] <= s.tol_contact[i]
        if n > 0:
            assert gap[n - 1, i] > s.tol_contact[i]
    never = ~np.isfinite(b.R)
    assert np.all(gap[:, never] > s.tol_contact[never][None, :])


def test_identical_laws_stop_at_once():
    g = build_grid(PM1, PM1, SIGMA1, 0.5, dx=0.05)
    b = extract_barrier(solve_vi(PM1, PM1, 0.0, SIGMA1, g))
    assert np.all(b.R == 0.0)


def test_example1_barrier_is_the_level_one(example1):
    b = example1.barrier
    x = b.x_nodes
    dx = b.dx
    assert np.all(b.R[x >= 1 + dx] == 0.0)
    assert np.all(np.isinf(b.R[x <= 1 - dx]))
    assert b.R_at(1.0) == 0.0


def test_ui_barrier_is_symmetric(ui_case):
    b = ui_case.barrier
    x = b.x_nodes
    i0 = int(np.argmin(np.abs(x)))
    assert abs(x[i0]) < 1e-12
    left, right = b.R[:i0][::-1], b.R[i0 + 1:]
    k = min(len(left), len(right))
    fin = np.isfinite(left[:k])
    assert np.array_equal(fin, np.isfinite(right[:k]))
    assert np.max(np.abs(left[:k][fin] - right[:k][fin])) <= b.dt
    # the pair at +-1 is embedded by the first exit from (-1, 1), so the
    # centre is never stopped
    assert b.R[i0] > 0
    assert np.all(b.R[np.abs(x) >= 1 - 1e-9] == 0.0)


def test_barrier_values_are_multiples_of_dt(ui_case, example2):
    for case in (ui_case, example2):
        b = case.barrier
        fin = b.R[np.isfinite(b.R)]
        k = fin / b.dt
        assert np.all(np.abs(k - np.round(k)) < 1e-9)


def test_first_contact_definition(ui_case, example1, example2):
    for case in (ui_case, example1, example2):
        first_contact_holds(case.surface, case.barrier)


def test_stopping_region_is_closed_upward(ui_case):
    b = ui_case.barrier
    x = b.x_nodes
    for t in (0.1, 0.7, 1.9):
        inside = b.in_stopping_region(x, t)
        assert np.all(b.in_stopping_region(x[inside], t + 0.5))


def test_round_trip(tmp_path, ui_case):
    b = ui_case.barrier
    write_barrier(b, tmp_path / "b.csv")
    back = read_barrier(tmp_path / "b.csv")
    assert b.equals(back)
    assert back.dt == b.dt and back.tol_contact == b.tol_contact


def test_round_trip_hand_made(tmp_path):
    b = Barrier(-1.0, 0.25, [math.inf, 0.5, 0.0, 0.125, math.inf])
    write_barrier(b, tmp_path / "b.csv")
    assert read_barrier(tmp_path / "b.csv").equals(b)


def test_negative_barrier_row_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,R\n0.0,0.5\n0.1,-0.2\n")
    with pytest.raises(ParseFailure):
        read_barrier(p)


def test_inf_token(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("x,R\n0.0,inf\n0.5,0.25\n1.0,+inf\n")
    b = read_barrier(p)
    assert np.isinf(b.R[0]) and np.isinf(b.R[2]) and b.R[1] == 0.25
    assert b.dx == 0.5


@pytest.mark.parametrize("text", ["x,R\n0.0,abc\n", "y,R\n0,1\n", "x,R\n0,1\n0,1\n",
                                  "x,R\n0,1\n1,1\n3,1\n", "x,R\n0,1,2\n", "x,R\n"])
def test_malformed_files(tmp_path, text):
    p = tmp_path / "b.csv"
    p.write_text(text)
    with pytest.raises(ParseFailure):
        read_barrier(p)


def test_missing_file(tmp_path):
    with pytest.raises(IOFailure):
        read_barrier(tmp_path / "nope.csv")


def test_trivial_barrier_warns():
    # a window far too short for the UI case to reach its obstacle anywhere near 0
    g = build_grid(D0, PM1, SIGMA1, 1e-3, dx=0.5)
    s = solve_vi(D0, PM1, 0.0, SIGMA1, g)
    s.contact_step[:] = -1
    with pytest.warns(TrivialBarrierWarning):
        extract_barrier(s)


def test_ordered_laws_do_not_warn(ui_case):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        extract_barrier(ui_case.surface)


def test_point_and_exit_barriers():
    p = point_barrier(-1.0, 0.5, 5, 0.2)
    assert list(p.R) == [math.inf, math.inf, 0.0, math.inf, math.inf]
    e = exit_barrier(-2.0, 0.5, 9, -1.0, 1.0)
    assert list(np.isfinite(e.R)) == [True, True, True, False, False, False, True, True, True]

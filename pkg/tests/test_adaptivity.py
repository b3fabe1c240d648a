import numpy as np
import pytest

from dfheat.adaptivity import (CSV_FIELDS, AdaptiveLoopError, RunRecord, adaptive_loop, count_dofs, fit_rate,
                               mark_max, read_record)
from dfheat.fem import ProblemData
from dfheat.mesh import crisscross_square
from dfheat.presets import example1, fivespot


@pytest.mark.parametrize("eta, expected", [
    ([4, 1, 3], [0, 2]),
    ([2, 2, 2, 2], [0, 1, 2, 3]),
    ([1, 0.5, 0.25, 0.125], [0]),
    ([0, 0, 5], [2]),
])
def test_mark_max_cases(eta, expected):
    np.testing.assert_array_equal(mark_max(eta), expected)


def test_mark_max_edge_cases():
    assert mark_max([0.0, 0.0]).size == 0
    with pytest.raises(ValueError):
        mark_max([])


def test_fit_rate_exact_power():
    ndof = np.array([50, 120, 300, 800, 2000, 5000, 11000, 30000, 70000, 100000, 250000])
    rec = RunRecord([{"ndof": n, "est_total": n**-0.5} for n in ndof])
    assert fit_rate(rec, 10) == pytest.approx(-0.5, abs=1e-12)
    flat = RunRecord([{"ndof": n, "est_total": 3.0} for n in ndof])
    assert fit_rate(flat, 10) == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_insufficient_rows():
    rec = RunRecord([{"ndof": 10, "est_total": 1.0}])
    with pytest.raises(ValueError, match="insufficient rows"):
        fit_rate(rec, 10)


def test_ndof_definition(crisscross):
    # 2 * 16 velocities + 13 pressures + 5 interior temperatures + 1 multiplier
    assert count_dofs(crisscross) == 32 + 13 + 5 + 1


def test_zero_iterations_records_initial_solve():
    mesh, data = example1(1.4)
    res = adaptive_loop(mesh, data, 0)
    assert len(res.record) == 1
    row = res.record.rows[0]
    assert row["iter"] == 0 and row["nt"] == 16 and row["marked"] >= 1
    assert res.mesh is mesh


def test_loop_invariants_and_csv_roundtrip(tmp_path):
    mesh, data = fivespot(1.0)
    seen = []
    res = adaptive_loop(mesh, data, 6, callback=lambda it, m, s, ind: seen.append((it, m.n_elements)))
    rec = res.record
    assert len(rec) == 7 and [s[0] for s in seen] == list(range(7))
    assert np.all(np.diff(rec.column("ndof")) > 0)
    assert np.all(rec.column("est_total") > 0)
    assert np.all(rec.column("marked") >= 1)
    rec.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == ",".join(CSV_FIELDS)
    back = read_record(tmp_path / "r.csv")
    assert back.rows == rec.rows


def test_record_header_checked(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_record(tmp_path / "bad.csv")


def test_determinism():
    a = adaptive_loop(*example1(1.2), 5).record.rows
    b = adaptive_loop(*example1(1.2), 5).record.rows
    assert a == b


def test_element_budget_stops_early():
    mesh, data = example1(1.0)
    res = adaptive_loop(mesh, data, 20, max_elements=200)
    assert len(res.record) < 21
    assert res.mesh.n_elements <= 200


def test_failures_carry_round_index():
    mesh, data = example1(1.0)
    with pytest.raises(AdaptiveLoopError) as info:
        adaptive_loop(mesh, data, 3, max_picard=2)
    assert info.value.round == 0


def test_vanishing_indicators_stop_the_loop():
    data = ProblemData(nu=lambda x: np.ones(x.shape[:-1]), nu_bounds=(1.0, 1.0))
    res = adaptive_loop(crisscross_square(2), data, 5)
    assert len(res.record) == 1 and res.record.rows[0]["marked"] == 0

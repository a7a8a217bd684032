import csv
import io

import numpy as np
import pytest

from xmint.core import SelectionState
from xmint.path import PathConfig, run_path
from xmint.simulation import (
    GRID_HEADER,
    InvalidTruth,
    SimTruth,
    generate_dataset,
    grid_to_csv,
    run_grid,
    score_selection,
)


def test_noise_column_uncorrelated_with_exposure():
    d = generate_dataset(10000, 6, SimTruth(effect_size=1e-9), seed=4)
    assert abs(np.corrcoef(d.M[:, 4], d.X)[0, 1]) < 0.05


def test_true_path_slope():
    d = generate_dataset(10000, 6, SimTruth(effect_size=1.0), seed=4)
    slope = np.polyfit(d.X, d.M[:, 0], 1)[0]
    assert abs(slope - 1.0) < 0.05


def test_generator_deterministic():
    a = generate_dataset(50, 5, seed=9)
    b = generate_dataset(50, 5, seed=9)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.M, b.M) and np.array_equal(a.Y, b.Y)
    assert not np.array_equal(a.X, generate_dataset(50, 5, seed=10).X)


def test_invalid_truth():
    with pytest.raises(InvalidTruth):
        SimTruth(effect_size=0.0)
    with pytest.raises(InvalidTruth):
        generate_dataset(50, 2, SimTruth(true_mediators=(0, 1, 2)))


def test_score_selection_examples():
    truth = SimTruth()
    exact = score_selection(SelectionState((0, 1, 2), (0,)), truth)
    assert (exact.tpr_med, exact.fdr_med, exact.tpr_int, exact.fdr_int) == (1.0, 0.0, 1.0, 0.0)
    partial = score_selection(SelectionState((0, 1, 3), ()), truth)
    assert partial.tpr_med == pytest.approx(2 / 3) and partial.fdr_med == pytest.approx(1 / 3)
    empty = score_selection(SelectionState(), truth)
    assert (empty.tpr_med, empty.fdr_med, empty.tpr_int, empty.fdr_int) == (0.0, 0.0, 0.0, 0.0)


def test_single_run_matches_direct_fit():
    (row,) = run_grid([100], [10], [1.0], runs=1, base_seed=5)
    sel = run_path(generate_dataset(100, 10, SimTruth(effect_size=1.0), seed=5)).selection
    m = score_selection(sel, SimTruth())
    assert (row.tpr_med, row.fdr_med, row.tpr_int, row.fdr_int) == (m.tpr_med, m.fdr_med, m.tpr_int, m.fdr_int)
    assert row.selections == (sel,)


def test_table_shape_and_ranges():
    rows = run_grid([60, 80], [5], [0.5, 1.0], runs=2)
    assert len(rows) == 4
    assert [(r.N, r.ES) for r in rows] == [(60, 0.5), (60, 1.0), (80, 0.5), (80, 1.0)]
    for r in rows:
        for v in (r.tpr_med, r.fdr_med, r.tpr_int, r.fdr_int):
            assert 0.0 <= v <= 1.0
    parsed = list(csv.reader(io.StringIO(grid_to_csv(rows))))
    assert tuple(parsed[0]) == GRID_HEADER and len(parsed) == 5


def test_same_seed_same_table_serial_and_parallel():
    args = ([80], [8], [0.5, 1.0])
    serial = run_grid(*args, runs=3, base_seed=2)
    again = run_grid(*args, runs=3, base_seed=2)
    parallel = run_grid(*args, runs=3, base_seed=2, jobs=2)
    assert grid_to_csv(serial) == grid_to_csv(again) == grid_to_csv(parallel)
    assert [r.selections for r in serial] == [r.selections for r in parallel]


def test_invalid_grid_arguments():
    with pytest.raises(InvalidTruth):
        run_grid([50], [5], [0.0], runs=1)
    with pytest.raises(ValueError):
        run_grid([50], [5], [1.0], runs=0)


def test_dump_data(tmp_path):
    run_grid([40], [4], [1.0], runs=2, base_seed=3, dump_dir=str(tmp_path))
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "sim_N40_V4_ES1_seed3.csv", "sim_N40_V4_ES1_seed4.csv",
    ]
    table = np.loadtxt(tmp_path / "sim_N40_V4_ES1_seed3.csv", delimiter=",", skiprows=1)
    d = generate_dataset(40, 4, SimTruth(effect_size=1.0), seed=3)
    assert np.array_equal(table, np.column_stack([d.X, d.Y, d.M]))


@pytest.mark.slow
def test_tpr_nondecreasing_in_effect_size():
    rows = run_grid([400], [50], [0.25, 0.5, 1.0], runs=10)
    tprs = [r.tpr_med for r in rows]
    assert all(b >= a - 0.05 for a, b in zip(tprs, tprs[1:]))


@pytest.mark.slow
def test_desk_cell_accuracy():
    (row,) = run_grid([200], [50], [1.0], runs=20)
    assert row.tpr_med >= 0.95 and row.fdr_med <= 0.15

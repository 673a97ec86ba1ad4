import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hazdiff import CompetingRisksSample, DataError, build_event_grid, load_csv, write_csv
from hazdiff.pipeline import fit
from hazdiff.scores import ScoreError


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_csv_infers_causes(tmp_path):
    path = _write(tmp_path, "time,status,treatment,z1\n1.0,0,1,0.3\n2.0,1,0,0.1\n0.5,2,1,0.7\n3.0,1,0,0.2\n")
    s = load_csv(path)
    assert (s.n, s.n_causes, s.p) == (4, 2, 1)
    assert s.tau == 3.0
    assert s.covariate_names == ("z1",)


def test_load_csv_reports_row_of_negative_time(tmp_path):
    path = _write(tmp_path, "time,status,treatment,z1\n1,0,1,0\n2,1,0,0\n-1,1,0,0\n")
    with pytest.raises(DataError, match="row 3"):
        load_csv(path)


@pytest.mark.parametrize("body, message", [
    ("time,status,z1\n1,0,0\n", "missing column 'treatment'"),
    ("time,status,treatment,z1\n1,0,2,0\n", "row 1: treatment"),
    ("time,status,treatment,z1\n1,0,1,0\n1,x,1,0\n", "row 2: non-numeric"),
    ("time,status,treatment,z1\n1,1.5,1,0\n", "row 1: status"),
    ("time,status,treatment\n1,1,1\n", "covariate"),
])
def test_load_csv_errors(tmp_path, body, message):
    with pytest.raises(DataError, match=message):
        load_csv(_write(tmp_path, body))


def test_status_above_range_is_reported(tmp_path):
    path = _write(tmp_path, "time,status,treatment,z1\n1,3,1,0\n")
    with pytest.raises(DataError, match="row 1: status 3 outside 0..2"):
        load_csv(path, n_causes=2)


def test_gap_in_causes_fails_downstream(tmp_path, rng):
    n = 40
    lines = ["time,status,treatment,z1"]
    for i in range(n):
        status = [0, 1, 3][i % 3]
        lines.append(f"{rng.exponential() + 0.01},{status},{i % 2},{rng.uniform()}")
    s = load_csv(_write(tmp_path, "\n".join(lines) + "\n"))
    assert s.n_causes == 3
    assert list(s.event_counts()) == [13, 0, 13]
    with pytest.warns(UserWarning, match="cause 2"):
        with pytest.raises(ScoreError, match="no events for cause 2"):
            fit(s, "score2s")


def test_covariate_selection_and_row_id(tmp_path):
    path = _write(tmp_path, "row_id,time,status,treatment,z1,z2\n1,1,1,1,0.5,2\n2,2,0,0,0.1,3\n")
    assert load_csv(path).covariate_names == ("z1", "z2")
    assert load_csv(path, covariates=["z2"]).covariates[:, 0].tolist() == [2.0, 3.0]


def test_csv_round_trip_is_exact(tmp_path, rng):
    s = CompetingRisksSample(rng.exponential(size=20) + 1e-3, rng.integers(0, 3, 20), rng.integers(0, 2, 20),
                             rng.normal(size=(20, 2)), n_causes=2)
    write_csv(s, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv")
    assert np.array_equal(back.time, s.time)
    assert np.array_equal(back.covariates, s.covariates)
    assert np.array_equal(back.status, s.status)


def test_grid_all_events():
    s = CompetingRisksSample([1.0, 2.0, 3.0], [1, 1, 1], [0, 1, 0], np.zeros((3, 1)))
    g = build_event_grid(s)
    assert g.times.tolist() == [1.0, 2.0, 3.0]
    assert g.at_risk.tolist() == [3, 2, 1]
    assert g.events[:, 0].tolist() == [1, 1, 1]


def test_grid_event_censoring_tie():
    s = CompetingRisksSample([2.0, 2.0], [1, 0], [0, 1], np.zeros((2, 1)))
    g = build_event_grid(s)
    assert g.times.tolist() == [2.0]
    assert g.at_risk.tolist() == [2]
    assert g.events[:, 0].tolist() == [1]
    assert g.censorings.tolist() == [1]


def test_grid_event_counts_match_scan(rng):
    n = 50
    time = np.round(rng.exponential(size=n), 1) + 0.1  # rounding creates ties
    status = rng.integers(0, 3, n)
    s = CompetingRisksSample(time, status, rng.integers(0, 2, n), rng.normal(size=(n, 1)), n_causes=2)
    g = build_event_grid(s)
    for j in (1, 2):
        assert g.events[:, j - 1].sum() == sum(1 for v in status if v == j)
    assert np.all(np.diff(g.at_risk) <= 0)
    assert np.all(np.diff(g.times) > 0)


def test_tau_truncation_censors_administratively():
    s = CompetingRisksSample([1.0, 2.0, 4.0], [1, 2, 1], [0, 1, 1], np.zeros((3, 1)), tau=3.0)
    g = build_event_grid(s)
    assert g.times[-1] == 3.0
    assert g.status.tolist() == [1, 2, 0]
    assert g.exit_time.tolist() == [1.0, 2.0, 3.0]


def test_refinement_keeps_risk_sets():
    s = CompetingRisksSample([1.0, 2.0, 3.0], [1, 0, 2], [0, 1, 1], np.zeros((3, 1)))
    g = build_event_grid(s, extra_times=[0.5, 2.5])
    assert g.times.tolist() == [0.5, 1.0, 2.0, 2.5, 3.0]
    assert g.at_risk.tolist() == [3, 3, 2, 1, 1]


def test_validation_errors():
    with pytest.raises(DataError, match="positive"):
        CompetingRisksSample([0.0], [1], [1], [[0.0]])
    with pytest.raises(DataError, match="treatment"):
        CompetingRisksSample([1.0], [1], [2], [[0.0]])
    with pytest.raises(DataError, match="exceeds"):
        CompetingRisksSample([1.0], [3], [1], [[0.0]], n_causes=2)


def test_sample_is_immutable():
    s = CompetingRisksSample([1.0, 2.0], [1, 0], [0, 1], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        s.time[0] = 5.0


def test_relabel_causes_swaps_status():
    s = CompetingRisksSample([1.0, 2.0, 3.0], [1, 2, 0], [0, 1, 1], np.zeros((3, 1)))
    assert s.relabel_causes([2, 1]).status.tolist() == [2, 1, 0]


samples = st.integers(3, 25).flatmap(lambda n: st.tuples(
    st.lists(st.integers(1, 12), min_size=n, max_size=n),
    st.lists(st.integers(0, 2), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.permutations(list(range(n))),
))


@settings(max_examples=60, deadline=None)
@given(samples)
def test_grid_properties(data):
    times, status, treat, perm = data
    time = np.array(times, dtype=float) / 4.0  # coarse values produce ties
    s = CompetingRisksSample(time, status, treat, np.zeros((len(time), 1)), n_causes=2)
    g = build_event_grid(s)
    for k, t in enumerate(g.times):
        assert g.at_risk[k] == int(np.sum(time >= t))
    integral = g.integrate(g.at_risk)
    assert integral == pytest.approx(np.minimum(time, s.tau).sum(), rel=1e-12)

    p = np.array(perm)
    gp = build_event_grid(s.subset(p))
    assert np.array_equal(gp.times, g.times)
    assert np.array_equal(gp.at_risk, g.at_risk)
    assert np.array_equal(gp.events, g.events)
    assert np.array_equal(gp.treated_at_risk, g.treated_at_risk)

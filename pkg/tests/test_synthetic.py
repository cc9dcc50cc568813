import numpy as np
import pytest

from weblogmine.log_ingest import clean, parse_lines
from weblogmine.synthetic import (BUNDLED_LOG, BUNDLED_TRUTH, GENUINE, LogConfig, generate_log,
                                  planted_sessions, profile_rates, read_truth, user_profiles)


def test_planted_shapes_and_truth():
    ps = planted_sessions(0, sizes=(9, 6, 3))
    assert ps.counts.shape == (18, 14)
    assert ps.truth.tolist() == [1] * 9 + [2] * 6 + [3] * 3
    assert (ps.counts.sum(axis=1) > 0).all()
    # three sessions per user share one intensity row
    for u in np.unique(ps.users):
        rows = ps.intensities[ps.users == u]
        assert (rows == rows[0]).all()
    assert ps.matrix().shape == (18, 14)


def test_planted_is_seeded():
    a, b = planted_sessions(4), planted_sessions(4)
    assert np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, planted_sessions(5).counts)


def test_profiles_must_fit():
    with pytest.raises(ValueError):
        profile_rates(4, 10, 2.0, 0.5, 5, 4)


def test_intensity_graph_has_k_neighbours():
    g = planted_sessions(0, sizes=(10, 10, 10)).intensity_graph(k=4)
    assert g.w.shape == (30, 30)
    assert (g.w.sum(axis=1) == 4).all()
    assert (np.diag(g.w) == 0).all()


def test_generated_log_counts():
    log = generate_log(LogConfig(n_lines=400, n_noise=100, seed=3))
    counts = log.kind_counts()
    assert sum(counts.values()) == 400
    assert counts[GENUINE] == 300
    assert counts == {"genuine": 300, "robots_txt": 15, "robot_agent": 25, "extension": 40,
                      "status": 20}


def test_generated_log_cleans_to_genuine_lines():
    log = generate_log(LogConfig(n_lines=300, n_noise=90, seed=1))
    entries, errors = parse_lines(log.lines)
    assert not errors
    kept, report = clean(entries)
    assert len(kept) == 210
    genuine = [r.entry for r in log.records if r.kind == GENUINE]
    assert {(e.client_ip, e.timestamp, e.uri) for e in kept} == {(e.client_ip, e.timestamp, e.uri) for e in genuine}


def test_log_config_validation():
    with pytest.raises(ValueError):
        LogConfig(n_lines=10, n_noise=11)
    with pytest.raises(ValueError):
        LogConfig(session_length=(0, 3))


def test_truth_round_trip(tmp_path):
    log = generate_log(LogConfig(n_lines=120, n_noise=30, seed=2))
    log.write(tmp_path / "a.log", tmp_path / "t.csv")
    rows = read_truth(tmp_path / "t.csv")
    assert len(rows) == 120
    assert [r["line"] for r in rows] == list(range(1, 121))
    assert [r["kind"] for r in rows] == [r.kind for r in log.records]
    assert len((tmp_path / "a.log").read_text().splitlines()) == 120
    profiles = user_profiles(rows)
    assert set(profiles.values()) <= {1, 2, 3}


def test_bundled_files_match_generator():
    log = generate_log()
    assert BUNDLED_LOG.read_text(encoding="utf-8").splitlines() == log.lines
    assert [r["kind"] for r in read_truth(BUNDLED_TRUTH)] == [r.kind for r in log.records]

from pathlib import Path

import pytest

from weblogmine.config import ConfigError, PipelineConfig, load_config, parse_config, render_config


def test_minimal_file_takes_defaults(tmp_path):
    cfg = parse_config("[pipeline]\ninput = a.log\n", tmp_path)
    assert cfg.inputs == [tmp_path / "a.log"]
    assert cfg.output_dir == tmp_path / "run"
    assert cfg.variant == "ppfcm" and cfg.c == 3 and cfg.gamma == 0.5
    cfg.validate()


def test_sections_map_to_attributes():
    cfg = parse_config("[pipeline]\ninput = a.log b.log\nseed = 7\n"
                       "[fuzzy_clustering]\nvariant = fcm\nc = 4\ntol = 1e-6\n"
                       "[classification]\nC = 2.5\nsigma =\ncross_validate = no\n"
                       "[feature_reduction]\nmax_iter = 50\n")
    assert cfg.inputs == [Path("a.log"), Path("b.log")]
    assert (cfg.seed, cfg.variant, cfg.c, cfg.cluster_tol) == (7, "fcm", 4, 1e-6)
    assert (cfg.C, cfg.sigma, cfg.cross_validate, cfg.ica_max_iter) == (2.5, None, False, 50)


def test_absolute_paths_are_kept(tmp_path):
    cfg = parse_config("[pipeline]\ninput = /data/x.log\noutput_dir = /out\n", tmp_path)
    assert cfg.inputs == [Path("/data/x.log")] and cfg.output_dir == Path("/out")


def test_render_round_trip(tmp_path):
    cfg = PipelineConfig(inputs=[tmp_path / "x.log"], output_dir=tmp_path / "o", truth=tmp_path / "t.csv",
                         variant="pfcm", gamma=0.25, sigma=1.5, robot_markers=frozenset({"bot", "spider"}),
                         split_by_agent=False)
    assert parse_config(render_config(cfg)) == cfg
    assert parse_config(render_config(PipelineConfig())) == PipelineConfig()


@pytest.mark.parametrize("text, match", [
    ("[nosuch]\nx = 1\n", "unknown section"),
    ("[pipeline]\nbogus = 1\n", "unknown key"),
    ("[pipeline]\nseed = many\n", "seed"),
    ("not ini at all", "no section headers"),
])
def test_bad_files(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


@pytest.mark.parametrize("changes, match", [
    ({"inputs": []}, "no input"),
    ({"variant": "kmeans"}, "variant"),
    ({"classifier": "tree"}, "classifier"),
    ({"test_fraction": 1.0}, "test_fraction"),
    ({"timeout_minutes": 0.0}, "timeout"),
    ({"c": 1}, "2 clusters"),
])
def test_validation(changes, match):
    cfg = PipelineConfig(inputs=[Path("a.log")], **{k: v for k, v in changes.items() if k != "inputs"})
    if "inputs" in changes:
        cfg.inputs = changes["inputs"]
    with pytest.raises(ConfigError, match=match):
        cfg.validate()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.ini")


def test_load_resolves_against_file_dir(tmp_path):
    (tmp_path / "c.ini").write_text("[pipeline]\ninput = logs/a.log\n")
    cfg = load_config(tmp_path / "c.ini")
    assert cfg.inputs == [tmp_path / "logs" / "a.log"]
    assert cfg.missing_paths() == [tmp_path / "logs" / "a.log"]


def test_module_configs_carry_values():
    cfg = PipelineConfig(inputs=[Path("a")], c=4, q=1.5, seed=3, timeout_minutes=10, rvm_beta_max=50.0)
    assert cfg.cluster_config().c == 4 and cfg.cluster_config(2).c == 2
    assert cfg.cluster_config().seed == 3
    assert cfg.session_policy().timeout.total_seconds() == 600
    assert cfg.train_config().rvm.beta_max == 50.0
    snap = cfg.snapshot()
    assert snap["inputs"] == ["a"] and isinstance(snap["robot_markers"], list)

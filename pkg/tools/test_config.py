from __future__ import annotations

import json
import tempfile
from pathlib import Path

import numpy as np


def _write(td: str, name: str, doc: dict) -> Path:
    path = Path(td) / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def _expect_config_error(fn, field: str) -> None:
    from investesg_lab.errors import ConfigError

    try:
        fn()
    except ConfigError as e:
        assert e.field == field, (e.field, field)
        return
    raise AssertionError(f"expected ConfigError on {field}")


def test_packaged_defaults() -> None:
    from investesg_lab.config import AnalysisConfig, EnvConfig, default_env_config, load_env_document

    env = default_env_config()
    assert env == EnvConfig().validate()
    assert (env.num_companies, env.num_investors, env.episode_length) == (5, 3, 100)
    assert np.isclose(1.0 - np.prod(1.0 - env.p0), 0.48)
    _, analysis = load_env_document(None)
    assert analysis == AnalysisConfig()
    assert np.isclose(analysis.scale_grid()[0], analysis.scale_min) and len(analysis.scale_grid()) == 25


def test_unknown_keys_name_their_section() -> None:
    from investesg_lab.config import load_env_document, load_train_config

    with tempfile.TemporaryDirectory() as td:
        bad_env = _write(td, "env.json", {"schema_version": 1, "env": {"num_companys": 3}})
        _expect_config_error(lambda: load_env_document(bad_env), "env.num_companys")
        bad_event = _write(td, "ev.json", {"schema_version": 1, "env": {"events": {"flood": {}}}})
        _expect_config_error(lambda: load_env_document(bad_event), "env.events.flood")
        bad_root = _write(td, "root.json", {"schema_version": 1, "extras": {}})
        _expect_config_error(lambda: load_env_document(bad_root), "<root>.extras")
        bad_train = _write(td, "train.json", {"schema_version": 1, "train": {"learning_rate": 1.0}})
        _expect_config_error(lambda: load_train_config(bad_train), "train.learning_rate")


def test_schema_version_and_missing_files() -> None:
    from investesg_lab.config import load_env_document

    with tempfile.TemporaryDirectory() as td:
        old = _write(td, "old.json", {"schema_version": 0, "env": {}})
        _expect_config_error(lambda: load_env_document(old), "schema_version")
        _expect_config_error(lambda: load_env_document(Path(td) / "missing.json"), "path")
        broken = Path(td) / "broken.json"
        broken.write_text("{not json", encoding="utf-8")
        _expect_config_error(lambda: load_env_document(broken), "path")


def test_per_agent_values_broadcast_or_match_length() -> None:
    from investesg_lab.config import EnvConfig

    cfg = EnvConfig(num_companies=3, loss_coefficients=(0.1, 0.2, 0.3)).validate()
    assert np.array_equal(cfg.loss_vector, [0.1, 0.2, 0.3])
    assert np.array_equal(EnvConfig(num_investors=2, esg_weights=2.0).esg_vector, [2.0, 2.0])
    _expect_config_error(
        lambda: EnvConfig(num_companies=3, loss_coefficients=(0.1, 0.2)).validate(), "env.loss_coefficients"
    )
    _expect_config_error(lambda: EnvConfig.from_dict({"esg_weights": "high"}), "env.esg_weights")


def test_out_of_range_values() -> None:
    from investesg_lab.config import EnvConfig, TrainConfig

    _expect_config_error(lambda: EnvConfig(alpha=-1.0).validate(), "env.alpha")
    _expect_config_error(lambda: EnvConfig(max_mitigation=0.0).validate(), "env.max_mitigation")
    _expect_config_error(lambda: EnvConfig(num_investors=0).validate(), "env.num_investors")
    _expect_config_error(lambda: EnvConfig(investor_reward="esg").validate(), "env.investor_reward")
    _expect_config_error(lambda: TrainConfig(investor_head="softmax").validate(), "train.investor_head")
    _expect_config_error(lambda: TrainConfig(log_std_min=3.0).validate(), "train.log_std_min")


def test_train_layering_and_desk_profile() -> None:
    from investesg_lab.config import load_train_config

    full = load_train_config()
    assert (full.num_envs, full.total_steps) == (64, 70_000_000)
    desk = load_train_config(desk_scale=True)
    assert (desk.num_envs, desk.total_steps) == (8, 2_000_000)
    with tempfile.TemporaryDirectory() as td:
        user = _write(td, "t.json", {"schema_version": 1, "train": {"num_envs": 4, "seed": 5}})
        layered = load_train_config(user, desk_scale=True, overrides={"seed": 9, "total_steps": None})
    # the desk profile wins over the user's train section, explicit overrides win over both
    assert layered.num_envs == 8
    assert layered.seed == 9
    assert layered.total_steps == 2_000_000


def test_algorithm_defaults_resolve() -> None:
    from investesg_lab.config import TrainConfig

    aa = TrainConfig(algorithm="AdAlign")
    assert (aa.resolved_epochs, aa.resolved_self_play, aa.resolved_centralized_critic) == (1, True, False)
    mappo = TrainConfig(algorithm="MAPPO")
    assert (mappo.resolved_epochs, mappo.resolved_self_play, mappo.resolved_centralized_critic) == (4, False, True)
    pinned = TrainConfig(algorithm="AdAlign", epochs=3, self_play=False)
    assert (pinned.resolved_epochs, pinned.resolved_self_play) == (3, False)
    assert TrainConfig(num_envs=4, total_steps=1000).updates_for(100) == 2
    assert TrainConfig(num_envs=64, total_steps=10).updates_for(100) == 1


def test_dict_round_trips() -> None:
    from investesg_lab.config import AnalysisConfig, EnvConfig, TrainConfig

    env = EnvConfig(num_companies=2, loss_coefficients=(0.1, 0.2), alpha=70.0).validate()
    assert EnvConfig.from_dict(env.to_dict()) == env
    assert EnvConfig.from_dict(json.loads(json.dumps(env.to_dict()))).hash() == env.hash()
    train = TrainConfig(algorithm="AdAlign", esg_weights=(1.0, 2.0)).validate()
    doc = train.to_dict()
    assert doc["resolved"] == {"epochs": 1, "self_play": True, "centralized_critic": False}
    assert TrainConfig.from_dict(doc) == train
    analysis = AnalysisConfig(steps=(5, 7), expectation="bernoulli").validate()
    assert AnalysisConfig.from_dict(analysis.to_dict()) == analysis
    assert env.hash() != env.with_overrides(alpha=1.0).hash()


def main() -> None:
    # Run from repo root with: PYTHONPATH=src python3 tools/test_config.py
    test_packaged_defaults()
    test_unknown_keys_name_their_section()
    test_schema_version_and_missing_files()
    test_per_agent_values_broadcast_or_match_length()
    test_out_of_range_values()
    test_train_layering_and_desk_profile()
    test_algorithm_defaults_resolve()
    test_dict_round_trips()
    print("OK: config loading, validation and layering.")


if __name__ == "__main__":
    main()

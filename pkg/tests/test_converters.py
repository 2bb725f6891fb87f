import pytest

from rosepo_lab.models.config import ObjectiveConfig, RunConfig
from rosepo_lab.utils.converters import derive_seed, format_fixed, format_key_value, indices_of, parse_key_value


def test_derive_seed_is_stable_and_keyed() -> None:
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert derive_seed(0, 1) != derive_seed(0, 2)
    assert derive_seed(0, 1) != derive_seed(1, 1)
    assert derive_seed(3, 1, 2) != derive_seed(3, 2, 1)


def test_indices_of_names_unknown_item() -> None:
    with pytest.raises(KeyError, match="c"):
        _ = indices_of({"a": 0, "b": 1}, ["a", "c"])
    assert list(indices_of({"a": 0, "b": 1}, ["b", "a"])) == [1, 0]


def test_format_fixed() -> None:
    assert format_fixed(0.1234567) == "0.123457"
    assert format_fixed(2, places=2) == "2.00"


def test_parse_key_value() -> None:
    text = "# run\nbeta = 0.5  # inline\n\nkind=rosepo\n"

    assert parse_key_value(text) == {"beta": "0.5", "kind": "rosepo"}


def test_parse_key_value_errors() -> None:
    with pytest.raises(ValueError, match="Line 2"):
        _ = parse_key_value("beta = 1\nnot a pair\n")
    with pytest.raises(ValueError, match="duplicate"):
        _ = parse_key_value("beta = 1\nbeta = 2\n")


def test_format_key_value_skips_none() -> None:
    assert format_key_value({"a": 1, "b": None, "c": "x"}) == "a = 1\nc = x\n"


def test_run_config_from_pairs_coerces_strings() -> None:
    config = RunConfig.from_pairs({"seed": "4", "kind": "cpo", "lambda": "0.5", "lr": "1e-4", "stage": "po"})

    assert config.seed == 4
    assert config.stage == "po"
    assert config.objective == ObjectiveConfig(kind="cpo", lambda_=0.5)
    assert config.lr == pytest.approx(1e-4)


def test_run_config_pairs_survive_text() -> None:
    config = RunConfig(seed=2, objective=ObjectiveConfig(kind="simpo", gamma=0.5), strategy="semantic")

    parsed = RunConfig.from_pairs(parse_key_value(format_key_value(config.to_pairs())))

    assert parsed == config
    assert "lambda" in config.to_pairs()


def test_run_config_rejects_unknown_and_invalid() -> None:
    with pytest.raises(ValueError, match="betta"):
        _ = RunConfig.from_pairs({"betta": "1"})
    with pytest.raises(ValueError):
        _ = RunConfig.from_pairs({"data_fraction": "1.5"})
    with pytest.raises(ValueError):
        _ = RunConfig.from_pairs({"epsilon": "0.5"})


def test_with_overrides() -> None:
    config = RunConfig().with_overrides({"beta": "0.2", "epochs": 3})

    assert config.objective.beta == pytest.approx(0.2)
    assert config.epochs == 3
    assert config.objective.kind == "rosepo"

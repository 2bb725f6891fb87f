from pathlib import Path

import pytest

from rosepo_lab.front_end.cli import CLI
from rosepo_lab.models.options import (
    BuildPrefsOptions,
    EvaluateOptions,
    InjectFlipsOptions,
    PrepareOptions,
    ReportOptions,
    SweepOptions,
    TrainPoOptions,
    TrainSftOptions,
)


def test_prepare_defaults() -> None:
    options = CLI().parse_args(["prepare", "--interactions", "log.tsv", "--items", "items.tsv", "--out", "data"])

    assert isinstance(options, PrepareOptions)
    assert options.interactions == Path("log.tsv")
    assert options.embeddings is None
    assert options.min_user_interactions == 11
    assert options.seed == 0
    assert not options.quiet


def test_run_flags_become_overrides() -> None:
    argv = ["train-sft", "-q", "--data", "d", "--run-dir", "r"]
    argv += ["--beta", "0.5", "--objective", "dpo", "--set", "lr=0.01"]

    options = CLI().parse_args(argv)

    assert isinstance(options, TrainSftOptions)
    assert options.quiet
    assert options.config is None
    assert options.overrides == {"beta": "0.5", "kind": "dpo", "lr": "0.01"}


def test_train_po_needs_checkpoint() -> None:
    options = CLI().parse_args(["train-po", "--prefs", "p.jsonl", "--sft-ckpt", "sft.ckpt", "--run-dir", "r"])

    assert isinstance(options, TrainPoOptions)
    assert options.overrides == {}
    with pytest.raises(SystemExit) as exit_info:
        _ = CLI().parse_args(["train-po", "--prefs", "p.jsonl", "--run-dir", "r"])
    assert exit_info.value.code == 2


def test_build_prefs_strategies() -> None:
    options = CLI().parse_args(["build-prefs", "--data", "d", "--strategy", "semantic", "--out", "p.jsonl"])

    assert isinstance(options, BuildPrefsOptions)
    assert options.n_negatives == 3


@pytest.mark.parametrize("strategy", ["self-hard", "mixed"])
def test_self_hard_strategies_need_sft(strategy: str, capsys: pytest.CaptureFixture[str]) -> None:
    with pytest.raises(SystemExit) as exit_info:
        _ = CLI().parse_args(["build-prefs", "--data", "d", "--strategy", strategy, "--out", "p.jsonl"])

    assert exit_info.value.code == 2
    assert "--sft-ckpt" in capsys.readouterr().err


def test_unknown_strategy_is_rejected() -> None:
    with pytest.raises(SystemExit):
        _ = CLI().parse_args(["build-prefs", "--data", "d", "--strategy", "hardest", "--out", "p.jsonl"])


def test_flip_probability_is_validated() -> None:
    argv = ["inject-flips", "--prefs", "p", "--flip-prob", "0.2", "--perfect-epsilon", "--out", "o"]

    options = CLI().parse_args(argv)

    assert isinstance(options, InjectFlipsOptions)
    assert options.perfect_epsilon
    with pytest.raises(SystemExit):
        _ = CLI().parse_args(["inject-flips", "--prefs", "p", "--flip-prob", "0.5", "--out", "o"])


def test_evaluate_modes() -> None:
    argv = ["evaluate", "--data", "d", "--ckpt", "c", "--run-dir", "r"]
    argv += ["--modes", "given", "all_items", "--ks", "1", "3"]

    options = CLI().parse_args(argv)

    assert isinstance(options, EvaluateOptions)
    assert options.modes == ["given", "all_items"]
    assert options.ks == [1, 3]


def test_sweep_grid() -> None:
    argv = ["sweep", "--data", "d", "--run-dir", "r", "--grid", "lr=1e-2,1e-3", "beta=0.1", "--seeds", "3"]

    options = CLI().parse_args(argv)

    assert isinstance(options, SweepOptions)
    assert options.grid == {"lr": ["1e-2", "1e-3"], "beta": ["0.1"]}
    assert options.seeds == 3
    assert options.prefs is None
    with pytest.raises(SystemExit):
        _ = CLI().parse_args(["sweep", "--data", "d", "--run-dir", "r", "--grid", "lr"])


def test_report() -> None:
    options = CLI().parse_args(["report", "--run-dirs", "a", "b", "--out", "o"])

    assert isinstance(options, ReportOptions)
    assert options.run_dirs == [Path("a"), Path("b")]


def test_version(capsys: pytest.CaptureFixture[str]) -> None:
    with pytest.raises(SystemExit) as exit_info:
        _ = CLI().parse_args(["--version"])

    assert exit_info.value.code == 0
    assert "RosePO Lab v" in capsys.readouterr().out


def test_a_verb_is_required() -> None:
    with pytest.raises(SystemExit):
        _ = CLI().parse_args([])

import pytest

from rosepo_lab.utils.console import Console


def test_repeated_messages_collapse(capsys: pytest.CaptureFixture[str]) -> None:
    console = Console(enable_debug=False, quiet=True)

    for _ in range(3):
        console.info_print("SFT", "Skipped a batch.")
    console.info_print("SFT", "Done.")
    err = capsys.readouterr().err

    assert err.count("Skipped a batch.") == 2
    assert err.count("...") == 1
    assert "x 2" in err
    assert "Done." in err


def test_debug_needs_debug_mode(capsys: pytest.CaptureFixture[str]) -> None:
    Console(enable_debug=False, quiet=True).debug_print("PREPARE", "hidden")
    assert "hidden" not in capsys.readouterr().err

    Console(enable_debug=True, quiet=True).debug_print("PREPARE", "shown")
    assert "shown" in capsys.readouterr().err


def test_brackets_are_printed_literally(capsys: pytest.CaptureFixture[str]) -> None:
    Console(enable_debug=False, quiet=True).error_print("FLIPS", "Flip probability must lie in [0, 0.5).")

    assert "[0, 0.5)" in capsys.readouterr().err


def test_critical_messages_are_always_shown(capsys: pytest.CaptureFixture[str]) -> None:
    Console(enable_debug=False, quiet=True).critical_print("PO", "Training diverged.")

    assert "PO: Training diverged." in capsys.readouterr().err

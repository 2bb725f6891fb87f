"""Console for pipeline messages, training progress, and result tables.

Every message is a `LABEL: text` pair. Labels name the verb or stage that speaks (`PREPARE`, `SFT`, `ORACLE`, ...).
A run of identical messages prints once, then an ellipsis, then a single `x N` line when the run ends, so per-batch
warnings do not flood the terminal.

Usage:
    Create a Console once in the entry point and hand it to every stateful component.

    ```python
    console = Console(enable_debug=False)
    console.info_print("PREPARE", "Wrote 8,000 examples.")
    with console.progress() as progress:
        task = progress.add_task("SFT", total=100, loss=0.0)
    ```
"""

from dataclasses import dataclass
from logging import CRITICAL, DEBUG, ERROR, INFO, Logger, getLogger
from typing import final

from rich.console import Console as RichConsole
from rich.logging import RichHandler
from rich.markup import escape
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeRemainingColumn
from rich.table import Table
from rich.traceback import install

LOGGER_NAME = "rosepo_lab"

# Label and message markup per level.
STYLES = {
    DEBUG: ("b green", "green"),
    INFO: ("b blue", ""),
    ERROR: ("b red", "red"),
    CRITICAL: ("b i red", "b i red"),
}


@dataclass
class _Repeat:
    level: int = INFO
    label: str = ""
    message: str = ""
    count: int = 0


def _markup(style: str, text: str) -> str:
    return f"[{style}]{escape(text)}[/]" if style else escape(text)


def _line(level: int, label: str, message: str) -> str:
    label_style, message_style = STYLES[level]
    return f"{_markup(label_style, f'{label}:')} {_markup(message_style, message)}"


@final
class Console:
    def __init__(self, *, enable_debug: bool, quiet: bool = False) -> None:
        """Attach a rich handler to the lab's logger and install rich tracebacks.

        Args:
            enable_debug: Show debug messages.
            quiet: Hide progress bars (used by tests and sweeps).
        """
        self._quiet = quiet
        self._repeat = _Repeat()
        self._rich = RichConsole(stderr=True)
        self._log = self._configure_logger(DEBUG if enable_debug else INFO)
        _ = install(console=self._rich)

    def debug_print(self, label: str, msg: str) -> None:
        """Print a debug message, shown only with `--debug`."""
        self._emit(DEBUG, label, msg)

    def info_print(self, label: str, msg: str) -> None:
        """Print a stage message.

        Args:
            label: Verb or stage speaking.
            msg: Message.
        """
        self._emit(INFO, label, msg)

    def error_print(self, label: str, msg: str) -> None:
        """Print an error message.

        Args:
            label: Verb or stage that failed.
            msg: What went wrong.
        """
        self._emit(ERROR, label, msg)

    def critical_print(self, label: str, msg: str) -> None:
        """Print a message that ends the run, such as a diverging loss."""
        self._emit(CRITICAL, label, msg)

    def exception_error_print(self, label: str, exception: BaseException) -> None:
        """Print an exception as `Type: message` with its traceback.

        Args:
            label: Verb that raised.
            exception: The exception.
        """
        self._flush_repeat()
        detail = f"{type(exception).__name__}: {exception}"
        self._log.exception(f"{_markup('b magenta', f'{label}:')} {_markup('magenta', detail)}")

    def progress(self) -> Progress:
        """Progress bar for a training loop, with a `loss` field per task.

        Returns:
            Rich progress to use as a context manager; disabled when quiet.
        """
        return Progress(
            TextColumn("[b blue]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            TextColumn("loss {task.fields[loss]:.4f}"),
            TimeRemainingColumn(),
            console=self._rich,
            disable=self._quiet,
            transient=True,
        )

    def table_print(self, title: str, columns: list[str], rows: list[list[str]]) -> None:
        """Print a result table with the first column left-aligned and the rest right-aligned.

        Args:
            title: Table title.
            columns: Column headers.
            rows: Table rows, already formatted.
        """
        self._flush_repeat()
        table = Table(title=title)
        for index, column in enumerate(columns):
            table.add_column(column, justify="left" if index == 0 else "right")
        for row in rows:
            table.add_row(*row)
        self._rich.print(table)

    # Helper methods.
    def _configure_logger(self, level: int) -> Logger:
        log = getLogger(LOGGER_NAME)
        log.handlers.clear()
        log.addHandler(RichHandler(console=self._rich, markup=True, rich_tracebacks=True, log_time_format="[%X]"))
        log.setLevel(level)
        log.propagate = False
        return log

    def _emit(self, level: int, label: str, message: str) -> None:
        repeat = self._repeat
        if (level, label, message) == (repeat.level, repeat.label, repeat.message):
            repeat.count += 1
            if repeat.count == 1:
                self._log.log(level, "...")
            return

        self._flush_repeat()
        self._log.log(level, _line(level, label, message))
        self._repeat = _Repeat(level, label, message)

    def _flush_repeat(self) -> None:
        repeat = self._repeat
        if repeat.count:
            self._log.log(repeat.level, f"{_line(repeat.level, repeat.label, repeat.message)} x {repeat.count}")
        self._repeat = _Repeat()

import atexit
import os
from typing import Any, Dict, List, Optional

from rich.console import Console
from rich.highlighter import ReprHighlighter
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn, TimeRemainingColumn
from rich.table import Column, Table

TAGS: Dict[str, str] = {
    "error": "red",
    "warning": "bright_green",
    "info": "yellow",
    "driver": "green",
    "geometry": "cyan",
    "solver": "blue",
    "detector": "magenta",
    "scattering": "bright_blue",
}
EXPERIMENT_COLOR = "bright_red"


def _flag(name: str) -> bool:
    return os.environ.get(name, "false").lower() in ("true", "1")


def _plain_console(stream) -> Console:
    return Console(file=stream, color_system=None, force_terminal=False, force_jupyter=False, force_interactive=False,
                   log_path=False, width=120)


class Log:
    """
    Process-wide logger of the laboratory.

    Every message is one table row tagged with its origin (solver, detector, an experiment kind, ...).
    Rows go to the terminal and to every file attached with `file()`; progress bars only to the terminal.
    """

    def __init__(self):
        self.highlighter = ReprHighlighter()
        self.verbose = _flag("VERBOSE")
        self.very_verbose = _flag("VERY_VERBOSE")

        target = os.environ.get("LOG_FILE")
        self.console = _plain_console(open(target, "w")) if target else Console(force_jupyter=False, log_path=False)
        self._tees: List[Console] = []
        self._progress: Optional[Progress] = None
        self._start_progress()

    def cleanup(self):
        if self._progress is not None:
            self._progress.stop()
        self.console.show_cursor()

    def set_verbose(self, enable: bool):
        self.verbose = enable

    def set_very_verbose(self, enable: bool):
        if enable:
            self.verbose = True
        self.very_verbose = enable

    def _start_progress(self):
        if self._progress:
            self._progress.stop()
        self._progress = Progress(
            MofNCompleteColumn(),
            TextColumn("[progress.description]{task.description}", table_column=Column(no_wrap=True, width=25)),
            BarColumn(),
            TextColumn("{task.fields[status]}", table_column=Column(no_wrap=True, width=12)),
            TimeElapsedColumn(),
            TimeRemainingColumn(),
            transient=True,
            console=self.console,
        )
        self._progress.start()

    def _consoles(self) -> List[Console]:
        return [self.console] + self._tees

    def print(self, *info: Any):
        for console in self._consoles():
            console.print(*info)

    def log(self, message: Any, tag: str, color: Optional[str] = None, group: Optional[str] = None):
        """
        Logs a message as one row: the tag, an optional group (e.g. a run title) and the message.
        """
        table = Table(show_header=False, box=None)
        table.add_column("tag", min_width=10)
        if group:
            table.add_column("group", min_width=15)
        table.add_column("message", overflow="fold")

        text = self.highlighter(message) if isinstance(message, str) else message
        cells = [f"[bold {color or TAGS.get(tag, 'white')}]{tag.upper()}[/]"]
        if group:
            cells.append(f"[bold]{group.upper()}[/]")
        table.add_row(*cells, text)

        for console in self._consoles():
            console.log(table, _stack_offset=3)

    def error(self, info: Any, group: str = None):
        self.log(str(info).strip(), "error", group=group)

    def warn(self, info: Any, group: str = None):
        self.log(info, "warning", group=group)

    def warn_verbose(self, info: Any, group: str = None):
        if self.verbose:
            self.warn(info, group)

    def info(self, info: Any = "", group: str = None):
        self.log(info, "info", group=group)

    def info_verbose(self, info: Any = "", group: str = None):
        if self.verbose:
            self.info(info, group)

    def driver(self, info: Any):
        self.log(info, "driver")

    def driver_verbose(self, info: Any):
        if self.verbose:
            self.driver(info)

    def experiment(self, info: Any, experiment):
        """Logs a message tagged with the kind of the given experiment."""
        self.log(info, experiment.name, EXPERIMENT_COLOR)

    def experiment_verbose(self, info: Any, experiment):
        if self.verbose:
            self.experiment(info, experiment)

    def geometry_verbose(self, info: Any):
        if self.verbose:
            self.log(info, "geometry")

    def geometry_very_verbose(self, info: Any):
        if self.very_verbose:
            self.log(info, "geometry")

    def solver(self, info: Any):
        self.log(info, "solver")

    def solver_verbose(self, info: Any):
        if self.verbose:
            self.solver(info)

    def detector(self, info: Any):
        self.log(info, "detector")

    def detector_verbose(self, info: Any):
        if self.verbose:
            self.detector(info)

    def scattering(self, info: Any):
        self.log(info, "scattering")

    def scattering_verbose(self, info: Any):
        if self.verbose:
            self.scattering(info)

    def header(self, text: str):
        for console in self._consoles():
            console.rule(f"[bold]{text}[/]")

    def newline(self):
        self.print("")

    class LogProgress:
        """One task of the shared transient progress display (time levels, batch items, stencil corners)."""

        def __init__(self, log: "Log", info: str, total: int):
            self._log = log
            self._info = info
            self._total = total

        def __enter__(self):
            self.task = self._log._progress.add_task(self._info, total=self._total, status="")
            return self

        def __exit__(self, exc_type, exc_val, exc_tb):
            self._log._progress.remove_task(self.task)

        def advance(self, steps: int = 1, status: Optional[str] = None):
            if status is None:
                self._log._progress.update(self.task, advance=steps)
            else:
                self._log._progress.update(self.task, advance=steps, status=status)

    def progress(self, info: str, total: int) -> LogProgress:
        return self.LogProgress(self, info, total)

    class LogFile:
        """Copies every row into `path` while the context is open (the run directory's run.log)."""

        def __init__(self, log: "Log", path: str):
            self._log = log
            self._path = path
            self._stream = None
            self._console = None

        def __enter__(self):
            self._stream = open(self._path, "w")
            self._console = _plain_console(self._stream)
            self._log._tees.append(self._console)
            return self

        def __exit__(self, exc_type, exc_val, exc_tb):
            self._log._tees.remove(self._console)
            self._stream.close()

    def file(self, path: str) -> LogFile:
        return self.LogFile(self, path)


log = Log()


atexit.register(log.cleanup)

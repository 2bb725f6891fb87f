"""RosePO Lab entry point.

Responsible for gathering options, instantiating the console and the pipeline handler, and running one verb.

Usage:
    ```python
    main()
    ```
"""

from rosepo_lab.back_end.pipeline import Pipeline
from rosepo_lab.front_end.cli import CLI
from rosepo_lab.utils.console import Console
from rosepo_lab.utils.startup import preamble


def main() -> None:
    """RosePO Lab entry point."""

    # 0. Get options of the chosen verb (usage errors exit here).
    options = CLI().parse_args()

    # 1. Print the startup preamble.
    if not options.quiet:
        preamble()

    # 2. Instantiate the Console.
    console = Console(enable_debug=options.debug, quiet=options.quiet)

    # 3. Run the verb and report its status.
    raise SystemExit(Pipeline(console).run(options))


if __name__ == "__main__":
    main()

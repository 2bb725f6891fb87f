"""Program startup helper functions."""

from importlib import import_module
from inspect import getmembers, isabstract, isclass
from pkgutil import iter_modules

from rosepo_lab.__about__ import __version__
from rosepo_lab.utils.base_objective import BaseObjective
from rosepo_lab.utils.base_sampler import BaseSampler
from rosepo_lab.utils.constants import ASCII, OBJECTIVES_DIRECTORY, SAMPLERS_DIRECTORY


def preamble() -> None:
    """Print the startup preamble."""
    print(ASCII)  # noqa: T201
    print(__version__)  # noqa: T201
    print()  # noqa: T201


def _discover[T](directory: str, package: str, base: type[T]) -> list[type[T]]:
    """Concrete subclasses of a base defined in the modules of a plug-in directory.

    Classes a module merely imports are skipped so each plug-in is found once.
    """
    discovered: list[type[T]] = []
    for module in iter_modules([directory]):
        module_name = f"{package}.{module.name}"
        for _, member in getmembers(import_module(module_name), isclass):
            if issubclass(member, base) and not isabstract(member) and member.__module__ == module_name:
                discovered.append(member)
    return discovered


def get_objectives() -> list[type[BaseObjective]]:
    """Get all objective classes from the objectives directory.

    Returns:
        List of objective classes.
    """
    return _discover(OBJECTIVES_DIRECTORY, "rosepo_lab.objectives", BaseObjective)


def get_samplers() -> list[type[BaseSampler]]:
    """Get all sampler classes from the samplers directory.

    Returns:
        List of sampler classes.
    """
    return _discover(SAMPLERS_DIRECTORY, "rosepo_lab.samplers", BaseSampler)


def get_objective_display_to_cli_name() -> dict[str, str]:
    """Get mapping of display to CLI names of the available objectives.

    Returns:
        Dictionary of objective display name to configuration name.
    """
    return {objective_type.get_display_name(): objective_type.get_cli_name() for objective_type in get_objectives()}


def get_sampler_cli_names() -> list[str]:
    """Get the CLI names of the available sampling strategies, sorted.

    Returns:
        Valid `--strategy` values.
    """
    return sorted(sampler_type.get_cli_name() for sampler_type in get_samplers())

"""Problem files for the worked examples and benchmark instances."""

from importlib import resources


def path(name: str):
    """Filesystem path of fixture ``name`` (with or without ``.json``)."""
    if not name.endswith(".json"):
        name += ".json"
    return resources.files(__name__).joinpath(name)

"""Collective self-trapping of cold atoms in a driven optical cavity."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("selftrap")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0+src"

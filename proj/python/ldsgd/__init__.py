"""Decentralized SGD with scheduled local updates: simulator and
bound-verification toolkit."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401

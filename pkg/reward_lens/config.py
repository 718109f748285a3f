"""
Process-level settings shared by the CLI and the HTTP service.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Optional, Union

DATA_ROOT_ENV = "REWARD_LENS_DATA"

DEFAULT_PORT = 8080
DEFAULT_BIND = "127.0.0.1"

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def data_root() -> Optional[Path]:
    """Directory named by ``REWARD_LENS_DATA``, if set."""
    value = os.environ.get(DATA_ROOT_ENV)
    return Path(value).expanduser() if value else None


def resolve_path(path: Union[str, Path]) -> Path:
    """
    Resolve a user-supplied file path.

    Relative paths are taken relative to ``REWARD_LENS_DATA`` when it is set
    and relative to the working directory otherwise.
    """
    resolved = Path(path).expanduser()
    root = data_root()
    if root is None or resolved.is_absolute():
        return resolved
    return root / resolved


def configure_logging(verbose: bool = False) -> None:
    """Send log records to stderr; DEBUG with ``verbose``, WARNING otherwise."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )

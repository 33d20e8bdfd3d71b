"""Versioned prompt templates (see README in this directory)."""

from functools import lru_cache
from importlib import resources

TEMPLATE_VERSION = 1


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files(__name__).joinpath(name).read_text(encoding="utf-8")

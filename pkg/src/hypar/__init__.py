"""Toolkit for hyperbolic-parabolic boundary symbols: block splittings of the
low-frequency symbol, extension of the stable bundle to the zero-radius
sphere, Kreiss-type symmetrizer certificates, stability determinants, and
conjugation-based energy audits.

Submodules are imported lazily on attribute access so that light uses
(e.g. the catalog) do not pay for the heavy ones."""

import importlib

__all__ = [
    "cli",
    "conjugation",
    "errors",
    "evans",
    "subspaces",
    "symbols",
    "symmetrizers",
    "systems",
]

__version__ = "0.1.0"


def __getattr__(name):
    if name in __all__:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

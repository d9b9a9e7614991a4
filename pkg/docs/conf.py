# Sphinx configuration for the pyrsweep docs.
#
# Build with ``sphinx-build -b html docs docs/_build``. The API pages are
# generated by autodoc from api_reference.rst, so the package must import.

import os
import sys

sys.path.insert(0, os.path.abspath(".."))

from pyrsweep import __version__  # noqa: E402

# -- Project information -----------------------------------------------------

project = "pyrsweep"
copyright = "2025, pyrsweep developers"
author = "pyrsweep developers"

release = __version__
version = ".".join(release.split(".")[:2])

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
]

exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

# plyfile is only needed to read and write clouds, not to render signatures
autodoc_mock_imports = ["plyfile"]

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"

# -- Extension configuration -------------------------------------------------

# Docstrings use the Google "Args:/Returns:/Raises:" layout
napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_use_param = True
napoleon_use_rtype = True

autodoc_default_options = {
    "members": True,
    "member-order": "bysource",
    "undoc-members": True,
    "exclude-members": "__weakref__",
}
# Dataclass fields carry their types in the signature
autodoc_typehints = "description"

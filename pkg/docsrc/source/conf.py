# Sphinx configuration for the ncbmo_torch API pages and tutorials.

import os, sys

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
sys.path.insert(0, ROOT)

from ncbmo_torch import __version__

# -- Project information -----------------------------------------------------

project = "ncbmo_torch"
release = __version__
version = ".".join(__version__.split(".")[:2])

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.napoleon",
    "sphinx.ext.mathjax",
    "sphinx.ext.viewcode",
    "sphinx_autodoc_typehints",
]

templates_path = ["_templates"]
exclude_patterns = ["_autosummary/*"]

# API pages are generated from the autosummary tables in ncbmo_torch.rst
autosummary_generate = True
autodoc_default_options = {
    "members": True,
    "undoc-members": False,
    "member-order": "bysource",
}
autodoc_mock_imports = ["torch.utils.tensorboard"]
napoleon_google_docstring = True
napoleon_numpy_docstring = False
typehints_fully_qualified = False

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_book_theme"
html_title = "ncbmo_torch %s" % release
html_theme_options = {
    "show_toc_level": 2,
    "home_page_in_toc": True,
}

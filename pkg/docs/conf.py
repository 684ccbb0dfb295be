# Configuration file for the Sphinx documentation builder.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys


sys.path.insert(0, os.path.abspath("../src"))

from kgalign import __version__  # noqa: E402


project = "kgalign"
author = "kgalign maintainers"
copyright = "2026 kgalign maintainers"
release = __version__
language = "en"
extensions = [
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
    "sphinx.ext.todo",
    "sphinx_autodoc_typehints",
    "autoapi.extension",
    "myst_parser",
]
source_suffix = [".rst", ".md"]
master_doc = "index"
html_theme = "alabaster"
add_module_names = True
autoclass_content = "both"
set_type_checking_flag = True
myst_enable_extensions = ["colon_fence"]
autoapi_dirs = ["../src"]
autoapi_type = "python"
autoapi_typehints = "both"
autoapi_options = [
    "members",
    "undoc-members",
    "show-inheritance",
    "show-module-summary",
]

intersphinx_mapping = {
    "python": ("https://docs.python.org/{.major}".format(sys.version_info), None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "httpx": ("https://www.python-httpx.org/", None),
}

# Configuration file for the Sphinx documentation builder.
#
# Only the options this project changes from the sphinx-quickstart
# defaults are listed. For the full list see
# http://www.sphinx-doc.org/en/master/config

import os
import sys

sys.path.insert(0, os.path.abspath("../.."))


# -- Project information -----------------------------------------------------

project = "conformgreen"
copyright = "The conformgreen developers"
author = "The conformgreen developers"

# The full version, including alpha/beta/rc tags
release = "0.1.0"


# -- General configuration ---------------------------------------------------

extensions = ["sphinx.ext.autodoc"]

templates_path = ["_templates"]

exclude_patterns = []


# -- Options for HTML output -------------------------------------------------

html_theme = "alabaster"

html_static_path = ["_static"]

autodoc_member_order = "groupwise"

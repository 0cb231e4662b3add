# -*- coding: utf-8 -*-
#
# mfgmp documentation build configuration file.

import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join('..', 'src')))

from mfgmp._version import __version__  # noqa: E402

# -- General configuration ------------------------------------------------

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.napoleon']
autoclass_content = "both"
autodoc_member_order = "bysource"
autodoc_default_options = {"members": True, "undoc-members": True, "show-inheritance": True}

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'sphinx_index'

project = 'mfgmp'
copyright = '2026, the mfgmp developers'
author = 'the mfgmp developers'

version = '.'.join(__version__.split('.')[:2])
release = __version__

exclude_patterns = ['_build']
pygments_style = 'sphinx'

# -- Options for HTML output ----------------------------------------------

html_theme = 'default'
html_static_path = []
htmlhelp_basename = 'mfgmpdoc'

# -- Options for LaTeX output ---------------------------------------------

latex_documents = [('sphinx_index', 'mfgmp.tex', 'mfgmp Documentation', author, 'manual')]

# -- Options for manual page output ---------------------------------------

man_pages = [('sphinx_index', 'mfgmp', 'mfgmp Documentation', [author], 1)]

"""Sphinx configuration."""
import inspect
import os
import shutil
import sys

from docutils import nodes

__location__ = os.path.join(os.getcwd(), os.path.dirname(inspect.getfile(inspect.currentframe())))
sys.path.insert(0, os.path.join(__location__, "../src"))

from meta_risk_insights import __version__  # noqa: E402

BADGE = "img.shields.io/badge/meta_risk_insights-<version>-blue"


def update_version_badge(app: object, doctree: object, docname: str) -> None:
    """Replace the version placeholder of the release badge.

    Args:
        app: The Sphinx application object.
        doctree: The document tree.
        docname: The document name.
    """
    for image_node in doctree.traverse(nodes.image):
        if BADGE in image_node["uri"]:
            image_node["uri"] = (
                f"https://img.shields.io/badge/meta_risk_insights-{__version__}-blue"
            )


def setup(app):
    app.connect("doctree-resolved", update_version_badge)


# -- API pages ---------------------------------------------------------------
# Read the Docs does not run sphinx-apidoc, so the API pages are generated here.

try:  # for Sphinx >= 1.7
    from sphinx.ext import apidoc
except ImportError:
    from sphinx import apidoc

output_dir = os.path.join(__location__, "api")
module_dir = os.path.join(__location__, "../src/meta_risk_insights")
shutil.rmtree(output_dir, ignore_errors=True)
try:
    apidoc.main(["--implicit-namespaces", "-f", "-o", output_dir, module_dir])
except Exception as e:
    print(f"Running `sphinx-apidoc` failed!\n{e}")

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.viewcode",
    "sphinx.ext.doctest",
    "sphinx.ext.mathjax",
    "sphinx.ext.napoleon",
    "sphinx_rtd_theme",
    "sphinx_toolbox",
]

github_username = "aydabd"
github_repository = "meta-risk-insights"
autodoc_mock_imports = ["loguru", "numpy", "scipy"]
always_document_param_types = True
typehints_defaults = "braces-after"

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"

project = "meta-risk-insights"
copyright = "2023, Aydin Abdi"
author = "Aydin Abdi"

version = __version__
if not version or version == "0.0.0":
    version = os.getenv("READTHEDOCS_VERSION", "unknown")
release = version

pygments_style = "sphinx"
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store", ".venv"]

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
html_theme_options = {
    "prev_next_buttons_location": "bottom",
    "style_nav_header_background": "#2980B9",
    "collapse_navigation": True,
    "sticky_navigation": True,
    "navigation_depth": 2,
}
htmlhelp_basename = "meta-risk-insights-doc"

print(f"loading configurations for {project} {version} ...", file=sys.stderr)

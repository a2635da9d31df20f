from datetime import datetime, timezone
import os.path
import shutil
from pathlib import Path
from typing import Any

import toml

sphinx_path = Path(__file__).parent.parent
project_path = sphinx_path.parent
package_toindex = str(project_path / "src" / "stfactor")

# Clean old builded files
for stale in (sphinx_path / "build" / "doctrees", sphinx_path / "build" / "html", sphinx_path / "source" / "autoapi"):
    if os.path.isdir(stale):
        shutil.rmtree(stale)


def _load_project_metadata() -> dict[str, Any]:
    try:
        data = toml.load(project_path / "pyproject.toml")
    except (OSError, toml.TomlDecodeError):
        return {}
    return data.get("project", {}) or {}


project_metadata = _load_project_metadata()
project = project_metadata.get("name", "stfactor")
version = project_metadata.get("version", "0.0.0")
release = version

author = ", ".join(a["name"] for a in project_metadata.get("authors", []) if a.get("name")) or "Unknown"
copyright = f"{datetime.now(timezone.utc).year}, {author}"


extensions = [
    'sphinx_autoindex',
    'myst_parser',
    'sphinx_rtd_theme',
    'sphinx.ext.autodoc',
    'sphinx.ext.viewcode',
    'sphinx.ext.mathjax',
    'sphinx_copybutton',
    'sphinx-prompt',
    'sphinx.ext.todo'
]

source_suffix = {
    '.rst': 'restructuredtext',
    '.md': 'markdown',
}

sai_autodoc_global_config = {
    "members": {},
    "undoc-members": True,
    "show-inheritance": True,
    "exclude-members": {"model_config", "model_fields"},
    "member-order": "bysource",
}

# argparse plumbing only, the subcommands are documented in index.rst
sai_autodoc_specific_config = {
    "stfactor.main": {
        "no-index": True
    }
}

templates_path = ['_templates']
exclude_patterns = []

html_theme = 'sphinx_rtd_theme'
html_show_sphinx = False
html_theme_options = {
    'logo_only': False,
    'version_selector': True
}

# Pydantic models trigger duplicate-object warnings through inherited members
suppress_warnings = ["autodoc.import_object"]

rst_epilog = """
.. |project_name| replace:: {project}
.. |version| replace:: {version}
""".format(project=project, version=version)

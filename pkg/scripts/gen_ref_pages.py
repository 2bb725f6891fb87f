"""Build the API reference pages for the documentation site.

Each module under `src/rosepo_lab` gets a page holding a single mkdocstrings directive. Package `__init__` modules
become section index pages and `__main__` is skipped.
"""

from pathlib import Path

import mkdocs_gen_files

PACKAGE = "rosepo_lab"

root = Path(__file__).parent.parent
src = root / "src"
nav = mkdocs_gen_files.Nav()

for source in sorted((src / PACKAGE).rglob("*.py")):
    relative = source.relative_to(src)
    parts = relative.with_suffix("").parts
    if parts[-1] == "__main__":
        continue

    page = relative.with_suffix(".md")
    if parts[-1] == "__init__":
        parts = parts[:-1]
        page = page.with_name("index.md")
    nav[parts] = page.as_posix()

    reference_page = Path("reference", page)
    with mkdocs_gen_files.open(reference_page, "w") as file:
        _ = file.write(f"::: {'.'.join(parts)}\n")
    mkdocs_gen_files.set_edit_path(reference_page, source.relative_to(root))

with mkdocs_gen_files.open("reference/SUMMARY.md", "w") as summary:
    summary.writelines(nav.build_literate_nav())

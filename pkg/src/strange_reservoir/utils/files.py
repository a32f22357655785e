from pathlib import Path
from typing import Final, Iterator

CONFIG_SUFFIX: Final = ".json"
# files a finished run leaves behind; never configs
RUN_OUTPUTS: Final = frozenset({"summary.json", "diagnostics.json"})
SKIPPED_DIRECTORIES: Final = frozenset(
    {"build", "dist", "_build", "buck-out", "venv", "__pypackages__"}
)


def is_skipped_dir(path: Path) -> bool:
    """Hidden, build and virtualenv directories, and run output folders."""
    if path.name.startswith(".") or path.name in SKIPPED_DIRECTORIES:
        return True
    return (path / "summary.json").is_file()


def gen_config_files_in_dir(path: Path) -> Iterator[Path]:
    """Experiment configs below ``path``, depth first in sorted order."""
    for child in sorted(path.iterdir()):
        if child.is_dir():
            if not is_skipped_dir(child):
                yield from gen_config_files_in_dir(child)
        elif child.suffix == CONFIG_SUFFIX and child.name not in RUN_OUTPUTS:
            yield child

"""Console output for the command line.

Everything goes to stderr; stdout stays free for ``--version`` and help.
"""

import tempfile
from typing import Any, Optional

from click import echo, style
from mypy_extensions import mypyc_attr


@mypyc_attr(patchable=True)
def _emit(message: Optional[str], nl: bool, **styles: Any) -> None:
    if message is not None:
        message = style(message, **styles)
    echo(message, nl=nl, err=True)


def out(message: Optional[str] = None, nl: bool = True, **styles: Any) -> None:
    styles.setdefault("bold", True)
    _emit(message, nl, **styles)


def err(message: Optional[str] = None, nl: bool = True, **styles: Any) -> None:
    styles.setdefault("fg", "red")
    _emit(message, nl, **styles)


def metric_line(name: str, value: float, passed: Optional[bool]) -> str:
    """``name = value`` styled green or red when it carries a threshold."""
    text = f"  {name} = {value:.6g}"
    if passed is None:
        return text
    return style(text, fg="green" if passed else "red")


def dump_to_file(*chunks: str) -> str:
    """Write each chunk as a newline-terminated block to a temporary
    ``.json`` file and return its path. The caller removes the file."""
    text = "".join(c if c.endswith("\n") else c + "\n" for c in chunks if c)
    with tempfile.NamedTemporaryFile(
        mode="w", prefix="srs_", suffix=".json", delete=False, encoding="utf8"
    ) as f:
        f.write(text)
    return f.name

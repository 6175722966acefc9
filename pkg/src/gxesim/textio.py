"""Small helpers shared by the TSV readers and writers."""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager
from pathlib import Path


def data_lines(fh):
    """Yield lines of ``fh`` that are neither blank nor ``#`` comments."""
    for line in fh:
        if line.strip() and not line.startswith("#"):
            yield line


@contextmanager
def atomic_path(path):
    """Yield a temporary sibling path that replaces ``path`` on clean exit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def prepend_comments(path, comments: list[str], marker: str = "#") -> None:
    """Rewrite ``path`` with ``comments`` as leading comment lines."""
    path = Path(path)
    body = path.read_text()
    if marker == "#":
        head = "".join(f"# {c}\n" for c in comments)
    else:
        head = "".join(f"<!-- {c} -->\n" for c in comments)
    path.write_text(head + body)

"""CSV writers: header row, fixed-precision values, trailing metadata block.

Outputs are byte-identical across reruns of the same config: the metadata
carries the tool version and config hash, never timestamps.
"""

from __future__ import annotations

import os

from . import __version__ as _pkg_version


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path, header, rows, meta=None):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            if isinstance(row, dict):
                fh.write(",".join(_fmt(row[h]) for h in header) + "\n")
            else:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        fh.write(f"# tool_version = {_pkg_version}\n")
        for key, val in (meta or {}).items():
            fh.write(f"# {key} = {val}\n")


def write_series(path, xs, ys, labels=("x", "y"), meta=None):
    """Two-column plot-data variant."""
    write_csv(path, list(labels), list(zip(xs, ys)), meta)

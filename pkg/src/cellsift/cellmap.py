"""Static SVG maps of flagged cells.

One rectangle per cell, or per block of cells when the matrix is too
large to show cell by cell; a block's fill is the per-channel mean of
its member colors.  All geometry is integer arithmetic and the output
carries no timestamps, so identical inputs give identical bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

__all__ = ["DEFAULT_PALETTE", "CellMapSpec", "render_cell_map", "load_palette_file"]

DEFAULT_PALETTE = {
    "unflagged": "#FFFF00",
    "positive": "#FF0000",
    "negative": "#0000FF",
    "missing": "#FFFFFF",
    "row_marker": "#000000",
}

_CELL = 14        # pixel size of one block
_STRIP = 10       # width of the row-flag strip
_GAP = 4          # gap between strip and grid
_CHAR = 7         # monospace advance used for label margins
_PAD = 8

_HEX_RE = re.compile(r"^#[0-9A-Fa-f]{6}$")


@dataclass(frozen=True)
class CellMapSpec:
    """Rendering options: block size, row-flag strip, colors."""

    block_rows: int = 1
    block_cols: int = 1
    show_row_flags: bool = True
    palette: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.block_rows < 1 or self.block_cols < 1:
            raise ValueError("block sizes must be at least 1")
        for key, value in self.palette.items():
            if key not in DEFAULT_PALETTE:
                raise ValueError(f"unknown palette entry {key!r}")
            if not _HEX_RE.match(value):
                raise ValueError(f"palette entry {key!r} is not #RRGGBB")

    def resolved_palette(self) -> dict:
        merged = dict(DEFAULT_PALETTE)
        merged.update(self.palette)
        return merged


def load_palette_file(path) -> dict:
    """Read palette overrides from a flat ``key = #RRGGBB`` file."""
    overrides = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            # whole-line comments only: color values themselves contain '#'
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected 'key = #RRGGBB'")
            key, _, value = stripped.partition("=")
            overrides[key.strip()] = value.strip()
    CellMapSpec(palette=overrides)  # validates keys and formats
    return overrides


def _rgb(hexcolor: str):
    return (
        int(hexcolor[1:3], 16),
        int(hexcolor[3:5], 16),
        int(hexcolor[5:7], 16),
    )


def _hex(rgb) -> str:
    return "#{:02X}{:02X}{:02X}".format(*rgb)


def _mean_color(colors) -> str:
    count = len(colors)
    sums = [0, 0, 0]
    for c in colors:
        sums[0] += c[0]
        sums[1] += c[1]
        sums[2] += c[2]
    return _hex(tuple(int(s / count + 0.5) for s in sums))


def _range_label(labels, lo, hi) -> str:
    if hi == lo:
        return str(labels[lo])
    return f"{labels[lo]}-{labels[hi]}"


def render_cell_map(result, spec: CellMapSpec | None = None, path=None) -> str:
    """Render the cell flags of a DetectionResult as an SVG string.

    Cells are yellow when unflagged, red when flagged high, blue when
    flagged low, white when missing; a left strip marks flagged rows in
    black.  When ``path`` is given the SVG is also written there.
    """
    spec = spec or CellMapSpec()
    palette = {k: _rgb(v) for k, v in spec.resolved_palette().items()}
    analyzed = result.analyzed
    flags = result.cell_flags
    missing = analyzed.missing
    row_flags = result.row_flags
    n, d = analyzed.shape

    nblk_rows = -(-n // spec.block_rows)
    nblk_cols = -(-d // spec.block_cols)
    row_labels = [
        _range_label(
            analyzed.row_labels, bi * spec.block_rows,
            min((bi + 1) * spec.block_rows, n) - 1,
        )
        for bi in range(nblk_rows)
    ]
    col_labels = [
        _range_label(
            analyzed.col_labels, bj * spec.block_cols,
            min((bj + 1) * spec.block_cols, d) - 1,
        )
        for bj in range(nblk_cols)
    ]

    left = _CHAR * max(len(t) for t in row_labels) + 2 * _PAD
    top = _CHAR * max(len(t) for t in col_labels) + 2 * _PAD
    strip_w = (_STRIP + _GAP) if spec.show_row_flags else 0
    grid_x = left + strip_w
    width = grid_x + nblk_cols * _CELL + _PAD
    height = top + nblk_rows * _CELL + _PAD

    def cell_color(i, j):
        if missing[i, j]:
            return palette["missing"]
        if flags[i, j] > 0:
            return palette["positive"]
        if flags[i, j] < 0:
            return palette["negative"]
        return palette["unflagged"]

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="#FFFFFF"/>',
        '<g font-family="monospace" font-size="11" fill="#000000">',
    ]
    for bi, text in enumerate(row_labels):
        y = top + bi * _CELL + _CELL // 2 + 4
        parts.append(
            f'<text x="{left - _PAD}" y="{y}" text-anchor="end">'
            f"{escape(text)}</text>"
        )
    for bj, text in enumerate(col_labels):
        x = grid_x + bj * _CELL + _CELL // 2 + 4
        y = top - _PAD
        parts.append(
            f'<text x="{x}" y="{y}" text-anchor="start" '
            f'transform="rotate(-90 {x} {y})">{escape(text)}</text>'
        )
    parts.append("</g>")

    if spec.show_row_flags:
        marker = palette["row_marker"]
        clear = palette["missing"]
        for bi in range(nblk_rows):
            rows = range(
                bi * spec.block_rows, min((bi + 1) * spec.block_rows, n)
            )
            color = _mean_color(
                [marker if row_flags[i] else clear for i in rows]
            )
            parts.append(
                f'<rect class="row-strip" x="{left}" y="{top + bi * _CELL}" '
                f'width="{_STRIP}" height="{_CELL}" fill="{color}" '
                f'stroke="#808080" stroke-width="1"/>'
            )

    for bi in range(nblk_rows):
        rows = range(bi * spec.block_rows, min((bi + 1) * spec.block_rows, n))
        for bj in range(nblk_cols):
            cols = range(
                bj * spec.block_cols, min((bj + 1) * spec.block_cols, d)
            )
            color = _mean_color(
                [cell_color(i, j) for i in rows for j in cols]
            )
            parts.append(
                f'<rect class="cell-block" x="{grid_x + bj * _CELL}" '
                f'y="{top + bi * _CELL}" width="{_CELL}" height="{_CELL}" '
                f'fill="{color}" stroke="#808080" stroke-width="1"/>'
            )

    parts.append("</svg>")
    svg = "\n".join(parts) + "\n"
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(svg)
    return svg

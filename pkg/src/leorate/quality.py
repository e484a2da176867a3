"""Table-driven reconstruction-quality surrogate.

Maps (received SNR, encoder channel count) to (PSNR, MS-SSIM) by linear
interpolation along the SNR axis of a monotone lookup surface.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


class QualityTableError(ValueError):
    """Malformed or non-monotone quality table file."""


@dataclass(frozen=True)
class QualityTable:
    snr_grid: np.ndarray
    channel_grid: tuple[int, ...]
    psnr_surface: np.ndarray  # shape (len(snr_grid), len(channel_grid))
    msssim_surface: np.ndarray

    def __post_init__(self) -> None:
        problems = validate_surface(self.snr_grid, self.channel_grid,
                                    self.psnr_surface, self.msssim_surface)
        if problems:
            raise QualityTableError("; ".join(problems))
        for arr in (self.snr_grid, self.psnr_surface, self.msssim_surface):
            arr.setflags(write=False)

    def column(self, channel_count: int) -> int:
        try:
            return self.channel_grid.index(int(channel_count))
        except ValueError:
            raise QualityTableError(
                f"channel count {channel_count} not in table {self.channel_grid}") from None


def validate_surface(snr_grid, channel_grid, psnr, msssim) -> list[str]:
    """Return a list of human-readable problems; empty means valid."""
    problems = []
    snr_grid = np.asarray(snr_grid, dtype=float)
    if snr_grid.ndim != 1 or snr_grid.size == 0 or len(channel_grid) == 0:
        return ["grids must be non-empty 1-D sequences"]
    shape = (snr_grid.size, len(channel_grid))
    for name, surf in (("psnr", psnr), ("msssim", msssim)):
        if np.shape(surf) != shape:
            problems.append(f"{name} surface has shape {np.shape(surf)}, expected {shape}")
    if problems:
        return problems
    if np.any(np.diff(snr_grid) <= 0):
        problems.append("snr grid must be strictly ascending")
    if np.any(np.diff(channel_grid) <= 0):
        problems.append("channel grid must be strictly ascending")
    if np.any(~np.isfinite(psnr)) or np.any(psnr <= 0):
        problems.append("psnr values must be finite and > 0")
    if np.any(~np.isfinite(msssim)) or np.any((msssim <= 0) | (msssim > 1)):
        problems.append("msssim values must lie in (0, 1]")
    for name, surf in (("psnr", psnr), ("msssim", msssim)):
        if np.any(np.diff(surf, axis=0) < 0):
            problems.append(f"{name} decreases with snr")
        if np.any(np.diff(surf, axis=1) < 0):
            problems.append(f"{name} decreases with channel count")
    return problems


def quality_of(table: QualityTable, snr: float, channel_count: int) -> tuple[float, float]:
    """Surrogate (PSNR dB, MS-SSIM) at ``snr`` dB for channel count ``channel_count``."""
    col = table.column(channel_count)
    grid = table.snr_grid
    x = min(max(float(snr), grid[0]), grid[-1])
    psnr = float(np.interp(x, grid, table.psnr_surface[:, col]))
    msssim = float(np.interp(x, grid, table.msssim_surface[:, col]))
    return psnr, msssim


def _parse_block(rows, start_line):
    header_line, header = rows[0]
    if header[0].strip().lower() != "snr_db":
        raise QualityTableError(f"line {header_line}: expected header starting with 'snr_db'")
    try:
        channels = tuple(int(c) for c in header[1:])
    except ValueError as exc:
        raise QualityTableError(f"line {header_line}: bad channel count ({exc})") from None
    snrs, values = [], []
    for lineno, cells in rows[1:]:
        if len(cells) != len(channels) + 1:
            raise QualityTableError(
                f"line {lineno}: expected {len(channels) + 1} fields, got {len(cells)}")
        try:
            nums = [float(c) for c in cells]
        except ValueError as exc:
            raise QualityTableError(f"line {lineno}: {exc}") from None
        snrs.append(nums[0])
        values.append(nums[1:])
    if not snrs:
        raise QualityTableError(f"line {start_line}: block has no data rows")
    return channels, np.array(snrs), np.array(values), [ln for ln, _ in rows[1:]]


def _locate(surface, grid_lines, axis):
    """First line number at which ``surface`` decreases along ``axis``."""
    bad = np.argwhere(np.diff(surface, axis=axis) < 0)
    if bad.size == 0:
        return None
    row = bad[0][0] + (1 if axis == 0 else 0)
    return grid_lines[row]


def load_table(path: str | Path) -> QualityTable:
    """Read a stacked-block CSV (``[psnr]`` then ``[msssim]``) into a QualityTable.

    Lines starting with ``#`` and blank lines are ignored. Monotonicity
    violations are reported with the offending line number.
    """
    text = Path(path).read_text()
    blocks: dict[str, list] = {}
    starts: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in ("psnr", "msssim"):
                raise QualityTableError(f"line {lineno}: unknown block {line}")
            if current in blocks:
                raise QualityTableError(f"line {lineno}: duplicate block {line}")
            blocks[current] = []
            starts[current] = lineno
            continue
        if current is None:
            raise QualityTableError(f"line {lineno}: data before any [psnr]/[msssim] block")
        blocks[current].append((lineno, [c.strip() for c in line.split(",")]))
    for name in ("psnr", "msssim"):
        if not blocks.get(name):
            raise QualityTableError(f"{path}: missing [{name}] block")

    ch_p, snr_p, psnr, lines_p = _parse_block(blocks["psnr"], starts["psnr"])
    ch_m, snr_m, msssim, lines_m = _parse_block(blocks["msssim"], starts["msssim"])
    if ch_p != ch_m:
        raise QualityTableError(f"line {blocks['msssim'][0][0]}: channel header differs from [psnr]")
    if snr_p.shape != snr_m.shape or np.any(snr_p != snr_m):
        raise QualityTableError(f"line {starts['msssim']}: snr grid differs from [psnr] block")
    if np.any(np.diff(snr_p) <= 0):
        bad = int(np.argmax(np.diff(snr_p) <= 0)) + 1
        raise QualityTableError(f"line {lines_p[bad]}: snr grid not strictly ascending")
    for name, surf, lines in (("psnr", psnr, lines_p), ("msssim", msssim, lines_m)):
        ln = _locate(surf, lines, axis=0)
        if ln is not None:
            raise QualityTableError(f"line {ln}: {name} decreases with snr")
        ln = _locate(surf, lines, axis=1)
        if ln is not None:
            raise QualityTableError(f"line {ln}: {name} decreases with channel count")
    return QualityTable(snr_p, ch_p, psnr, msssim)


def default_table_path() -> Path:
    return Path(str(resources.files("leorate") / "data" / "quality_table.csv"))


def default_table() -> QualityTable:
    return load_table(default_table_path())


def content_jitter(rng: np.random.Generator, psnr_bound: float = 1.5,
                   msssim_bound: float = 0.01) -> tuple[float, float]:
    """Zero-mean bounded per-image quality offset (uniform within the bounds)."""
    return (float(rng.uniform(-psnr_bound, psnr_bound)),
            float(rng.uniform(-msssim_bound, msssim_bound)))

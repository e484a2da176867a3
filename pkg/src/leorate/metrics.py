"""Episode aggregation, comparison tables and trace files."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .env import EnvConfig, FrameQuality, StepRecord, rate_levels

TABLE_ORDER = ("rl_dqn", "max_rate", "mid_rate", "min_rate")
ABLATION_ORDER = ("wo_snr_pred", "snr_pred_pl_only", "snr_pred_encoder")

STEP_TRACE_COLUMNS = ("step", "elevation", "snr", "snr_pred", "action_C", "admitted",
                      "dropped", "forwarded", "qualified", "q_post", "r_tilde",
                      # extra columns so a trace can be re-aggregated on its own
                      "action", "commanded_snr", "q_pre", "q_post_enqueue",
                      "p_over", "p_under", "p_drop")
QUEUE_LOG_COLUMNS = ("step", "q_len_pre", "q_len_post_enqueue", "q_len_post_drain",
                     "admitted", "dropped", "forwarded")
FRAME_TRACE_COLUMNS = ("frame_id", "C", "snr", "psnr", "msssim", "qualified")


@dataclass
class EpisodeReport:
    qualified: int = 0
    forwarded: int = 0
    dropped: int = 0
    residual_queued: int = 0
    offered: int = 0
    mean_channel: float = 0.0
    mean_cbr: float = 0.0
    cbr_at_fwd: float | None = None
    qual_over_fwd: float | None = None
    total_return: float = 0.0
    occupancy_trace: list[float] = field(default_factory=list)
    peak_occupancy_trace: list[float] = field(default_factory=list)
    per_step_qualified: list[int] = field(default_factory=list)
    channel_trace: list[int] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.channel_trace)


def summarize(records: list[StepRecord], config: EnvConfig,
              frames: list[FrameQuality] | None = None,
              residual: int | None = None) -> EpisodeReport:
    """Exact counters and per-decision means over one episode's step records."""
    if not records:
        return EpisodeReport()
    ratio = {lv.channel_count: lv.ratio for lv in rate_levels(config.channels, config.stages)}
    admitted = sum(r.admitted for r in records)
    fwd = sum(r.forwarded for r in records)
    rep = EpisodeReport(
        qualified=sum(r.qualified for r in records),
        forwarded=fwd,
        dropped=sum(r.dropped for r in records),
        residual_queued=admitted - fwd if residual is None else residual,
        offered=admitted + sum(r.dropped for r in records),
        mean_channel=float(np.mean([r.channel_count for r in records])),
        mean_cbr=float(np.mean([ratio[r.channel_count] for r in records])),
        total_return=float(sum(r.reward for r in records)),
        occupancy_trace=[r.q_len_post_drain / config.q_max for r in records],
        peak_occupancy_trace=[r.q_len_post_enqueue / config.q_max for r in records],
        per_step_qualified=[r.qualified for r in records],
        channel_trace=[r.channel_count for r in records],
    )
    if rep.residual_queued != admitted - fwd:
        raise ValueError("residual count disagrees with admitted - forwarded")
    if fwd:
        rep.qual_over_fwd = 100.0 * rep.qualified / fwd
    if frames:
        rep.cbr_at_fwd = float(np.mean([ratio[f.channel_count] for f in frames]))
    return rep


def _fmt(v, digits):
    return "" if v is None else f"{v:.{digits}f}"


def _ordered(names, preferred):
    head = [n for n in preferred if n in names]
    return head + [n for n in names if n not in head]


def compare(reports: dict[str, EpisodeReport]) -> tuple[str, str]:
    """Policy comparison rows in canonical policy order; returns ``(text, csv)``."""
    if not reports:
        raise ValueError("need at least one report")
    header = ["policy", "qualified", "forwarded", "dropped", "mean_channel", "mean_cbr",
              "qual_fwd_pct"]
    rows = []
    for name in _ordered(list(reports), TABLE_ORDER):
        r = reports[name]
        rows.append([name, str(r.qualified), str(r.forwarded), str(r.dropped),
                     _fmt(r.mean_channel, 2), _fmt(r.mean_cbr, 6), _fmt(r.qual_over_fwd, 2)])
    return _render(header, rows), _csv(header, rows)


def compare_ablation(reports: dict[str, EpisodeReport]) -> tuple[str, str]:
    """Metrics-by-arm layout (one column per ablation arm)."""
    if not reports:
        raise ValueError("need at least one report")
    arms = _ordered(list(reports), ABLATION_ORDER)
    metrics = [
        ("qualified", lambda r: str(r.qualified)),
        ("forwarded", lambda r: str(r.forwarded)),
        ("dropped", lambda r: str(r.dropped)),
        ("mean_channel_number", lambda r: _fmt(r.mean_channel, 2)),
        ("mean_cbr", lambda r: _fmt(r.mean_cbr, 4)),
        ("cbr_at_fwd", lambda r: _fmt(r.cbr_at_fwd, 4)),
        ("qual/fwd (%)", lambda r: _fmt(r.qual_over_fwd, 3)),
    ]
    header = ["metric", *arms]
    rows = [[m, *(f(reports[a]) for a in arms)] for m, f in metrics]
    return _render(header, rows), _csv(header, rows)


def _render(header, rows) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: " | ".join(str(c).rjust(w) for c, w in zip(cells, widths))
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(header), sep, *(line(r) for r in rows)]) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# -- trace files ------------------------------------------------------------

def _writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_step_trace(records: list[StepRecord], path: str | Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(STEP_TRACE_COLUMNS)
        for r in records:
            w.writerow([r.step, repr(r.elevation), repr(r.snr), repr(r.snr_pred),
                        r.channel_count, r.admitted, r.dropped, r.forwarded, r.qualified,
                        r.q_len_post_drain, repr(r.reward), r.action, repr(r.commanded_snr),
                        r.q_len_pre, r.q_len_post_enqueue, repr(r.p_over), repr(r.p_under),
                        repr(r.p_drop)])


def read_step_trace(path: str | Path) -> list[StepRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(StepRecord(
            step=int(row["step"]), elevation=float(row["elevation"]), snr=float(row["snr"]),
            snr_pred=float(row["snr_pred"]), action=int(row["action"]),
            channel_count=int(row["action_C"]), commanded_snr=float(row["commanded_snr"]),
            q_len_pre=int(row["q_pre"]), q_len_post_enqueue=int(row["q_post_enqueue"]),
            q_len_post_drain=int(row["q_post"]), admitted=int(row["admitted"]),
            dropped=int(row["dropped"]), forwarded=int(row["forwarded"]),
            qualified=int(row["qualified"]), p_over=float(row["p_over"]),
            p_under=float(row["p_under"]), p_drop=float(row["p_drop"]),
            reward=float(row["r_tilde"])))
    return out


def write_queue_log(records: list[StepRecord], path: str | Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(QUEUE_LOG_COLUMNS)
        for r in records:
            w.writerow([r.step, r.q_len_pre, r.q_len_post_enqueue, r.q_len_post_drain,
                        r.admitted, r.dropped, r.forwarded])


def write_frame_trace(frames: list[FrameQuality], path: str | Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(FRAME_TRACE_COLUMNS)
        for f in frames:
            w.writerow([f.frame_id, f.channel_count, repr(f.snr), repr(f.psnr),
                        repr(f.msssim), f.qualified])


def write_report(report: EpisodeReport, path: str | Path) -> None:
    """Scalar fields of a report as a two-column CSV."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["field", "value"])
        for f in fields(report):
            v = getattr(report, f.name)
            if isinstance(v, list):
                continue
            w.writerow([f.name, "" if v is None else repr(v)])

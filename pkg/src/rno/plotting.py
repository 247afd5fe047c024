"""Static figures from a results table: metric versus sweep value per scheme."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from .experiments import RESULT_FIELDS
from .model import RNOError

PLOT_DATA_FIELDS = ("metric", "scheme", "sweep_var", "sweep_value", "mean", "stderr", "n_trials")
_LABELS = {"rate": "fairness rate [bits/s/Hz]", "ee": "fairness EE [bits/J/Hz]"}


class ResultsFormatError(RNOError):
    pass


def read_results(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != RESULT_FIELDS:
        raise ResultsFormatError(f"unexpected header {reader.fieldnames}; expected {list(RESULT_FIELDS)}")
    rows = []
    for i, r in enumerate(reader, start=2):
        try:
            rows.append({
                **r,
                "sweep_value": float(r["sweep_value"]) if r["sweep_value"] not in ("", None) else math.nan,
                "mean": float(r["mean"]),
                "stderr": float(r["stderr"]),
                "n_trials": int(r["n_trials"]),
            })
        except (TypeError, ValueError) as exc:
            raise ResultsFormatError(f"line {i}: {exc}") from None
    if not rows:
        raise ResultsFormatError("no data")
    return rows


def series(rows: list[dict]) -> dict[str, dict[str, list[dict]]]:
    """``{metric: {scheme: rows sorted by sweep value}}`` preserving first-seen order."""
    out: dict[str, dict[str, list[dict]]] = {}
    for r in rows:
        out.setdefault(r["metric"], {}).setdefault(r["scheme"], []).append(r)
    for by_scheme in out.values():
        for s in by_scheme:
            by_scheme[s].sort(key=lambda r: r["sweep_value"])
    return out


def plot_data_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_DATA_FIELDS)
    for metric, by_scheme in series(rows).items():
        for scheme, pts in by_scheme.items():
            for r in pts:
                w.writerow([metric, scheme, r["sweep_var"], repr(r["sweep_value"]), repr(r["mean"]),
                            repr(r["stderr"]), r["n_trials"]])
    return buf.getvalue()


def render(rows: list[dict], out_dir) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric, by_scheme in series(rows).items():
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        xlabel = ""
        for scheme, pts in by_scheme.items():
            x = [r["sweep_value"] for r in pts]
            x = list(range(len(pts))) if all(math.isnan(v) for v in x) else x
            ax.errorbar(x, [r["mean"] for r in pts], yerr=[r["stderr"] for r in pts],
                        marker="o", capsize=3, label=scheme)
            xlabel = pts[0]["sweep_var"] or "point"
        ax.set_xlabel(xlabel)
        ax.set_ylabel(_LABELS.get(metric, metric))
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    (out_dir / "plot_data.csv").write_text(plot_data_csv(rows))
    return paths

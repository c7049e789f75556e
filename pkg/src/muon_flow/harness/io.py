"""CSV and plot emission for diagnostics."""

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..diagnostics import DiagnosticsRecord  # noqa: E402
from ..errors import InvalidInput, NonPositiveForLog  # noqa: E402

COLUMNS = DiagnosticsRecord.columns()


def _fmt(x):
    return str(x) if isinstance(x, (int, np.integer)) else "%.17g" % x


def write_csv(records, path):
    """One row per record, floats with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([_fmt(v) for v in r.as_tuple()])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != COLUMNS:
        raise InvalidInput(f"{path}: unexpected header")
    return [
        DiagnosticsRecord(int(row[0]), *(float(x) for x in row[1:])) for row in rows[1:]
    ]


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else _fmt(v) if not isinstance(v, str) else v for v in row])


def write_plot(series, path, log_y=True, xlabel="t", ylabel="value", title=None):
    """Line plot of named ``(t, values)`` curves saved as SVG.

    ``series`` maps a legend label to a pair of equal-length arrays.
    """
    if not series:
        raise InvalidInput("nothing to plot")
    for name, (t, y) in series.items():
        y = np.asarray(y, dtype=np.float64)
        if len(t) != len(y) or len(y) == 0:
            raise InvalidInput(f"series {name!r} is empty or misaligned")
        if log_y and np.any(y <= 0):
            raise NonPositiveForLog(f"series {name!r} has nonpositive values")
    with plt.rc_context({"svg.hashsalt": "muon-flow", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for name, (t, y) in series.items():
            ax.plot(t, y, label=name, lw=1.2)
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)

"""Time-stamped scalar diagnostics and their CSV form."""

import csv
import io
from pathlib import Path

import numpy as np

from .errors import ContractViolation


class DiagnosticsSeries:
    """Named scalar channels sampled at strictly increasing times."""

    def __init__(self, channels):
        self.channels = list(channels)
        self.t = []
        self.data = {c: [] for c in self.channels}

    def append(self, t, **values):
        if self.t and not t > self.t[-1]:
            raise ContractViolation(f"time stamps must increase: {t} after {self.t[-1]}")
        missing = set(self.channels) - set(values)
        if missing:
            raise ContractViolation(f"missing channels {sorted(missing)}")
        self.t.append(float(t))
        for c in self.channels:
            self.data[c].append(float(values[c]))

    def __len__(self):
        return len(self.t)

    def array(self, name):
        if name == "t":
            return np.asarray(self.t)
        return np.asarray(self.data[name])

    def rows(self):
        for i, t in enumerate(self.t):
            yield [t] + [self.data[c][i] for c in self.channels]

    def to_csv(self, path, config_hash=None):
        write_csv(path, ["t"] + self.channels, self.rows(), config_hash)

    def time_average(self, name, t_start=None):
        """Trapezoid time average of a channel over [t_start, t_end]."""
        t = self.array("t")
        v = self.array(name)
        if t_start is not None:
            keep = t >= t_start
            t, v = t[keep], v[keep]
        if t.size == 0:
            raise ContractViolation("empty averaging window")
        if t.size == 1:
            return float(v[0])
        return float(np.trapezoid(v, t) / (t[-1] - t[0]))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows, config_hash=None):
    """CSV with an optional '# config_hash: ...' comment line, then a header row."""
    buf = io.StringIO()
    if config_hash is not None:
        buf.write(f"# config_hash: {config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path):
    """Return (header, rows) skipping comment lines; numeric cells become floats."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for r in reader:
        out = []
        for cell in r:
            try:
                out.append(float(cell))
            except ValueError:
                out.append(cell)
        rows.append(out)
    return header, rows

"""Sampled trajectories of per-mode 2x2 blocks and their text/JSON schema.

CSV column order (after a ``#`` comment header)::

    t, plus_s11, plus_s12, plus_s22, minus_s11, minus_s12, minus_s22[, extra...]

Floats are written with 17 significant digits so that files round-trip
exactly and identical runs give byte-identical output.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .params import TwoModeState, blocks_psd

BLOCK_COLUMNS = ("s11", "s12", "s22")


def fmt(x):
    return "%.17g" % x


@dataclass
class TimeSeries:
    t: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    extra: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.plus = np.asarray(self.plus, dtype=float).reshape(-1, 3)
        self.minus = np.asarray(self.minus, dtype=float).reshape(-1, 3)
        if not len(self.t) == len(self.plus) == len(self.minus):
            raise ValueError("time and block arrays differ in length")

    def __len__(self):
        return len(self.t)

    def state(self, i) -> TwoModeState:
        return TwoModeState.from_array(np.stack([self.plus[i], self.minus[i]]))

    def states(self):
        return [self.state(i) for i in range(len(self))]

    def all_psd(self, tol=1e-10):
        return bool(blocks_psd(self.plus, tol).all() and blocks_psd(self.minus, tol).all())

    def min_eigenvalue(self):
        def lo(b):
            tr = b[:, 0] + b[:, 2]
            det = b[:, 0] * b[:, 2] - b[:, 1] ** 2
            return 0.5 * tr - np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))

        return float(min(lo(self.plus).min(), lo(self.minus).min()))

    def __add__(self, other):
        if not np.array_equal(self.t, other.t):
            raise ValueError("time grids differ")
        return TimeSeries(self.t, self.plus + other.plus, self.minus + other.minus)

    def columns(self, prefix=""):
        names = ["t"]
        names += [f"{prefix}plus_{c}" for c in BLOCK_COLUMNS]
        names += [f"{prefix}minus_{c}" for c in BLOCK_COLUMNS]
        names += list(self.extra)
        return names

    def rows(self):
        extra = [np.asarray(v) for v in self.extra.values()]
        for i in range(len(self)):
            yield [self.t[i], *self.plus[i], *self.minus[i], *(v[i] for v in extra)]

    def to_csv(self, path=None, comment=None):
        buf = io.StringIO()
        if comment:
            for line in comment.splitlines():
                buf.write(f"# {line}\n")
        for k, v in self.meta.items():
            buf.write(f"# {k}: {v}\n")
        buf.write(",".join(self.columns()) + "\n")
        for row in self.rows():
            buf.write(",".join(fmt(x) for x in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self):
        return {
            "columns": self.columns(),
            "t": self.t.tolist(),
            "plus": self.plus.tolist(),
            "minus": self.minus.tolist(),
            "extra": {k: np.asarray(v).tolist() for k, v in self.extra.items()},
            "meta": self.meta,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d):
        return cls(d["t"], d["plus"], d["minus"], extra=d.get("extra", {}), meta=d.get("meta", {}))

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        header = lines[0].strip().split(",")
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        extra = {name: data[:, 7 + i] for i, name in enumerate(header[7:])}
        return cls(data[:, 0], data[:, 1:4], data[:, 4:7], extra=extra)

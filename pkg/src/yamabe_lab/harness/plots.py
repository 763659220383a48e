"""SVG line charts of a records table."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed hash salt keeps the SVG ids stable between runs
matplotlib.rcParams["svg.hashsalt"] = "yamabe-lab"


def _series(records, fn):
    t, y = [], []
    for r in records:
        v = fn(r)
        if v is not None and np.isfinite(v):
            t.append(r.t)
            y.append(v)
    return np.array(t), np.array(y)


def _pinch_scaled(r):
    if r.t > 0 and np.isfinite(r.f_max) and np.isfinite(r.delta):
        return r.f_max * (3 * r.t) ** r.delta
    return None


CHARTS = (
    ("sup_R.svg", "sup R", lambda r: r.sup_R, True),
    ("pinching.svg", "f_max (3t)^delta", _pinch_scaled, False),
    ("harnack.svg", "Z_min", lambda r: r.Z_min, False),
    ("eps_min.svg", "eps_min", lambda r: r.eps_min, False),
    ("type_one.svg", "(T - t) sup R", lambda r: r.Tm_t_supR, False),
)


def render_report(records, out_dir) -> list:
    """Write one SVG per chart; charts with no defined values are skipped."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, label, fn, log in CHARTS:
        t, y = _series(records, fn)
        if t.size == 0:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(t, y, lw=1.2)
        if log and np.all(y > 0):
            ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = out_dir / name
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written

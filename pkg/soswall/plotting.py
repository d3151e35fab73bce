"""SVG overlays of rescaled level lines on predicted limit curves, in unit-square coordinates."""

import io
from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from soswall.logging import logger as log  # noqa: E402
from soswall.storage import Storage  # noqa: E402

FIGURE_INCHES = 6.0
# Fixed salt so element ids, and with them the file bytes, repeat between runs
SVG_SALT = "soswall"
_COLORS = plt.get_cmap("tab10").colors


def render_svg(
    observed: Optional[Mapping[int, Sequence[np.ndarray]]] = None,
    predicted: Optional[Mapping[int, np.ndarray]] = None,
    title: Optional[str] = None,
) -> bytes:
    """Draw observed loops (solid) over predicted curves (dashed), one colour per index i.

    Args:
        observed: Index i -> rescaled loop vertex arrays of L_i.
        predicted: Index i -> closed limit curve W_i.
        title: Optional figure title.
    """
    observed = observed or {}
    predicted = predicted or {}
    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(FIGURE_INCHES, FIGURE_INCHES))
        try:
            ax.plot([0, 1, 1, 0, 0], [0, 0, 1, 1, 0], color="black", linewidth=0.8)
            for i in sorted(set(observed) | set(predicted)):
                color = _COLORS[i % len(_COLORS)]
                for k, loop in enumerate(observed.get(i, [])):
                    loop = np.asarray(loop)
                    ax.plot(loop[:, 0], loop[:, 1], color=color, linewidth=0.6, label=f"L_{i}" if k == 0 else None)
                if i in predicted:
                    curve = np.asarray(predicted[i])
                    ax.plot(curve[:, 0], curve[:, 1], color=color, linewidth=1.2, linestyle="--", label=f"W_{i}")
            ax.set_xlim(0.0, 1.0)
            ax.set_ylim(0.0, 1.0)
            ax.set_aspect("equal")
            ax.set_xlabel("x / L")
            ax.set_ylabel("y / L")
            if title:
                ax.set_title(title)
            if ax.get_legend_handles_labels()[0]:
                ax.legend(loc="upper right", fontsize="small")
            buffer = io.BytesIO()
            fig.savefig(buffer, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return buffer.getvalue()


def export_svg(
    storage: Storage,
    path: str,
    observed: Optional[Mapping[int, Sequence[np.ndarray]]] = None,
    predicted: Optional[Mapping[int, np.ndarray]] = None,
    title: Optional[str] = None,
) -> str:
    payload = render_svg(observed, predicted, title)
    written = storage.write_bytes(path, payload)
    log.debug(f"Wrote SVG overlay {written}")
    return written

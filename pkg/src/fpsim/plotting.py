"""Static SVG emission: mAP and exchanged bytes per round for each sweep cell.

Output is byte-stable for identical inputs: the Agg backend, a fixed
hash salt for SVG element ids, and a stripped creation date keep
repeated runs identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from fpsim.federation import RoundRecord


def _cell_label(strategy: str, q: float) -> str:
    if strategy == "standard":
        return "standard"
    return f"{strategy} q={q:g}"


def plot_records(
    cells: list[tuple[str, float, list[RoundRecord]]],
    path: str,
    warmup: int | None = None,
):
    """Two stacked panels: test mAP and per-round uplink volume."""
    with matplotlib.rc_context({"svg.hashsalt": "fpsim"}):
        fig, (ax_map, ax_bytes) = plt.subplots(
            2, 1, figsize=(7.0, 6.0), sharex=True
        )
        for strategy, q, records in cells:
            rounds = [r.round for r in records]
            label = _cell_label(strategy, q)
            ax_map.plot(rounds, [r.test_map for r in records], label=label)
            ax_bytes.plot(
                rounds,
                [r.uplink_bytes / 1024.0 for r in records],
                label=label,
            )
        if warmup is not None:
            for ax in (ax_map, ax_bytes):
                ax.axvline(warmup, color="gray", linestyle="--",
                           linewidth=0.8)
        ax_map.set_ylabel("test mAP")
        ax_map.legend(fontsize=8)
        ax_bytes.set_ylabel("uplink KiB / round")
        ax_bytes.set_xlabel("round")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)

"""Figure rendering for the report path: congestion-window and RTT plots
per experiment, written next to the CSV traces. The CSVs remain the data
contract; the figures are a convenience for eyeballing runs."""

import os

_COLORS = ("#0072bd", "#d95319", "#77ac30", "#7e2f8e")


def render_figures(out_dir, recorders, title=""):
    """Write cwnd.png and rtt.png. Returns the file paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cwnd_path = os.path.join(out_dir, "cwnd.png")
    rtt_path = os.path.join(out_dir, "rtt.png")

    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    for i, recorder in enumerate(recorders):
        if not recorder.cwnd_rows:
            continue
        times = [row[0] / 1e6 for row in recorder.cwnd_rows]
        cwnds = [row[1] / 1000 for row in recorder.cwnd_rows]
        ax.step(times, cwnds, where="post", lw=1.0,
                color=_COLORS[i % len(_COLORS)], label=f"Flow {recorder.flow_id}")
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("CWND (kB)")
    ax.grid(True, alpha=0.4)
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(cwnd_path, dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    for i, recorder in enumerate(recorders):
        if not recorder.rtt_rows:
            continue
        rows = [r for r in recorder.rtt_rows if r[2] > 0]
        times = [row[0] / 1e6 for row in rows]
        rtts = [row[2] / 1000 for row in rows]
        ax.plot(times, rtts, lw=0.8,
                color=_COLORS[i % len(_COLORS)], label=f"Flow {recorder.flow_id}")
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("RTT (ms)")
    ax.grid(True, alpha=0.4)
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(rtt_path, dpi=120)
    plt.close(fig)
    return [cwnd_path, rtt_path]

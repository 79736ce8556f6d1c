"""Trace and summary emission: per-flow cwnd/rtt CSV files (UTF-8, LF line
endings, header line first) plus summary.json."""

import json
import os

from quicsim.errors import ConfigError

CWND_HEADER = "time,cwnd,ssthresh,bytes_in_flight,packets_lost,state"
RTT_HEADER = "time,srtt,latest_rtt"


def _fmt_time(ticks):
    return f"{ticks / 1e6:.6f}"


def emit_traces(out_dir, recorders, summary):
    """Write cwnd-flow<k>.csv, rtt-flow<k>.csv and summary.json."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        for recorder in recorders:
            k = recorder.flow_id
            path = os.path.join(out_dir, f"cwnd-flow{k}.csv")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(CWND_HEADER + "\n")
                for t, cwnd, ssthresh, bif, lost, state in recorder.cwnd_rows:
                    fh.write(f"{_fmt_time(t)},{cwnd},{ssthresh},{bif},{lost},{state}\n")
            path = os.path.join(out_dir, f"rtt-flow{k}.csv")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(RTT_HEADER + "\n")
                for t, srtt, latest in recorder.rtt_rows:
                    fh.write(f"{_fmt_time(t)},{_fmt_time(srtt)},{_fmt_time(latest)}\n")
        path = os.path.join(out_dir, "summary.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(summary.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise ConfigError(f"cannot write traces to {out_dir}: {exc}") from exc

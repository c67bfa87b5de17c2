"""
Trace CSV files: interval costs, slot voltages and slot setpoints.
"""
import logging
import os
from typing import Dict, Iterable, List, Union

import pandas as pd

from voltgrid.exceptions import TraceError
from voltgrid.sim.simulator import RunTrace

logger = logging.getLogger(__name__)

COST_FILE = "costs.csv"
VOLTAGE_FILE = "voltages.csv"
SETPOINT_FILE = "setpoints.csv"

COST_COLUMNS = ["tau", "policy", "cost", "time_avg_cost", "epsilon", "action_index"]
VOLTAGE_COLUMNS = ["tau", "t", "bus", "v_pu", "policy"]
SETPOINT_COLUMNS = ["tau", "t", "bus", "q_r_pu", "policy"]

TRACE_FILES = {
    "costs": (COST_FILE, COST_COLUMNS),
    "voltages": (VOLTAGE_FILE, VOLTAGE_COLUMNS),
    "setpoints": (SETPOINT_FILE, SETPOINT_COLUMNS),
}


def write_traces(trace: RunTrace, out_dir: str) -> Dict[str, str]:
    """
    Write the three trace CSVs of one episode.

    Args:
        trace: Episode records
        out_dir: Target directory, created when missing

    Returns:
        Mapping of trace kind to written path
    """
    os.makedirs(out_dir, exist_ok=True)
    frames = {
        "costs": trace.cost_frame(),
        "voltages": trace.voltage_frame(),
        "setpoints": trace.setpoint_frame(),
    }
    paths = {}
    for kind, frame in frames.items():
        filename, columns = TRACE_FILES[kind]
        path = os.path.join(out_dir, filename)
        frame[columns].to_csv(path, index=False)
        paths[kind] = path
    logger.info(f"Wrote {trace.n_intervals} intervals of '{trace.label}' traces to {out_dir}")
    return paths


def _trace_dirs(trace_dir: str) -> List[str]:
    dirs = []
    if os.path.exists(os.path.join(trace_dir, COST_FILE)):
        dirs.append(trace_dir)
    for entry in sorted(os.listdir(trace_dir)):
        sub = os.path.join(trace_dir, entry)
        if os.path.isdir(sub) and os.path.exists(os.path.join(sub, COST_FILE)):
            dirs.append(sub)
    return dirs


def _read_one(path: str, columns: Iterable[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as e:
        raise TraceError(f"missing trace file {path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise TraceError(f"malformed trace file {path}: {e}") from e
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise TraceError(f"trace file {path} lacks columns {missing}")
    return frame[list(columns)]


def read_traces(trace_dir: Union[str, os.PathLike]) -> Dict[str, pd.DataFrame]:
    """
    Read traces from a run directory or a compare directory with one
    subdirectory per policy.

    Returns:
        Dict with 'costs', 'voltages' and 'setpoints' DataFrames

    Raises:
        TraceError: If no trace is found or a file is malformed
    """
    trace_dir = str(trace_dir)
    if not os.path.isdir(trace_dir):
        raise TraceError(f"trace directory {trace_dir} does not exist")
    dirs = _trace_dirs(trace_dir)
    if not dirs:
        raise TraceError(f"no {COST_FILE} found in {trace_dir} or its subdirectories")

    traces = {}
    for kind, (filename, columns) in TRACE_FILES.items():
        frames = [_read_one(os.path.join(d, filename), columns) for d in dirs]
        traces[kind] = pd.concat(frames, ignore_index=True)
    logger.debug(f"Read traces from {len(dirs)} director{'y' if len(dirs) == 1 else 'ies'} under {trace_dir}")
    return traces

"""CSV and JSON emission with a fixed float format so repeated runs are byte-identical."""

import json
import logging
import math
import sys

import numpy as np

logger = logging.getLogger(__name__)


def format_float(value):
    """Shortest round-trip text for a double ('nan', 'inf', '-inf' for non-finite values)."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


def trajectory_frame(traj):
    """The trajectory table with every cell already formatted as text."""
    frame = traj.to_frame()
    return frame.apply(lambda column: column.map(format_float))


def write_trajectory_csv(traj, output_path):
    frame = trajectory_frame(traj)
    frame.to_csv(output_path, index=False, lineterminator="\n")
    logger.info("Wrote %d samples to %s", len(frame), output_path)


def _to_builtin(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps(report):
    return json.dumps(report, indent=2, default=_to_builtin, allow_nan=True) + "\n"


def write_json(report, output_path=None, stream=None):
    """Write a report dict to output_path, or to stream (stdout) when no path is given."""
    text = dumps(report)
    if output_path is None:
        (stream or sys.stdout).write(text)
        return text
    with open(output_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    logger.info("Wrote report to %s", output_path)
    return text


SYSTEM_SECTIONS = ("system", "metric", "forces", "constraints", "fields", "control")


def format_system(system):
    """Canonical system file text: one entry per line, expressions fully parenthesized.

    Parsing the text gives back the same system; omitted components come out as explicit zeros.
    """
    n = system.n
    header = [f"name {system.name}", f"dim {n}", f"coords {' '.join(system.coords)}"]
    metric = [
        f"g[{i + 1}][{j + 1}] = {system.metric[i][j]}"
        for i in range(n)
        for j in range(i, n)
        if system.metric[i][j] is not None
    ]
    forces = [f"potential = {system.potential}"] if system.potential is not None else []
    for key, comps in (("force", system.force), ("workform", system.work_form)):
        forces.extend(f"{key}[{i + 1}] = {c}" for i, c in enumerate(comps or ()))
    constraints = [f"holonomic {name} = {expr}" for name, expr in system.holonomic.items()]
    constraints += [f"nonholonomic {c.name} {c.kind} = {c.expr}" for c in system.nonholonomic]
    fields = [
        f"field {name}[{i + 1}] = {c}"
        for name, comps in system.fields.items()
        for i, c in enumerate(comps)
    ]
    fields += [f"scalar {name} = {expr}" for name, expr in system.scalars.items()]
    controls = [
        f"control {name}[{i + 1}] = {c}"
        for name, comps in system.controls.items()
        for i, c in enumerate(comps)
    ]
    controls += [
        f"bound {name} = {format_float(lo)} {format_float(hi)}"
        for name, (lo, hi) in system.control_bounds.items()
    ]
    blocks = [
        "\n".join([f"[{title}]", *lines])
        for title, lines in zip(
            SYSTEM_SECTIONS, (header, metric, forces, constraints, fields, controls)
        )
        if lines
    ]
    return "\n\n".join(blocks) + "\n"


def write_system_file(system, output_path):
    with open(output_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_system(system))
    logger.info("Wrote system '%s' to %s", system.name, output_path)

from io import StringIO
import logging

import numpy as np
import pandas as pd

from mechanics.dynamics import Trajectory
from parsers.base_parser import BaseParser

logger = logging.getLogger(__name__)


class TrajectoryFileParser(BaseParser):
    """Reads a trajectory CSV as written by ``simulate`` back into a Trajectory"""

    def __init__(self, path=None, text=None, system_name=None):
        super().__init__(path, text)
        self.system_name = system_name

    def extract_data(self):
        df = self._read_frame()
        columns = list(df.columns)
        if not columns or columns[0] != "t":
            raise self.error("trajectory CSV must start with a 't' column", 1, 1)
        groups = self._groups(columns)
        coords = tuple(groups["q"])
        if not coords:
            raise self.error("trajectory CSV has no 'q:' columns", 1, 1)
        if tuple(groups["v"]) != coords:
            raise self.error("'v:' columns must match the 'q:' columns", 1, 1)
        for required in ("K", "E"):
            if required not in df.columns:
                raise self.error(f"trajectory CSV has no '{required}' column", 1, 1)
        try:
            values = df.astype(float)
        except ValueError as exc:
            raise self.error(f"non-numeric value in trajectory ({exc})", 2, 1) from None
        times = values["t"].to_numpy()
        if len(times) > 1 and np.any(np.diff(times) <= 0.0):
            row = int(np.flatnonzero(np.diff(times) <= 0.0)[0]) + 3
            raise self.error("sample times must be strictly increasing", row, 1)

        def block(prefix):
            names = groups[prefix]
            if not names:
                return None
            return values[[f"{prefix}:{name}" for name in names]].to_numpy()

        kinetic = values["K"].to_numpy()
        energy = values["E"].to_numpy()
        phi = block("phi")
        trajectory = Trajectory(
            system_name=self.system_name or self.source,
            coords=coords,
            times=times,
            q=block("q"),
            v=block("v"),
            kinetic=kinetic,
            energy=energy,
            method="stored",
            has_potential=not np.array_equal(kinetic, energy),
            constraint_names=tuple(groups["phi"]),
            phi=phi,
            multipliers=block("lambda") if phi is not None else None,
            constraint_force=block("R"),
            control_names=tuple(groups["u"]),
            inputs=block("u"),
        )
        logger.info("Read %d samples over coordinates %s", len(trajectory), ", ".join(coords))
        return trajectory

    def _read_frame(self):
        source = self.path
        if self._text is not None:
            source = StringIO(self._text)
        try:
            return pd.read_csv(source, float_precision="round_trip")
        except pd.errors.EmptyDataError:
            raise self.error("trajectory file is empty", 1, 1) from None
        except pd.errors.ParserError as exc:
            raise self.error(f"malformed CSV ({exc})", 1, 1) from None

    def _groups(self, columns):
        groups = {prefix: [] for prefix in ("q", "v", "phi", "lambda", "R", "u")}
        for index, column in enumerate(columns[1:], start=2):
            if column in ("K", "E"):
                continue
            prefix, _, name = column.partition(":")
            if prefix not in groups or not name:
                raise self.error(f"unknown trajectory column '{column}'", 1, index)
            groups[prefix].append(name)
        return groups

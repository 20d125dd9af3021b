from io import StringIO
import logging

import numpy as np
import pandas as pd

from mechanics.control import PiecewiseConstantSignal
from parsers.base_parser import BaseParser
from utils.errors import SignalError

logger = logging.getLogger(__name__)


class SignalFileParser(BaseParser):
    """Piecewise-constant input signals stored as CSV with a ``t,u1,...,uk`` header.

    Each row holds its values from its breakpoint until the next row; an empty cell
    marks a gap in that channel.
    """

    def extract_data(self):
        df = self._read_frame()
        df.columns = df.columns.str.strip()
        if len(df.columns) < 2 or df.columns[0] != "t":
            raise self.error("signal header must be 't' followed by one column per input", 1, 1)
        if df.empty:
            raise self.error("signal has no rows", 2, 1)
        numeric = df.apply(pd.to_numeric, errors="coerce")
        bad = numeric.isna() & df.notna()
        if bad.any().any():
            row, col = np.argwhere(bad.to_numpy())[0]
            raise self.error(
                f"'{df.iat[row, col]}' is not a number in column '{df.columns[col]}'",
                int(row) + 2,
                int(col) + 1,
            )
        if numeric["t"].isna().any():
            row = int(np.flatnonzero(numeric["t"].isna().to_numpy())[0])
            raise self.error("breakpoint time is missing", row + 2, 1)
        try:
            signal = PiecewiseConstantSignal(
                numeric["t"].to_numpy(dtype=float),
                numeric.iloc[:, 1:].to_numpy(dtype=float),
                tuple(df.columns[1:]),
            )
        except SignalError as exc:
            raise self.error(str(exc), 2, 1) from None
        logger.info(
            "Read %d breakpoints for %d channels from %s", len(df), signal.k, self.source
        )
        return signal

    def _read_frame(self):
        source = self.path
        if self._text is not None:
            source = StringIO(self._text)
        try:
            return pd.read_csv(source, dtype=str, skipinitialspace=True, comment="#")
        except pd.errors.EmptyDataError:
            raise self.error("signal file is empty", 1, 1) from None
        except pd.errors.ParserError as exc:
            raise self.error(f"malformed CSV ({exc})", 1, 1) from None

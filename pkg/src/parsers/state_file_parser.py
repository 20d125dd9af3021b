import logging
import re

import numpy as np

from parsers.base_parser import BaseParser

logger = logging.getLogger(__name__)

STATE_KEYS = ("q0", "v0", "t0")
LINE_RE = re.compile(r"\s*(?P<key>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?P<value>.*?)\s*$")
NUMBER_RE = re.compile(r"[^\s,]+")


class StateFileParser(BaseParser):
    """Initial-state files: ``q0 = a, b``, ``v0 = c, d`` and ``t0 = s`` lines, ``#`` comments"""

    def extract_data(self):
        state = {}
        lines = {}
        for number, raw in enumerate(self.read_text().splitlines(), start=1):
            content = raw.split("#", 1)[0]
            if not content.strip():
                continue
            match = LINE_RE.match(content)
            if not match:
                raise self.error("expected 'key = values'", number, 1)
            key = match.group("key")
            if key not in STATE_KEYS:
                raise self.error(
                    f"unknown key '{key}' (expected one of {', '.join(STATE_KEYS)})",
                    number,
                    match.start("key") + 1,
                )
            if key in state:
                raise self.error(
                    f"duplicate '{key}' (first declared on line {lines[key]})",
                    number,
                    match.start("key") + 1,
                )
            values = self._numbers(match, number)
            if key == "t0":
                if len(values) != 1:
                    raise self.error("t0 takes a single value", number, match.start("value") + 1)
                state[key] = float(values[0])
            else:
                state[key] = np.array(values)
            lines[key] = number
        logger.info("Read initial state keys %s from %s", sorted(state), self.source)
        return state

    def _numbers(self, match, number):
        values = []
        offset = match.start("value")
        for token in NUMBER_RE.finditer(match.group("value")):
            try:
                values.append(float(token.group()))
            except ValueError:
                raise self.error(
                    f"'{token.group()}' is not a number", number, offset + token.start() + 1
                ) from None
        if not values:
            raise self.error("missing values", number, offset + 1)
        return values

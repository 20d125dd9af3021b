"""Parser for the line-oriented system definition format (``.rms`` files).

Example::

    # planar pendulum as a constrained particle
    [system]
    name pendulum
    dim 2
    coords x y

    [metric]
    g[1][1] = 1
    g[2][2] = 1

    [forces]
    potential = 9.8*y

    [constraints]
    holonomic circle = x^2 + y^2 - 1

Section headers are optional; once a section is open only its keys are accepted.
"""

from dataclasses import dataclass
import logging
import os
import re

from mechanics.expression import FUNCTIONS, TIME, VELOCITY_PREFIX, constant, velocity_name
from mechanics.system import CONSTRAINT_KINDS, NonholonomicConstraint, SystemDefinition
from parsers.base_parser import BaseParser
from parsers.expression_parser import parse_expression
from utils.errors import ExpressionSyntaxError, SystemDefinitionError, UnknownIdentifierError

logger = logging.getLogger(__name__)

IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
EXPR = r"\s*=\s*(?P<expr>.*?)\s*$"

SECTIONS = {
    "system": ("name", "dim", "coords"),
    "metric": ("g",),
    "forces": ("potential", "force", "workform"),
    "constraints": ("holonomic", "nonholonomic"),
    "fields": ("field", "scalar"),
    "control": ("control", "bound"),
}

KEY_PATTERNS = {
    "name": re.compile(r"\s*name(?:\s*=\s*|\s+)(?P<value>\S.*?)\s*$"),
    "dim": re.compile(r"\s*dim(?:\s*=\s*|\s+)(?P<value>\S+)\s*$"),
    "coords": re.compile(r"\s*coords(?:\s*=\s*|\s+)(?P<value>\S.*?)\s*$"),
    "g": re.compile(r"\s*g\[\s*(?P<i>\d+)\s*\]\[\s*(?P<j>\d+)\s*\]" + EXPR),
    "potential": re.compile(r"\s*potential" + EXPR),
    "force": re.compile(r"\s*force\[\s*(?P<i>\d+)\s*\]" + EXPR),
    "workform": re.compile(r"\s*workform\[\s*(?P<i>\d+)\s*\]" + EXPR),
    "holonomic": re.compile(rf"\s*holonomic\s+(?P<name>{IDENT})" + EXPR),
    "nonholonomic": re.compile(
        rf"\s*nonholonomic\s+(?P<name>{IDENT})(?:\s+(?P<kind>{IDENT}))?" + EXPR
    ),
    "field": re.compile(rf"\s*field\s+(?P<name>{IDENT})\[\s*(?P<i>\d+)\s*\]" + EXPR),
    "scalar": re.compile(rf"\s*scalar\s+(?P<name>{IDENT})" + EXPR),
    "control": re.compile(rf"\s*control\s+(?P<name>{IDENT})\[\s*(?P<i>\d+)\s*\]" + EXPR),
    "bound": re.compile(rf"\s*bound\s+(?P<name>{IDENT})\s*=\s*(?P<lo>\S+)\s+(?P<hi>\S+)\s*$"),
}

HEADER_RE = re.compile(r"\s*\[\s*(?P<section>[^\]]*?)\s*\]\s*$")
KEYWORD_RE = re.compile(r"\s*(?P<key>[A-Za-z_]+)")


@dataclass
class Entry:
    key: str
    line: int
    match: re.Match

    def column(self, group):
        return self.match.start(group) + 1


class SystemFileParser(BaseParser):
    """Reads a system file into a validated SystemDefinition"""

    def extract_data(self):
        entries = self._scan(self.read_text())
        header = self._header(entries)
        coords = header["coords"]
        self._symbols = {
            "q": coords,
            "qt": coords + (TIME,),
            "qvt": coords + tuple(velocity_name(c) for c in coords) + (TIME,),
        }
        system = self._build(header, entries)
        logger.info(
            "Parsed system '%s' from %s: dim %d, %d holonomic, %d nonholonomic constraints",
            system.name,
            self.source,
            system.n,
            len(system.holonomic),
            len(system.nonholonomic),
        )
        return system

    # -- scanning -----------------------------------------------------------

    def _scan(self, text):
        entries = []
        section = None
        for number, raw in enumerate(text.splitlines(), start=1):
            content = raw.split("#", 1)[0]
            if not content.strip():
                continue
            header = HEADER_RE.match(content)
            if header:
                section = header.group("section")
                if section not in SECTIONS:
                    raise self.error(
                        f"unknown section [{section}]", number, header.start("section") + 1
                    )
                continue
            keyword = KEYWORD_RE.match(content)
            key = keyword.group("key") if keyword else None
            indent = len(content) - len(content.lstrip())
            column = keyword.start("key") + 1 if keyword else indent + 1
            if key not in KEY_PATTERNS:
                shown = key or content.strip()
                raise self.error(f"unknown key '{shown}'", number, column)
            if section is not None and key not in SECTIONS[section]:
                raise self.error(
                    f"key '{key}' does not belong in section [{section}]", number, column
                )
            match = KEY_PATTERNS[key].match(content)
            if not match:
                raise self.error(f"malformed '{key}' entry", number, column)
            entries.append(Entry(key, number, match))
        return entries

    # -- header keys --------------------------------------------------------

    def _header(self, entries):
        seen = {}
        for entry in entries:
            if entry.key in ("name", "dim", "coords"):
                if entry.key in seen:
                    raise self.error(
                        f"duplicate '{entry.key}' (first declared on line {seen[entry.key].line})",
                        entry.line,
                        entry.column("value"),
                    )
                seen[entry.key] = entry
        if "coords" not in seen:
            line = seen["dim"].line if "dim" in seen else 1
            raise self.error("missing 'coords' declaration", line, 1)
        coords_entry = seen["coords"]
        coords = tuple(re.split(r"[\s,]+", coords_entry.match.group("value").strip()))
        for name in coords:
            column = coords_entry.column("value") + coords_entry.match.group("value").find(name)
            if not re.fullmatch(IDENT, name):
                raise self.error(f"invalid coordinate name '{name}'", coords_entry.line, column)
            if name == TIME or name.startswith(VELOCITY_PREFIX) or name in FUNCTIONS:
                raise self.error(f"reserved coordinate name '{name}'", coords_entry.line, column)
            if coords.count(name) > 1:
                raise self.error(f"duplicate coordinate '{name}'", coords_entry.line, column)
        if "dim" in seen:
            dim_entry = seen["dim"]
            value = dim_entry.match.group("value")
            if not value.isdigit():
                raise self.error(
                    f"dim must be a positive integer, got '{value}'",
                    dim_entry.line,
                    dim_entry.column("value"),
                )
            if int(value) != len(coords):
                raise self.error(
                    f"dimension mismatch: dim {value} but {len(coords)} coordinates",
                    coords_entry.line,
                    coords_entry.column("value"),
                )
        if "name" in seen:
            name = seen["name"].match.group("value")
        elif self.path is not None:
            name = os.path.splitext(os.path.basename(str(self.path)))[0]
        else:
            name = "system"
        return {"name": name, "coords": coords}

    # -- expressions --------------------------------------------------------

    def _expression(self, entry, scope, context):
        text = entry.match.group("expr")
        column = entry.column("expr")
        if not text:
            raise self.error(f"missing expression for {context}", entry.line, column)
        try:
            return parse_expression(text, self._symbols[scope])
        except ExpressionSyntaxError as exc:
            index = len(text.encode("utf-8")[: exc.offset].decode("utf-8", errors="ignore"))
            message = exc.message
            if isinstance(exc, UnknownIdentifierError):
                name = re.match(IDENT, text[index:])
                if name and name.group() in self._symbols["qvt"]:
                    message = f"{context} may not reference '{name.group()}'"
            raise self.error(message, entry.line, column + index) from None

    def _index(self, entry, group, n):
        value = int(entry.match.group(group))
        if not 1 <= value <= n:
            raise self.error(
                f"index {value} out of range 1..{n}", entry.line, entry.column(group)
            )
        return value - 1

    def _duplicate(self, entry, what, first):
        return self.error(
            f"duplicate {what} (first declared on line {first})", entry.line, entry.column("expr")
        )

    # -- assembly -----------------------------------------------------------

    def _build(self, header, entries):
        coords = header["coords"]
        n = len(coords)
        metric = {}
        potential = None
        vectors = {"force": {}, "workform": {}}
        holonomic = {}
        nonholonomic = {}
        fields, scalars, controls, bounds = {}, {}, {}, {}
        owners = {}

        def claim(entry, name, owner):
            if owners.setdefault(name, owner) != owner:
                raise self.error(
                    f"name '{name}' is already used by a {owners[name]}",
                    entry.line,
                    entry.column("name"),
                )

        for entry in entries:
            match entry.key:
                case "g":
                    i, j = self._index(entry, "i", n), self._index(entry, "j", n)
                    label = f"g[{i + 1}][{j + 1}]"
                    key = (min(i, j), max(i, j))
                    if key in metric:
                        raise self._duplicate(
                            entry, f"metric entry {label}", metric[key][0].line
                        )
                    if i > j:
                        raise self.error(
                            f"metric entry {label} is below the diagonal "
                            f"(write g[{j + 1}][{i + 1}])",
                            entry.line,
                            entry.column("i"),
                        )
                    metric[key] = (entry, self._expression(entry, "q", f"metric entry {label}"))
                case "potential":
                    if potential is not None:
                        raise self._duplicate(entry, "potential", potential[0].line)
                    potential = (entry, self._expression(entry, "qt", "potential"))
                case "force" | "workform":
                    other = "workform" if entry.key == "force" else "force"
                    if vectors[other]:
                        raise self.error(
                            "force and workform are mutually exclusive", entry.line, 1
                        )
                    i = self._index(entry, "i", n)
                    label = f"{entry.key}[{i + 1}]"
                    if i in vectors[entry.key]:
                        raise self._duplicate(entry, label, vectors[entry.key][i][0].line)
                    vectors[entry.key][i] = (entry, self._expression(entry, "qvt", label))
                case "holonomic":
                    name = entry.match.group("name")
                    if name in holonomic:
                        first = holonomic[name][0].line
                        raise self._duplicate(entry, f"constraint '{name}'", first)
                    claim(entry, name, "constraint")
                    holonomic[name] = (entry, self._expression(entry, "q", f"constraint '{name}'"))
                case "nonholonomic":
                    name = entry.match.group("name")
                    kind = entry.match.group("kind") or "general"
                    if kind not in CONSTRAINT_KINDS:
                        raise self.error(
                            f"unknown constraint kind '{kind}' (expected one of "
                            f"{', '.join(CONSTRAINT_KINDS)})",
                            entry.line,
                            entry.column("kind"),
                        )
                    if name in nonholonomic:
                        raise self._duplicate(
                            entry, f"constraint '{name}'", nonholonomic[name][0].line
                        )
                    claim(entry, name, "constraint")
                    expr = self._expression(entry, "qvt", f"constraint '{name}'")
                    nonholonomic[name] = (entry, NonholonomicConstraint(name, expr, kind))
                case "field" | "control":
                    name = entry.match.group("name")
                    claim(entry, name, "vector field" if entry.key == "field" else "control field")
                    group = fields if entry.key == "field" else controls
                    comps = group.setdefault(name, [None] * n)
                    i = self._index(entry, "i", n)
                    label = f"{entry.key} {name}[{i + 1}]"
                    if comps[i] is not None:
                        raise self._duplicate(entry, label, comps[i][0].line)
                    comps[i] = (entry, self._expression(entry, "q", label))
                case "scalar":
                    name = entry.match.group("name")
                    claim(entry, name, "scalar field")
                    if name in scalars:
                        raise self._duplicate(entry, f"scalar '{name}'", scalars[name][0].line)
                    scalars[name] = (entry, self._expression(entry, "q", f"scalar '{name}'"))
                case "bound":
                    bounds[entry.match.group("name")] = (entry, self._bound(entry))

        if holonomic and nonholonomic:
            later = max(
                min(e.line for e, _ in holonomic.values()),
                min(e.line for e, _ in nonholonomic.values()),
            )
            raise self.error("holonomic and nonholonomic constraints cannot be combined", later, 1)
        for name, (entry, _) in bounds.items():
            if name not in controls:
                raise self.error(
                    f"bound given for unknown control '{name}'", entry.line, entry.column("name")
                )

        zero = {scope: constant(0.0, symbols) for scope, symbols in self._symbols.items()}
        grid = [[None] * n for _ in range(n)]
        for (i, j), (_, expr) in metric.items():
            grid[i][j] = grid[j][i] = expr

        def components(slots, scope):
            return tuple(slot[1] if slot is not None else zero[scope] for slot in slots)

        def vector(key):
            if not vectors[key]:
                return None
            return components([vectors[key].get(i) for i in range(n)], "qvt")

        try:
            return SystemDefinition(
                name=header["name"],
                coords=coords,
                metric=tuple(tuple(row) for row in grid),
                potential=potential[1] if potential else None,
                force=vector("force"),
                work_form=vector("workform"),
                holonomic={name: expr for name, (_, expr) in holonomic.items()},
                nonholonomic=tuple(c for _, c in nonholonomic.values()),
                fields={name: components(slots, "q") for name, slots in fields.items()},
                scalars={name: expr for name, (_, expr) in scalars.items()},
                controls={name: components(slots, "q") for name, slots in controls.items()},
                control_bounds={name: box for name, (_, box) in bounds.items()},
            )
        except SystemDefinitionError as exc:
            raise self.error(str(exc), 1, 1) from None

    def _bound(self, entry):
        try:
            lo, hi = float(entry.match.group("lo")), float(entry.match.group("hi"))
        except ValueError:
            raise self.error(
                "bounds must be two numbers", entry.line, entry.column("lo")
            ) from None
        if lo > hi:
            raise self.error(f"empty bounds {lo!r} > {hi!r}", entry.line, entry.column("lo"))
        return lo, hi


def parse_system_file(text, source="<string>"):
    """Parse system-file text; diagnostics are tagged with ``source``."""
    path = None if source == "<string>" else source
    return SystemFileParser(path, text=text).extract_data()


def load_system_file(path):
    return SystemFileParser(path).extract_data()

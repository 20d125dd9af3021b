"""
Unit tests for the system file format
"""
from pathlib import Path

import numpy as np
import pytest

from mechanics.geometry import metric_at
from parsers.system_file_parser import SystemFileParser, load_system_file, parse_system_file
from utils.errors import SystemFileError

SYSTEMS = Path(__file__).parent.parent / "fixtures" / "systems"

HEADER = """[system]
name s
dim 2
coords x y
[metric]
g[1][1] = 1
g[2][2] = 1
"""


def with_header(*lines):
    """Header plus extra lines; the first extra line is line 8"""
    return HEADER + "\n".join(lines) + "\n"


@pytest.fixture
def parse_error():
    def parse(text):
        with pytest.raises(SystemFileError) as exc_info:
            parse_system_file(text)
        return exc_info.value

    return parse


class TestValidFiles:
    @pytest.mark.parametrize("path", sorted(SYSTEMS.glob("*.rms")), ids=lambda p: p.stem)
    def test_example_systems_load(self, path):
        system = load_system_file(path)
        assert system.name == path.stem
        assert system.n == len(system.coords)

    def test_pendulum(self, pendulum):
        assert pendulum.coords == ("x", "y")
        assert list(pendulum.holonomic) == ["circle"]
        assert pendulum.potential.evaluate(pendulum.bindings([0.0, 2.0])) == pytest.approx(19.6)

    def test_sections_are_optional(self):
        system = parse_system_file("name bare\ndim 1\ncoords q\ng[1][1] = 2\n")
        assert system.name == "bare"
        assert metric_at(system, [0.0])[0, 0] == 2.0

    def test_comments_and_blank_lines(self):
        system = parse_system_file(
            "# leading comment\n\n[system]\ncoords q  # trailing\n\n[metric]\ng[1][1] = 1 # one\n"
        )
        assert system.coords == ("q",)
        assert system.name == "system"

    def test_name_defaults_to_file_stem(self, tmp_path):
        path = tmp_path / "wobble.rms"
        path.write_text("coords q\ng[1][1] = 1\n", encoding="utf-8")
        assert load_system_file(path).name == "wobble"

    def test_off_diagonal_entry_is_mirrored(self):
        system = parse_system_file(with_header("g[1][2] = 0.5"))
        np.testing.assert_array_equal(metric_at(system, [0.0, 0.0]), [[1.0, 0.5], [0.5, 1.0]])

    def test_missing_force_components_are_zero(self):
        system = parse_system_file(with_header("[forces]", "force[2] = v_x*t"))
        bindings = system.bindings([0.0, 0.0], [3.0, 0.0], t=2.0)
        assert [c.evaluate(bindings) for c in system.force] == [0.0, 6.0]
        assert system.work_form is None

    def test_constraint_kinds(self):
        system = parse_system_file(
            with_header("[constraints]", "nonholonomic a linear = v_x", "nonholonomic b = v_y^2")
        )
        assert [(c.name, c.kind) for c in system.nonholonomic] == [
            ("a", "linear"),
            ("b", "general"),
        ]

    def test_control_bounds(self, load_system):
        system = load_system("planar_control")
        assert system.control_bounds == {"push_x": (-2.0, 2.0)}
        assert list(system.controls) == ["push_x", "push_y"]

    def test_factory_style_parser_object(self):
        parser = SystemFileParser(text=with_header())
        assert parser.source == "<string>"
        assert parser.extract_data().coords == ("x", "y")


class TestErrors:
    @pytest.mark.parametrize(
        "text,message,line,column",
        [
            (with_header("[widgets]"), "unknown section [widgets]", 8, 2),
            (with_header("mass = 3"), "unknown key 'mass'", 8, 1),
            (
                with_header("potential = x"),
                "key 'potential' does not belong in section [metric]",
                8,
                1,
            ),
            (with_header("g[1] = 1"), "malformed 'g' entry", 8, 1),
            (with_header("g[3][1] = 1"), "index 3 out of range 1..2", 8, 3),
            (
                with_header("g[2][1] = 0.5"),
                "metric entry g[2][1] is below the diagonal (write g[1][2])",
                8,
                3,
            ),
            (
                with_header("g[1][2] = 0", "g[2][1] = 0"),
                "duplicate metric entry g[2][1] (first declared on line 8)",
                9,
                11,
            ),
            (with_header("g[1][2] = v_x"), "metric entry g[1][2] may not reference 'v_x'", 8, 11),
            (
                with_header("[forces]", "potential = v_x"),
                "potential may not reference 'v_x'",
                9,
                13,
            ),
            (with_header("[forces]", "potential = w"), "unknown identifier 'w'", 9, 13),
            (with_header("[forces]", "potential ="), "missing expression for potential", 9, 12),
            (
                with_header("[forces]", "force[1] = 1", "workform[1] = 1"),
                "force and workform are mutually exclusive",
                10,
                1,
            ),
            (
                with_header("[constraints]", "holonomic a = x", "nonholonomic b = v_x"),
                "holonomic and nonholonomic constraints cannot be combined",
                10,
                1,
            ),
            (
                with_header("[constraints]", "nonholonomic b wobbly = v_x"),
                "unknown constraint kind 'wobbly' (expected one of general, linear, affine)",
                9,
                16,
            ),
            (
                with_header("[fields]", "scalar f = x", "field f[1] = 1"),
                "name 'f' is already used by a scalar field",
                10,
                7,
            ),
            (
                with_header("[control]", "control c[1] = v_x"),
                "control c[1] may not reference 'v_x'",
                9,
                16,
            ),
            (
                with_header("[control]", "control c[1] = 1", "bound d = 0 1"),
                "bound given for unknown control 'd'",
                10,
                7,
            ),
            (
                with_header("[control]", "control c[1] = 1", "bound c = 2 1"),
                "empty bounds 2.0 > 1.0",
                10,
                11,
            ),
            (
                with_header("[control]", "control c[1] = 1", "bound c = a 1"),
                "bounds must be two numbers",
                10,
                11,
            ),
        ],
    )
    def test_located_errors(self, parse_error, text, message, line, column):
        error = parse_error(text)
        assert (error.message, error.line, error.column) == (message, line, column)

    @pytest.mark.parametrize(
        "header,message,line,column",
        [
            ("dim 2\ncoords x t", "reserved coordinate name 't'", 2, 10),
            ("dim 2\ncoords x v_y", "reserved coordinate name 'v_y'", 2, 10),
            ("dim 2\ncoords x sin", "reserved coordinate name 'sin'", 2, 10),
            ("dim 2\ncoords x x", "duplicate coordinate 'x'", 2, 8),
            ("dim 3\ncoords x y", "dimension mismatch: dim 3 but 2 coordinates", 2, 8),
            ("dim two\ncoords x y", "dim must be a positive integer, got 'two'", 1, 5),
            ("dim 2", "missing 'coords' declaration", 1, 1),
            ("coords x\ncoords y", "duplicate 'coords' (first declared on line 1)", 2, 8),
        ],
    )
    def test_header_errors(self, parse_error, header, message, line, column):
        error = parse_error(header + "\n")
        assert (error.message, error.line, error.column) == (message, line, column)

    def test_syntax_error_is_located_in_the_line(self, parse_error):
        error = parse_error(with_header("[forces]", "potential = x +* y"))
        assert error.line == 9
        assert error.column == 16
        assert "unexpected '*'" in error.message

    def test_error_text_names_the_source(self, tmp_path):
        path = tmp_path / "broken.rms"
        path.write_text("coords x\ng[1][1] = 1\n[widgets]\n", encoding="utf-8")
        with pytest.raises(SystemFileError) as exc_info:
            load_system_file(path)
        assert str(exc_info.value) == f"{path}:3:2: unknown section [widgets]"

    def test_invalid_utf8(self, tmp_path):
        path = tmp_path / "binary.rms"
        path.write_bytes(b"coords x\n\xff\xfe\n")
        with pytest.raises(SystemFileError, match="not valid UTF-8"):
            load_system_file(path)

    def test_error_messages_are_stable(self, golden):
        """Diagnostics are part of the file format; keep their wording fixed"""
        broken = [
            with_header("[widgets]"),
            with_header("g[1][2] = v_x"),
            with_header("[forces]", "force[1] = 1", "workform[1] = 1"),
            "dim 3\ncoords x y\n",
            with_header("[control]", "control c[1] = 1", "bound d = 0 1"),
            with_header("g[2][1] = 0.5"),
            with_header("[control]", "control c[1] = v_x"),
        ]
        lines = []
        for text in broken:
            with pytest.raises(SystemFileError) as exc_info:
                parse_system_file(text, source="broken.rms")
            lines.append(str(exc_info.value))
        golden("system_file_errors.txt", "\n".join(lines) + "\n")

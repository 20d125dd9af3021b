import pytest

from parsers.parser_factory import ParserFactory
from parsers.signal_file_parser import SignalFileParser
from parsers.state_file_parser import StateFileParser
from parsers.system_file_parser import SystemFileParser
from parsers.trajectory_file_parser import TrajectoryFileParser


class TestParserFactory:
    @pytest.mark.parametrize(
        "file_type,parser_class",
        [
            ("system", SystemFileParser),
            ("state", StateFileParser),
            ("signal", SignalFileParser),
            ("trajectory", TrajectoryFileParser),
        ],
    )
    def test_get_parser(self, file_type, parser_class):
        """Test factory returns the parser registered for each file type"""
        parser = ParserFactory.get_parser(file_type, "input.dat")
        assert isinstance(parser, parser_class)
        assert parser.path == "input.dat"

    def test_keyword_arguments_reach_the_parser(self):
        parser = ParserFactory.get_parser("trajectory", "run.csv", system_name="pendulum")
        assert parser.system_name == "pendulum"

    def test_get_parser_invalid_file_type(self):
        """Test factory raises error for unknown file type"""
        with pytest.raises(ValueError, match="No parser available for file_type='mesh'"):
            ParserFactory.get_parser("mesh", "input.dat")

    def test_parse_delegates_to_extract_data(self, mocker):
        extract = mocker.patch.object(StateFileParser, "extract_data", return_value={"t0": 1.0})
        assert ParserFactory.parse("state", "initial.state") == {"t0": 1.0}
        extract.assert_called_once_with()

    def test_parse_real_file(self, system_path):
        system = ParserFactory.parse("system", system_path("pendulum"))
        assert system.name == "pendulum"

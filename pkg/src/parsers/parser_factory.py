from .signal_file_parser import SignalFileParser
from .state_file_parser import StateFileParser
from .system_file_parser import SystemFileParser
from .trajectory_file_parser import TrajectoryFileParser


class ParserFactory:
    PARSERS = {
        "system": SystemFileParser,
        "state": StateFileParser,
        "signal": SignalFileParser,
        "trajectory": TrajectoryFileParser,
    }

    @staticmethod
    def get_parser(file_type: str, path: str, **kwargs):
        """
        Factory method to get the parser for an input file.

        Args:
            file_type (str): The file type ('system', 'state', 'signal' or 'trajectory')
            path (str): Path to the file
            **kwargs: Extra keyword arguments for the parser (e.g. system_name)

        Returns:
            BaseParser: An instance of the appropriate parser
        """
        parser_class = ParserFactory.PARSERS.get(file_type)
        if parser_class is None:
            raise ValueError(f"No parser available for file_type='{file_type}'")
        return parser_class(path, **kwargs)

    @staticmethod
    def parse(file_type: str, path: str, **kwargs):
        """Shortcut for get_parser(...).extract_data()"""
        return ParserFactory.get_parser(file_type, path, **kwargs).extract_data()

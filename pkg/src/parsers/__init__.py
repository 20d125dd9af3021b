from .base_parser import BaseParser
from .expression_parser import ExpressionParser, parse_expression
from .parser_factory import ParserFactory
from .signal_file_parser import SignalFileParser
from .state_file_parser import StateFileParser
from .system_file_parser import SystemFileParser, load_system_file, parse_system_file
from .trajectory_file_parser import TrajectoryFileParser

__all__ = [
    'BaseParser',
    'ExpressionParser',
    'ParserFactory',
    'SignalFileParser',
    'StateFileParser',
    'SystemFileParser',
    'TrajectoryFileParser',
    'load_system_file',
    'parse_expression',
    'parse_system_file',
]

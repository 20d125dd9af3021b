from abc import ABC, abstractmethod

from utils.errors import SystemFileError


class BaseParser(ABC):
    def __init__(self, path=None, text=None):
        if path is None and text is None:
            raise ValueError("a parser needs a path or a text")
        self.path = path
        self._text = text

    @property
    def source(self):
        """Name used in diagnostics: the file path, or '<string>' for in-memory text"""
        return str(self.path) if self.path is not None else "<string>"

    def read_text(self):
        """Return the input text; files are read as UTF-8"""
        if self._text is None:
            try:
                with open(self.path, "r", encoding="utf-8") as f:
                    self._text = f.read()
            except UnicodeDecodeError as exc:
                raise SystemFileError(f"file is not valid UTF-8 ({exc.reason})", self.source, 1, 1)
        return self._text

    def error(self, message, line=0, column=0):
        return SystemFileError(message, self.source, line, column)

    @abstractmethod
    def extract_data(self):
        """Parse the input and return the domain object it describes"""
        pass

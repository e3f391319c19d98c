"""
Run logging
===========
Timestamped, levelled log entries kept in memory and echoed to the terminal
when verbose. Colour per level via colorama.
"""

from collections import deque
from datetime import datetime
from typing import Deque, Dict

from colorama import Fore, Style, init as colorama_init

colorama_init()

LEVEL_COLOURS = {
    "SUCCESS": Fore.GREEN,
    "ERROR": Fore.RED,
    "WARNING": Fore.YELLOW,
    "TEST": Fore.BLUE,
    "DEBUG": Style.DIM,
}

# oldest entries are dropped past this many per logger
MAX_ENTRIES = 5000

_verbose = False
_debug = False
_loggers: Dict[str, "RunLogger"] = {}


class RunLogger:
    """Collects log entries for one component of a run"""

    def __init__(self, name: str, verbose: bool = False, debug: bool = False, max_entries: int = MAX_ENTRIES):
        self.name = name
        self.verbose = verbose
        self.debug = debug
        self.entries: Deque[str] = deque(maxlen=max_entries)

    def log(self, message: str, level: str = "INFO"):
        """Log message with timestamp and level"""
        if level == "DEBUG" and not self.debug:
            return
        timestamp = datetime.now().strftime("%H:%M:%S")
        entry = f"[{timestamp}] [{level:7}] [{self.name}] {message}"
        self.entries.append(entry)

        if self.verbose:
            colour = LEVEL_COLOURS.get(level)
            if colour:
                print(f"{colour}{entry}{Style.RESET_ALL}")
            else:
                print(entry)

    def warning(self, message: str):
        self.log(message, "WARNING")

    def clear(self):
        self.entries.clear()


def get_logger(name: str) -> RunLogger:
    """Process-wide logger per component name"""
    logger = _loggers.get(name)
    if logger is None:
        logger = RunLogger(name, verbose=_verbose, debug=_debug)
        _loggers[name] = logger
    return logger


def set_verbosity(verbose: bool, debug: bool = False):
    """Switch terminal echo for every logger, existing and future"""
    global _verbose, _debug
    _verbose = verbose
    _debug = debug
    for logger in _loggers.values():
        logger.verbose = verbose
        logger.debug = debug

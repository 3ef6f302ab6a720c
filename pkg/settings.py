import os
import logging
from fractions import Fraction
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _read_fraction(name: str, default: str) -> Fraction:
    raw = os.getenv(name, default)
    try:
        return Fraction(raw.strip())
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"{name} must be a rational number such as 1/16 or 0.25, got {raw!r}")


def _read_int(name: str, default: int) -> int:
    raw = os.getenv(name, str(default))
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")


# Configuration
DEFAULT_DEPTH = _read_int('DOMINANCE_DEPTH', 64)
DEFAULT_GRID = _read_fraction('DOMINANCE_GRID', '1/16')
DEFAULT_SAFETY = _read_fraction('DOMINANCE_SAFETY', '9/10')
LOG_FILE = os.getenv('DOMINANCE_LOG_FILE', 'dominance_checks.log')
LOG_LEVEL = os.getenv('DOMINANCE_LOG_LEVEL', 'INFO').upper()

if DEFAULT_DEPTH < 1:
    raise ValueError(f"DOMINANCE_DEPTH must be at least 1, got {DEFAULT_DEPTH}")
if DEFAULT_GRID <= 0:
    raise ValueError(f"DOMINANCE_GRID must be positive, got {DEFAULT_GRID}")
if not 0 < DEFAULT_SAFETY < 1:
    raise ValueError(f"DOMINANCE_SAFETY must lie strictly between 0 and 1, got {DEFAULT_SAFETY}")


def configure_logging(log_file: str = None, level: str = None) -> None:
    """Set up the root logger once: file handler plus console."""
    log_file = LOG_FILE if log_file is None else log_file
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.insert(0, logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level or LOG_LEVEL, logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers
    )

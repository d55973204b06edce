"""Utility functions, classes."""

from typing import Iterator, List, Optional
import os
import contextlib
import math
import mflog
import typer
from polarthru.errors import PolarthruError, ProtocolViolation

THREADS_ENV_VAR = "POLARTHRU_THREADS"


@contextlib.contextmanager
def log_exceptions(logger=None) -> Iterator[None]:
    """Log expected failures and turn them into a CLI exit code.

    Protocol-safety violations exit with 2, other polarthru or value errors with 1.
    Anything else is logged with its traceback and re-raised.
    """
    log = logger if logger is not None else mflog.get_logger("polarthru")
    try:
        yield
    except ProtocolViolation as e:
        log.error(f"protocol safety violation: {e}")
        raise typer.Exit(code=2)
    except (PolarthruError, ValueError) as e:
        log.error(str(e))
        raise typer.Exit(code=1)
    except typer.Exit:
        raise
    except Exception:
        mflog.exception("Unhandled exception")
        raise


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def check_power_of_two(n: int, what: str = "block length") -> int:
    if not is_power_of_two(n):
        raise ValueError(f"{what} must be a power of two (got {n})")
    return n


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


def parse_snr_range(text: str) -> List[float]:
    """Parse a scalar SNR ("2.5") or an inclusive range ("a:step:b")."""
    parts = text.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) != 3:
        raise ValueError(f"invalid SNR range: {text} (expected a or a:step:b)")
    start, step, stop = (float(x) for x in parts)
    if step <= 0:
        raise ValueError(f"invalid SNR step: {step}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    if count < 1:
        raise ValueError(f"empty SNR range: {text}")
    return [round(start + i * step, 10) for i in range(count)]


def resolve_threads(threads: Optional[int] = None) -> int:
    """Worker count from the explicit value, the environment, or 1."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV_VAR)
        if raw is None or raw.strip() == "":
            return 1
        try:
            threads = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV_VAR} must be an integer (got {raw!r})")
    if threads < 1:
        raise ValueError(f"threads must be >= 1 (got {threads})")
    return threads

"""Work caps shared by the enumeration-heavy routines.

The environment variable ``GOWERSLAB_BUDGET`` (an integer) overrides every
work cap at once; the enumeration cap for dense groups stays separate.
"""
import os

ENUMERATION_CAP = 2**20
DEFAULT_WORK_CAP = 2**28


class BudgetExceeded(RuntimeError):
    """Raised when a routine would exceed its configured work cap."""


def work_cap(default: int = DEFAULT_WORK_CAP) -> int:
    raw = os.environ.get("GOWERSLAB_BUDGET")
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(float(raw))
    except ValueError as exc:
        raise ValueError(f"GOWERSLAB_BUDGET must be an integer, got {raw!r}") from exc
    if value <= 0:
        raise ValueError("GOWERSLAB_BUDGET must be positive")
    return value


def check(work: int, what: str, cap: int | None = None) -> None:
    limit = work_cap() if cap is None else cap
    if work > limit:
        raise BudgetExceeded(f"{what}: work {work} exceeds cap {limit}")

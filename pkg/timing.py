"""
Display helpers — milliseconds, byte counts and speed-up ratios formatted
for the terminal report and the dashboard.
"""

_BYTE_UNITS = ("B", "KiB", "MiB", "GiB", "TiB")


def format_ms(ms: float) -> str:
    """'850.2 ms' below a second, '12.41 s' above."""
    ms = float(ms)
    if ms >= 1000:
        return f"{ms / 1000:,.2f} s"
    return f"{ms:.1f} ms"


def format_bytes(count: int) -> str:
    """Binary units, one decimal once past a KiB."""
    size = float(count)
    for unit in _BYTE_UNITS:
        if size < 1024 or unit == _BYTE_UNITS[-1]:
            break
        size /= 1024
    if unit == "B":
        return f"{int(size)} B"
    return f"{size:.1f} {unit}"


def speedup(baseline_ms: float, ms: float) -> float | None:
    """baseline / measured; None when either side is missing or zero."""
    if not baseline_ms or not ms:
        return None
    return float(baseline_ms) / float(ms)


def format_speedup(ratio: float | None) -> str:
    return "—" if ratio is None else f"{ratio:.2f}×"

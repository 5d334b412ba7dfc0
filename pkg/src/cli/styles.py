import math

from rich.console import Console

console = Console()
err_console = Console(stderr=True)

# ── palette ───────────────────────────────────────────────────────────────────
GREEN   = "#47d179"
BLUE    = "#47a1ea"
YELLOW  = "#f4b73d"
RED     = "#dc3b3b"
CYAN    = "#47d1d1"
MAGENTA = "#b770db"
DIM     = "#5b6270"
BRIGHT  = "#e8e9ec"
FG      = "#d4d7dc"

CLASSIFICATION_STYLE = {
    "Mixing":           GREEN,
    "ErgodicNotMixing": YELLOW,
    "NonErgodic":       RED,
}


def fmt(x: float, digits: int = 6) -> str:
    """Compact number for tables: fixed point when readable, scientific otherwise."""
    if x is None:
        return "—"
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    if x == 0 or 1e-3 <= abs(x) < 1e5:
        return f"{x:.{digits}f}".rstrip("0").rstrip(".") or "0"
    return f"{x:.{digits - 2}e}"


def fmt_complex(z: complex, digits: int = 6) -> str:
    z = complex(z)
    if abs(z.imag) < 10 ** -(digits + 2):
        return fmt(z.real, digits)
    sign = "+" if z.imag >= 0 else "-"
    return f"{fmt(z.real, digits)} {sign} {fmt(abs(z.imag), digits)}i"

"""Project-wide configuration and path constants."""

import json
import os
from pathlib import Path

PROJECT_ROOT    = Path(__file__).resolve().parent.parent.parent
RESULTS_DIR     = Path(os.getenv("SEQMETRO_RESULTS_DIR", "").strip() or PROJECT_ROOT / "results")


def load_config() -> dict:
    """Load user config from config.json, falling back to config.example.json."""
    for name in ("config.json", "config.example.json"):
        p = PROJECT_ROOT / name
        if p.exists():
            return json.loads(p.read_text(encoding="utf-8"))
    return {"analysis": {}, "simulation": {}, "enumeration": {}, "fisher": {}, "thermometer": {}}


CONFIG = load_config()


def section(name: str) -> dict:
    return CONFIG.get(name, {}) or {}


# SEQMETRO_THREADS wins over config.json; both fall back to min(4, cpu count)
THREADS = int(
    os.getenv("SEQMETRO_THREADS", "").strip()
    or section("simulation").get("threads")
    or min(4, os.cpu_count() or 1)
)

DEFAULT_L        = int(section("analysis").get("L", 3))
DEFAULT_TOL      = float(section("analysis").get("cptp_tol", 1e-10))
ENUMERATION_CAP  = int(section("enumeration").get("cap", 2 ** 20))
FISHER_STEP_REL  = float(section("fisher").get("step_rel", 1e-4))
FISHER_COND      = float(section("fisher").get("cond_limit", 1e12))

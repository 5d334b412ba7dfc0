"""JSON model files.

Complex entries are [re, im] pairs and matrices are row-major nested lists. A file looks like::

    {
      "dimension": 2,
      "measurement": [{"value": 1.0, "kraus": [M]}, {"value": -1.0, "kraus": [M]}],
      "channel": {"kraus": [K1, K2, ...]},
      "parametrization": {"name": "gamma_beta", "grid": [...], "rule": "thermometer",
                          "params": {"omega": 1.0, "gamma": 1.0, "tau": 0.5, "eta": 0.3}}
    }

The "external-file-per-value" rule replaces "params" with "files", one model path per grid value
(relative paths resolve against the referencing file).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from core.instrument import Instrument, InstrumentError, Measurement, build_instrument
from core.linop import CPTP_TOL, kraus_from_superop, superop_from_kraus, validate_cptp
from models import ParametrizedModel, ThermometerParams, get_model
from models.thermometer import thermal_channel, weak_measurement

FORMAT_VERSION = 1


class ModelSpecError(Exception):
    """Raised for unreadable or invalid model files; carries the offending field or position."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None, column: int | None = None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if path:
            where.append(path)
        super().__init__(f"{' / '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class Parametrization:
    name: str
    grid: tuple[float, ...]
    rule: str
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ModelSpec:
    dimension: int
    measurement: Measurement
    channel_kraus: tuple[np.ndarray, ...]
    parametrization: Parametrization | None = None
    source: Path | None = None

    @property
    def channel(self) -> np.ndarray:
        return superop_from_kraus(self.channel_kraus)

    def instrument(self, tol: float = CPTP_TOL) -> Instrument:
        return build_instrument(self.measurement, self.channel, tol)

    def model(self) -> ParametrizedModel:
        """The parametrized family this file describes."""
        par = self.parametrization
        if par is None:
            raise ModelSpecError("model has no parametrization", path="parametrization")
        if par.rule == "external-file-per-value":
            base = self.source.parent if self.source else Path.cwd()
            files = par.options.get("files", [])
            instruments = [load_model_spec(base / f).instrument() for f in files]
            return get_model(par.rule, {"grid": par.grid, "instruments": instruments, "parameter": par.name})
        if not par.grid:
            raise ModelSpecError("empty parameter grid", path="parametrization.grid")
        return get_model(par.rule, {**par.options, "gamma_beta": par.grid[0]})


# ── encoding ─────────────────────────────────────────────────────────────────

def encode_matrix(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def decode_matrix(obj: Any, path: str, d: int | None = None) -> np.ndarray:
    if not isinstance(obj, list) or not obj or not all(isinstance(row, list) for row in obj):
        raise ModelSpecError("expected a matrix as a list of rows", path=path)
    rows = []
    for i, row in enumerate(obj):
        entries = []
        for j, pair in enumerate(row):
            ok = (
                isinstance(pair, list) and len(pair) == 2
                and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in pair)
            )
            if not ok:
                raise ModelSpecError("expected an [re, im] pair", path=f"{path}[{i}][{j}]")
            if not all(math.isfinite(x) for x in pair):
                raise ModelSpecError("non-finite number", path=f"{path}[{i}][{j}]")
            entries.append(complex(pair[0], pair[1]))
        rows.append(entries)
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ModelSpecError("matrix is not square", path=path)
    if d is not None and n != d:
        raise ModelSpecError(f"matrix is {n}×{n}, expected {d}×{d}", path=path)
    return np.array(rows, dtype=complex)


def _kraus_list(obj: Any, path: str, d: int) -> list[np.ndarray]:
    if not isinstance(obj, list) or not obj:
        raise ModelSpecError("expected a non-empty list of Kraus matrices", path=path)
    return [decode_matrix(k, f"{path}[{i}]", d) for i, k in enumerate(obj)]


def _field(obj: dict, key: str, path: str, kind: type | tuple[type, ...]) -> Any:
    if key not in obj:
        raise ModelSpecError("missing field", path=f"{path}.{key}" if path else key)
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ModelSpecError(f"wrong type {type(value).__name__}", path=f"{path}.{key}" if path else key)
    return value


def _parametrization(obj: Any) -> Parametrization:
    if not isinstance(obj, dict):
        raise ModelSpecError("expected an object", path="parametrization")
    name = _field(obj, "name", "parametrization", str)
    rule = _field(obj, "rule", "parametrization", str)
    grid = _field(obj, "grid", "parametrization", list)
    for i, v in enumerate(grid):
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ModelSpecError("grid values must be finite numbers", path=f"parametrization.grid[{i}]")
    if rule == "thermometer":
        options = dict(_field(obj, "params", "parametrization", dict))
    elif rule == "external-file-per-value":
        files = _field(obj, "files", "parametrization", list)
        if len(files) != len(grid) or not all(isinstance(f, str) for f in files):
            raise ModelSpecError("need one file name per grid value", path="parametrization.files")
        options = {"files": list(files)}
    else:
        raise ModelSpecError(f"unknown rule '{rule}'", path="parametrization.rule")
    return Parametrization(name=name, grid=tuple(float(v) for v in grid), rule=rule, options=options)


def parse_model_spec(text: str, source: Path | None = None, tol: float = CPTP_TOL) -> ModelSpec:
    """Parse and fully validate a model file; nothing partial is ever returned."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelSpecError(e.msg, line=e.lineno, column=e.colno) from e
    if not isinstance(data, dict):
        raise ModelSpecError("top level must be an object")

    d = _field(data, "dimension", "", int)
    if d < 1:
        raise ModelSpecError("dimension must be positive", path="dimension")

    outcomes = _field(data, "measurement", "", list)
    if not outcomes:
        raise ModelSpecError("at least one outcome is required", path="measurement")
    pairs = []
    for i, entry in enumerate(outcomes):
        path = f"measurement[{i}]"
        if not isinstance(entry, dict):
            raise ModelSpecError("expected an object", path=path)
        value = _field(entry, "value", path, (int, float))
        pairs.append((float(value), _kraus_list(entry.get("kraus"), f"{path}.kraus", d)))
    measurement = Measurement.from_pairs(pairs)
    try:
        measurement.validate(tol)
    except InstrumentError as e:
        raise ModelSpecError(str(e), path="measurement") from e

    channel_obj = _field(data, "channel", "", dict)
    kraus = _kraus_list(channel_obj.get("kraus"), "channel.kraus", d)
    report = validate_cptp(superop_from_kraus(kraus), tol)
    if not report.passed:
        raise ModelSpecError(
            f"channel is not CPTP (trace residual {report.trace_residual:.2e}, "
            f"Choi minimum {report.choi_min_eigenvalue:.2e})",
            path="channel",
        )

    parametrization = _parametrization(data["parametrization"]) if data.get("parametrization") is not None else None
    return ModelSpec(
        dimension=d, measurement=measurement, channel_kraus=tuple(kraus),
        parametrization=parametrization, source=source,
    )


def load_model_spec(path: str | Path, tol: float = CPTP_TOL) -> ModelSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ModelSpecError(f"cannot read model file: {e.strerror}", path=str(path)) from e
    return parse_model_spec(text, source=path.resolve(), tol=tol)


def model_spec_to_dict(spec: ModelSpec) -> dict:
    out: dict[str, Any] = {
        "format": FORMAT_VERSION,
        "dimension": spec.dimension,
        "measurement": [
            {"value": float(value), "kraus": [encode_matrix(k) for k in kraus]}
            for value, kraus in spec.measurement.outcomes
        ],
        "channel": {"kraus": [encode_matrix(k) for k in spec.channel_kraus]},
    }
    par = spec.parametrization
    if par is not None:
        body: dict[str, Any] = {"name": par.name, "grid": list(par.grid), "rule": par.rule}
        if par.rule == "thermometer":
            body["params"] = dict(par.options)
        else:
            body["files"] = list(par.options.get("files", []))
        out["parametrization"] = body
    return out


def dump_model_spec(spec: ModelSpec) -> str:
    return json.dumps(model_spec_to_dict(spec), indent=2)


def save_model_spec(spec: ModelSpec, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_model_spec(spec) + "\n", encoding="utf-8")
    return path


def thermometer_spec(p: ThermometerParams, grid: Sequence[float] | None = None) -> ModelSpec:
    """Model file for the thermometer at ``p``; with ``grid``, a gamma_beta family around it."""
    parametrization = None
    if grid is not None:
        options = {
            "omega": p.omega, "gamma": p.gamma, "tau": p.tau, "eta": p.eta,
            "theta": p.theta, "phi": p.phi,
        }
        parametrization = Parametrization(
            name="gamma_beta", grid=tuple(float(g) for g in grid), rule="thermometer", options=options,
        )
    return ModelSpec(
        dimension=2,
        measurement=weak_measurement(p.eta),
        channel_kraus=tuple(kraus_from_superop(thermal_channel(p))),
        parametrization=parametrization,
    )

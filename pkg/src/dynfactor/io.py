"""File formats: panel CSV (header ``t,<series_id>...``, one row per time
index) and the process-spec JSON with keys ``q``, ``filters`` (per-series,
per-lag, per-shock coefficients), ``idio`` and ``seed``."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import ConfigError, GdfmSpec, IdioSpec, MatrixPolynomial, Panel, ShockSeries, SpecError


def write_panel_csv(path: str | Path, panel: Panel) -> None:
    path = Path(path)
    times = panel.t0 + np.arange(panel.T)
    table = np.column_stack([times.astype(float), panel.values.T])
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("t," + ",".join(panel.series_ids) + "\n")
        # %.17g round-trips float64 exactly and keeps output byte-deterministic
        np.savetxt(fh, table, fmt=["%d"] + ["%.17g"] * panel.n, delimiter=",")


def read_panel_csv(path: str | Path) -> Panel:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            header = fh.readline().strip()
        cols = header.split(",")
        if len(cols) < 2 or cols[0] != "t":
            raise ConfigError(f"{path}: expected header 't,<series>...', got {header!r}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read panel CSV {path}: {exc}") from exc
    if data.shape[1] != len(cols):
        raise ConfigError(f"{path}: row width does not match header")
    return Panel(data[:, 1:].T, tuple(cols[1:]), t0=int(round(data[0, 0])))


def write_shocks_csv(path: str | Path, shocks: ShockSeries, t0: int = 0,
                     prefix: str = "eps") -> None:
    ids = tuple(f"{prefix}_{i + 1}" for i in range(shocks.q))
    write_panel_csv(path, Panel(shocks.values, ids, t0=t0))


def read_shocks_csv(path: str | Path) -> tuple[ShockSeries, int]:
    panel = read_panel_csv(path)
    return ShockSeries(panel.values), panel.t0


def spec_to_dict(spec: GdfmSpec) -> dict:
    return {
        "q": spec.q,
        "filters": [f.coeffs[:, 0, :].tolist() for f in spec.common_filters],
        "idio": {"ar": spec.idio.ar, "sigma": spec.idio.sigma,
                 "coupling": spec.idio.coupling},
        "seed": spec.seed,
    }


def spec_from_dict(d: dict) -> GdfmSpec:
    try:
        q = int(d["q"])
        filters = tuple(
            MatrixPolynomial(np.asarray(rows, dtype=float)[:, None, :])
            for rows in d["filters"])
        idio = d.get("idio", {})
        return GdfmSpec(
            q=q,
            common_filters=filters,
            idio=IdioSpec(ar=float(idio.get("ar", 0.0)),
                          sigma=float(idio.get("sigma", 0.0)),
                          coupling=float(idio.get("coupling", 0.0))),
            seed=int(d.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"malformed spec JSON: {exc}") from exc


def write_spec_json(path: str | Path, spec: GdfmSpec) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=1), encoding="utf-8")


def read_spec_json(path: str | Path) -> GdfmSpec:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read spec JSON {path}: {exc}") from exc
    return spec_from_dict(d)


def write_json(path: str | Path, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True), encoding="utf-8")


def read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read JSON {path}: {exc}") from exc

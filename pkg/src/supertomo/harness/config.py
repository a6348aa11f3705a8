"""Flat key=value experiment configuration with strict validation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from ..geometry import ScanGeometry


class ConfigError(ValueError):
    """Bad configuration input; the CLI maps this to exit code 2."""


_DESK_SPACING = 0.0752 * 243.0 / 64.0

ALGORITHMS = ("cg", "pcg", "supcg", "suppcg", "suptpcg", "art", "supart")

# per-algorithm tuning keys; anything else given for that algorithm is an error
ALGO_KEYS = {
    "cg": frozenset(),
    "pcg": frozenset({"mu", "rho"}),
    "supcg": frozenset({"K", "a", "gamma"}),
    "suppcg": frozenset({"K", "a", "gamma", "mu", "rho"}),
    "suptpcg": frozenset({"K", "a", "gamma", "mu", "rho"}),
    "art": frozenset({"r", "lambda"}),
    "supart": frozenset({"K", "a", "gamma", "r", "lambda"}),
}

# tuned per-algorithm defaults (applied only where the key is relevant)
ALGO_DEFAULTS = {
    "cg": {},
    "pcg": {"mu": 1e-3, "rho": 0.6},
    "supcg": {"K": 40, "a": 1.0 - 1e-5, "gamma": 5e-2},
    "suppcg": {"K": 40, "a": 1.0 - 1e-5, "gamma": 1e-2, "mu": 1e-5, "rho": 0.8},
    "suptpcg": {"K": 40, "a": 1.0 - 1e-5, "gamma": 1e-2, "mu": 1e-5, "rho": 0.8},
    "art": {"r": 5.0, "lambda": 1e-2},
    "supart": {"K": 10, "a": 1.0 - 1e-5, "gamma": 1e-2, "r": 5.0, "lambda": 5e-2},
}

_INT_KEYS = {"grid_rows", "grid_cols", "n_angles", "n_rays", "seed", "max_iter", "K"}
_FLOAT_KEYS = {
    "ray_spacing",
    "pixel_size",
    "mean_photons",
    "eps",
    "a",
    "gamma",
    "mu",
    "rho",
    "r",
    "lambda",
    "window_lo",
    "window_hi",
}
_STR_KEYS = {"phantom", "sinogram", "matrix", "algorithm", "out"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS

_DEFAULTS = {
    "grid_rows": 64,
    "grid_cols": 64,
    "n_angles": 90,
    "n_rays": 95,
    "ray_spacing": _DESK_SPACING,
    "pixel_size": _DESK_SPACING,
    "phantom": "default",
    "sinogram": "",
    "matrix": "",
    "mean_photons": 2e5,
    "seed": 1234,
    "algorithm": "suppcg",
    "eps": 1e-9,
    "max_iter": 1000,
    "out": ".",
    "window_lo": 0.204,
    "window_hi": 0.21675,
}


@dataclass
class ExperimentConfig:
    grid_rows: int
    grid_cols: int
    n_angles: int
    n_rays: int
    ray_spacing: float
    pixel_size: float
    phantom: str
    sinogram: str
    matrix: str
    mean_photons: float | None
    seed: int
    algorithm: str
    params: dict
    eps: float
    max_iter: int
    out: str
    window_lo: float
    window_hi: float
    explicit: frozenset = field(default_factory=frozenset)

    def geometry(self) -> ScanGeometry:
        return ScanGeometry(
            n_angles=self.n_angles,
            n_rays=self.n_rays,
            ray_spacing=self.ray_spacing,
            grid_rows=self.grid_rows,
            grid_cols=self.grid_cols,
            pixel_size=self.pixel_size,
        )


def _coerce(key: str, raw: str):
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} expects an integer, got {raw!r}") from None
    if key in _FLOAT_KEYS:
        if key == "mean_photons" and raw.lower() in ("none", "exact"):
            return None
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} expects a number, got {raw!r}") from None
    return raw


def read_config_file(path) -> dict[str, str]:
    """Flat key=value lines; '#' starts a comment; later keys win."""
    out: dict[str, str] = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected key=value, got {line!r}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def parse_set_option(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, val = item.split("=", 1)
    return key.strip(), val.strip()


def build_config(
    file_entries: dict[str, str] | None = None,
    set_entries: list[tuple[str, str]] | None = None,
    seed: int | None = None,
    out: str | None = None,
) -> ExperimentConfig:
    """Merge file keys, --set overrides, and flag overrides into a config.

    Unknown keys and tuning keys that do not apply to the selected
    algorithm are rejected rather than ignored.
    """
    raw: dict[str, str] = dict(file_entries or {})
    for key, val in set_entries or []:
        raw[key] = val

    for key in raw:
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown config key {key!r}")

    values = dict(_DEFAULTS)
    explicit = set(raw)
    for key, rawval in raw.items():
        values[key] = _coerce(key, rawval)
    if seed is not None:
        values["seed"] = int(seed)
        explicit.add("seed")
    if out is not None:
        values["out"] = str(out)
        explicit.add("out")

    algorithm = str(values["algorithm"]).lower()
    if algorithm not in ALGORITHMS:
        raise ConfigError(
            f"unknown algorithm {values['algorithm']!r}; expected one of {', '.join(ALGORITHMS)}"
        )
    allowed = ALGO_KEYS[algorithm]
    tuning_keys = {"K", "a", "gamma", "mu", "rho", "r", "lambda"}
    for key in explicit & tuning_keys:
        if key not in allowed:
            raise ConfigError(f"parameter {key!r} does not apply to algorithm {algorithm!r}")
    params = dict(ALGO_DEFAULTS[algorithm])
    for key in allowed:
        if key in explicit:
            params[key] = values[key]

    _validate_ranges(values, params, algorithm)

    return ExperimentConfig(
        grid_rows=values["grid_rows"],
        grid_cols=values["grid_cols"],
        n_angles=values["n_angles"],
        n_rays=values["n_rays"],
        ray_spacing=values["ray_spacing"],
        pixel_size=values["pixel_size"],
        phantom=values["phantom"],
        sinogram=values["sinogram"],
        matrix=values["matrix"],
        mean_photons=values["mean_photons"],
        seed=values["seed"],
        algorithm=algorithm,
        params=params,
        eps=values["eps"],
        max_iter=values["max_iter"],
        out=values["out"],
        window_lo=values["window_lo"],
        window_hi=values["window_hi"],
        explicit=frozenset(explicit),
    )


def _validate_ranges(values: dict, params: dict, algorithm: str) -> None:
    for key in ("grid_rows", "grid_cols", "n_angles", "n_rays", "max_iter"):
        if values[key] < 1:
            raise ConfigError(f"config key {key!r} must be a positive integer")
    for key in ("ray_spacing", "pixel_size", "eps"):
        if values[key] <= 0:
            raise ConfigError(f"config key {key!r} must be positive")
    if values["mean_photons"] is not None and values["mean_photons"] <= 0:
        raise ConfigError("mean_photons must be positive or none")
    if values["window_hi"] <= values["window_lo"]:
        raise ConfigError("window_hi must exceed window_lo")
    if "K" in params and params["K"] < 1:
        raise ConfigError("K must be a positive integer")
    if "a" in params and not 0.0 < params["a"] < 1.0:
        raise ConfigError("a must lie strictly between 0 and 1")
    for key in ("gamma", "mu", "r", "lambda"):
        if key in params and params[key] <= 0:
            raise ConfigError(f"{key} must be positive")
    if "rho" in params and not 0.0 < params["rho"] <= 1.0:
        raise ConfigError("rho must lie in (0, 1]")


# --- parameter grids --------------------------------------------------------

_SUP_GRID = {
    "K": [10, 20, 40],
    "a": [1.0 - 1e-5, 1.0 - 1e-4, 1.0 - 1e-3, 1.0 - 1e-2, 1.0 - 1e-1],
    "gamma": [1e-2, 5e-2],
}
_FILTER_GRID = {"mu": [1e-5, 1e-4, 1e-3], "rho": [0.4, 0.6, 0.8]}
_ART_GRID = {"r": [5.0, 10.0], "lambda": [1e-2, 5e-2, 1e-1, 5e-1, 1.0]}


def standard_grid(algorithm: str) -> list[dict]:
    """Cross product of the stock tuning grid for one algorithm."""
    algorithm = algorithm.lower()
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    parts: dict[str, list] = {}
    if algorithm.startswith("sup"):
        parts.update(_SUP_GRID)
    if algorithm in ("pcg", "suppcg", "suptpcg"):
        parts.update(_FILTER_GRID)
    if algorithm in ("art", "supart"):
        parts.update(_ART_GRID)
    if not parts:
        return [{}]
    keys = list(parts)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(parts[k] for k in keys))]


def read_grid_file(path) -> list[tuple[str, dict]]:
    """Parameter sets for cmd_sweep, one per line.

    Line format: ``algorithm key=value key=value ...``; '#' comments.
    """
    sets: list[tuple[str, dict]] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read grid file {path}: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            algorithm = parts[0].lower()
            if algorithm not in ALGORITHMS:
                raise ConfigError(f"{path}: line {lineno}: unknown algorithm {parts[0]!r}")
            params = {}
            for item in parts[1:]:
                if "=" not in item:
                    raise ConfigError(
                        f"{path}: line {lineno}: expected key=value, got {item!r}"
                    )
                key, val = item.split("=", 1)
                if key not in ALGO_KEYS[algorithm]:
                    raise ConfigError(
                        f"{path}: line {lineno}: parameter {key!r} does not apply "
                        f"to algorithm {algorithm!r}"
                    )
                params[key] = _coerce(key, val)
            sets.append((algorithm, params))
    if not sets:
        raise ConfigError(f"{path}: grid file lists no parameter sets")
    return sets

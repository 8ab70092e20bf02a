"""Flat key-value run configuration.

The file format is deliberately primitive: one ``section.key = value`` per
line, ``#`` comments, nothing nested.  Primitive parses identically
everywhere and hashes byte-for-byte, which the run manifest relies on.
Unknown keys are rejected and every problem in a file is reported in a
single error message.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = ["ConfigError", "Config", "SCHEMA", "parse_config", "parse_config_text",
           "default_config_text"]


class ConfigError(ValueError):
    pass


# key -> (type, default, one-line help)
SCHEMA = {
    "model.N": (int, 1, "1-based index of the tracked eigenvalue"),
    "model.weight": (str, "one", "spectral weight: 'one' or 'affine:gx,gy'"),
    "mesh.h": (float, 0.055, "element size for sweep meshes"),
    "mesh.reference_h": (float, 0.05, "element size for the reference mesh"),
    "mesh.origin_h": (float, 0.012, "reference-mesh size near the origin"),
    "mesh.origin_radius": (float, 0.05, "radius of the origin refinement ball"),
    "mesh.fe_order": (int, 2, "polynomial order of the elements (1 or 2)"),
    "eigensolver.tol": (float, 1e-9, "residual gate for accepted eigenpairs"),
    "eigensolver.max_iter": (int, 0, "Lanczos iteration cap; 0 = library default"),
    "eigensolver.block": (int, 2, "extra eigenpairs solved beyond the request"),
    "crack.radii": (str, "8,16,32", "truncation-radius ladder"),
    "crack.h": (float, 0.5, "far-field element size of the crack domain"),
    "crack.tip_h": (float, 0.012, "element size at the slit tip"),
    "crack.alpha_deg_grid": (str, "-80:80:17", "direction grid, degrees (list or lo:hi:n)"),
    "ray.directions_deg": (str, "0", "sweep directions in degrees, comma separated"),
    "ray.t0": (float, 0.2, "largest pole distance"),
    "ray.ratio": (float, 0.7, "geometric ratio of the pole schedule"),
    "ray.count": (int, 8, "number of pole distances"),
    "verify.exponent_tol": (float, 0.15, "allowed deviation of the fitted exponent"),
    "verify.coefficient_rtol": (float, 0.10, "allowed relative error of the coefficient"),
    "output.dir": (str, "out", "directory for CSV and manifest output"),
    "run.seed": (int, 0, "seed for the eigensolver start vectors"),
    "run.threads": (int, 1, "BLAS/LAPACK thread count"),
}


@dataclass
class Config:
    """Validated run parameters plus the hash of their source bytes."""

    values: dict
    sha256: str
    source: str = "<defaults>"

    def __getitem__(self, key: str):
        return self.values[key]

    # -- derived, validated views ------------------------------------------

    @property
    def crack_radii(self) -> tuple:
        return tuple(float(x) for x in self["crack.radii"].split(","))

    @property
    def alpha_grid(self) -> np.ndarray:
        """Crack direction grid in radians."""
        return np.radians(_parse_grid(self["crack.alpha_deg_grid"]))

    @property
    def ray_directions(self) -> np.ndarray:
        return np.radians([float(x) for x in self["ray.directions_deg"].split(",")])

    @property
    def ray_schedule(self) -> np.ndarray:
        return self["ray.t0"] * self["ray.ratio"] ** np.arange(self["ray.count"])

    def weight_field(self):
        from .assembly import WeightField
        spec = self["model.weight"]
        if spec == "one":
            return WeightField.one()
        gx, gy = (float(x) for x in spec.split(":", 1)[1].split(","))
        return WeightField.affine(gx, gy)


def _parse_grid(text: str) -> np.ndarray:
    if ":" in text:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    return np.array([float(x) for x in text.split(",")])


def default_config_text() -> str:
    lines = ["# defaults\n"]
    for key, (_, default, help_) in SCHEMA.items():
        lines.append(f"{key} = {default}  # {help_}\n")
    return "".join(lines)


def _validate(values: dict, errors: list) -> None:
    def positive(key):
        if values[key] <= 0:
            errors.append(f"{key}: must be positive, got {values[key]}")

    for key in ("mesh.h", "mesh.reference_h", "mesh.origin_h", "mesh.origin_radius",
                "eigensolver.tol", "crack.h", "crack.tip_h", "ray.t0", "ray.ratio",
                "verify.exponent_tol", "verify.coefficient_rtol"):
        positive(key)
    if values["model.N"] < 1:
        errors.append(f"model.N: must be >= 1, got {values['model.N']}")
    if values["mesh.fe_order"] not in (1, 2):
        errors.append(f"mesh.fe_order: must be 1 or 2, got {values['mesh.fe_order']}")
    if values["eigensolver.max_iter"] < 0:
        errors.append("eigensolver.max_iter: must be >= 0")
    if values["eigensolver.block"] < 1:
        errors.append("eigensolver.block: must be >= 1")
    if values["ray.count"] < 1:
        errors.append("ray.count: must be >= 1")
    if values["ray.ratio"] > 0.75:
        errors.append(f"ray.ratio: must be <= 0.75, got {values['ray.ratio']}")
    if values["ray.t0"] > 0.3:
        errors.append(f"ray.t0: must be <= 0.3, got {values['ray.t0']}")
    if values["run.seed"] < 0:
        errors.append("run.seed: must be >= 0")
    if values["run.threads"] < 1:
        errors.append("run.threads: must be >= 1")

    w = values["model.weight"]
    if w != "one" and not w.startswith("affine:"):
        errors.append(f"model.weight: expected 'one' or 'affine:gx,gy', got {w!r}")
    elif w.startswith("affine:"):
        parts = w.split(":", 1)[1].split(",")
        try:
            if len([float(x) for x in parts]) != 2:
                raise ValueError
        except ValueError:
            errors.append(f"model.weight: malformed affine spec {w!r}")

    try:
        radii = tuple(float(x) for x in values["crack.radii"].split(","))
        if len(radii) < 2 or any(r <= 2.0 for r in radii):
            errors.append("crack.radii: need at least two radii, all > 2")
        elif any(b <= a for a, b in zip(radii, radii[1:])):
            errors.append("crack.radii: radii must increase strictly")
    except ValueError:
        errors.append(f"crack.radii: malformed list {values['crack.radii']!r}")

    for key in ("crack.alpha_deg_grid",):
        try:
            grid = _parse_grid(values[key])
            if np.any(np.abs(grid) > 80.0 + 1e-12):
                errors.append(f"{key}: directions must satisfy |alpha| <= 80 degrees")
        except (ValueError, IndexError):
            errors.append(f"{key}: malformed grid {values[key]!r}")

    try:
        dirs = [float(x) for x in values["ray.directions_deg"].split(",")]
        if any(abs(d) > 80.0 + 1e-12 for d in dirs):
            errors.append("ray.directions_deg: directions must satisfy |alpha| <= 80 degrees")
    except ValueError:
        errors.append(f"ray.directions_deg: malformed list {values['ray.directions_deg']!r}")


def parse_config_text(text: str, source: str = "<text>") -> Config:
    """Parse and validate; reports every problem in one go."""
    values = {k: d for k, (_, d, _) in SCHEMA.items()}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in SCHEMA:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        typ = SCHEMA[key][0]
        try:
            values[key] = typ(val) if typ is not str else val
        except ValueError:
            errors.append(f"line {lineno}: {key} expects {typ.__name__}, got {val!r}")
    _validate(values, errors)
    if errors:
        raise ConfigError(f"invalid configuration ({source}):\n  " + "\n  ".join(errors))
    digest = hashlib.sha256(text.encode()).hexdigest()
    return Config(values=values, sha256=digest, source=source)


def parse_config(path) -> Config:
    with open(path, "rb") as fh:
        data = fh.read()
    digest = hashlib.sha256(data).hexdigest()
    cfg = parse_config_text(data.decode("utf-8"), source=str(path))
    return Config(values=cfg.values, sha256=digest, source=str(path))

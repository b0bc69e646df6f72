"""Scenario documents: loading, validation and construction of domain objects"""

import copy
import json
import logging

import numpy as np
import yaml

from .collision import CollisionModel
from .errors import ValidationError
from .fields import (
    AlgebraicDecay,
    FieldSum,
    Maxwellian,
    SmoothBump,
    VelocityGrid,
    ZeroField,
    sample,
)
from .hydro import ENVELOPE_FAMILIES, HydroBounds
from .quadrature import QuadratureSettings
from .storage import read_field

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MAX_SEED = 2**64 - 1
FIELD_KINDS = ("maxwellian", "algebraic", "bump", "zero")

DEFAULT_SOLVER = {
    "t_end": 1.0,
    "dt": 0.01,
    "cfl": 0.25,
    "save_every": 10,
    "decay_order": 8.0,
    "drift_budget": 1e-4,
    "clip": True,
    "max_halvings": 6,
    "envelope": "hard",
}

DEFAULT_KOLMOGOROV = {
    "s": 0.5,
    "d": 2,
    "nx": 8,
    "lx": 3.141592653589793,
    "nv": 32,
    "lv": 6.283185307179586,
    "datum": "rough",
    "times": [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
    "alpha": None,
}


class Scenario:
    """Configuration loader for kinetik runs"""

    def __init__(self, config_path="config.yaml", seed=None, strict=True):
        self.config_path = config_path
        self.config = self._load_config()
        if seed is not None and isinstance(self.config, dict):
            self.config["seed"] = int(seed)
        if strict:
            self._validate_config()

    def _load_config(self):
        """Load a YAML or JSON scenario document"""
        try:
            with open(self.config_path, "r") as f:
                if str(self.config_path).endswith(".json"):
                    return json.load(f)
                return yaml.safe_load(f)
        except FileNotFoundError:
            logger.error(f"Configuration file not found: {self.config_path}")
            raise
        except yaml.YAMLError as e:
            logger.error(f"Error parsing YAML configuration: {e}")
            raise
        except json.JSONDecodeError as e:
            logger.error(f"Error parsing JSON configuration: {e}")
            raise

    def _validate_config(self):
        """Validate configuration structure, raising on the first problem"""
        if not isinstance(self.config, dict):
            raise ValueError("Configuration must be a mapping")
        for section in ("schema_version", "model"):
            if section not in self.config:
                raise ValueError(f"Missing required configuration section: {section}")
        problems = self.diagnostics()
        if problems:
            raise ValidationError(problems[0])

    def diagnostics(self):
        """Every violated precondition, prefixed by the owning module"""
        c = self.config
        if not isinstance(c, dict):
            return ["cli: configuration must be a mapping"]
        problems = []
        if "model" not in c:
            problems.append("cli: Missing required configuration section: model")
        if c.get("schema_version") != SCHEMA_VERSION:
            problems.append(
                f"cli: schema_version must be {SCHEMA_VERSION}, got {c.get('schema_version')}"
            )
        seed = c.get("seed", 0)
        if not isinstance(seed, int) or not 0 <= seed <= MAX_SEED:
            problems.append(f"cli: seed must be an unsigned 64-bit integer, got {seed}")
        model = c.get("model") or {}
        for key in ("d", "gamma", "s"):
            if key not in model:
                problems.append(f"collision: model is missing '{key}'")
        if {"d", "gamma", "s"} <= set(model):
            d, gamma, s = model["d"], model["gamma"], model["s"]
            if d not in (2, 3):
                problems.append(f"collision: d must be 2 or 3, got {d}")
            if not gamma > -d:
                problems.append(f"collision: gamma > -d required, got gamma={gamma}, d={d}")
            if gamma > 1:
                problems.append(f"collision: gamma must not exceed 1, got {gamma}")
            if not 0 < s < 1:
                problems.append(f"collision: s must lie in (0, 1), got {s}")
        try:
            QuadratureSettings(**(c.get("quadrature") or {}))
        except ValidationError as e:
            problems.append(f"collision: {e}")
        field = c.get("field")
        if field is not None:
            problems.extend(self._field_diagnostics(field))
        bounds = c.get("bounds")
        if bounds is not None:
            try:
                HydroBounds(**bounds)
            except (TypeError, ValidationError) as e:
                problems.append(f"hydro: {e}")
        solver = self.get_solver()
        if not solver["dt"] > 0 or not solver["t_end"] >= 0:
            problems.append("evolve: solver needs dt > 0 and t_end >= 0")
        if int(solver["save_every"]) < 1:
            problems.append("evolve: save_every must be at least 1")
        if solver["envelope"] not in ENVELOPE_FAMILIES:
            problems.append(f"evolve: unknown envelope family {solver['envelope']}")
        kolmogorov = self.get_kolmogorov()
        if not 0 < kolmogorov["s"] <= 1:
            problems.append(f"evolve: kolmogorov s must lie in (0, 1], got {kolmogorov['s']}")
        if any(t < 0 for t in kolmogorov["times"]):
            problems.append("evolve: kolmogorov times must be nonnegative")
        probes = c.get("probes") or {}
        for pair in probes.get("kernel_pairs", []):
            v, v_prime = pair
            if list(v) == list(v_prime):
                problems.append(f"collision: kernel probe needs v' != v, got {v}")
        return problems

    def _field_diagnostics(self, field):
        problems = []
        if "path" in field:
            return problems
        grid = field.get("grid") or {}
        n, L = grid.get("n", 0), grid.get("L", 0)
        if n < 8 or not L > 0:
            problems.append(f"fields: grid needs n >= 8 and L > 0, got n={n}, L={L}")
        if field.get("interpolation", "linear") not in ("linear", "cubic"):
            problems.append(f"fields: unknown interpolation {field.get('interpolation')}")
        components = field.get("components") or []
        if not components:
            problems.append("fields: field needs at least one component or a path")
        for component in components:
            if component.get("kind") not in FIELD_KINDS:
                problems.append(f"fields: unknown component kind {component.get('kind')}")
        return problems

    def get_seed(self):
        return int(self.config.get("seed", 0))

    def get_model(self):
        """Get model configuration"""
        return self.config["model"]

    def get_quadrature(self):
        return self.config.get("quadrature") or {}

    def get_field(self):
        field = self.config.get("field")
        if field is None:
            raise ValueError("Missing required configuration section: field")
        return field

    def get_probes(self):
        return self.config.get("probes") or {}

    def get_bounds(self):
        return self.config.get("bounds")

    def get_solver(self):
        solver = dict(DEFAULT_SOLVER)
        solver.update(self.config.get("solver") or {})
        return solver

    def get_kolmogorov(self):
        kolmogorov = dict(DEFAULT_KOLMOGOROV)
        kolmogorov.update(self.config.get("kolmogorov") or {})
        return kolmogorov

    def get_output_dir(self):
        return (self.config.get("output") or {}).get("dir", "kinetik-out")

    def build_settings(self):
        return QuadratureSettings(**self.get_quadrature())

    def build_model(self):
        model = self.get_model()
        return CollisionModel(model["d"], model["gamma"], model["s"], self.build_settings())

    def build_field(self):
        """DensityField from a stored KFLD file or sampled analytic components"""
        field = self.get_field()
        interpolation = field.get("interpolation", "linear")
        if "path" in field:
            return read_field(field["path"], interpolation)
        d = self.get_model()["d"]
        grid = VelocityGrid(d, field["grid"]["n"], field["grid"]["L"])
        parts = [_component(spec, d) for spec in field["components"]]
        analytic = parts[0] if len(parts) == 1 else FieldSum(parts)
        return sample(analytic, grid, interpolation, fit=field.get("fit_tail", True))

    def build_bounds(self):
        bounds = self.get_bounds()
        return HydroBounds(**bounds) if bounds is not None else None

    def resolved(self):
        """The exact document in use, seed override included"""
        return copy.deepcopy(self.config)


def _component(spec, d):
    kind = spec["kind"]
    if kind == "maxwellian":
        return Maxwellian(
            spec.get("rho", 1.0), spec.get("u", np.zeros(d)), spec.get("temperature", 1.0)
        )
    if kind == "algebraic":
        return AlgebraicDecay(spec.get("c", 1.0), spec.get("q", 5.0))
    if kind == "bump":
        return SmoothBump(spec.get("center", np.zeros(d)), spec.get("width", 1.0), spec.get("height", 1.0))
    return ZeroField()

"""Run configuration: a JSON document with flag overrides, resolved into
the objects the solvers consume.

Physical inputs are accepted with a fluid density ``rho`` and normalised at
load: masses, inertias and force amplitudes are divided by ``rho`` and the
dynamic viscosity becomes the kinematic one.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass

import numpy as np

from .bem import (DEFAULT_BLOB_COEFF, DEFAULT_MAX_PANELS, DEFAULT_SYM_TOL, ResistanceSet,
                  compute_resistance)
from .errors import ConfigError, ValidationError
from .mesh import ellipsoid, icosphere, load_stl, mass_properties
from .oracles import ellipsoid_resistance
from .propulsion import (DEFAULT_TOL, BodyInertia, Forcing, find_non_propelling_r,
                         offcenter_sphere_tensors, sphere_tensors)

SHAPES = ("sphere", "ellipsoid", "offcenter-sphere", "stl")

DEFAULTS = {
    "body": {
        "shape": "sphere",
        "radius": 1.0,
        "semi_axes": [2.0, 1.0, 1.0],
        "offset": 0.5,
        "path": None,
        "subdivisions": [3],
        "tensors": "auto",
    },
    "inertia": {
        "mass": None,
        "inertia": None,
        "density": 1.0,
        "r": [0.0, 0.0, 0.0],
    },
    "fluid": {"viscosity": 1.0, "density": 1.0},
    "forcing": {
        "period": 1.0,
        "delta": 0.1,
        "deltas": [0.1, 0.05, 0.025, 0.0125],
        "mean": 1.0,
        "cos": [],
        "sin": [],
        "direction": [1.0, 0.0, 0.0],
    },
    "solver": {
        "blob_coeff": DEFAULT_BLOB_COEFF,
        "steps_per_period": 1024,
        "orbit_tol": 1e-10,
        "max_periods": 200,
        "max_panels": DEFAULT_MAX_PANELS,
        "propulsion_tol": None,
        "translation_only": False,
        "sym_tol": DEFAULT_SYM_TOL,
        "workers": 1,
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _num(x, where, positive=False, nonneg=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigError(f"{where} must be a finite number, got {x!r}")
    if positive and x <= 0:
        raise ConfigError(f"{where} must be positive, got {x!r}")
    if nonneg and x < 0:
        raise ConfigError(f"{where} must be non-negative, got {x!r}")
    return float(x)


def _vec(x, where, n=3):
    if not isinstance(x, (list, tuple)) or len(x) != n:
        raise ConfigError(f"{where} must be a list of {n} numbers")
    return [_num(v, where) for v in x]


def _int(x, where, minimum=0):
    if isinstance(x, bool) or not isinstance(x, int) or x < minimum:
        raise ConfigError(f"{where} must be an integer >= {minimum}, got {x!r}")
    return x


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully resolved configuration."""

    data: dict

    @classmethod
    def from_dict(cls, override: dict | None = None) -> "RunConfig":
        if override is not None and not isinstance(override, dict):
            raise ConfigError("config root must be an object")
        data = _merge(DEFAULTS, override or {})
        cls._validate(data)
        return cls(data)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        base = {}
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                try:
                    base = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
            if not isinstance(base, dict):
                raise ConfigError("config root must be an object")
        merged = _merge(DEFAULTS, base)
        merged = _merge(merged, overrides or {})
        cls._validate(merged)
        return cls(merged)

    @staticmethod
    def _validate(d: dict) -> None:
        b = d["body"]
        if b["shape"] not in SHAPES:
            raise ConfigError(f"body.shape must be one of {SHAPES}, got {b['shape']!r}")
        _num(b["radius"], "body.radius", positive=True)
        for i, s in enumerate(_vec(b["semi_axes"], "body.semi_axes")):
            _num(s, f"body.semi_axes[{i}]", positive=True)
        _num(b["offset"], "body.offset", nonneg=True)
        if b["shape"] == "offcenter-sphere" and not 0 < b["offset"] < b["radius"]:
            raise ConfigError("body.offset must lie strictly between 0 and body.radius")
        if b["shape"] == "stl" and not b["path"]:
            raise ConfigError("body.path is required for an stl body")
        subs = b["subdivisions"]
        if isinstance(subs, int) and not isinstance(subs, bool):
            b["subdivisions"] = subs = [subs]
        if not isinstance(subs, list) or not subs:
            raise ConfigError("body.subdivisions must be an integer or a non-empty list")
        for s in subs:
            _int(s, "body.subdivisions")
        if b["tensors"] not in ("auto", "analytic", "bem"):
            raise ConfigError("body.tensors must be 'auto', 'analytic' or 'bem'")
        if b["tensors"] == "analytic" and b["shape"] == "stl":
            raise ConfigError("no analytic tensors for an stl body")

        i = d["inertia"]
        if i["mass"] is not None:
            _num(i["mass"], "inertia.mass", positive=True)
            if i["inertia"] is None:
                raise ConfigError("inertia.inertia is required when inertia.mass is given")
        if i["inertia"] is not None:
            if i["mass"] is None:
                raise ConfigError("inertia.mass is required when inertia.inertia is given")
            flat = np.ravel(np.array(i["inertia"], dtype=object))
            if len(flat) not in (3, 9):
                raise ConfigError("inertia.inertia must hold 3 principal moments or a 3x3 matrix")
            for v in flat:
                _num(v, "inertia.inertia")
        _num(i["density"], "inertia.density", positive=True)
        if i["r"] != "solve":
            _vec(i["r"], "inertia.r")

        _num(d["fluid"]["viscosity"], "fluid.viscosity", positive=True)
        _num(d["fluid"]["density"], "fluid.density", positive=True)

        f = d["forcing"]
        _num(f["period"], "forcing.period", positive=True)
        _num(f["delta"], "forcing.delta", nonneg=True)
        if not isinstance(f["deltas"], list) or not f["deltas"]:
            raise ConfigError("forcing.deltas must be a non-empty list")
        for v in f["deltas"]:
            _num(v, "forcing.deltas", positive=True)
        _num(f["mean"], "forcing.mean")
        for key in ("cos", "sin"):
            if not isinstance(f[key], list):
                raise ConfigError(f"forcing.{key} must be a list")
            for v in f[key]:
                _num(v, f"forcing.{key}")
        if np.linalg.norm(_vec(f["direction"], "forcing.direction")) == 0:
            raise ConfigError("forcing.direction must be nonzero")

        s = d["solver"]
        _num(s["blob_coeff"], "solver.blob_coeff", positive=True)
        _int(s["steps_per_period"], "solver.steps_per_period", 1)
        _num(s["orbit_tol"], "solver.orbit_tol", positive=True)
        _int(s["max_periods"], "solver.max_periods", 1)
        _int(s["max_panels"], "solver.max_panels", 1)
        if s["propulsion_tol"] is not None:
            _num(s["propulsion_tol"], "solver.propulsion_tol", positive=True)
        if not isinstance(s["translation_only"], bool):
            raise ConfigError("solver.translation_only must be a boolean")
        _num(s["sym_tol"], "solver.sym_tol", positive=True)
        _int(s["workers"], "solver.workers", 1)

    # -- resolved objects ---------------------------------------------------

    @property
    def rho(self) -> float:
        return float(self.data["fluid"]["density"])

    @property
    def viscosity(self) -> float:
        """Kinematic viscosity used by the solvers."""
        return float(self.data["fluid"]["viscosity"]) / self.rho

    @property
    def uses_bem(self) -> bool:
        b = self.data["body"]
        return b["tensors"] == "bem" or (b["tensors"] == "auto" and b["shape"] == "stl")

    def mesh(self, subdivisions: int | None = None):
        """Surface mesh with the centre of mass at the origin (BEM reference point)."""
        b = self.data["body"]
        sub = self.data["body"]["subdivisions"][-1] if subdivisions is None else subdivisions
        if b["shape"] == "sphere":
            return icosphere(b["radius"], sub)
        if b["shape"] == "ellipsoid":
            return ellipsoid(b["semi_axes"], sub)
        if b["shape"] == "offcenter-sphere":
            return icosphere(b["radius"], sub).transformed(shift=[-b["offset"], 0.0, 0.0])
        mesh = load_stl(b["path"])
        _, center, _ = mass_properties(mesh)
        return mesh.transformed(shift=-center)

    def resistance(self, subdivisions: int | None = None) -> ResistanceSet:
        b = self.data["body"]
        nu = self.viscosity
        if self.uses_bem:
            s = self.data["solver"]
            return compute_resistance(self.mesh(subdivisions), nu, np.zeros(3), s["blob_coeff"],
                                      max_panels=s["max_panels"])
        if b["shape"] == "sphere":
            return sphere_tensors(b["radius"], nu)
        if b["shape"] == "offcenter-sphere":
            return offcenter_sphere_tensors(b["radius"], b["offset"], nu)
        k, t = ellipsoid_resistance(b["semi_axes"], nu)
        z = np.zeros((3, 3))
        return ResistanceSet(np.diag(k), z, z.copy(), np.diag(t), np.zeros(3), nu,
                             "analytic:ellipsoid", 0, float(max(b["semi_axes"])))

    def propulsion_tol(self, R: ResistanceSet | None = None) -> float:
        """Explicit tolerance, else 1e-9 for analytic tensors, else three times the
        relative change of the grand resistance against the next coarser mesh."""
        tol = self.data["solver"]["propulsion_tol"]
        if tol is not None:
            return float(tol)
        if not self.uses_bem:
            return DEFAULT_TOL
        sub = self.data["body"]["subdivisions"][-1]
        if sub == 0:
            return 1e-2
        fine = R if R is not None else self.resistance(sub)
        coarse = self.resistance(sub - 1)
        return float(3.0 * np.linalg.norm(fine.grand - coarse.grand) / np.linalg.norm(fine.grand))

    def forcing(self, delta: float | None = None) -> Forcing:
        f = self.data["forcing"]
        d = f["delta"] if delta is None else delta
        direction = np.array(f["direction"], dtype=float)
        return Forcing(f["period"], d / self.rho, f["mean"], direction / np.linalg.norm(direction),
                       tuple(f["cos"]), tuple(f["sin"]))

    @property
    def deltas(self) -> list:
        return [float(d) / self.rho for d in self.data["forcing"]["deltas"]]

    def offset(self, R: ResistanceSet | None = None) -> np.ndarray:
        r = self.data["inertia"]["r"]
        if r != "solve":
            return np.array(r, dtype=float)
        R = R if R is not None else self.resistance()
        solved = find_non_propelling_r(R, self.forcing().b_hat)
        if solved is None:
            raise ValidationError("no offset r cancels the force direction for this body")
        return solved

    def body(self, r=None) -> BodyInertia:
        """Density-normalised inertia about the centre of mass."""
        i = self.data["inertia"]
        r = self.offset() if r is None else r
        if i["mass"] is not None:
            return BodyInertia(i["mass"] / self.rho, np.array(i["inertia"], dtype=float) / self.rho, r)
        b = self.data["body"]
        rs = i["density"] / self.rho
        if b["shape"] == "sphere":
            M = 4.0 / 3.0 * math.pi * b["radius"] ** 3 * rs
            return BodyInertia(M, np.full(3, 0.4 * M * b["radius"] ** 2), r)
        if b["shape"] == "ellipsoid":
            a1, a2, a3 = b["semi_axes"]
            M = 4.0 / 3.0 * math.pi * a1 * a2 * a3 * rs
            return BodyInertia(M, M / 5.0 * np.array([a2 ** 2 + a3 ** 2, a1 ** 2 + a3 ** 2,
                                                      a1 ** 2 + a2 ** 2]), r)
        if b["shape"] == "offcenter-sphere":
            # homogeneous moments shifted to a centre of mass displaced by d along e_1
            M = 4.0 / 3.0 * math.pi * b["radius"] ** 3 * rs
            I = 0.4 * M * b["radius"] ** 2 * np.eye(3) - M * b["offset"] ** 2 * np.diag([0, 1, 1])
            try:
                return BodyInertia(M, I, r)
            except ValidationError as exc:
                raise ConfigError("offset too large for the shifted homogeneous inertia; "
                                  "give inertia.mass and inertia.inertia explicitly") from exc
        M, _, I = mass_properties(load_stl(b["path"]), rs)
        return BodyInertia(M, I, r)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

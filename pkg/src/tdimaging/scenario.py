"""Scenario files: YAML with a fixed schema, lengths in background wavelengths.

Unknown keys and malformed values are rejected with the line they sit on.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import yaml

from .coremath import RandomFieldSpec
from .errors import InvalidArgument
from .forward import FILTER_MODES, MeasurementNoiseSpec
from .imaging import AXES, SearchGrid
from .scene import UNIT_BALL, IncidenceSet, Inclusion, Materials, Scene, TrialInclusion
from .stability import MEDIUM_KINDS, MediumNoiseSpec

MAX_RHO_KAPPA = 0.5

# leaf value: (kind, required); nested dict: sub-schema
SCHEMA = {
    "seed": ("int", False),
    "materials": {
        "eps0": ("pos", False), "mu0": ("pos", False), "eps1": ("pos", False),
        "mu1": ("pos", False), "eps2": ("pos", False), "mu2": ("pos", False),
        "omega": ("pos", False),
    },
    "inclusion": {
        "center": ("vec3", True), "rho": ("pos", True), "ref_volume": ("pos", False),
        "shape": ("shape", False), "m_mu": ("mat3", False), "m_eps": ("mat3", False),
    },
    "trial": {
        "ref_volume": ("pos", False), "shape": ("shape", False),
        "m_mu": ("mat3", False), "m_eps": ("mat3", False),
    },
    "boundary": {"radius": ("pos", True), "n_nodes": ("count", True)},
    "incidences": {"n": ("count", True)},
    "grid": {
        "origin": ("vec3", False), "spacing": ("pos", True), "dims": ("dims", True),
        "slice_axis": ("axis", False),
    },
    "noise": {
        "measurement": {"sigma": ("nonneg", True), "filter_mode": ("mode", False)},
        "medium": {
            "kind": ("medium", True), "sigma": ("nonneg", True), "corr_len": ("pos", True),
            "n_modes": ("count", False), "support_radius": ("pos", False),
            "taper": ("pos", False), "n_radial": ("count", False),
            "n_angular": ("count", False), "n_realizations": ("count", False),
        },
    },
    "mc": {
        "n_trials": ("int", True), "snr_trials": ("int", False),
        "snr_incidences": ("count", False),
    },
}


REQUIRED_BLOCKS = ("inclusion", "boundary", "incidences", "grid")


class ScenarioError(Exception):
    """Raised for unreadable, malformed or invalid scenario files."""


@dataclass
class ScenarioFile:
    path: str
    sha256: str
    raw: dict
    seed: int
    scene: Scene
    grid: SearchGrid
    measurement: MeasurementNoiseSpec | None
    medium: MediumNoiseSpec | None
    n_trials: int | None
    snr_trials: int
    snr_incidences: int

    @property
    def wavelength(self):
        return self.scene.wavelength


def _where(node):
    return f"line {node.start_mark.line + 1}"


def _check_leaf(kind, node, value, name):
    def bad(msg):
        raise ScenarioError(f"{_where(node)}: field '{name}' {msg}")

    def is_num(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool)

    if kind in ("pos", "nonneg"):
        if not is_num(value):
            bad("must be a number")
        if kind == "pos" and not value > 0:
            bad("must be positive")
        if kind == "nonneg" and value < 0:
            bad("must be >= 0")
    elif kind in ("int", "count"):
        if not isinstance(value, int) or isinstance(value, bool):
            bad("must be an integer")
        if kind == "count" and value < 1:
            bad("must be >= 1")
    elif kind == "vec3":
        if not (isinstance(value, list) and len(value) == 3 and all(is_num(v) for v in value)):
            bad("must be a list of 3 numbers")
    elif kind == "mat3":
        if not (isinstance(value, list) and len(value) == 3
                and all(isinstance(r, list) and len(r) == 3 and all(is_num(v) for v in r) for r in value)):
            bad("must be a 3x3 list of numbers")
    elif kind == "dims":
        if not (isinstance(value, list) and len(value) in (2, 3)
                and all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in value)):
            bad("must be a list of 2 or 3 positive integers")
    elif kind == "shape" and value not in ("sphere", "custom"):
        bad("must be 'sphere' or 'custom'")
    elif kind == "axis" and value not in tuple(AXES):
        bad("must be one of x, y, z")
    elif kind == "mode" and value not in FILTER_MODES:
        bad(f"must be one of {', '.join(FILTER_MODES)}")
    elif kind == "medium" and value not in MEDIUM_KINDS:
        bad(f"must be one of {', '.join(MEDIUM_KINDS)}")


def _walk(schema, node, value, path):
    if not isinstance(node, yaml.MappingNode) or not isinstance(value, dict):
        raise ScenarioError(f"{_where(node)}: '{path or 'document'}' must be a mapping")
    seen = {}
    for knode, vnode in node.value:
        key = knode.value
        full = f"{path}.{key}" if path else key
        if key not in schema:
            raise ScenarioError(f"{_where(knode)}: unknown field '{full}'")
        seen[key] = vnode
        sub = schema[key]
        if isinstance(sub, dict):
            _walk(sub, vnode, value[key], full)
        else:
            _check_leaf(sub[0], vnode, value[key], full)
    for key, sub in schema.items():
        if isinstance(sub, tuple) and sub[1] and key not in seen:
            raise ScenarioError(f"{_where(node)}: missing required field '{path + '.' if path else ''}{key}'")


def _tensors(block, materials, which):
    shape = block.get("shape", "sphere")
    vol = block.get("ref_volume", UNIT_BALL)
    if shape == "custom":
        if "m_mu" not in block or "m_eps" not in block:
            raise ScenarioError(f"{which}: custom shape needs m_mu and m_eps")
        return np.array(block["m_mu"], float), np.array(block["m_eps"], float), vol
    if "m_mu" in block or "m_eps" in block:
        raise ScenarioError(f"{which}: m_mu/m_eps only apply to shape 'custom'")
    return None, None, vol


def build(raw, path="<memory>", sha="", seed=None):
    """Turn a checked raw mapping into model objects. Raises ScenarioError."""
    try:
        mat = Materials(**raw.get("materials", {}))
        lam = 2.0 * np.pi / mat.kappa
        inc = raw["inclusion"]
        center = np.array(inc["center"], float) * lam
        rho = inc["rho"] * lam
        if rho * mat.kappa > MAX_RHO_KAPPA:
            raise ScenarioError(f"inclusion: rho*kappa = {rho * mat.kappa:.3g} exceeds {MAX_RHO_KAPPA}")
        m_mu, m_eps, vol = _tensors(inc, mat, "inclusion")
        inclusion = (Inclusion.sphere(mat, center, rho, vol) if m_mu is None
                     else Inclusion(center, rho, m_mu, m_eps, vol))
        t_mu, t_eps, tvol = _tensors(raw.get("trial", {}), mat, "trial")
        trial = (TrialInclusion.sphere(mat, tvol, vol) if t_mu is None
                 else TrialInclusion(mat, t_mu, t_eps, tvol, vol))
        b = raw["boundary"]
        scene = Scene(mat, inclusion, trial, b["radius"] * lam, b["n_nodes"],
                      IncidenceSet.fibonacci(raw["incidences"]["n"]))
        if np.linalg.norm(center) >= scene.boundary_radius:
            raise ScenarioError("inclusion: center must lie inside the boundary sphere")

        g = raw["grid"]
        dims = list(g["dims"])
        axis = g.get("slice_axis")
        if len(dims) == 2:
            if axis is None:
                raise ScenarioError("grid: two dims need a slice_axis")
            dims.insert(AXES.index(axis), 1)
        elif axis is not None and dims[AXES.index(axis)] != 1:
            raise ScenarioError(f"grid: dims along slice_axis {axis} must be 1")
        spacing = g["spacing"] * lam
        if "origin" in g:
            origin = np.array(g["origin"], float) * lam
        else:
            # centred on the inclusion
            origin = center - 0.5 * spacing * (np.array(dims) - 1)
        grid = SearchGrid(origin, spacing, tuple(dims))

        seed = raw.get("seed", 0) if seed is None else seed
        noise = raw.get("noise", {})
        meas = None
        if "measurement" in noise:
            m = noise["measurement"]
            meas = MeasurementNoiseSpec(m["sigma"], m.get("filter_mode", "half"), seed)
        medium = None
        if "medium" in noise:
            m = noise["medium"]
            field = RandomFieldSpec(m["sigma"], m["corr_len"] * lam, m.get("n_modes", 256), seed)
            medium = MediumNoiseSpec(
                m["kind"], field,
                support_radius=m.get("support_radius", 3.0) * lam,
                taper_width=m.get("taper", 1.0) * lam,
                n_radial=m.get("n_radial", 16), n_angular=m.get("n_angular", 400),
                n_realizations=m.get("n_realizations", 400),
                center=tuple(scene.boundary_center))
            if medium.support_radius > scene.boundary_radius - lam + 1e-12 * lam:
                raise ScenarioError("noise.medium: support must end at least one wavelength inside the boundary")
        mc = raw.get("mc", {})
    except InvalidArgument as exc:
        raise ScenarioError(str(exc)) from exc
    return ScenarioFile(path, sha, raw, int(seed), scene, grid, meas, medium,
                        mc.get("n_trials"), mc.get("snr_trials", 400), mc.get("snr_incidences", 25))


def loads(text, path="<memory>", seed=None):
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: YAML error: {exc}") from exc
    if node is None:
        raise ScenarioError(f"{path}: empty scenario")
    _walk(SCHEMA, node, raw, "")
    for block in REQUIRED_BLOCKS:
        if block not in raw:
            raise ScenarioError(f"{path}: missing required block '{block}'")
    sha = hashlib.sha256(text.encode()).hexdigest()
    return build(raw, path, sha, seed)


def load(path, seed=None):
    """Read and validate a scenario file. OSError propagates for I/O problems."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, str(path), seed)

"""Experiment configuration and energy-spec parsing for the command line."""

from __future__ import annotations

import json
import shlex
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .energy import A2Metadata, EdgeForm, make_dirichlet, make_p_edge, make_perturbed
from .errors import HypothesisViolation, SpecFormatError
from .fractal import ValidatedFractal
from .renorm import Renormalizer, SolverConfig, eigen_residual, quadratic_eigen

ENERGY_FAMILIES = ("dirichlet", "eigen", "p_edge", "perturbed")


@dataclass(frozen=True)
class EnergySpec:
    """Parsed form of strings like ``"p_edge p=4"`` or ``"perturbed bump_p=4 bump_scale=0.5"``."""

    family: str = "dirichlet"
    coeffs: tuple[float, ...] | None = None
    p: float = 2.0
    bump_p: float = 4.0
    bump_scale: float = 1.0

    @classmethod
    def parse(cls, text: str | dict) -> "EnergySpec":
        if isinstance(text, dict):
            data = dict(text)
            if data.get("coeffs") is not None:
                data["coeffs"] = tuple(float(c) for c in data["coeffs"])
            return cls(**data)
        tokens = shlex.split(text)
        if not tokens:
            raise SpecFormatError("empty energy spec")
        family, options = tokens[0], {}
        if family not in ENERGY_FAMILIES:
            raise SpecFormatError(f"unknown energy family {family!r}; expected one of {ENERGY_FAMILIES}")
        for token in tokens[1:]:
            key, sep, value = token.partition("=")
            if not sep:
                raise SpecFormatError(f"energy option {token!r} is not key=value")
            try:
                if key == "coeffs":
                    options[key] = tuple(float(c) for c in value.split(","))
                elif key in ("p", "bump_p", "bump_scale"):
                    options[key] = float(value)
                else:
                    raise SpecFormatError(f"unknown energy option {key!r}")
            except ValueError as exc:
                raise SpecFormatError(f"bad value in {token!r}") from exc
        return cls(family, **options)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["coeffs"] = list(self.coeffs) if self.coeffs is not None else None
        return out


def attach_eigen_metadata(fractal: ValidatedFractal, form: EdgeForm, samples: int = 50) -> EdgeForm:
    """Attach A2 metadata when ``form`` is numerically an eigenform of the renormalization."""
    p = form.degree
    if p is None:
        return form
    if form.matrix is not None:
        result = quadratic_eigen(fractal, form)
        return result.form if result.proportional else form
    renorm = Renormalizer(fractal, form)
    probe = np.zeros(fractal.N)
    probe[0] = 1.0
    rho = renorm.lambda_theta(1.0, probe).clamped_value / form(probe)
    meta = A2Metadata(form, float(p), float(rho))
    if eigen_residual(fractal, meta, samples) <= 1e-8:
        return form.with_a2(A2Metadata(form.with_a2(None), float(p), float(rho)))
    return form


def build_energy(fractal: ValidatedFractal, spec: EnergySpec | str) -> EdgeForm:
    if not isinstance(spec, EnergySpec):
        spec = EnergySpec.parse(spec)
    n = fractal.N
    if spec.family == "dirichlet":
        return attach_eigen_metadata(fractal, make_dirichlet(spec.coeffs, n))
    if spec.family == "eigen":
        return quadratic_eigen(fractal, make_dirichlet(spec.coeffs, n)).form
    if spec.family == "p_edge":
        return attach_eigen_metadata(fractal, make_p_edge(spec.coeffs, spec.p, n))
    # perturbed: eigenform reference plus a higher-order edge term
    base = quadratic_eigen(fractal, make_dirichlet(spec.coeffs, n)).form
    bump = make_p_edge(spec.bump_scale, spec.bump_p, n, name=f"bump(p={spec.bump_p:g})")
    return make_perturbed(base, bump)


@dataclass(frozen=True)
class ExperimentConfig:
    fractal: str = "gasket"
    spec: str | None = None
    energy: EnergySpec = field(default_factory=EnergySpec)
    sigma: float = 1.0
    depth: int = 4
    u: tuple[float, ...] | None = None
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    threads: int = 1
    out: str | None = None
    unsafe_sigma: bool = False

    def __post_init__(self):
        if self.depth < 0:
            raise SpecFormatError(f"depth must be >= 0, got {self.depth}")
        if not self.sigma > 0:
            raise HypothesisViolation(f"sigma must be positive, got {self.sigma}")
        if not self.sigma <= 1 and not self.unsafe_sigma:
            raise HypothesisViolation(
                f"sigma = {self.sigma} is outside (0, 1]; pass --unsafe-sigma to run anyway"
            )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["energy"] = self.energy.to_dict()
        out["u"] = list(self.u) if self.u is not None else None
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "energy" in data:
            data["energy"] = EnergySpec.parse(data["energy"])
        if "solver" in data:
            data["solver"] = SolverConfig(**data["solver"])
        if data.get("u") is not None:
            data["u"] = tuple(float(x) for x in data["u"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecFormatError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path: str | Path) -> dict:
    """Raw mapping from a JSON or YAML experiment file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise SpecFormatError(f"{path}: expected a mapping")
    return data

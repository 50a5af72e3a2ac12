"""Scenario configuration and the lazily built objects the suites share."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources

import numpy as np

from .errors import ConfigError
from .loewner import DrivingFunction, DrivingSpec, GTState, ULaurent, build_field

SHIPPED = ("default-n2", "default-n3")


def _complex(x, imaginary=False):
    """Number or ``[re, im]`` pair; bare numbers are imaginary parts when ``imaginary``."""
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ConfigError(f"expected [re, im], got {x!r}")
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, (int, float)):
        return 1j * float(x) if imaginary else complex(float(x))
    raise ConfigError(f"expected a number or [re, im], got {x!r}")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to build a field and run the downstream suites."""

    name: str
    tau0: complex
    xi0: tuple
    v0: tuple
    driving: DrivingSpec
    u0_coeffs: tuple
    z_samples: tuple
    spacing: float = 0.02
    nodes: int = 5
    step: float = 1e-3
    spectral_nodes: int = 12
    speed_order: int = 6
    hodograph: dict = field(default_factory=dict)
    dkp: dict = field(default_factory=dict)

    @property
    def N(self):
        return len(self.xi0)

    @classmethod
    def from_dict(cls, obj, name=None):
        try:
            N = int(obj["N"])
            xi0 = tuple(float(x) for x in obj["xi0"])
            v0 = tuple(_complex(x, imaginary=True) for x in obj["v0"])
            tau0 = _complex(obj["tau0"], imaginary=True)
            coeffs = tuple(float(x) for x in obj["u0_coeffs"])
            zs = tuple(_complex(z) for z in obj["z_samples"])
        except KeyError as exc:
            raise ConfigError(f"scenario is missing {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario value: {exc}") from None
        if len(xi0) != N or len(v0) != N:
            raise ConfigError("xi0 and v0 need N entries")
        if not coeffs or coeffs[0] <= 0:
            raise ConfigError("u0_coeffs must start with a positive c1")
        if not zs:
            raise ConfigError("need at least one z sample")
        grid = obj.get("grid", {})
        spacing = float(grid.get("spacing", 0.02))
        if not spacing > 0:
            raise ConfigError("grid spacing must be positive")
        if "nodes" in grid:
            nodes = int(grid["nodes"])
        else:
            nodes = int(round(float(grid.get("extent", 4 * spacing)) / spacing)) + 1
        if nodes < 3:
            raise ConfigError("grid needs at least three nodes per axis")
        step = float(obj.get("step", 1e-3))
        if step <= 0:
            raise ConfigError("step must be positive")
        return cls(
            name=name or obj.get("name", "custom"),
            tau0=tau0, xi0=xi0, v0=v0,
            driving=DrivingSpec.from_config(obj.get("driving"), N),
            u0_coeffs=coeffs, z_samples=zs, spacing=spacing, nodes=nodes, step=step,
            spectral_nodes=int(obj.get("spectral_nodes", 12)),
            speed_order=int(obj.get("speed_order", 6)),
            hodograph=dict(obj.get("hodograph", {})),
            dkp=dict(obj.get("dkp", {})),
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(obj)

    @classmethod
    def named(cls, name):
        if name not in SHIPPED:
            raise ConfigError(f"unknown scenario {name!r}; shipped: {', '.join(SHIPPED)}")
        text = resources.files("elliptic_dkp").joinpath("scenarios", f"{name}.json").read_text()
        return cls.from_dict(json.loads(text), name)

    def with_tau(self, imag):
        from dataclasses import replace
        return replace(self, tau0=1j * float(imag))

    def to_dict(self):
        return {
            "name": self.name,
            "N": self.N,
            "tau0": [self.tau0.real, self.tau0.imag],
            "xi0": list(self.xi0),
            "v0": [[v.real, v.imag] for v in self.v0],
            "driving": self.driving.to_config(),
            "u0_coeffs": list(self.u0_coeffs),
            "z_samples": [[z.real, z.imag] for z in self.z_samples],
            "grid": {"spacing": self.spacing, "nodes": self.nodes},
            "step": self.step,
            "spectral_nodes": self.spectral_nodes,
            "speed_order": self.speed_order,
            "hodograph": self.hodograph,
            "dkp": self.dkp,
        }


class Pipeline:
    """Field, speeds and hodograph objects for one scenario, each built on first use."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    @cached_property
    def initial(self):
        sc = self.scenario
        return GTState.make(sc.tau0, sc.xi0, sc.v0)

    @cached_property
    def u0(self):
        return ULaurent.from_coeffs(self.scenario.u0_coeffs, self.scenario.z_samples)

    @cached_property
    def field(self):
        sc = self.scenario
        return build_field(self.initial, self.u0, sc.driving, sc.nodes, sc.spacing, sc.step, sc.spectral_nodes)

    @cached_property
    def speeds(self):
        from .hodograph import SpeedField
        return SpeedField.from_field(self.field, self.scenario.speed_order)

    @cached_property
    def base_symmetry(self):
        from .hodograph import integrate_symmetry
        rate = float(self.scenario.hodograph.get("R_rate", 1.0))
        R0 = self.scenario.hodograph.get("R0", [0.0] * self.scenario.N)
        return integrate_symmetry(self.field, R0, [DrivingFunction("constant", rate)] * self.scenario.N,
                                  self.scenario.step)

    @cached_property
    def manufactured(self):
        from .hodograph import manufactured_solution
        t1 = float(self.scenario.hodograph.get("t1", 0.01))
        return manufactured_solution(self.field, self.base_symmetry, self.speeds, t1)

    def random(self, seed, stream):
        """Independent generator per consumer so suites do not perturb each other."""
        return np.random.default_rng([int(seed), int(stream)])

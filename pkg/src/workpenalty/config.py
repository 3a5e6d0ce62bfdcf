"""Scenario configuration files (JSON) and their translation into protocols."""
from __future__ import annotations

import json
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from .dynamics import ClassicalProtocol, QuantumProtocol, Schedule
from .errors import ConfigValidationError, NonHermitian, NotADensityMatrix, ParseError
from .spectral import density_from, hermitize
from .thermo import ClassicalDistribution, Temperature

Entry = tuple[float, float]  # (re, im)


def _entry(x) -> Entry:
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return (float(x), 0.0)
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return (float(x[0]), float(x[1]))
    raise ValueError(f"matrix entries must be numbers or [re, im] pairs, got {x!r}")


def _matrix(rows) -> list[list[Entry]]:
    if not isinstance(rows, (list, tuple)) or not rows:
        raise ValueError("matrices are row-major nested arrays")
    return [[_entry(x) for x in row] for row in rows]


def to_complex(rows: list[list[Entry]]) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Knot(_Strict):
    t: float
    levels: Optional[list[float]] = None
    hamiltonian: Optional[list[list[Entry]]] = None

    @field_validator("hamiltonian", mode="before")
    @classmethod
    def _normalise(cls, v):
        return None if v is None else _matrix(v)


class Outputs(_Strict):
    report: Optional[str] = None
    trajectory: Optional[str] = None
    sweep: Optional[str] = None


class ScenarioConfig(_Strict):
    kind: Literal["classical", "quantum"]
    dim: int
    beta: float
    tau: float
    steps: int = 2000
    coupling: float
    schedule: list[Knot]
    initial_state: Union[Literal["gibbs"], list[float], list[list[Entry]]] = "gibbs"
    rates: Literal["gibbs-target", "lindblad"] = "gibbs-target"
    outputs: Outputs = Outputs()
    seed: int = 0

    @field_validator("beta")
    @classmethod
    def _beta(cls, v):
        if not (v > 0 and np.isfinite(v)):
            raise ValueError("beta must be > 0")
        return v

    @field_validator("tau")
    @classmethod
    def _tau(cls, v):
        if not (v > 0 and np.isfinite(v)):
            raise ValueError("tau must be > 0")
        return v

    @field_validator("coupling")
    @classmethod
    def _coupling(cls, v):
        if not (v > 0 and np.isfinite(v)):
            raise ValueError("coupling must be > 0")
        return v

    @field_validator("steps")
    @classmethod
    def _steps(cls, v):
        if v < 1:
            raise ValueError("steps must be >= 1")
        return v

    @field_validator("dim")
    @classmethod
    def _dim(cls, v):
        if v < 2:
            raise ValueError("dim must be >= 2")
        return v

    @field_validator("initial_state", mode="before")
    @classmethod
    def _state(cls, v):
        if isinstance(v, list) and v and isinstance(v[0], list):
            return _matrix(v)
        return v

    @model_validator(mode="after")
    def _consistent(self):
        ts = [k.t for k in self.schedule]
        if len(ts) < 2:
            raise ValueError("schedule needs at least two knots")
        if ts[0] != 0.0 or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("knot times must start at 0 and strictly increase")
        if abs(ts[-1] - self.tau) > 1e-12 * self.tau:
            raise ValueError("last knot must be at t = tau")
        for k in self.schedule:
            if self.kind == "classical":
                if k.levels is None or k.hamiltonian is not None:
                    raise ValueError("classical knots carry 'levels' only")
                if len(k.levels) != self.dim:
                    raise ValueError(f"knot at t = {k.t} has {len(k.levels)} levels, dim is {self.dim}")
            else:
                if k.hamiltonian is None or k.levels is not None:
                    raise ValueError("quantum knots carry 'hamiltonian' only")
                h = k.hamiltonian
                if len(h) != self.dim or any(len(row) != self.dim for row in h):
                    raise ValueError(f"knot at t = {k.t} is not {self.dim}x{self.dim}")
                try:
                    hermitize(to_complex(h))
                except NonHermitian as e:
                    raise ValueError(f"hermiticity violated at t = {k.t}: {e}") from None
        s = self.initial_state
        if s != "gibbs":
            if self.kind == "classical":
                if not (isinstance(s, list) and len(s) == self.dim and not isinstance(s[0], (list, tuple))):
                    raise ValueError("classical initial_state must be 'gibbs' or a probability vector")
                try:
                    ClassicalDistribution(np.array(s, dtype=float))
                except ValueError as e:
                    raise ValueError(f"initial_state: {e}") from None
            else:
                if not (isinstance(s, list) and len(s) == self.dim and isinstance(s[0], (list, tuple))):
                    raise ValueError("quantum initial_state must be 'gibbs' or a density matrix")
                try:
                    density_from(to_complex(s))
                except NotADensityMatrix as e:
                    raise ValueError(f"initial_state {e.clause} violated") from None
        if self.kind == "quantum" and self.rates != "gibbs-target":
            raise ValueError("'rates' applies to classical scenarios only")
        return self

    # ------------------------------------------------------------------

    @property
    def temp(self) -> Temperature:
        return Temperature(self.beta)

    def protocol(self, tau: Optional[float] = None):
        """Build the protocol, optionally stretched to a different duration."""
        scale = 1.0 if tau is None else tau / self.tau
        duration = self.tau if tau is None else float(tau)
        times = [k.t * scale for k in self.schedule]
        times[-1] = duration
        if self.kind == "classical":
            scheds = tuple(
                Schedule(tuple((t, k.levels[i]) for t, k in zip(times, self.schedule)))
                for i in range(self.dim)
            )
            return ClassicalProtocol(duration, scheds, self.coupling, self.temp, rates=self.rates)
        path = tuple((t, hermitize(to_complex(k.hamiltonian))) for t, k in zip(times, self.schedule))
        return QuantumProtocol(duration, path, self.coupling, self.temp)

    def initial(self):
        """Initial state, or None for a Gibbs start."""
        if self.initial_state == "gibbs":
            return None
        if self.kind == "classical":
            return ClassicalDistribution(np.array(self.initial_state, dtype=float))
        return density_from(to_complex(self.initial_state))


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "config"
        msg = e["msg"].removeprefix("Value error, ")
        parts.append(f"{loc}: {msg}")
    return "; ".join(parts)


def parse_config(text: str) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ParseError("line 1: top level must be a JSON object")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError(_describe(e)) from None


def serialize_config(cfg: ScenarioConfig) -> str:
    return cfg.model_dump_json(indent=2)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())

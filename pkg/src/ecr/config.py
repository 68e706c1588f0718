"""Scenario configuration (INI key-value files) and the four named presets.

Example::

    [scenario]
    preset = high-fidelity      ; deterministic-epi | low-fidelity | high-fidelity | ideal
    rounds = 10000
    seed = 7
    k_sigma = 5
    transport = in-process      ; or: stream
    address = 127.0.0.1:7878
    timeout = 30

    [policy]
    kind = round-robin          ; round-robin | iid-grid | iid-uniform
    n = 6
    eps = 0

    [strategy]                  ; optional, overrides the preset
    kind = measure-and-map      ; deterministic | measure-and-map | general
    a = 0.52
    b = 0.09
    phi = 0
    fallback = epi              ; epi | list
    permutation = 2,0,1         ; optional, for epi
    bits = 0110                 ; for fallback = list

    [output]
    rounds = out/rounds.jsonl
    curve = out/curve.csv
    report = out/report.json

Environment variables ECR_SEED and ECR_BIND override ``seed`` and ``address``.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .channel import GeneralProjective, MeasurementModel
from .prover import (
    DeterministicSequence,
    EPiDigits,
    EstimatorMap,
    ExplicitList,
    GeneralEstimator,
    MeasureAndMap,
    StrategySpec,
)
from .verifier import (
    DEFAULT_K_SIGMA,
    IIDContinuousUniform,
    IIDGrid,
    RoundRobinGrid,
    SelectionPolicy,
)

DEFAULT_ADDRESS = ("127.0.0.1", 7878)
DEFAULT_TIMEOUT = 30.0
TRANSPORTS = ("in-process", "stream")

PRESETS: dict[str, StrategySpec] = {
    "deterministic-epi": DeterministicSequence(EPiDigits()),
    "low-fidelity": MeasureAndMap(MeasurementModel(0.01, 0.04, 0.0), EPiDigits()),
    "high-fidelity": MeasureAndMap(MeasurementModel(0.52, 0.09, 0.0), EPiDigits()),
    "ideal": MeasureAndMap(MeasurementModel(1.0, 0.0, 0.0), EPiDigits()),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    policy: SelectionPolicy
    strategy: StrategySpec
    rounds: int
    seed: int
    k_sigma: float = DEFAULT_K_SIGMA
    transport: str = "in-process"
    address: tuple[str, int] = DEFAULT_ADDRESS
    timeout: float = DEFAULT_TIMEOUT
    outputs: Mapping[str, Optional[Path]] = field(
        default_factory=lambda: {"rounds": None, "curve": None, "report": None}
    )

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("rounds: a session needs at least one round")
        if not self.k_sigma > 0:
            raise ConfigError("k_sigma: must be positive")
        if self.transport not in TRANSPORTS:
            raise ConfigError(f"transport: must be one of {TRANSPORTS}, got {self.transport!r}")
        if not self.timeout > 0:
            raise ConfigError("timeout: must be positive")

    def describe(self) -> dict:
        """Transport-independent identity recorded in every artifact."""
        return {
            "name": self.name,
            "policy": self.policy.describe(),
            "strategy": self.strategy.describe(),
            "rounds": self.rounds,
            "seed": self.seed,
            "k_sigma": self.k_sigma,
        }


def preset_config(name: str, rounds: int, seed: int, **kw) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kw.setdefault("policy", RoundRobinGrid(6, 0.0))
    return ScenarioConfig(name=name, strategy=PRESETS[name], rounds=rounds, seed=seed, **kw)


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"address: expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def _policy(section: Mapping[str, str]) -> SelectionPolicy:
    kind = section.get("kind", "round-robin")
    n = int(section.get("n", 6))
    eps = float(section.get("eps", 0.0))
    if kind == "round-robin":
        return RoundRobinGrid(n, eps)
    if kind == "iid-grid":
        return IIDGrid(n, eps)
    if kind == "iid-uniform":
        return IIDContinuousUniform()
    raise ConfigError(f"policy.kind: unknown policy {kind!r}")


def _bits(section: Mapping[str, str]):
    source = section.get("fallback", section.get("source", "epi"))
    if source == "epi":
        perm = section.get("permutation")
        return EPiDigits(tuple(int(k) for k in perm.split(",")) if perm else None)
    if source == "list":
        return ExplicitList(tuple(int(c) for c in section.get("bits", "").strip()))
    raise ConfigError(f"strategy.fallback: unknown bit source {source!r}")


def _strategy(section: Mapping[str, str], preset: Optional[str]) -> StrategySpec:
    kind = section.get("kind")
    if kind is None:
        if preset is None:
            raise ConfigError("strategy: give scenario.preset or strategy.kind")
        return PRESETS[preset]
    if kind == "deterministic":
        return DeterministicSequence(_bits(section))
    a = float(section.get("a", 1.0))
    b = float(section.get("b", 0.0))
    phi = float(section.get("phi", 0.0))
    if kind == "measure-and-map":
        return MeasureAndMap(MeasurementModel(a, b, phi), _bits(section))
    if kind == "general":
        if "Phi" in section:
            measurement = GeneralProjective(float(section["Phi"]), phi)
        else:
            measurement = MeasurementModel(a, b, phi)
        g = EstimatorMap(
            float(section.get("g0", 0.0)),
            float(section.get("g1", 1.0)),
            float(section.get("null_est", 0.0)),
        )
        return GeneralEstimator(g, measurement)
    raise ConfigError(f"strategy.kind: unknown strategy {kind!r}")


def load_config(path: Path | str, env: Optional[Mapping[str, str]] = None) -> ScenarioConfig:
    env = os.environ if env is None else env
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keep "Phi" distinct from "phi"
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_parser(parser, env)


def config_from_parser(parser: configparser.ConfigParser, env: Mapping[str, str]) -> ScenarioConfig:
    get = lambda name: parser[name] if parser.has_section(name) else {}  # noqa: E731
    scen, out = get("scenario"), get("output")
    preset = scen.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"scenario.preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    try:
        policy = _policy(get("policy"))
        strategy = _strategy(get("strategy"), preset)
        seed = int(env.get("ECR_SEED", scen.get("seed", 0)))
        address = parse_address(env.get("ECR_BIND", scen.get("address", "127.0.0.1:7878")))
        return ScenarioConfig(
            name=scen.get("name", preset or "custom"),
            policy=policy,
            strategy=strategy,
            rounds=int(scen.get("rounds", 1000)),
            seed=seed,
            k_sigma=float(scen.get("k_sigma", DEFAULT_K_SIGMA)),
            transport=scen.get("transport", "in-process"),
            address=address,
            timeout=float(scen.get("timeout", DEFAULT_TIMEOUT)),
            outputs={key: Path(out[key]) if key in out else None for key in ("rounds", "curve", "report")},
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc

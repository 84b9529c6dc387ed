"""Loading simulation configs and the bundled presets.

Presets live next to this module as ``<name>.yaml``; the schema is
documented in ``presets/schema.md``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import yaml

from coss.errors import ConfigError
from coss.harness import ReplicationSummary, Strategy
from coss.simgen import CovariateSpec, SimulationConfig

PRESETS = ("linear.paper", "quadratic.paper", "quadratic.b0")

_TOP = {f.name for f in fields(SimulationConfig)}
_COV = {f.name for f in fields(CovariateSpec)}


def config_from_mapping(data) -> SimulationConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    for key in data:
        if key not in _TOP:
            raise ConfigError(str(key), "unknown key")
    values = dict(data)
    if "covariate" in values:
        cov = values["covariate"]
        if not isinstance(cov, dict):
            raise ConfigError("covariate", "must be a mapping")
        for key in cov:
            if key not in _COV:
                raise ConfigError(f"covariate.{key}", "unknown key")
        if "dist" in cov and not isinstance(cov["dist"], str):
            raise ConfigError("covariate.dist", "must be a string")
        for key in ("loc", "scale"):
            if key in cov and (isinstance(cov[key], bool) or not isinstance(cov[key], (int, float))):
                raise ConfigError(f"covariate.{key}", f"must be a number, got {cov[key]!r}")
        values["covariate"] = CovariateSpec(**cov)
    if "relationship" in values and values["relationship"] not in ("linear", "quadratic"):
        raise ConfigError("relationship", f"must be 'linear' or 'quadratic', got {values['relationship']!r}")
    if "swap_parity" in values and not isinstance(values["swap_parity"], bool):
        raise ConfigError("swap_parity", "must be true or false")
    for key in ("a", "b", "c", "mu", "eps0", "eps1"):
        if key in values and isinstance(values[key], int) and not isinstance(values[key], bool):
            values[key] = float(values[key])
    return SimulationConfig(**values)


def load_config(path: str | Path) -> SimulationConfig:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError("<root>", f"not valid YAML: {exc}") from None
    return config_from_mapping(data if data is not None else {})


def load_preset(name: str) -> SimulationConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("coss.presets").joinpath(f"{name}.yaml").read_text(encoding="utf-8")
    return config_from_mapping(yaml.safe_load(text))


@dataclass(frozen=True)
class ReferenceCheck:
    """A reference value (or derived band) that a study result is compared against."""

    label: str
    metric: str
    lo: float
    hi: float
    reference: str

    def value(self, summaries: dict[Strategy, ReplicationSummary]) -> float:
        kind, _, arg = self.metric.partition(":")
        if kind == "ratio":
            num, den = arg.split("/")
            return summaries[Strategy(num)].se / summaries[Strategy(den)].se
        return getattr(summaries[Strategy(arg)], kind)

    def evaluate(self, summaries) -> tuple[float, bool]:
        v = self.value(summaries)
        return v, self.lo <= v <= self.hi


def _rel(label, metric, target, tol, ref) -> ReferenceCheck:
    return ReferenceCheck(label, metric, target * (1 - tol), target * (1 + tol), ref)


REFERENCE_CHECKS: dict[str, list[ReferenceCheck]] = {
    "linear.paper": [
        _rel("SE(RCT)", "se:rct", 0.874, 0.10, "0.874 (reference)"),
        _rel("SE(CUPED)", "se:cuped", 0.313, 0.10, "0.313 (reference)"),
        _rel("SE(COSS)", "se:coss", 0.318, 0.10, "0.318 (reference)"),
        ReferenceCheck("mean(RCT)", "mean:rct", 0.95, 1.05, "0.998 (reference)"),
        ReferenceCheck("mean(CUPED)", "mean:cuped", 0.95, 1.05, "1.000 (reference)"),
        ReferenceCheck("mean(COSS)", "mean:coss", 0.88, 1.05, "0.899 (reference)"),
    ],
    "quadratic.paper": [
        _rel("SE(COSS)", "se:coss", 0.318, 0.15, "0.318 (reference)"),
        ReferenceCheck("SE(CUPED)/SE(RCT)", "ratio:cuped/rct", 0.90, 1.05, "1.115/1.119 (reference)"),
        ReferenceCheck("mean(COSS)", "mean:coss", 0.952, 1.052, "1.002 (reference)"),
    ],
    "quadratic.b0": [
        ReferenceCheck("SE(CUPED)/SE(RCT)", "ratio:cuped/rct", 0.95, 1.05, "CUPED ineffective"),
        ReferenceCheck("SE(COSS)/SE(RCT)", "ratio:coss/rct", 0.0, 0.6, "COSS reduces SE"),
    ],
}

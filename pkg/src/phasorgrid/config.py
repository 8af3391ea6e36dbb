"""System configuration file: schema, loading and dumping.

The file is a YAML key-value tree (``.cfg`` by convention). Unknown keys are
rejected and every physical invariant of the referenced models is checked
when the configuration is turned into a system.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class LineConfig(_Strict):
    name: str
    from_bus: str = Field(alias="from")
    to_bus: str = Field(alias="to")
    R: float = Field(ge=0)
    L: float = Field(gt=0)
    C: float = Field(default=0.0, ge=0)


class LoadConfig(_Strict):
    bus: str
    P: float = Field(ge=0)
    Q: float = Field(default=0.0, ge=0, description="inductive reactive power")
    Q_shunt: float = Field(default=0.0, ge=0, description="shunt capacitor reactive power")


class MachineConfig(_Strict):
    Xd: float
    Xq: float
    Xdp: float
    Xqp: float
    Xdpp: float
    Xqpp: float
    Xl: float
    Rs: float = Field(ge=0)
    Td0p: float
    Tq0p: float
    Td0pp: float
    Tq0pp: float
    H: float = Field(gt=0)
    D: float = 0.0
    Rg: float = Field(default=0.0, ge=0)
    Lg: float = Field(default=0.15, gt=0)
    KA: float = 200.0
    TA: float = 0.01
    Efd_min: float = -10.0
    Efd_max: float = 10.0
    R_gov: float = 0.05
    T_gov: float = 0.2
    T_t: float = 0.5


class GeneratorConfig(_Strict):
    name: str
    bus: str
    hv_bus: str
    role: Literal["slack", "pv"] = "pv"
    P: float = 0.0
    V: float = 1.0
    angle_deg: float = 0.0
    mva: float = Field(default=100.0, gt=0)
    params: MachineConfig


class ConverterParamsConfig(_Strict):
    tau_c: float = 0.05
    G_c: float = 0.45
    C_c: float = 325.73
    k_dc: float = 1080.0
    R: float = 5.5556e-5
    L: float = 0.0042
    C: float = 2.0358
    R_on: float = 0.0
    R_t: float = 0.002 / 9
    L_t: float = 0.15 / 9
    v_dc_ref: float = 1.0
    m_p: float = 0.05 / 9
    omega_f: float = 628.3185307179587
    Kp_ac: float = 0.0010
    Ki_ac: float = 0.5000
    Kp_i: float = 0.0411
    Ki_i: float = 1.7389e-4
    Kp_v: float = 9.3600
    Ki_v: float = 0.0554
    current_feedforward: bool = True
    dc_coupling: bool = False


class ConverterConfig(_Strict):
    name: str
    bus: str
    hv_bus: str
    role: Literal["slack", "pv"] = "pv"
    P: float = 7.0
    V: float = 1.0
    angle_deg: float = 0.0
    params: ConverterParamsConfig = ConverterParamsConfig()


class TieFlowConfig(_Strict):
    lines: list[str]
    from_bus: str
    target: float
    adjust_load: str


class PowerFlowConfig(_Strict):
    tol: float = 1e-10
    max_iter: int = 50
    tie_flow: Optional[TieFlowConfig] = None


class SweepConfig(_Strict):
    f_min: float = Field(default=0.1, gt=0)
    f_max: float = Field(default=200.0, gt=0)
    points: int = Field(default=400, ge=2)


class PronyConfig(_Strict):
    channel: Optional[str] = None
    t_start: float = Field(default=0.3, ge=0)
    t_stop: float = Field(default=0.8, gt=0)
    step: float = Field(default=1e-3, gt=0, description="resampling interval of the fitted window, s")
    order: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _window(self):
        if self.t_stop <= self.t_start:
            raise ValueError("t_stop must exceed t_start")
        return self


class AnalysisConfig(_Strict):
    sweep: SweepConfig = SweepConfig()
    outputs: list[str] = Field(default_factory=list)
    prony: PronyConfig = PronyConfig()


class DisturbanceConfig(_Strict):
    inputs: list[str] = Field(default_factory=list)
    waveform: Literal["none", "step", "pulse"] = "pulse"
    magnitude: float = 0.0
    start: float = 0.0
    duration: float = 0.0


class SimulationConfig(_Strict):
    t_end: float = Field(default=5.0, gt=0)
    dt: Optional[float] = Field(default=None, gt=0)
    method: Literal["rk4", "trapezoidal"] = "rk4"
    decimation: int = Field(default=10, ge=1)
    channels: list[str] = Field(default_factory=list)
    disturbance: DisturbanceConfig = DisturbanceConfig()


class SystemConfig(_Strict):
    name: str
    frequency_hz: float = Field(default=60.0, gt=0)
    s_base_mva: float = Field(default=100.0, gt=0)
    framework: Literal["spc", "qpc"] = "spc"
    lines: list[LineConfig]
    loads: list[LoadConfig] = Field(default_factory=list)
    generators: list[GeneratorConfig] = Field(default_factory=list)
    converters: list[ConverterConfig] = Field(default_factory=list)
    power_flow: PowerFlowConfig = PowerFlowConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    simulation: SimulationConfig = SimulationConfig()

    @model_validator(mode="after")
    def _cross_check(self):
        names = [d.name for d in self.generators] + [d.name for d in self.converters]
        if len(set(names)) != len(names):
            raise ValueError("device names must be unique")
        if not names:
            raise ValueError("at least one generator or converter is required")
        slacks = [d.name for d in (*self.generators, *self.converters) if d.role == "slack"]
        if len(slacks) != 1:
            raise ValueError(f"exactly one slack device required, got {slacks}")
        lines = [ln.name for ln in self.lines]
        if len(set(lines)) != len(lines):
            raise ValueError("line names must be unique")
        hv = {ln.from_bus for ln in self.lines} | {ln.to_bus for ln in self.lines}
        terminals = [d.bus for d in (*self.generators, *self.converters)]
        if len(set(terminals)) != len(terminals):
            raise ValueError("each device needs its own terminal bus")
        for d in (*self.generators, *self.converters):
            if d.hv_bus not in hv:
                raise ValueError(f"device {d.name}: hv_bus {d.hv_bus!r} is not a network bus")
            if d.bus in hv:
                raise ValueError(f"device {d.name}: terminal bus {d.bus!r} is also a network bus")
        for ld in self.loads:
            if ld.bus not in hv:
                raise ValueError(f"load at unknown bus {ld.bus!r}")
        if self.power_flow.tie_flow:
            tf = self.power_flow.tie_flow
            for nm in tf.lines:
                if nm not in lines:
                    raise ValueError(f"tie_flow references unknown line {nm!r}")
            if tf.adjust_load not in [ld.bus for ld in self.loads]:
                raise ValueError(f"tie_flow adjust_load {tf.adjust_load!r} has no load")
        return self


class ConfigError(ValueError):
    """Schema or physical-invariant violation; ``path`` locates the field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def parse_config(data: dict) -> SystemConfig:
    try:
        return SystemConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        path = ".".join(str(p) for p in err["loc"])
        raise ConfigError(err["msg"], path) from exc


def load_config(path: str | Path) -> SystemConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not a valid configuration file: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping at top level")
    return parse_config(data)


def dump_config(cfg: SystemConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json", by_alias=True), sort_keys=False)


def config_hash(cfg: SystemConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


def bundled_case(name: str) -> Path:
    """Path of a shipped example configuration (``case1`` or ``case2``)."""
    stem = name[:-4] if name.endswith(".cfg") else name
    return Path(__file__).parent / "cases" / f"{stem}.cfg"

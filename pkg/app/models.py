import math
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import Config


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class RegimeError(ValueError):
    """Parameters outside the regime where a formula is defined."""


class BudgetError(RuntimeError):
    """A computation would exceed its declared budget."""


class TruncationError(BudgetError):
    """Residual starvation-count mass above tolerance at the truncation depth."""


class PhiBound(str, Enum):
    DISPLAY = "display"
    PROOF = "proof"


class ArrivalKind(str, Enum):
    POISSON = "poisson"
    LOGISTIC = "logistic"
    ON_OFF = "on_off"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class PairConversion(str, Enum):
    AGGREGATE = "aggregate"
    LAYERED = "layered"


class LadderWeighting(str, Enum):
    KBPS = "kbps"
    PROPORTIONAL = "proportional"


class QualityMode(str, Enum):
    FRACTION = "fraction"
    ABSOLUTE = "absolute"


class SessionParams(BaseModel):
    """Arrival rate, playback rate, file size, prefetch threshold and BSC offset of one session."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    lam: float = Field(..., alias="lambda", gt=0, allow_inf_nan=False)
    mu: float = Field(1.0, gt=0, allow_inf_nan=False)
    file_size_N: int = Field(..., ge=1)
    startup_x: int = Field(..., ge=1)
    offset_phi: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_prefetch_fits(self) -> "SessionParams":
        if self.startup_x + self.offset_phi - 1 > self.file_size_N:
            raise ValueError(
                f"startup_x + offset_phi - 1 = {self.startup_x + self.offset_phi - 1} "
                f"exceeds file_size_N = {self.file_size_N}"
            )
        return self

    @property
    def rho(self) -> float:
        return self.lam / self.mu

    @property
    def x_phi(self) -> int:
        """Base-layer frames buffered once x optimal frames are in (x + phi - 1)."""
        return self.startup_x + self.offset_phi - 1

    @property
    def large_offset(self) -> bool:
        return self.offset_phi > self.startup_x

    def with_changes(self, **changes) -> "SessionParams":
        values = self.model_dump()
        values.update(changes)
        return SessionParams(**values)


class ArrivalProcess(BaseModel):
    """Frame-arrival process feeding the playback simulator."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ArrivalKind = ArrivalKind.POISSON
    rate: Optional[float] = Field(None, gt=0, allow_inf_nan=False)
    location: Optional[float] = Field(None, gt=0, allow_inf_nan=False)
    scale: Optional[float] = Field(None, gt=0, allow_inf_nan=False)
    on_rate: Optional[float] = Field(None, gt=0, allow_inf_nan=False)
    on_duration_mean: Optional[float] = Field(None, gt=0, allow_inf_nan=False)
    off_duration_mean: Optional[float] = Field(None, gt=0, allow_inf_nan=False)
    assumed_shape: bool = False

    @model_validator(mode="after")
    def check_kind_parameters(self) -> "ArrivalProcess":
        required = {
            ArrivalKind.POISSON: ("rate",),
            ArrivalKind.LOGISTIC: ("location", "scale"),
            ArrivalKind.ON_OFF: ("on_rate", "on_duration_mean", "off_duration_mean"),
        }[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind.value} arrivals require {', '.join(missing)}")
        return self

    @classmethod
    def poisson(cls, rate: float) -> "ArrivalProcess":
        return cls(kind=ArrivalKind.POISSON, rate=rate)

    @classmethod
    def logistic(cls, location: float, scale: float) -> "ArrivalProcess":
        return cls(kind=ArrivalKind.LOGISTIC, location=location, scale=scale)

    @classmethod
    def on_off(cls, on_rate: float, on_duration_mean: float, off_duration_mean: float) -> "ArrivalProcess":
        return cls(
            kind=ArrivalKind.ON_OFF,
            on_rate=on_rate,
            on_duration_mean=on_duration_mean,
            off_duration_mean=off_duration_mean,
        )

    @classmethod
    def for_mean_rate(cls, kind: ArrivalKind, lam: float) -> "ArrivalProcess":
        """
        Build a process of the given kind whose long-run arrival rate is lam.

        Logistic and ON/OFF shapes are experiment knobs from Config and are
        flagged as assumed shapes.
        """
        if kind == ArrivalKind.POISSON:
            return cls.poisson(lam)
        if kind == ArrivalKind.LOGISTIC:
            location = 1.0 / lam
            return cls(
                kind=kind,
                location=location,
                scale=location * Config.LOGISTIC_SCALE_RATIO,
                assumed_shape=True,
            )
        duty = Config.ONOFF_DUTY_CYCLE
        cycle = Config.ONOFF_CYCLE_FRAMES / lam
        return cls(
            kind=kind,
            on_rate=lam / duty,
            on_duration_mean=duty * cycle,
            off_duration_mean=(1.0 - duty) * cycle,
            assumed_shape=True,
        )

    def scaled_to(self, lam: float) -> "ArrivalProcess":
        """Same shape on a time axis stretched so that the mean rate is lam."""
        factor = lam / self.mean_rate
        if self.kind == ArrivalKind.POISSON:
            return self.model_copy(update={"rate": lam})
        if self.kind == ArrivalKind.LOGISTIC:
            return self.model_copy(update={"location": self.location / factor, "scale": self.scale / factor})
        return self.model_copy(update={
            "on_rate": self.on_rate * factor,
            "on_duration_mean": self.on_duration_mean / factor,
            "off_duration_mean": self.off_duration_mean / factor,
        })

    @property
    def mean_rate(self) -> float:
        if self.kind == ArrivalKind.POISSON:
            return self.rate
        if self.kind == ArrivalKind.LOGISTIC:
            return 1.0 / self.location
        duty = self.on_duration_mean / (self.on_duration_mean + self.off_duration_mean)
        return self.on_rate * duty


class LadderLevel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    label: str
    bitrate_kbps: float = Field(..., gt=0, allow_inf_nan=False)
    weight: Optional[float] = Field(None, ge=0, allow_inf_nan=False)


class BitrateLadder(BaseModel):
    """Resolutions and bitrates available to the client, ascending by bitrate."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    levels: List[LadderLevel] = Field(..., min_length=1)

    @field_validator("levels")
    @classmethod
    def sort_and_check(cls, levels: List[LadderLevel]) -> List[LadderLevel]:
        ordered = sorted(levels, key=lambda level: level.bitrate_kbps)
        for lower, upper in zip(ordered, ordered[1:]):
            if upper.bitrate_kbps <= lower.bitrate_kbps:
                raise ValueError(
                    f"bitrates must be strictly increasing: {lower.label} and {upper.label} "
                    f"both at {upper.bitrate_kbps} Kbps"
                )
        return ordered

    @classmethod
    def standard(cls) -> "BitrateLadder":
        return cls(levels=[
            LadderLevel(label="240p", bitrate_kbps=400),
            LadderLevel(label="360p", bitrate_kbps=750),
            LadderLevel(label="480p", bitrate_kbps=1000),
            LadderLevel(label="720p", bitrate_kbps=2500),
            LadderLevel(label="1080p", bitrate_kbps=4500),
        ])

    @property
    def max_bitrate(self) -> float:
        return self.levels[-1].bitrate_kbps

    def level(self, label: str) -> LadderLevel:
        for level in self.levels:
            if level.label == label:
                return level
        raise KeyError(f"no ladder level labelled {label!r}")

    def weight_of(self, level: LadderLevel, weighting: LadderWeighting) -> float:
        if level.weight is not None:
            return level.weight
        if weighting == LadderWeighting.PROPORTIONAL:
            return level.bitrate_kbps / self.max_bitrate
        return level.bitrate_kbps


class QoEWeights(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma1: float = Field(0.1, ge=0, allow_inf_nan=False)
    gamma2: float = Field(1.0, ge=0, allow_inf_nan=False)
    gamma3: float = Field(0.01, ge=0, allow_inf_nan=False)

    def scaled(self, factor: float) -> "QoEWeights":
        return QoEWeights(
            gamma1=self.gamma1 * factor,
            gamma2=self.gamma2 * factor,
            gamma3=self.gamma3 * factor,
        )


def _default_session() -> SessionParams:
    return SessionParams(lam=0.95, mu=1.0, file_size_N=1000, startup_x=40, offset_phi=50)


class RunConfig(BaseModel):
    """Fully resolved configuration of one CLI run; echoed into every output file."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    command: str
    session: SessionParams = Field(default_factory=_default_session)
    arrival_kind: ArrivalKind = ArrivalKind.POISSON
    arrivals: Optional[ArrivalProcess] = None
    weights: QoEWeights = Field(default_factory=QoEWeights)
    ladder: BitrateLadder = Field(default_factory=BitrateLadder.standard)
    throughput_kbps: float = Field(2200.0, gt=0, allow_inf_nan=False)
    frame_rate: float = Field(Config.FRAME_RATE, gt=0, allow_inf_nan=False)
    pair_conversion: PairConversion = PairConversion(Config.PAIR_CONVERSION)
    svc_overhead: bool = False
    weighting: LadderWeighting = LadderWeighting(Config.LADDER_WEIGHTING)
    quality_mode: QualityMode = QualityMode(Config.QUALITY_MODE)
    b_low_kbps: float = Field(1000.0, gt=0, allow_inf_nan=False)
    b_high_kbps: float = Field(2500.0, gt=0, allow_inf_nan=False)
    risk_threshold: float = Field(0.01, gt=0, le=1)
    seed: int = Field(Config.DEFAULT_SEED, ge=0, lt=2 ** 64)
    runs: int = Field(Config.DEFAULT_RUNS, ge=1)
    workers: int = Field(Config.WORKERS, ge=1)
    phi_bound: PhiBound = PhiBound(Config.PHI_BOUND)
    j_max: int = Field(Config.J_MAX, ge=1)
    eps_trunc: float = Field(Config.EPS_TRUNC, ge=0, lt=1)
    sweep: Optional[str] = None
    baseline: bool = False
    pgf_points: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    rational: bool = False
    output_format: OutputFormat = OutputFormat.JSON
    out: Optional[str] = None
    trace_out: Optional[str] = None

    @field_validator("pgf_points")
    @classmethod
    def check_pgf_points(cls, points: List[float]) -> List[float]:
        for z in points:
            if not 0.0 <= z <= 1.0:
                raise ValueError(f"p.g.f. sample point {z} outside [0, 1]")
        return points

    def arrival_process(self, lam: float) -> ArrivalProcess:
        """Arrivals of one session point; an explicit process keeps its shape and takes the point's rate."""
        if self.arrivals is not None:
            if math.isclose(self.arrivals.mean_rate, lam, rel_tol=1e-12):
                return self.arrivals
            return self.arrivals.scaled_to(lam)
        return ArrivalProcess.for_mean_rate(self.arrival_kind, lam)

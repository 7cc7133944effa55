"""Experiment configuration with exact JSON round-tripping."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

from .errors import ConfigError


@dataclass
class RegionSpec:
    """One rectangular ground-truth region (axis-aligned)."""

    label: str
    theta: float
    rect: Tuple[float, float, float, float]


@dataclass
class GraphConfig:
    p: int
    d: int
    w_min: float
    w_max: float
    domain: Tuple[float, float, float, float]
    regions: List[RegionSpec]
    cross_coupling: str = "mean"
    seed: int = 0

    def __post_init__(self):
        self.domain = tuple(self.domain)
        self.regions = [r if isinstance(r, RegionSpec) else RegionSpec(**r)
                        for r in self.regions]
        for r in self.regions:
            r.rect = tuple(r.rect)


@dataclass
class SamplingConfig:
    n: int
    seed: int = 1


@dataclass
class DetectorConfig:
    """Detector knobs; None values are derived from the ground truth."""

    variant: str = "basic"            # basic | convex | both
    convexify_when: str = "each_iteration"
    tau0: Optional[float] = None
    zeta: Optional[float] = None
    rho: float = 0.02
    xi: float = 0.5
    k_min: int = 10
    theta_floor: Optional[float] = None
    refine_factor: int = 2
    known_frame: bool = True

    def __post_init__(self):
        if self.variant not in ("basic", "convex", "both"):
            raise ConfigError(f"variant must be basic|convex|both, got {self.variant!r}")


@dataclass
class OutputConfig:
    directory: str = "out"
    render: bool = False
    record_timings: bool = True


@dataclass
class ExperimentConfig:
    graph: GraphConfig
    sampling: SamplingConfig
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    trials: int = 1

    def __post_init__(self):
        if isinstance(self.graph, dict):
            self.graph = GraphConfig(**self.graph)
        if isinstance(self.sampling, dict):
            self.sampling = SamplingConfig(**self.sampling)
        if isinstance(self.detector, dict):
            self.detector = DetectorConfig(**self.detector)
        if isinstance(self.outputs, dict):
            self.outputs = OutputConfig(**self.outputs)
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def quadrant_config(p: int = 5000, n: int = 5000, trials: int = 1,
                    thetas: Tuple[float, float, float, float] = (0.069, 0.04, 0.056, 0.08),
                    tau0: Optional[float] = 0.16, zeta: Optional[float] = None,
                    variant: str = "basic", graph_seed: int = 0, sample_seed: int = 1,
                    neighbor_intensity: float = 14.0, rho: float = 0.02,
                    xi: float = 0.5, k_min: int = 4,
                    outdir: str = "out") -> ExperimentConfig:
    """Four unit-square regions on a 2 x 2 domain.

    The wiring radius is set so a vertex sees ``neighbor_intensity``
    candidates on average, which concentrates the degrees at d; the
    minimum separation keeps the 5x radius ratio.  The quadrant with the
    two closest couplings is placed on the diagonal so that edge-adjacent
    regions keep the largest possible gaps.
    """
    import math
    eta = p / 4.0
    w_max = math.sqrt(neighbor_intensity / (math.pi * eta))
    regions = [
        RegionSpec(label="q00", theta=thetas[0], rect=(0.0, 0.0, 1.0, 1.0)),
        RegionSpec(label="q10", theta=thetas[1], rect=(1.0, 0.0, 2.0, 1.0)),
        RegionSpec(label="q01", theta=thetas[2], rect=(0.0, 1.0, 1.0, 2.0)),
        RegionSpec(label="q11", theta=thetas[3], rect=(1.0, 1.0, 2.0, 2.0)),
    ]
    return ExperimentConfig(
        graph=GraphConfig(p=p, d=4, w_min=w_max / 5.0, w_max=w_max,
                          domain=(0.0, 0.0, 2.0, 2.0), regions=regions,
                          seed=graph_seed),
        sampling=SamplingConfig(n=n, seed=sample_seed),
        detector=DetectorConfig(variant=variant, tau0=tau0, zeta=zeta,
                                rho=rho, xi=xi, k_min=k_min),
        outputs=OutputConfig(directory=outdir),
        trials=trials,
    )

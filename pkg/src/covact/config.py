"""Pipeline configuration: INI sections mapped onto dataclasses.

Every key can be overridden on the command line as ``--<section>-<key>``
(underscores become dashes), e.g. ``--omp-sparsity 5``.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field, fields

from .features import FeatureSetMask
from .flow import FlowParams
from .tsc import SolverOptions

BLOCKS = ("intensity", "gradients", "motion", "kinematic", "position")


@dataclass
class PipelineSection:
    clip_length: int = 20  # frames per non-overlapping clip
    features: str = "AMF"  # preset (AMF, MF, AF, gesture) or blocks joined by '+'
    kinematic_terms: str = ""  # comma list; empty keeps the preset's terms
    tau2: str = "sum"  # 'sum' (tr^2 + tr(G^2))/2 or 'standard' (tr^2 - tr(G^2))/2
    methods: str = "omp,tsc,nn"  # any of omp, tsc, nn, or all
    depth_threshold: float = 0.0  # depth units; 0 disables depth masking
    seed: int = 0
    jobs: int = 1  # worker processes for extraction and evaluation


@dataclass
class FlowSection:
    alpha: float = 15.0  # smoothness weight (intensities on a 0-255 scale)
    max_iterations: int = 200
    tolerance: float = 1e-4  # mean absolute update at which iteration stops


@dataclass
class CovarianceSection:
    reg_eps: float = 0.0  # fixed ridge; 0 selects reg_scale * trace / d
    reg_scale: float = 1e-5
    reg_floor: float = 1e-8
    weighted: bool = True  # sqrt(2) off-diagonal weighting in log vectors


@dataclass
class OmpSection:
    sparsity: int = 10  # maximum atoms per clip
    tolerance: float = 1e-6  # stop once residual <= tolerance * ||y||


@dataclass
class TscSection:
    delta: float = 1e-3  # l1 weight
    mu0: float = 1.0  # initial barrier weight
    mu_factor: float = 0.1
    gap_tol: float = 1e-10
    max_iterations: int = 1000


@dataclass
class SplitSection:
    test_groups: str = ""  # comma list of group ids; empty draws test_fraction of groups
    test_fraction: float = 0.4
    one_shot: int = 1  # training videos per class for the nearest-neighbour path


@dataclass
class PipelineConfig:
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    flow: FlowSection = field(default_factory=FlowSection)
    covariance: CovarianceSection = field(default_factory=CovarianceSection)
    omp: OmpSection = field(default_factory=OmpSection)
    tsc: TscSection = field(default_factory=TscSection)
    split: SplitSection = field(default_factory=SplitSection)

    def validate(self) -> "PipelineConfig":
        if self.pipeline.clip_length < 2:
            raise ValueError("pipeline.clip_length must be at least 2")
        positives = {
            "flow.alpha": self.flow.alpha,
            "flow.tolerance": self.flow.tolerance,
            "covariance.reg_scale": self.covariance.reg_scale,
            "covariance.reg_floor": self.covariance.reg_floor,
            "omp.tolerance": self.omp.tolerance,
            "tsc.gap_tol": self.tsc.gap_tol,
            "tsc.mu0": self.tsc.mu0,
        }
        for k, v in positives.items():
            if not v > 0:
                raise ValueError(f"{k} must be positive")
        if self.omp.sparsity < 1:
            raise ValueError("omp.sparsity must be at least 1")
        if self.tsc.delta < 0:
            raise ValueError("tsc.delta must be nonnegative")
        if not 0 < self.tsc.mu_factor < 1:
            raise ValueError("tsc.mu_factor must lie in (0, 1)")
        bad = set(self.method_list) - {"omp", "tsc", "nn"}
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        self.feature_mask()
        return self

    @property
    def method_list(self) -> list[str]:
        out = [m.strip().lower() for m in self.pipeline.methods.split(",") if m.strip()]
        return ["omp", "tsc", "nn"] if out == ["all"] else out

    def feature_mask(self) -> FeatureSetMask:
        return parse_mask(self.pipeline.features, self.pipeline.kinematic_terms, self.pipeline.tau2)

    def flow_params(self) -> FlowParams:
        return FlowParams(self.flow.alpha, self.flow.max_iterations, self.flow.tolerance)

    def solver_options(self) -> SolverOptions:
        t = self.tsc
        return SolverOptions(mu0=t.mu0, mu_factor=t.mu_factor, gap_tol=t.gap_tol, max_iterations=t.max_iterations)


def parse_mask(spec: str, kinematic_terms: str = "", tau2: str = "sum") -> FeatureSetMask:
    spec = spec.strip()
    if "+" in spec or spec.lower() in BLOCKS:
        blocks = {b.strip().lower() for b in spec.split("+") if b.strip()}
        unknown = blocks - set(BLOCKS)
        if unknown:
            raise ValueError(f"unknown feature blocks {sorted(unknown)}")
        mask = FeatureSetMask(
            include_intensity="intensity" in blocks,
            include_gradients="gradients" in blocks,
            include_basic_motion="motion" in blocks,
            include_kinematic="kinematic" in blocks,
            include_position="position" in blocks,
        )
    else:
        mask = FeatureSetMask.preset(spec)
    terms = tuple(t.strip() for t in kinematic_terms.split(",") if t.strip())
    if terms:
        mask = dataclasses.replace(mask, kinematic_terms=terms)
    return dataclasses.replace(mask, tau2=tau2)


def _coerce(tp, raw: str):
    tp = tp if isinstance(tp, type) else {"int": int, "float": float, "bool": bool, "str": str}[tp]
    if tp is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return tp(raw.strip())


def sections(cfg: PipelineConfig):
    for f in fields(cfg):
        yield f.name, getattr(cfg, f.name)


def set_value(cfg: PipelineConfig, section: str, key: str, raw: str) -> None:
    sec = getattr(cfg, section, None)
    if sec is None or not dataclasses.is_dataclass(sec):
        raise ValueError(f"unknown config section [{section}]")
    ftypes = {f.name: f.type for f in fields(sec)}
    if key not in ftypes:
        raise ValueError(f"unknown config key {section}.{key}")
    setattr(sec, key, _coerce(ftypes[key], raw))


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then the INI file (if any), then ``{"section.key": value}`` overrides."""
    cfg = PipelineConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if not parser.read(path):
            raise FileNotFoundError(f"config file {path} not found")
        for sec in parser.sections():
            for key, raw in parser.items(sec):
                set_value(cfg, sec, key, raw)
    for dotted, raw in (overrides or {}).items():
        sec, key = dotted.split(".", 1)
        set_value(cfg, sec, key, str(raw))
    return cfg.validate()


def dump_config(cfg: PipelineConfig) -> str:
    """INI text for ``cfg``; round-trips through ``load_config``."""
    out = []
    for name, sec in sections(cfg):
        out.append(f"[{name}]")
        for f in fields(sec):
            v = getattr(sec, f.name)
            out.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        out.append("")
    return "\n".join(out)


def add_config_flags(parser) -> None:
    """Register ``--<section>-<key>`` options for every config field."""
    for name, sec in sections(PipelineConfig()):
        group = parser.add_argument_group(f"[{name}] overrides")
        for f in fields(sec):
            flag = f"--{name}-{f.name}".replace("_", "-")
            group.add_argument(flag, dest=f"cfg__{name}__{f.name}", default=None, metavar=str(f.type).upper())


def overrides_from_args(args) -> dict:
    out = {}
    for k, v in vars(args).items():
        if k.startswith("cfg__") and v is not None:
            _, sec, key = k.split("__", 2)
            out[f"{sec}.{key}"] = v
    return out


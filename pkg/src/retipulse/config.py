"""Run configuration: every pipeline tunable in one sectioned key=value file.

    [segment]
    clahe_grid = 9
    ...
    [pulse]
    formula = 2*sep

Unknown sections or keys are rejected so that typos do not pass silently.
"""

from dataclasses import dataclass, field, fields, asdict
import configparser

from .caliper import CaliperParams
from .errors import ConfigError, RetiPulseError
from .pulse import PulseParams
from .segment import SegmentationParams
from .skeleton import SkeletonParams


@dataclass
class RunConfig:
    segment: SegmentationParams = field(default_factory=SegmentationParams)
    skeleton: SkeletonParams = field(default_factory=SkeletonParams)
    caliper: CaliperParams = field(default_factory=CaliperParams)
    pulse: PulseParams = field(default_factory=PulseParams)
    fps: float = 30.0
    seed: int = 0

    def validate(self):
        for name in ("segment", "pulse"):
            try:
                getattr(self, name).validate()
            except RetiPulseError as exc:
                raise ConfigError(name, str(exc)) from None
        sk, cal = self.skeleton, self.caliper
        checks = [
            ("skeleton.gap_se_length", sk.gap_se_length >= 1 and sk.gap_se_length % 2 == 1,
             "must be a positive odd integer"),
            ("skeleton.gap_angle_step", 0 < sk.gap_angle_step <= 180, "must be in (0, 180]"),
            ("skeleton.prune_length", sk.prune_length >= 1, "must be positive"),
            ("caliper.normal_factor", cal.normal_factor > 0, "must be positive"),
            ("caliper.tangent_window", cal.tangent_window >= 2, "must be at least 2"),
            ("caliper.kmeans_k", cal.kmeans_k >= 2, "must be at least 2"),
            ("caliper.kmeans_tol", cal.kmeans_tol > 0, "must be positive"),
            ("caliper.kmeans_max_iter", cal.kmeans_max_iter >= 1, "must be positive"),
            ("caliper.row_join", cal.row_join >= 0, "must be non-negative"),
            ("caliper.count_mode", cal.count_mode in ("center", "total"), "must be center or total"),
            ("run.fps", self.fps > 0, "must be positive"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(name, msg)
        return self

    def to_dict(self):
        return asdict(self)

    def dumps(self):
        lines = []
        for section in ("segment", "skeleton", "caliper", "pulse"):
            lines.append(f"[{section}]")
            for key, value in asdict(getattr(self, section)).items():
                lines.append(f"{key} = {value}")
            lines.append("")
        lines += ["[run]", f"fps = {self.fps}", f"seed = {self.seed}", ""]
        return "\n".join(lines)


_SECTIONS = {
    "segment": SegmentationParams,
    "skeleton": SkeletonParams,
    "caliper": CaliperParams,
    "pulse": PulseParams,
}


def _convert(raw, default, where):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(where, f"cannot parse {raw!r} as {type(default).__name__}") from None
    return raw.strip()


def loads(text):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    cfg = RunConfig()
    for section in parser.sections():
        if section == "run":
            target = cfg
            defaults = {"fps": cfg.fps, "seed": cfg.seed}
        elif section in _SECTIONS:
            target = getattr(cfg, section)
            defaults = {f.name: getattr(target, f.name) for f in fields(target)}
        else:
            raise ConfigError(section, "unknown section")
        for key, raw in parser.items(section):
            where = f"{section}.{key}"
            if key not in defaults:
                raise ConfigError(where, "unknown key")
            setattr(target, key, _convert(raw, defaults[key], where))
    return cfg.validate()


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())

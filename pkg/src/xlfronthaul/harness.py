"""Monte-Carlo driver: configuration, per-drop evaluation, record and CDF files."""

from concurrent.futures import ProcessPoolExecutor
import configparser
import csv
from dataclasses import dataclass, field, fields, replace
import logging
import os

import numpy as np
from threadpoolctl import threadpool_limits

from .channel import (ChannelConfig, LayoutConfig, SystemDims, build_geometry,
                      generate_realization, noise_power)
from .system import (HardwareProfile, bi_svd_precoders, fixed_baseline_allocation,
                     spectral_efficiency)
from .wmmse import WmmseOptions, wmmse_optimize

log = logging.getLogger(__name__)

__all__ = ["SCHEMES", "RunConfig", "SeRecord", "CdfTable", "DropFlag", "load_config",
           "save_config", "run_monte_carlo", "evaluate_drop", "fixed_baseline_allocation",
           "emit_cdf", "write_records", "read_records"]

# scheme id -> (hardware variant, allocation strategy)
SCHEMES = {
    "fixed": ("impaired", "fixed"),
    "wmmse": ("impaired", "wmmse"),
    "access-fixed": ("access-only", "fixed"),
    "access-wmmse": ("access-only", "wmmse"),
    "perfect-fixed": ("perfect", "fixed"),
    "perfect-wmmse": ("perfect", "wmmse"),
}


@dataclass
class RunConfig:
    dims: SystemDims = field(default_factory=lambda: SystemDims(L=64, N=4, M=12, K=8))
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    kappa_ac: float = 0.95
    kappa_frt: float = 0.95
    p_ue_max: float = 0.2
    p_frt_max: float = 10.0
    schemes: tuple = ("fixed", "wmmse", "perfect-fixed")
    n_drops: int = 100
    seed: int = 0
    out: str = "results"
    optimizer: WmmseOptions = field(default_factory=lambda: WmmseOptions(record_blocks=False))

    def __post_init__(self):
        if self.n_drops < 1:
            raise ValueError("n_drops must be >= 1")
        if not self.schemes:
            raise ValueError("scheme list is empty")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            raise ValueError(f"unknown schemes {unknown}; choose from {sorted(SCHEMES)}")
        self.hardware()  # validates kappas and power limits
        # the run seed is authoritative for every random stream
        self.channel = replace(self.channel, seed=int(self.seed))

    def hardware(self, variant: str = "impaired") -> HardwareProfile:
        sigma2 = noise_power(self.channel.bandwidth, self.channel.noise_figure)
        kappa_ac, kappa_frt = {
            "impaired": (self.kappa_ac, self.kappa_frt),
            "access-only": (self.kappa_ac, 1.0),
            "perfect": (1.0, 1.0),
        }[variant]
        return HardwareProfile(kappa_ac, kappa_frt, sigma2, self.p_ue_max, self.p_frt_max)


@dataclass(frozen=True)
class SeRecord:
    scheme: str
    drop: int
    ue: int
    se: float  # bit/s/Hz
    sum_se: float  # bit/s/Hz, whole drop


@dataclass(frozen=True)
class DropFlag:
    scheme: str
    drop: int
    message: str


@dataclass
class CdfTable:
    values: np.ndarray
    probabilities: np.ndarray

    def quantile(self, q: float) -> float:
        """Smallest tabulated value whose probability reaches ``q``."""
        idx = int(np.searchsorted(self.probabilities, q - 1e-12))
        return float(self.values[min(idx, len(self.values) - 1)])


# --- configuration file ----------------------------------------------------------

_SECTIONS = {"system": SystemDims, "layout": LayoutConfig, "channel": ChannelConfig,
             "optimizer": WmmseOptions}


def _parse_value(text: str, default):
    text = text.strip()
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple) or default is None:
        parts = [p.strip() for p in text.replace(",", " ").split()]
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            return tuple(parts)
    return text


def _format_value(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(str(v) for v in value)
    return str(value)


def _parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive (L, N, M, K)
    return parser


def load_config(path: str | None = None, **overrides) -> RunConfig:
    """Read an INI-style configuration; missing keys keep their defaults."""
    base = RunConfig()
    parser = _parser()
    if path is not None:
        if not parser.read(path):
            raise FileNotFoundError(path)

    parts = {"dims": base.dims, "layout": base.layout, "channel": base.channel,
             "optimizer": base.optimizer}
    attr = {"system": "dims", "layout": "layout", "channel": "channel", "optimizer": "optimizer"}
    for section, cls in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        current = parts[attr[section]]
        known = {f.name: getattr(current, f.name) for f in fields(cls)}
        updates = {}
        for key, text in parser.items(section):
            if key not in known:
                raise ValueError(f"unknown key [{section}] {key}")
            if key == "init":
                raise ValueError("optimizer init cannot be set from a file")
            default = known[key]
            if default is None and key == "grid_shape":
                updates[key] = tuple(int(float(v)) for v in _parse_value(text, None))
            else:
                updates[key] = _parse_value(text, default)
        parts[attr[section]] = replace(current, **updates)

    top = {}
    for section in ("hardware", "run"):
        if parser.has_section(section):
            for key, text in parser.items(section):
                if key not in {f.name for f in fields(RunConfig)}:
                    raise ValueError(f"unknown key [{section}] {key}")
                top[key] = _parse_value(text, getattr(base, key))
    top.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**parts, **top)


def save_config(config: RunConfig, path: str) -> None:
    parser = _parser()
    parser["system"] = {f.name: _format_value(getattr(config.dims, f.name)) for f in fields(SystemDims)}
    parser["layout"] = {f.name: _format_value(getattr(config.layout, f.name))
                        for f in fields(LayoutConfig) if getattr(config.layout, f.name) is not None}
    parser["channel"] = {f.name: _format_value(getattr(config.channel, f.name))
                         for f in fields(ChannelConfig)}
    parser["hardware"] = {k: _format_value(getattr(config, k))
                          for k in ("kappa_ac", "kappa_frt", "p_ue_max", "p_frt_max")}
    parser["run"] = {k: _format_value(getattr(config, k)) for k in ("schemes", "n_drops", "seed", "out")}
    parser["optimizer"] = {f.name: _format_value(getattr(config.optimizer, f.name))
                           for f in fields(WmmseOptions) if f.name != "init"}
    with open(path, "w") as fh:
        parser.write(fh)


# --- Monte Carlo -----------------------------------------------------------------

def drop_rng(seed: int, drop: int) -> np.random.Generator:
    """Random stream of one drop; depends only on (master seed, drop index)."""
    return np.random.default_rng([int(seed), int(drop)])


def evaluate_drop(config: RunConfig, drop: int) -> tuple:
    """All requested schemes on one drop; returns (records, flags)."""
    records, flags = [], []
    with threadpool_limits(limits=1):
        rng = drop_rng(config.seed, drop)
        try:
            geometry = build_geometry(config.dims, config.layout, rng, config.channel.carrier_spacing)
            realization = generate_realization(geometry, config.channel, rng)
            P = bi_svd_precoders(realization)
        except Exception as exc:  # flagged, never silently skipped
            return [], [DropFlag("*", drop, f"channel generation failed: {exc}")]

        for scheme in config.schemes:
            variant, strategy = SCHEMES[scheme]
            hw = config.hardware(variant)
            try:
                alloc = fixed_baseline_allocation(realization, P, hw)
                if strategy == "wmmse":
                    alloc, trace = wmmse_optimize(realization, P, hw, config.optimizer)
                    if trace.message and not trace.message.startswith("no convergence"):
                        flags.append(DropFlag(scheme, drop, trace.message))
                se = spectral_efficiency(realization, P, alloc, hw)
            except Exception as exc:
                flags.append(DropFlag(scheme, drop, f"evaluation failed: {exc}"))
                continue
            total = float(np.sum(se))
            records.extend(SeRecord(scheme, drop, k, float(s), total) for k, s in enumerate(se))
    return records, flags


def _evaluate_drop_args(args):
    return evaluate_drop(*args)


def run_monte_carlo(config: RunConfig, threads: int = 1) -> tuple:
    """Evaluate every drop; returns (records, flags) ordered by drop.

    Results do not depend on ``threads``: each drop owns its random stream and
    BLAS is pinned to one thread inside every evaluation.
    """
    jobs = [(config, d) for d in range(config.n_drops)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_evaluate_drop_args, jobs, chunksize=1))
    else:
        results = [evaluate_drop(*job) for job in jobs]
    records = [r for recs, _ in results for r in recs]
    flags = [f for _, fl in results for f in fl]
    for flag in flags:
        log.warning("drop %d scheme %s flagged: %s", flag.drop, flag.scheme, flag.message)
    return records, flags


# --- files -----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_records(records, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scheme", "drop", "ue", "se_bps_hz"])
        for r in records:
            writer.writerow([r.scheme, r.drop, r.ue, _fmt(r.se)])


def read_records(path: str) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    sums = {}
    for row in rows:
        key = (row["scheme"], int(row["drop"]))
        sums[key] = sums.get(key, 0.0) + float(row["se_bps_hz"])
    return [SeRecord(row["scheme"], int(row["drop"]), int(row["ue"]), float(row["se_bps_hz"]),
                     sums[(row["scheme"], int(row["drop"]))]) for row in rows]


def write_flags(flags, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scheme", "drop", "message"])
        for f in flags:
            writer.writerow([f.scheme, f.drop, f.message])


def emit_cdf(records, scheme: str, path: str | None = None) -> CdfTable:
    """Empirical CDF of per-UE SE for ``scheme``; optionally written as CSV."""
    values = np.sort([r.se for r in records if r.scheme == scheme])
    if values.size == 0:
        raise ValueError(f"no records for scheme {scheme!r}")
    table = CdfTable(values=values, probabilities=np.arange(1, values.size + 1) / values.size)
    if path is not None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["se_bps_hz", "probability"])
            for v, p in zip(table.values, table.probabilities):
                writer.writerow([_fmt(v), _fmt(p)])
    return table


def cdf_path(out_dir: str, scheme: str) -> str:
    return os.path.join(out_dir, f"cdf_{scheme}.csv")

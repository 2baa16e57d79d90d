"""Config-driven experiments: seeding, Monte-Carlo sweeps, result files.

Seeding layout: trial i uses base_seed + i. Stream role 0 draws the
channel realization (shared by every scheme), role 1 the anchor-phase
noise (shared by the schemes that run step 1), roles 2..5 the per-scheme
pilot noise. Each SNR point gets its own stream so sweep points stay
independent draws.
"""

from __future__ import annotations

import dataclasses
import math
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .baselines import (SchemeId, estimate_common_channel_scheme,
                        estimate_dft_scheme, estimate_proposed_no_vr)
from .channel import VRConfig, dump_realization, realize_channel
from .estimation import EstimationError, PilotPlan, run_proposed
from .geometry import GeometryConfig, build_geometry
from .metrics import (MetricsRecord, design_beamforming, effective_sum_rate,
                      nmse, pilot_overhead)

OUTPUT_DIR_ENV = "XLIRS_OUTPUT_DIR"
DETAIL_HEADER = "scheme,K,snr_db,seed,nmse,overhead,sum_rate,flags"
AGGREGATE_HEADER = "scheme,K,snr_db,trials,failed,mean_nmse,mean_sum_rate"

_NOISE_ROLE = {SchemeId.PROPOSED: 2, SchemeId.PROPOSED_NO_VR: 3,
               SchemeId.DFT: 4, SchemeId.COMMON: 5}
_STEP1_ROLE = 1


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig
    vr: VRConfig
    pilot: PilotPlan
    snr_db: tuple
    k_users: tuple
    trials: int
    base_seed: int
    schemes: tuple
    output_dir: str
    coherence_slots: int

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if len(self.snr_db) == 0:
            raise ConfigError("snr_db sweep must be nonempty")
        if any(k < 1 for k in self.k_users):
            raise ConfigError("every K must be at least 1")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be nonnegative")
        if len(self.schemes) == 0:
            raise ConfigError("schemes list must be nonempty")
        if self.coherence_slots < 1:
            raise ConfigError("coherence_slots must be positive")


def _section(data: dict, name: str) -> dict:
    sec = data.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    return dict(sec)


def _build(cls, kwargs: dict, name: str):
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"section '{name}': {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"section '{name}': {exc}") from exc


def _coerce(kwargs: dict, name: str, ints=(), floats=()):
    """Normalize YAML scalars in place; 1.0e5 without the sign parses as
    a string under YAML 1.1, so every numeric field goes through here."""
    try:
        for key in ints:
            if key in kwargs:
                kwargs[key] = int(kwargs[key])
        for key in floats:
            if kwargs.get(key) is not None:
                kwargs[key] = float(kwargs[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section '{name}': field '{key}': {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Parse a YAML experiment file; absent keys fall back to defaults."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level of the config must be a mapping")
    known = {"geometry", "vr", "pilot", "sweep", "run"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    geo_kw = _section(data, "geometry")
    try:
        for key in ("bs_center", "irs_center", "anchor_position",
                    "user_disc_center"):
            if key in geo_kw:
                geo_kw[key] = tuple(float(v) for v in geo_kw[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section 'geometry': field '{key}': {exc}") \
            from exc
    _coerce(geo_kw, "geometry", ints=("m_bs", "nx", "ny", "n_users"),
            floats=("wavelength", "element_spacing", "user_disc_radius",
                    "user_height", "bs_link_gain"))
    geometry = _build(GeometryConfig, geo_kw, "geometry")

    vr_kw = _section(data, "vr")
    _coerce(vr_kw, "vr", floats=("rho_bs", "rho_user"))
    vr = _build(VRConfig, vr_kw, "vr")

    pilot_kw = _section(data, "pilot")
    if "noise_var" in pilot_kw:
        raise ConfigError("noise level is derived from the SNR sweep; "
                          "do not set pilot.noise_var")
    _coerce(pilot_kw, "pilot", ints=("max_extra_slots",),
            floats=("p", "p_u", "kappa", "threshold_multiplier",
                    "rank_rtol"))
    pilot = _build(PilotPlan, pilot_kw, "pilot")

    sweep = _section(data, "sweep")
    snr_db = tuple(float(s) for s in sweep.pop("snr_db", (0, 5, 10, 15,
                                                          20, 25, 30)))
    k_users = tuple(int(k) for k in sweep.pop("k_users",
                                              (geometry.n_users,)))
    trials = int(sweep.pop("trials", 500))
    base_seed = int(sweep.pop("base_seed", 1))
    if sweep:
        raise ConfigError(f"unknown sweep keys: {sorted(sweep)}")

    run = _section(data, "run")
    try:
        schemes = tuple(SchemeId(s) for s in run.pop("schemes", [s.value
                        for s in SchemeId]))
    except ValueError as exc:
        raise ConfigError(f"unknown scheme id: {exc}") from exc
    output_dir = str(run.pop("output_dir", "results"))
    coherence_slots = int(run.pop("coherence_slots", 5000))
    if run:
        raise ConfigError(f"unknown run keys: {sorted(run)}")

    return ExperimentConfig(geometry=geometry, vr=vr, pilot=pilot,
                            snr_db=snr_db, k_users=k_users, trials=trials,
                            base_seed=base_seed, schemes=schemes,
                            output_dir=output_dir,
                            coherence_slots=coherence_slots)


def resolve_output_dir(config: ExperimentConfig) -> Path:
    """Config value, unless the environment override is set."""
    return Path(os.environ.get(OUTPUT_DIR_ENV) or config.output_dir)


def _flag_text(exc: Exception) -> str:
    text = f"{type(exc).__name__}: {exc}"
    return text.replace(",", ";").replace("\n", " ")[:200]


def _run_scheme(scheme: SchemeId, realization, plan: PilotPlan, seed: int,
                snr_index: int, snr_db: float, k: int,
                config: ExperimentConfig) -> MetricsRecord:
    m, n = realization.m_bs, realization.n_irs
    t = config.coherence_slots
    anchor_slots = math.ceil(n / plan.kappa)
    rng = np.random.default_rng((seed, _NOISE_ROLE[scheme], snr_index))
    step1_rng = np.random.default_rng((seed, _STEP1_ROLE, snr_index))
    try:
        if scheme is SchemeId.PROPOSED:
            out = run_proposed(realization, plan, rng, step1_rng=step1_rng)
            h_hats, t_e = out.h_users_hat, anchor_slots + out.slots_used
        elif scheme is SchemeId.PROPOSED_NO_VR:
            out = estimate_proposed_no_vr(realization, plan, rng,
                                          step1_rng=step1_rng)
            h_hats, t_e = out.h_users_hat, anchor_slots + out.slots_used
        elif scheme is SchemeId.DFT:
            h_hats = estimate_dft_scheme(realization, plan.p_u,
                                         plan.noise_var, rng)
            t_e = k * n
        else:
            h_hats = estimate_common_channel_scheme(realization, plan, rng)
            t_e = n + math.ceil((k - 1) * n / m)
        if t_e > t:
            raise ValueError(f"training ({t_e} slots) exceeds the "
                             f"coherence block ({t})")
        value = nmse(h_hats, realization.h_users)
        phi, w = design_beamforming(h_hats, plan.noise_var, plan.p_u)
        rate = effective_sum_rate(realization.h_users, phi, w, t, t_e,
                                  plan.noise_var)
        return MetricsRecord(scheme=scheme, k_users=k, snr_db=snr_db,
                             seed=seed, nmse=value, pilot_overhead=t_e,
                             effective_sum_rate=rate, coherence_slots=t,
                             training_slots=t_e)
    except (EstimationError, ValueError, np.linalg.LinAlgError) as exc:
        t_e = min(t, pilot_overhead(scheme, k, m, n, kappa=plan.kappa))
        return MetricsRecord(scheme=scheme, k_users=k, snr_db=snr_db,
                             seed=seed, nmse=float("nan"),
                             pilot_overhead=t_e,
                             effective_sum_rate=float("nan"),
                             coherence_slots=t, training_slots=t_e,
                             flags=_flag_text(exc))


def run_experiment(config: ExperimentConfig, progress: bool = False) -> list:
    """One MetricsRecord per (K, trial, SNR, scheme), sorted for emission."""
    records = []
    t_start = time.time()
    for k in config.k_users:
        geo = replace(config.geometry, n_users=k)
        for trial in range(config.trials):
            seed = config.base_seed + trial
            rng_real = np.random.default_rng((seed, 0))
            geometry = build_geometry(geo, rng_real)
            realization = realize_channel(geometry, config.vr, rng_real)
            for si, snr in enumerate(config.snr_db):
                sigma2 = config.pilot.p_u * 10 ** (-snr / 10.0)
                plan = replace(config.pilot, noise_var=sigma2)
                for scheme in config.schemes:
                    records.append(_run_scheme(scheme, realization, plan,
                                               seed, si, snr, k, config))
            if progress and (trial + 1) % max(1, config.trials // 10) == 0:
                print(f"  K={k}: trial {trial + 1}/{config.trials} "
                      f"({time.time() - t_start:.0f}s)", file=sys.stderr)
    records.sort(key=lambda r: (r.scheme.value, r.k_users, r.snr_db, r.seed))
    return records


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def aggregate_records(records) -> list:
    """Mean NMSE and rate per (scheme, K, snr_db); flagged rows excluded.

    Operates on the sorted record list so the means are reproducible from
    the emitted detail file alone.
    """
    groups = {}
    for r in records:
        groups.setdefault((r.scheme.value, r.k_users, r.snr_db),
                          []).append(r)
    rows = []
    for (scheme, k, snr), rs in sorted(groups.items()):
        good = [r for r in rs if not r.flags]
        mean_nmse = float(np.mean([r.nmse for r in good])) \
            if good else float("nan")
        mean_rate = float(np.mean([r.effective_sum_rate for r in good])) \
            if good else float("nan")
        rows.append((scheme, k, snr, len(rs), len(rs) - len(good),
                     mean_nmse, mean_rate))
    return rows


_PLOT_SCRIPT = """\
# gnuplot script for the emitted aggregate file
set datafile separator comma
set xlabel 'SNR (dB)'
set terminal pngcairo size 800,600
schemes = 'proposed proposed_no_vr common dft'
set logscale y
set ylabel 'mean NMSE'
set output 'nmse.png'
plot for [s in schemes] 'aggregate.csv' skip 1 \\
    using 3:(stringcolumn(1) eq s ? column(6) : 1/0) \\
    title s with linespoints
unset logscale y
set ylabel 'mean effective sum-rate (bit/s/Hz)'
set output 'rate.png'
plot for [s in schemes] 'aggregate.csv' skip 1 \\
    using 3:(stringcolumn(1) eq s ? column(7) : 1/0) \\
    title s with linespoints
"""


def _manifest_text(config: ExperimentConfig, timestamp: str) -> str:
    lines = ["xlirs run manifest", f"code_version: {__version__}", ""]
    cfg = dataclasses.asdict(config)
    cfg["schemes"] = [s.value for s in config.schemes]
    for section in ("geometry", "vr", "pilot"):
        lines.append(f"[{section}]")
        for key, val in cfg[section].items():
            lines.append(f"{key}: {val}")
        lines.append("")
    lines.append("[sweep]")
    for key in ("snr_db", "k_users", "trials", "base_seed"):
        lines.append(f"{key}: {cfg[key]}")
    lines.append("")
    lines.append("[run]")
    for key in ("schemes", "output_dir", "coherence_slots"):
        lines.append(f"{key}: {cfg[key]}")
    lines.append("")
    # timestamp sits on its own line so everything above is reproducible
    lines.append(f"timestamp: {timestamp}")
    return "\n".join(lines) + "\n"


def emit_results(records, out_dir, config: ExperimentConfig,
                 timestamp: str | None = None) -> dict:
    """Write detail CSV, aggregate CSV, manifest, and plot script."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    detail_path = out / "details.csv"
    lines = [DETAIL_HEADER]
    for r in records:
        lines.append(",".join([r.scheme.value, str(r.k_users),
                               _fmt(r.snr_db), str(r.seed), _fmt(r.nmse),
                               str(r.pilot_overhead),
                               _fmt(r.effective_sum_rate), r.flags]))
    detail_path.write_text("\n".join(lines) + "\n")

    agg_path = out / "aggregate.csv"
    lines = [AGGREGATE_HEADER]
    for scheme, k, snr, n_all, n_bad, m_nmse, m_rate in \
            aggregate_records(records):
        lines.append(",".join([scheme, str(k), _fmt(snr), str(n_all),
                               str(n_bad), _fmt(m_nmse), _fmt(m_rate)]))
    agg_path.write_text("\n".join(lines) + "\n")

    if timestamp is None:
        timestamp = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    manifest_path = out / "manifest.txt"
    manifest_path.write_text(_manifest_text(config, timestamp))
    plot_path = out / "plots.gp"
    plot_path.write_text(_PLOT_SCRIPT)
    return {"details": detail_path, "aggregate": agg_path,
            "manifest": manifest_path, "plots": plot_path}


def overhead_table(config: ExperimentConfig) -> str:
    """Closed-form overhead per scheme and K; no Monte Carlo.

    The proposed scheme's reduced size is reported at its nominal value
    round(rho_bs * N), the expected visible-column count.
    """
    geo, vr = config.geometry, config.vr
    n = geo.nx * geo.ny
    m = geo.m_bs
    n_til = max(1, round(vr.rho_bs * n))
    kappa = config.pilot.kappa
    header = (f"pilot overhead (slots), M={m}, N={n}, N~={n_til}, "
              f"kappa={kappa:g}")
    lines = [header,
             f"{'K':>3} {'scheme':>16} {'exact':>8} {'amortized':>10}"]
    for k in config.k_users:
        for scheme in config.schemes:
            nt = n_til if scheme is SchemeId.PROPOSED else None
            exact = pilot_overhead(scheme, k, m, n, nt, kappa)
            amort = pilot_overhead(scheme, k, m, n, nt)
            lines.append(f"{k:>3} {scheme.value:>16} {exact:>8} "
                         f"{amort:>10}")
    return "\n".join(lines) + "\n"


def dump_channel(config: ExperimentConfig, out_dir) -> Path:
    """Single-realization debug dump at the base seed and first K."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    geo = replace(config.geometry, n_users=config.k_users[0])
    rng = np.random.default_rng((config.base_seed, 0))
    realization = realize_channel(build_geometry(geo, rng), config.vr, rng)
    path = out / "channel_dump.txt"
    dump_realization(realization, path)
    return path

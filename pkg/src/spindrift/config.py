"""Run-configuration files: a flat, sectioned key-value format.

Grammar (documented in the README): ``[section]`` headers, ``key = value``
lines, ``#`` or ``;`` comments, blank lines ignored.  Unknown sections and
keys are rejected with line numbers; values are whitespace-separated
tokens.  Field entries use the built-in vocabulary::

    g_top  = const:0.5 const:0.0     # one kind:amplitude token per spin
    tau    = parabolic:1.0           # none | const:v | parabolic:v

For the disk domain the forcing components are read as functions of the
boundary angle and only ``g_top`` is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import DomainSpec, Wristband, unit_disk
from .errors import ConfigError
from .fields import FORCING_KINDS, TAU_KINDS, BuiltinFields, FieldSet, builtin_field_set
from .histogram import Axis
from .integrator import SCHEMES, SimConfig

_SECTIONS = {
    # `domain` is an accepted alias for `type` (the documented surface names
    # the variant as `domain = wristband`)
    "domain": {"type", "domain", "period", "half_width", "boundary_tolerance"},
    "fields": {"g_top", "g_bottom", "alpha", "tau", "tau_walls", "sigma"},
    "sim": {"dt", "horizon", "seed", "chains", "burn_in", "record_stride",
            "initial_x", "initial_s", "scheme"},
    "analysis": {"histogram", "bins", "range1", "range2", "eps_grid",
                 "compare_density", "density_top", "density_bottom"},
}

_REQUIRED = {("sim", "dt"), ("sim", "horizon"), ("sim", "seed")}


def parse_kv_text(text: str) -> tuple[dict, dict]:
    """Parse the sectioned key-value grammar.

    Returns ``(values, lines)`` where ``values[section][key]`` is the raw
    token string and ``lines`` remembers source lines for diagnostics.
    """
    values: dict = {}
    lines: dict = {}
    section = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("unterminated section header", line=ln)
            section = stripped[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]", line=ln)
            values.setdefault(section, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected key = value, got {stripped!r}", line=ln)
        if section is None:
            raise ConfigError("key outside any section", line=ln)
        key, val = (part.strip() for part in stripped.split("=", 1))
        key = key.lower()
        if key not in _SECTIONS[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", line=ln)
        if key in values[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", line=ln)
        values[section][key] = val
        lines[(section, key)] = ln
    return values, lines


def _get(values, lines, section, key, conv, default=None):
    raw = values.get(section, {}).get(key)
    if raw is None:
        if (section, key) in _REQUIRED:
            raise ConfigError(f"missing required field {key!r} in [{section}]")
        return default
    try:
        return conv(raw)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}",
                          line=lines.get((section, key)))


def _float(raw):
    return float(raw)


def _int(raw):
    v = float(raw)
    if v != int(v):
        raise ValueError(f"{raw} is not an integer")
    return int(v)


def _floats(raw):
    return tuple(float(tok) for tok in raw.split())


def _bool(raw):
    low = raw.strip().lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {raw!r}")


def _components(raw):
    kinds, amps = [], []
    for tok in raw.split():
        if ":" not in tok:
            raise ValueError(f"component {tok!r} is not kind:amplitude")
        kind, amp = tok.split(":", 1)
        if kind not in FORCING_KINDS:
            raise ValueError(f"unknown forcing kind {kind!r}")
        kinds.append(FORCING_KINDS[kind])
        amps.append(float(amp))
    if not kinds:
        raise ValueError("empty component list")
    return tuple(kinds), tuple(amps)


def _tau(raw):
    tok = raw.strip()
    if tok == "none":
        return TAU_KINDS["none"], 0.0
    if ":" not in tok:
        raise ValueError(f"tau must be none or kind:value, got {tok!r}")
    kind, amp = tok.split(":", 1)
    if kind not in TAU_KINDS or kind == "none":
        raise ValueError(f"unknown tau kind {kind!r}")
    return TAU_KINDS[kind], float(amp)


@dataclass
class AnalysisSettings:
    histogram_axes: tuple[Axis, Axis] | None
    eps_grid: tuple[float, ...] | None
    compare_density: bool
    density_top: float
    density_bottom: float


@dataclass
class RunConfig:
    """Fully validated run description."""

    domain: DomainSpec
    fields: FieldSet
    sim: SimConfig
    chains: int
    analysis: AnalysisSettings
    echo: dict = field(default_factory=dict)  # every setting incl. defaults


def _disk_field_set(domain, kinds, amps, alpha, tau_kind, tau_amp, sigma):
    from .fields import _component_value

    def angle(x):
        return math.atan2(x[1], x[0])

    def forcing(x):
        th = angle(x)
        return np.array([_component_value(k, a, th) for k, a in zip(kinds, amps)])

    def tangential(x, s):
        if tau_kind == 0:
            return np.zeros(2)
        v = tau_amp if tau_kind == 1 else tau_amp * (1.0 - float(np.dot(s, s)))
        n = -np.asarray(x, float) / np.linalg.norm(x)
        return v * np.array([-n[1], n[0]])

    diffusion = None if sigma == 1.0 else (lambda x: sigma * np.eye(2))
    amp_norm = math.sqrt(sum(a * a for a in amps))
    return FieldSet(
        spin_dim=len(kinds), forcing=forcing, damping=lambda x: alpha,
        tangential=tangential, diffusion=diffusion,
        forcing_sup=amp_norm, damping_inf=alpha,
    )


def build_run_config(text: str) -> RunConfig:
    """Parse and validate a config file into runnable objects."""
    values, lines = parse_kv_text(text)

    dom_type = _get(values, lines, "domain", "type", str, None)
    dom_alias = _get(values, lines, "domain", "domain", str, None)
    if dom_type is not None and dom_alias is not None:
        raise ConfigError("give either 'type' or 'domain', not both",
                          line=lines.get(("domain", "domain")))
    dom_type = (dom_type or dom_alias or "wristband").strip().lower()
    if dom_type == "wristband":
        domain = Wristband(
            period=_get(values, lines, "domain", "period", _float, 2 * math.pi),
            half_width=_get(values, lines, "domain", "half_width", _float, 1.0),
        )
    elif dom_type == "disk":
        for key in ("period", "half_width"):
            if key in values.get("domain", {}):
                raise ConfigError(f"{key!r} is not a disk parameter",
                                  line=lines.get(("domain", key)))
        domain = unit_disk()
    else:
        raise ConfigError(f"unknown domain type {dom_type!r}",
                          line=lines.get(("domain", "type")))

    g_top = _get(values, lines, "fields", "g_top", _components, ((0,), (1.0,)))
    alpha = _get(values, lines, "fields", "alpha", _float, 1.0)
    if alpha <= 0:
        raise ConfigError("alpha must be positive", line=lines.get(("fields", "alpha")))
    tau_kind, tau_amp = _get(values, lines, "fields", "tau", _tau, (0, 0.0))
    tau_walls = _get(values, lines, "fields", "tau_walls", str, "both").strip().lower()
    if tau_walls not in ("top", "bottom", "both"):
        raise ConfigError(f"tau_walls must be top/bottom/both, got {tau_walls!r}",
                          line=lines.get(("fields", "tau_walls")))
    sigma = _get(values, lines, "fields", "sigma", _float, 1.0)
    if sigma <= 0:
        raise ConfigError("sigma must be positive", line=lines.get(("fields", "sigma")))

    if isinstance(domain, Wristband):
        g_bottom = _get(values, lines, "fields", "g_bottom", _components, g_top)
        if len(g_bottom[0]) != len(g_top[0]):
            raise ConfigError("g_top and g_bottom have different spin dimensions",
                              line=lines.get(("fields", "g_bottom")))
        spec = BuiltinFields(
            top_kinds=g_top[0], top_amps=g_top[1],
            bottom_kinds=g_bottom[0], bottom_amps=g_bottom[1],
            damping_const=alpha, tau_kind=tau_kind, tau_amp=tau_amp,
            tau_top=tau_walls in ("top", "both"),
            tau_bottom=tau_walls in ("bottom", "both"),
            sigma_scale=sigma,
        )
        fieldset = builtin_field_set(domain, spec)
    else:
        if "g_bottom" in values.get("fields", {}):
            raise ConfigError("disk fields use g_top only (as a function of angle)",
                              line=lines.get(("fields", "g_bottom")))
        fieldset = _disk_field_set(domain, g_top[0], g_top[1], alpha,
                                   tau_kind, tau_amp, sigma)
    p = fieldset.spin_dim

    initial_x = _get(values, lines, "sim", "initial_x", _floats, (0.0, 0.0))
    initial_s = _get(values, lines, "sim", "initial_s", _floats, tuple([0.0] * p))
    if len(initial_s) != p:
        raise ConfigError(f"initial_s has {len(initial_s)} components, spin dim is {p}",
                          line=lines.get(("sim", "initial_s")))
    if len(initial_x) != domain.dim:
        raise ConfigError(f"initial_x has {len(initial_x)} components, domain dim is "
                          f"{domain.dim}", line=lines.get(("sim", "initial_x")))
    chains = _get(values, lines, "sim", "chains", _int, 1)
    if chains < 1:
        raise ConfigError("chains must be >= 1", line=lines.get(("sim", "chains")))
    scheme = _get(values, lines, "sim", "scheme", str, "half-step").strip()
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}",
                          line=lines.get(("sim", "scheme")))
    try:
        sim = SimConfig(
            dt=_get(values, lines, "sim", "dt", _float),
            horizon=_get(values, lines, "sim", "horizon", _float),
            seed=_get(values, lines, "sim", "seed", _int),
            burn_in=_get(values, lines, "sim", "burn_in", _float, 0.0),
            record_stride=_get(values, lines, "sim", "record_stride", _int, 1),
            initial_x=initial_x,
            initial_s=initial_s,
            scheme=scheme,
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc))

    hist_axes = None
    hist_raw = values.get("analysis", {}).get("histogram")
    if hist_raw is not None:
        names = hist_raw.split()
        if len(names) != 2:
            raise ConfigError("histogram needs exactly two coordinate names",
                              line=lines.get(("analysis", "histogram")))
        bins = _get(values, lines, "analysis", "bins", _floats, (20.0, 20.0))
        dens_top = _get(values, lines, "analysis", "density_top", _float, 1.0)
        dens_bot = _get(values, lines, "analysis", "density_bottom", _float, 1.0)
        defaults = {
            "x": (0.0, domain.period) if isinstance(domain, Wristband) else (-1.0, 1.0),
            "y": ((-domain.half_width, domain.half_width)
                  if isinstance(domain, Wristband) else (-1.0, 1.0)),
        }
        for j in range(1, p + 1):
            defaults[f"s{j}"] = (-dens_bot, dens_top) if p == 1 else (-1.2, 1.2)
        ranges = [
            _get(values, lines, "analysis", "range1", _floats, None),
            _get(values, lines, "analysis", "range2", _floats, None),
        ]
        axes = []
        for i, name in enumerate(names):
            if name not in defaults:
                raise ConfigError(f"unknown histogram coordinate {name!r}",
                                  line=lines.get(("analysis", "histogram")))
            lo, hi = ranges[i] if ranges[i] is not None else defaults[name]
            axes.append(Axis(name=name, lo=lo, hi=hi, bins=int(bins[i])))
        hist_axes = tuple(axes)
    else:
        dens_top = _get(values, lines, "analysis", "density_top", _float, 1.0)
        dens_bot = _get(values, lines, "analysis", "density_bottom", _float, 1.0)

    eps_raw = values.get("analysis", {}).get("eps_grid")
    eps_grid = tuple(float(t) for t in eps_raw.split()) if eps_raw else None
    if eps_grid is not None:
        floor = 5.0 * math.sqrt(sim.dt)
        bad = [e for e in eps_grid if e < floor]
        if bad:
            raise ConfigError(
                f"eps values {bad} below the resolution floor 5*sqrt(dt) = {floor:g}",
                line=lines.get(("analysis", "eps_grid")))

    analysis = AnalysisSettings(
        histogram_axes=hist_axes,
        eps_grid=eps_grid,
        compare_density=_get(values, lines, "analysis", "compare_density", _bool, False),
        density_top=dens_top,
        density_bottom=dens_bot,
    )
    if analysis.compare_density and hist_axes is None:
        raise ConfigError("compare_density needs a histogram block")

    echo = {
        "domain.type": dom_type,
        "domain.period": getattr(domain, "period", None),
        "domain.half_width": getattr(domain, "half_width", None),
        "fields.g_top": values.get("fields", {}).get("g_top", "const:1.0"),
        "fields.g_bottom": values.get("fields", {}).get("g_bottom", "(= g_top)"),
        "fields.alpha": alpha,
        "fields.tau": values.get("fields", {}).get("tau", "none"),
        "fields.tau_walls": tau_walls,
        "fields.sigma": sigma,
        "sim.dt": sim.dt,
        "sim.horizon": sim.horizon,
        "sim.seed": sim.seed,
        "sim.chains": chains,
        "sim.burn_in": sim.burn_in,
        "sim.record_stride": sim.record_stride,
        "sim.initial_x": sim.initial_x,
        "sim.initial_s": sim.initial_s,
        "sim.scheme": sim.scheme,
        "analysis.histogram": hist_raw,
        "analysis.eps_grid": eps_grid,
        "analysis.compare_density": analysis.compare_density,
        "analysis.density_top": dens_top,
        "analysis.density_bottom": dens_bot,
    }
    return RunConfig(domain=domain, fields=fieldset, sim=sim, chains=chains,
                     analysis=analysis, echo=echo)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return build_run_config(fh.read())

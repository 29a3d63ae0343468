"""Run configuration: strict INI parsing, defaults, and hashing.

One human-editable file with sections drives every mode; no physics dial
lives on the command line, so continuation studies reproduce exactly.
Unknown sections or keys are rejected.  The configuration hash covers the
fully resolved values (defaults applied) and is embedded in every artifact.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field

from .diagnostics import Thresholds
from .dns import DnsConfig
from .errors import ConfigError
from .frontsolve import SolverConfig
from .geometry import FourierWall, GeometryConfig
from .reaction import ReactionSpec

CONFIG_SCHEMA_VERSION = 1


def _parse_float_list(text):
    text = text.strip()
    if not text:
        return ()
    return tuple(float(tok) for tok in text.replace(",", " ").split())


# key -> (converter, default); None default means "use dataclass default"
_SCHEMA = {
    "run": {
        "seed": (int, 0),
        "out_dir": (str, "out"),
    },
    "geometry": {
        "ell": (float, None), "a": (float, None),
        "n_s": (int, None), "n_x": (int, None), "n_z": (int, None),
        "wall_bottom_const": (float, 0.0),
        "wall_bottom_cos": (_parse_float_list, ()),
        "wall_bottom_sin": (_parse_float_list, ()),
        "wall_top_const": (float, 1.0),
        "wall_top_cos": (_parse_float_list, ()),
        "wall_top_sin": (_parse_float_list, (0.1,)),
        "gravity_angle": (float, None),
        "half_width": (float, None),
    },
    "reaction": {
        "theta0": (float, None), "r1": (float, None), "r2": (float, None),
        "profile": (str, None), "kappa": (float, None),
        "c_omega_p": (float, None), "p": (float, None),
        "modulation_amplitude": (float, None),
        "modulation_phase": (float, None),
    },
    "solver": {
        "eps": (float, None), "delta_factor": (float, None),
        "homotopy_steps": (int, None), "rho": (float, None),
        "anderson_depth": (int, None), "mixing": (float, None),
        "tol": (float, None), "tol_intermediate": (float, None),
        "max_sweeps": (int, None), "lin_tol": (float, None),
        "sigma_b": (float, None), "upwind": (float, None),
        "normalization_tol": (float, None),
        "eps_schedule": (_parse_float_list, None),
        "delta_factor_schedule": (_parse_float_list, None),
        "a_doublings": (int, None), "direct_threshold": (int, None),
        "precond_refresh": (float, None),
    },
    "dns": {
        "n_periods": (int, None), "nx_per_period": (int, None),
        "n_z": (int, None), "cfl": (float, None), "eps_floor": (float, None),
        "scheme": (str, None), "delta": (float, None), "sigma_b": (float, None),
        "front_x0": (float, None), "init_width": (float, None),
        "t_left": (float, None), "t_right": (float, None),
        "history_every": (int, None), "snapshot_every": (int, None),
        "t_max": (float, None), "max_steps": (int, None),
        "stop_margin_periods": (float, None),
        "transient_fraction": (float, 0.3),
    },
    "diagnostics": {
        "reaction_rate": (float, None), "energy": (float, None),
        "profile_residual": (float, None), "theta_plus": (float, None),
        "decay_rate_factor": (float, None), "decay_r2": (float, None),
        "normalization": (float, None), "speed_bound_margin": (float, None),
        "divergence_prefactor": (float, None), "burning_stability": (float, None),
        "smallness_theta_gap": (float, None),
    },
    "verify": {
        "base_resolution": (int, 8),
        "levels": (int, 3),
        "eps": (float, 0.25),
        "c": (float, 0.7),
        "wavy": (lambda s: s.strip().lower() in ("1", "true", "yes"), True),
    },
}


@dataclass
class RunConfig:
    seed: int
    out_dir: str
    geometry: GeometryConfig
    reaction: ReactionSpec
    solver: SolverConfig
    dns: DnsConfig
    thresholds: Thresholds
    dns_transient_fraction: float
    verify: dict
    resolved: dict = field(repr=False, default_factory=dict)

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.resolved, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _collect(section_name, parser, overrides=None):
    schema = _SCHEMA[section_name]
    out = {}
    if parser is not None and parser.has_section(section_name):
        for key in parser[section_name]:
            if key not in schema:
                raise ConfigError(f"unknown key [{section_name}] {key}")
            conv = schema[key][0]
            try:
                out[key] = conv(parser[section_name][key])
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section_name}] {key}: {exc}")
    if overrides:
        out.update(overrides)
    return out


def load_config(path=None, text=None) -> RunConfig:
    """Parse and validate a config file (or raw text) into a RunConfig."""
    parser = configparser.ConfigParser()
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path) as fh:
                parser.read_file(fh)
    except (configparser.Error, OSError) as exc:
        raise ConfigError(f"cannot read config: {exc}")
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")

    run = _collect("run", parser)
    geo = _collect("geometry", parser)
    rea = _collect("reaction", parser)
    sol = _collect("solver", parser)
    dns = _collect("dns", parser)
    dia = _collect("diagnostics", parser)
    ver = _collect("verify", parser)

    wall_bottom = FourierWall(geo.pop("wall_bottom_const", 0.0),
                              cos=geo.pop("wall_bottom_cos", ()),
                              sin=geo.pop("wall_bottom_sin", ()))
    wall_top = FourierWall(geo.pop("wall_top_const", 1.0),
                           cos=geo.pop("wall_top_cos", ()),
                           sin=geo.pop("wall_top_sin", (0.1,)))
    try:
        geometry = GeometryConfig(wall_bottom=wall_bottom, wall_top=wall_top, **geo)
        reaction = ReactionSpec(ell=geometry.ell, **rea)
        solver = SolverConfig(**sol)
        dns_cfg = DnsConfig(**{k: v for k, v in dns.items()
                               if k != "transient_fraction"})
        thresholds = Thresholds(**dia)
    except (TypeError, ConfigError) as exc:
        raise ConfigError(str(exc))
    verify = {k: v for k, v in {**{kk: d for kk, (_, d) in _SCHEMA["verify"].items()},
                                **ver}.items()}

    resolved = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "run": {"seed": run.get("seed", 0)},
        "geometry": {
            "ell": geometry.ell, "a": geometry.a, "n_s": geometry.n_s,
            "n_x": geometry.n_x, "n_z": geometry.n_z,
            "gravity_angle": geometry.gravity_angle,
            "half_width": geometry.half_width,
            "wall_bottom": [wall_bottom.const, list(wall_bottom.cos),
                            list(wall_bottom.sin)],
            "wall_top": [wall_top.const, list(wall_top.cos), list(wall_top.sin)],
        },
        "reaction": {k: getattr(reaction, k) for k in
                     ("theta0", "r1", "r2", "profile", "kappa", "c_omega_p",
                      "p", "modulation_amplitude", "modulation_phase", "ell")},
        "solver": {k: list(v) if isinstance(v, tuple) else v
                   for k, v in vars(solver).items()},
        "dns": {**{k: getattr(dns_cfg, k) for k in
                   ("n_periods", "nx_per_period", "n_z", "cfl", "eps_floor",
                    "scheme", "delta", "sigma_b", "front_x0", "init_width",
                    "t_left", "t_right", "history_every", "snapshot_every",
                    "t_max", "max_steps", "stop_margin_periods")},
                "transient_fraction": dns.get("transient_fraction", 0.3)},
        "diagnostics": vars(thresholds).copy(),
        "verify": verify,
    }
    return RunConfig(seed=run.get("seed", 0), out_dir=run.get("out_dir", "out"),
                     geometry=geometry, reaction=reaction, solver=solver,
                     dns=dns_cfg, thresholds=thresholds,
                     dns_transient_fraction=dns.get("transient_fraction", 0.3),
                     verify=verify, resolved=resolved)


def config_from_resolved(resolved: dict) -> RunConfig:
    """Rebuild a RunConfig from the resolved dict stored in a checkpoint."""
    g = resolved["geometry"]
    wall_bottom = FourierWall(g["wall_bottom"][0], cos=tuple(g["wall_bottom"][1]),
                              sin=tuple(g["wall_bottom"][2]))
    wall_top = FourierWall(g["wall_top"][0], cos=tuple(g["wall_top"][1]),
                           sin=tuple(g["wall_top"][2]))
    geometry = GeometryConfig(ell=g["ell"], a=g["a"], n_s=g["n_s"], n_x=g["n_x"],
                              n_z=g["n_z"], wall_bottom=wall_bottom,
                              wall_top=wall_top, gravity_angle=g["gravity_angle"],
                              half_width=g["half_width"])
    reaction = ReactionSpec(**resolved["reaction"])
    sv = dict(resolved["solver"])
    for key in ("eps_schedule", "delta_factor_schedule"):
        sv[key] = tuple(sv[key])
    solver = SolverConfig(**sv)
    dns_kwargs = {k: v for k, v in resolved["dns"].items()
                  if k != "transient_fraction"}
    dns_cfg = DnsConfig(**dns_kwargs)
    thresholds = Thresholds(**resolved["diagnostics"])
    return RunConfig(seed=resolved["run"]["seed"], out_dir="out",
                     geometry=geometry, reaction=reaction, solver=solver,
                     dns=dns_cfg, thresholds=thresholds,
                     dns_transient_fraction=resolved["dns"]["transient_fraction"],
                     verify=resolved.get("verify", {}), resolved=resolved)

"""INI experiment configuration with validation."""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..discretization.fem import make_potential
from ..discretization.nonlinearity import make_nonlinearity
from ..errors import ConfigError, DomainError
from ..geometry import eps0, make_curve, make_profile

SHIPPED = Path(__file__).resolve().parent.parent / "configs"


@dataclass(frozen=True)
class Preset:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MeshConfig:
    h_interior: float = 0.1
    h_boundary: float = 0.00625
    grading: float = 1.25
    layer_depth: float | None = None


@dataclass(frozen=True)
class TimeConfig:
    dt: float = 1e-3
    dt_long: float = 0.01
    t_linear: float = 1.0
    tau: float = 2.0
    t_transient: float = 10.0
    t_sample: tuple = (0.0, 1.0, 2.0)
    t_grow: float = 20.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Bistable scenario used by the equilibria and attractor studies."""

    profile: Preset = Preset("cosine", {"mean": 1.0, "amplitude": 0.5})
    potential: Preset = Preset("zero")
    nonlinearity: Preset = Preset("bistable", {"inner": 2.0, "outer": 3.0})
    lam: float | None = None  # None: calibrate
    lam_range: tuple = (0.05, 20.0)
    target_index: int = 1


@dataclass(frozen=True)
class AttractorConfig:
    n_modes: int = 4
    coefficients: tuple = (-2.0, -1.0, 0.0, 1.0, 2.0)
    radius: float = 5.0
    r_hat: float = 10.0
    seed_fraction: float = 0.05
    tangency_deltas: tuple = (0.1, 0.05, 0.025)


@dataclass(frozen=True)
class ConcConfig:
    mc_samples: int = 2_000_000
    mc_integrands: int = 10
    mc_epsilon: float = 0.1
    n_s: int = 4
    n_t: int = 4


@dataclass(frozen=True)
class ExperimentConfig:
    curve: Preset = Preset("circle", {"radius": 1.0})
    profile: Preset = Preset("two-plus-cos")
    potential: Preset = Preset("constant", {"c": 1.0})
    nonlinearity: Preset = Preset("bistable", {"inner": 2.0, "outer": 3.0})
    lam: float = 1.0
    epsilons: tuple = (0.2, 0.1, 0.05, 0.025)
    mesh: MeshConfig = MeshConfig()
    time: TimeConfig = TimeConfig()
    newton_tol: float = 1e-9
    gap_tol: float = 1e-3
    delta: float = 0.1
    dedup: float = 1e-4
    scenario: ScenarioConfig = ScenarioConfig()
    attractor: AttractorConfig = AttractorConfig()
    conc: ConcConfig = ConcConfig()
    seed: int = 20240611
    threads: int = 1
    out: str = "results"
    source: str = ""

    def validate(self):
        eps = self.epsilons
        if not eps:
            raise ConfigError("ladder.epsilons: empty ladder")
        if any(e <= 0 for e in eps):
            raise ConfigError("ladder.epsilons: entries must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilon ladder must descend")
        try:
            curve = make_curve(self.curve.name, **self.curve.params)
            profiles = [make_profile(p.name, **p.params)
                        for p in (self.profile, self.scenario.profile)]
            for pot in (self.potential, self.scenario.potential):
                make_potential(pot.name, **pot.params)
            for nl in (self.nonlinearity, self.scenario.nonlinearity):
                make_nonlinearity(nl.name, **nl.params)
        except (DomainError, TypeError) as exc:
            raise ConfigError(f"preset: {exc}") from exc
        for prof, made in zip((self.profile, self.scenario.profile), profiles):
            limit = eps0(curve, made)
            if eps[0] > limit:
                raise ConfigError(
                    f"ladder.epsilons: largest epsilon {eps[0]} exceeds eps0={limit:.4g} "
                    f"for profile {prof.name!r}"
                )
        m = self.mesh
        if not 0 < m.h_boundary <= m.h_interior:
            raise ConfigError("mesh.h_boundary: need 0 < h_boundary <= h_interior")
        if m.h_boundary > min(eps) / 4.0 * (1 + 1e-12):
            raise ConfigError(
                f"mesh.h_boundary: strip not resolved, h_boundary={m.h_boundary} "
                f"exceeds min(epsilon)/4={min(eps) / 4.0}"
            )
        t = self.time
        for name in ("dt", "dt_long", "t_linear", "tau", "t_transient", "t_grow"):
            if getattr(t, name) <= 0:
                raise ConfigError(f"time.{name}: must be positive")
        for name in ("newton_tol", "gap_tol", "delta", "dedup"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"tolerances.{name}: must be positive")
        if self.threads < 1:
            raise ConfigError("run.threads: must be >= 1")
        if self.conc.mc_samples < 1000:
            raise ConfigError("conc.mc_samples: too few samples")
        return self

    def echo(self):
        """INI text that reproduces this configuration."""
        return dump_config(self)


# --------------------------------------------------------------------------
# parsing


def _num(text, where):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {text!r}") from None


def _int(text, where):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {text!r}") from None


def _tuple(text, where):
    return tuple(_num(p.strip(), where) for p in text.split(",") if p.strip())


def _preset(section, sec_name, default):
    if section is None:
        return default
    name = section.get("name", default.name).strip()
    params = {}
    for key, val in section.items():
        if key == "name":
            continue
        params[key] = _num(val, f"{sec_name}.{key}")
    if name == default.name and not params:
        params = dict(default.params)
    return Preset(name, params)


_KNOWN = {
    "curve", "profile", "potential", "nonlinearity", "model", "ladder", "mesh", "time",
    "tolerances", "scenario", "scenario.profile", "scenario.potential",
    "scenario.nonlinearity", "attractors", "conc", "run",
}


def parse_config(text, source="<string>"):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: parse error: {exc}") from exc
    unknown = set(cp.sections()) - _KNOWN
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    d = ExperimentConfig()
    get = lambda s: cp[s] if cp.has_section(s) else None  # noqa: E731

    def opt(sec, key, conv, default):
        if cp.has_option(sec, key):
            return conv(cp.get(sec, key), f"{sec}.{key}")
        return default

    mesh = MeshConfig(
        h_interior=opt("mesh", "h_interior", _num, d.mesh.h_interior),
        h_boundary=opt("mesh", "h_boundary", _num, d.mesh.h_boundary),
        grading=opt("mesh", "grading", _num, d.mesh.grading),
        layer_depth=opt("mesh", "layer_depth", _num, d.mesh.layer_depth),
    )
    time = TimeConfig(**{
        k: opt("time", k, _tuple if k == "t_sample" else _num, getattr(d.time, k))
        for k in asdict(d.time)
    })
    sc = d.scenario
    lam_text = cp.get("scenario", "lambda", fallback="calibrate").strip()
    scenario = ScenarioConfig(
        profile=_preset(get("scenario.profile"), "scenario.profile", sc.profile),
        potential=_preset(get("scenario.potential"), "scenario.potential", sc.potential),
        nonlinearity=_preset(get("scenario.nonlinearity"), "scenario.nonlinearity",
                             sc.nonlinearity),
        lam=None if lam_text == "calibrate" else _num(lam_text, "scenario.lambda"),
        lam_range=opt("scenario", "lambda_range", _tuple, sc.lam_range),
        target_index=opt("scenario", "target_index", _int, sc.target_index),
    )
    at = d.attractor
    attractor = AttractorConfig(
        n_modes=opt("attractors", "n_modes", _int, at.n_modes),
        coefficients=opt("attractors", "coefficients", _tuple, at.coefficients),
        radius=opt("attractors", "radius", _num, at.radius),
        r_hat=opt("attractors", "r_hat", _num, at.r_hat),
        seed_fraction=opt("attractors", "seed_fraction", _num, at.seed_fraction),
        tangency_deltas=opt("attractors", "tangency_deltas", _tuple, at.tangency_deltas),
    )
    cc = d.conc
    conc = ConcConfig(
        mc_samples=opt("conc", "mc_samples", _int, cc.mc_samples),
        mc_integrands=opt("conc", "mc_integrands", _int, cc.mc_integrands),
        mc_epsilon=opt("conc", "mc_epsilon", _num, cc.mc_epsilon),
        n_s=opt("conc", "n_s", _int, cc.n_s),
        n_t=opt("conc", "n_t", _int, cc.n_t),
    )
    cfg = ExperimentConfig(
        curve=_preset(get("curve"), "curve", d.curve),
        profile=_preset(get("profile"), "profile", d.profile),
        potential=_preset(get("potential"), "potential", d.potential),
        nonlinearity=_preset(get("nonlinearity"), "nonlinearity", d.nonlinearity),
        lam=opt("model", "lambda", _num, d.lam),
        epsilons=opt("ladder", "epsilons", _tuple, d.epsilons),
        mesh=mesh,
        time=time,
        newton_tol=opt("tolerances", "newton_tol", _num, d.newton_tol),
        gap_tol=opt("tolerances", "gap_tol", _num, d.gap_tol),
        delta=opt("tolerances", "delta", _num, d.delta),
        dedup=opt("tolerances", "dedup", _num, d.dedup),
        scenario=scenario,
        attractor=attractor,
        conc=conc,
        seed=opt("run", "seed", _int, d.seed),
        threads=opt("run", "threads", _int, d.threads),
        out=cp.get("run", "out", fallback=d.out),
        source=source,
    )
    return cfg.validate()


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def shipped_config(name="default"):
    return load_config(SHIPPED / f"{name}.ini")


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def dump_config(cfg):
    lines = []

    def section(name, items):
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in items if v is not None)
        lines.append("")

    def preset(name, p):
        section(name, [("name", p.name)] + sorted(p.params.items()))

    preset("curve", cfg.curve)
    preset("profile", cfg.profile)
    preset("potential", cfg.potential)
    preset("nonlinearity", cfg.nonlinearity)
    section("model", [("lambda", cfg.lam)])
    section("ladder", [("epsilons", cfg.epsilons)])
    section("mesh", asdict(cfg.mesh).items())
    section("time", asdict(cfg.time).items())
    section("tolerances", [("newton_tol", cfg.newton_tol), ("gap_tol", cfg.gap_tol),
                           ("delta", cfg.delta), ("dedup", cfg.dedup)])
    sc = cfg.scenario
    section("scenario", [("lambda", "calibrate" if sc.lam is None else sc.lam),
                         ("lambda_range", sc.lam_range), ("target_index", sc.target_index)])
    preset("scenario.profile", sc.profile)
    preset("scenario.potential", sc.potential)
    preset("scenario.nonlinearity", sc.nonlinearity)
    section("attractors", asdict(cfg.attractor).items())
    section("conc", asdict(cfg.conc).items())
    section("run", [("seed", cfg.seed), ("threads", cfg.threads), ("out", cfg.out)])
    return "\n".join(lines)

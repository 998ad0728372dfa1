"""Experiment configuration: INI-style text, validation, and the built-in examples.

Grammar: ``[section]`` headers, ``key = value`` lines, ``#`` comments.
Sections are ``problem``, ``mobility``, ``solver`` and ``output``; any other
section or key is an error reported with its line number.

Densities are Gaussian mixtures written as an offset plus ``;``-separated
bumps ``amplitude x1 x2 sharpness``, e.g.::

    initial_offset = 1
    initial_bumps = 10 0.3 0.7 60
"""
import configparser
import re
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError
from .grid import Grid
from .mobility import CATALOG_NAMES, EntropySpec, PotentialSpec, catalog_lookup
from .pdhg import MODES, ControlProblem, SolveConfig


@dataclass(frozen=True)
class GaussianMixtureSpec:
    offset: float = 1.0
    bumps: Tuple[Tuple[float, float, float, float], ...] = ()

    def evaluate(self, grid):
        x1, x2 = grid.cell_centers()
        u = np.full(x1.shape, float(self.offset))
        for amp, c1, c2, k in self.bumps:
            u = u + amp * np.exp(-k * ((x1 - c1) ** 2 + (x2 - c2) ** 2))
        if not np.all(u > 0):
            raise ConfigError("density must be strictly positive on the domain")
        return u

    def to_text(self):
        return "; ".join(" ".join(_fmt(v) for v in b) for b in self.bumps)

    @classmethod
    def from_text(cls, offset, text, key=None, line=None):
        bumps = []
        for chunk in filter(None, (c.strip() for c in text.split(";"))):
            parts = chunk.split()
            if len(parts) != 4:
                raise ConfigError("a bump needs 'amplitude x1 x2 sharpness'", key=key, line=line)
            try:
                bumps.append(tuple(float(p) for p in parts))
            except ValueError as exc:
                raise ConfigError(str(exc), key=key, line=line) from None
        return cls(float(offset), tuple(bumps))


TERMINAL_KINDS = ("indicator", "entropy", "quadratic")
POTENTIALS = ("none", "entropy", "quadratic")
DEMO_SNAPSHOT_TIMES = (0.0, 0.24, 0.48, 0.72, 0.9, 1.0)


@dataclass(frozen=True)
class ExperimentConfig:
    nx1: int
    nx2: int
    nt: int
    mobility: str
    mobility_params: Tuple[Tuple[str, object], ...] = ()
    potential: str = "none"
    c: float = 0.0
    initial: GaussianMixtureSpec = GaussianMixtureSpec()
    terminal: str = "indicator"
    target: GaussianMixtureSpec = GaussianMixtureSpec()
    terminal_scale: float = 1.0
    terminal_beta: float = 1.0
    solver: SolveConfig = field(default_factory=SolveConfig)
    output_dir: str = "out"
    snapshot_times: Tuple[float, ...] = ()

    def __post_init__(self):
        norm = tuple(sorted((str(k), tuple(float(x) for x in v) if isinstance(v, (tuple, list))
                             else float(v)) for k, v in self.mobility_params))
        object.__setattr__(self, "mobility_params", norm)
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        try:
            Grid(self.nx1, self.nx2, self.nt)
        except ValueError as exc:
            raise ConfigError(str(exc), key="problem") from None
        if self.mobility not in CATALOG_NAMES:
            raise ConfigError(f"unknown mobility {self.mobility!r}", key="mobility.name")
        catalog_lookup(self.mobility, dict(self.mobility_params))
        if self.potential not in POTENTIALS:
            raise ConfigError(f"unknown potential {self.potential!r}", key="problem.potential")
        if self.terminal not in TERMINAL_KINDS:
            raise ConfigError(f"unknown terminal {self.terminal!r}", key="problem.terminal")
        if self.potential != "none" and not self.c > 0:
            raise ConfigError("potential coefficient must be positive", key="problem.c")
        for t in self.snapshot_times:
            if not 0 <= t <= 1:
                raise ConfigError(f"snapshot time {t} outside [0, 1]", key="output.snapshot_times")

    @property
    def grid(self):
        return Grid(self.nx1, self.nx2, self.nt)

    def params(self):
        return dict(self.mobility_params)


def snapshot_levels(times, grid):
    """Nearest time level for each requested time (ties go up), with the actual time."""
    out = []
    for t in times:
        n = min(int(np.floor(t * (grid.nt - 1) + 0.5 + 1e-9)), grid.nt - 1)
        out.append((t, n, float(grid.times()[n])))
    return out


def build_problem(cfg):
    g = cfg.grid
    pair, spec, _ = catalog_lookup(cfg.mobility, cfg.params())
    u0 = cfg.initial.evaluate(g)
    if cfg.terminal == "indicator":
        term = EntropySpec.indicator(cfg.target.evaluate(g))
    elif cfg.terminal == "entropy":
        term = EntropySpec.entropy(cfg.terminal_scale)
    else:
        term = EntropySpec.quadratic(cfg.terminal_beta, cfg.terminal_scale)
    if cfg.potential == "entropy":
        pot = PotentialSpec.entropy(cfg.c)
    elif cfg.potential == "quadratic":
        pot = PotentialSpec.quadratic(cfg.c)
    else:
        pot = PotentialSpec()
    return ControlProblem(g, pair, u0, term, pot)


# ----------------------------------------------------------------------------
# Text form


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


_SOLVER_KEYS = {f.name: f.type for f in fields(SolveConfig)}
_PROBLEM_KEYS = ("nx1", "nx2", "nt", "potential", "c", "initial_offset", "initial_bumps",
                 "terminal", "target_offset", "target_bumps", "terminal_scale", "terminal_beta")
_MOBILITY_KEYS = ("name", "alpha", "f", "c1", "c2", "c3")
_OUTPUT_KEYS = ("dir", "snapshot_times")
SECTIONS = {"problem": _PROBLEM_KEYS, "mobility": _MOBILITY_KEYS,
            "solver": tuple(_SOLVER_KEYS), "output": _OUTPUT_KEYS}


def emit_config(cfg):
    """Text that ``parse_config`` turns back into ``cfg``."""
    lines = ["[problem]",
             f"nx1 = {cfg.nx1}", f"nx2 = {cfg.nx2}", f"nt = {cfg.nt}",
             f"potential = {cfg.potential}", f"c = {_fmt(float(cfg.c))}",
             f"initial_offset = {_fmt(float(cfg.initial.offset))}",
             f"initial_bumps = {cfg.initial.to_text()}",
             f"terminal = {cfg.terminal}",
             f"target_offset = {_fmt(float(cfg.target.offset))}",
             f"target_bumps = {cfg.target.to_text()}",
             f"terminal_scale = {_fmt(float(cfg.terminal_scale))}",
             f"terminal_beta = {_fmt(float(cfg.terminal_beta))}",
             "", "[mobility]", f"name = {cfg.mobility}"]
    for k, v in cfg.mobility_params:
        lines.append(f"{k} = {_fmt(v)}")
    lines += ["", "[solver]"]
    for f in fields(SolveConfig):
        lines.append(f"{f.name} = {_fmt(getattr(cfg.solver, f.name))}")
    lines += ["", "[output]", f"dir = {cfg.output_dir}",
              f"snapshot_times = {_fmt(tuple(float(t) for t in cfg.snapshot_times))}", ""]
    return "\n".join(lines)


_HEADER = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=#\s][^=]*?)\s*=")


def _key_lines(text):
    """Map (section, key) to its 1-based line number."""
    where = {}
    section = None
    for i, line in enumerate(text.splitlines(), 1):
        m = _HEADER.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), i)
            continue
        m = _KEY.match(line)
        if m and section is not None:
            where[(section, m.group(1).strip().lower())] = i
    return where


def _num(text, kind, key, line):
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {text!r}", key=key, line=line) from None
    return text


def parse_config(text):
    """Parse and validate experiment text; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   comment_prefixes=("#",), empty_lines_in_values=False)
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("text before the first [section]", line=exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message.split(":")[-1].strip(), line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line=lineno) from None
    lines = _key_lines(text)
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]", line=lines.get((sec, None)))
        for key in cp[sec]:
            if key not in SECTIONS[sec]:
                raise ConfigError("unknown key", key=f"{sec}.{key}", line=lines.get((sec, key)))

    def get(sec, key, kind=str, default=None):
        if not cp.has_option(sec, key):
            if default is None:
                raise ConfigError("required key missing", key=f"{sec}.{key}")
            return default
        return _num(cp.get(sec, key), kind, f"{sec}.{key}", lines.get((sec, key)))

    def mixture(prefix):
        key = f"problem.{prefix}_bumps"
        return GaussianMixtureSpec.from_text(get("problem", f"{prefix}_offset", float, 1.0),
                                             get("problem", f"{prefix}_bumps", str, ""),
                                             key=key, line=lines.get(("problem", f"{prefix}_bumps")))

    name = get("mobility", "name")
    params = []
    for k in ("alpha", "c1", "c2", "c3"):
        if cp.has_option("mobility", k):
            params.append((k, get("mobility", k, float)))
    if cp.has_option("mobility", "f"):
        raw = get("mobility", "f")
        params.append(("f", tuple(_num(x.strip(), float, "mobility.f", lines.get(("mobility", "f")))
                                  for x in raw.split(","))))
    solver_kw = {}
    for f in fields(SolveConfig):
        if cp.has_option("solver", f.name):
            if f.type in (bool, "bool"):
                try:
                    solver_kw[f.name] = cp.getboolean("solver", f.name)
                except ValueError:
                    raise ConfigError("expected true or false", key=f"solver.{f.name}",
                                      line=lines.get(("solver", f.name))) from None
                continue
            kind = int if f.type in (int, "int") else float if f.type in (float, "float") else str
            solver_kw[f.name] = get("solver", f.name, kind)
    if solver_kw.get("mode", "general") not in MODES:
        raise ConfigError(f"unknown mode {solver_kw['mode']!r}", key="solver.mode",
                          line=lines.get(("solver", "mode")))
    try:
        solver = SolveConfig(**solver_kw)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], key="solver",
                          line=lines.get(("solver", "tau")) or lines.get(("solver", "sigma"))) from None
    snaps = get("output", "snapshot_times", str, "")
    times = tuple(_num(x.strip(), float, "output.snapshot_times",
                       lines.get(("output", "snapshot_times"))) for x in snaps.split(",") if x.strip())
    return ExperimentConfig(
        nx1=get("problem", "nx1", int), nx2=get("problem", "nx2", int), nt=get("problem", "nt", int),
        mobility=name, mobility_params=tuple(params),
        potential=get("problem", "potential", str, "none"), c=get("problem", "c", float, 0.0),
        initial=mixture("initial"),
        terminal=get("problem", "terminal", str, "indicator"), target=mixture("target"),
        terminal_scale=get("problem", "terminal_scale", float, 1.0),
        terminal_beta=get("problem", "terminal_beta", float, 1.0),
        solver=solver, output_dir=get("output", "dir", str, "out"), snapshot_times=times)


# ----------------------------------------------------------------------------
# Built-in demonstrations

SCALES = {"desk": (64, 64, 16), "full": (128, 128, 30)}
EXAMPLE2_ROWS = {1: "fisher_kpp", 2: "sqrt_fkpp", 3: "sqrt_linear"}


def example1_alpha(alpha, scale="desk"):
    """Diagonal transport between two bumps with V1 = u, V2 = u^alpha."""
    nx1, nx2, nt = SCALES[scale]
    return ExperimentConfig(
        nx1, nx2, nt, "diffusion_reaction_alpha", (("alpha", float(alpha)),),
        potential="entropy", c=0.1,
        initial=GaussianMixtureSpec(1.0, ((10.0, 0.3, 0.7, 60.0),)),
        target=GaussianMixtureSpec(1.0, ((20.0, 0.7, 0.3, 60.0),)),
        output_dir=f"out/example1_alpha{_fmt(float(alpha))}",
        snapshot_times=DEMO_SNAPSHOT_TIMES)


def example2_row(row, scale="desk"):
    """One bump splitting into two, under the three comparison mobility pairs."""
    if row not in EXAMPLE2_ROWS:
        raise ConfigError(f"example 2 has rows 1, 2, 3; got {row}")
    nx1, nx2, nt = SCALES[scale]
    return ExperimentConfig(
        nx1, nx2, nt, EXAMPLE2_ROWS[row], potential="entropy", c=0.1,
        initial=GaussianMixtureSpec(1.0, ((15.0, 0.5, 0.5, 80.0),)),
        target=GaussianMixtureSpec(1.0, ((15.0, 0.3, 0.3, 80.0), (15.0, 0.7, 0.7, 80.0))),
        output_dir=f"out/example2_row{row}",
        snapshot_times=DEMO_SNAPSHOT_TIMES)


_EX1 = re.compile(r"^example1_alpha\(?([0-9.]+)\)?$")
_EX2 = re.compile(r"^example2_row\(?([0-9]+)\)?$")


def build_example(name, scale="desk"):
    """``example1_alpha(<alpha>)`` or ``example2_row(<1|2|3>)``; parentheses optional."""
    if scale not in SCALES:
        raise ConfigError(f"unknown scale {scale!r}; use desk or full")
    m = _EX1.match(name.strip())
    if m:
        return example1_alpha(float(m.group(1)), scale)
    m = _EX2.match(name.strip())
    if m:
        return example2_row(int(m.group(1)), scale)
    raise ConfigError(f"unknown example {name!r}")


def with_output(cfg, directory: Optional[str]):
    return cfg if directory is None else replace(cfg, output_dir=str(directory))

"""
:class:`ProblemConfig`, the validated form of a configuration file.

A configuration is one JSON object with the sections ``matrices``,
``domain``, ``omega``, ``time``, ``initial_state`` and the optional
``solver``, ``mintime``, ``outputs`` and ``seed``. Every cross-field shape
constraint is checked in :meth:`ProblemConfig.from_dict`, before any solve,
and unknown keys are rejected.
"""

import hashlib
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np

from syncctl.algebra import CouplingPair
from syncctl.config.codec import parse, to_string
from syncctl.exceptions import InvalidDimension, IoError, UnknownField, ValidationError
from syncctl.grid import OmegaMask, SpatialGrid, build_grid, omega_mask
from syncctl.hum import NT_REF, HumOptions
from syncctl.mintime import MinTimeOptions

logger = logging.getLogger(__name__)

#: output formats written when a config does not name any
DEFAULT_FORMATS: Tuple[str, ...] = ("json", "csv")


def _check_keys(data: Any, allowed: Iterable[str], path: str) -> Mapping[str, Any]:
    if not isinstance(data, dict):
        raise ValidationError(path, "expected an object")
    allowed = set(allowed)
    for key in data:
        if key not in allowed:
            raise UnknownField(f"{path}.{key}" if path else key)
    return data


def _require(data: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in data or data[key] is None:
        raise ValidationError(f"{path}.{key}" if path else key, "required field is missing")
    return data[key]


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ValidationError(path, "must be finite")
    return float(value)


def _integer(value: Any, path: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(path, f"must be at least {minimum}")
    return value


def _positive(value: Any, path: str) -> float:
    number = _number(value, path)
    if not number > 0:
        raise ValidationError(path, "must be positive")
    return number


def _numbers(value: Any, path: str) -> Tuple[float, ...]:
    if not isinstance(value, list):
        raise ValidationError(path, "expected a list of numbers")
    return tuple(_number(item, f"{path}[{i}]") for i, item in enumerate(value))


@dataclass(frozen=True)
class MatricesConfig:
    n: int
    m: int
    #: row-major entries of the n×n coupling matrix
    A: Tuple[float, ...]
    #: row-major entries of the n×m control matrix
    B: Tuple[float, ...]

    @classmethod
    def from_dict(cls, data: Any) -> "MatricesConfig":
        data = _check_keys(data, ("n", "m", "A", "B"), "matrices")
        n = _integer(_require(data, "n", "matrices"), "matrices.n", minimum=2)
        m = _integer(_require(data, "m", "matrices"), "matrices.m", minimum=1)
        A = _numbers(_require(data, "A", "matrices"), "matrices.A")
        if len(A) != n * n:
            raise ValidationError("matrices.A", f"expected {n * n} entries")
        B = _numbers(_require(data, "B", "matrices"), "matrices.B")
        if len(B) != n * m:
            raise ValidationError("matrices.B", f"expected {n * m} entries")
        return cls(n, m, A, B)

    def pair(self) -> CouplingPair:
        return CouplingPair(
            np.reshape(self.A, (self.n, self.n)), np.reshape(self.B, (self.n, self.m))
        )

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "A": list(self.A), "B": list(self.B)}


@dataclass(frozen=True)
class DomainConfig:
    length: float
    nx: int

    @classmethod
    def from_dict(cls, data: Any) -> "DomainConfig":
        data = _check_keys(data, ("length", "nx"), "domain")
        length = _positive(_require(data, "length", "domain"), "domain.length")
        nx = _integer(_require(data, "nx", "domain"), "domain.nx", minimum=3)
        return cls(length, nx)

    def to_dict(self) -> dict:
        return {"length": self.length, "nx": self.nx}


@dataclass(frozen=True)
class TimeConfig:
    #: horizon for simulate and min-norm
    T: Optional[float] = None
    #: time steps per horizon
    nt_ref: int = NT_REF
    #: zero-control window simulated after the horizon during verification
    post_horizon: float = 0.5
    #: horizons for norm-curve
    T_values: Optional[Tuple[float, ...]] = None
    #: every ``snapshot_stride``-th snapshot is exported to trajectory.csv
    snapshot_stride: int = 1

    @classmethod
    def from_dict(cls, data: Any) -> "TimeConfig":
        data = _check_keys(
            data, ("T", "nt_ref", "post_horizon", "T_values", "snapshot_stride"), "time"
        )
        T = data.get("T")
        T_values = data.get("T_values")
        post_horizon = _number(data.get("post_horizon", 0.5), "time.post_horizon")
        if post_horizon < 0:
            raise ValidationError("time.post_horizon", "must be non-negative")
        if T_values is not None:
            T_values = _numbers(T_values, "time.T_values")
            if any(t <= 0 for t in T_values):
                raise ValidationError("time.T_values", "horizons must be positive")
            if any(b <= a for a, b in zip(T_values, T_values[1:])):
                raise ValidationError("time.T_values", "horizons must be strictly increasing")
        return cls(
            T=None if T is None else _positive(T, "time.T"),
            nt_ref=_integer(data.get("nt_ref", NT_REF), "time.nt_ref", minimum=1),
            post_horizon=post_horizon,
            T_values=T_values,
            snapshot_stride=_integer(
                data.get("snapshot_stride", 1), "time.snapshot_stride", minimum=1
            ),
        )

    def to_dict(self) -> dict:
        data: Dict[str, Any] = {}
        if self.T is not None:
            data["T"] = self.T
        data["nt_ref"] = self.nt_ref
        data["post_horizon"] = self.post_horizon
        if self.T_values is not None:
            data["T_values"] = list(self.T_values)
        data["snapshot_stride"] = self.snapshot_stride
        return data


@dataclass(frozen=True)
class InitialComponent:
    """Initial profile of one state component."""

    #: one of ``sin``, ``const``, ``values``
    mode: str
    #: sine mode number: sin(kπx/L)
    k: int = 1
    #: amplitude for ``sin``, value for ``const``
    c: float = 1.0
    #: text file with one value per interior node, for ``values``
    file: Optional[str] = None

    MODES = ("sin", "const", "values")

    @classmethod
    def from_dict(cls, data: Any, path: str) -> "InitialComponent":
        if not isinstance(data, dict):
            raise ValidationError(path, "expected an object")
        mode = _require(data, "mode", path)
        if mode == "sin":
            data = _check_keys(data, ("mode", "k", "c"), path)
            k = _integer(data.get("k", 1), f"{path}.k", minimum=1)
            return cls(mode, k=k, c=_number(data.get("c", 1.0), f"{path}.c"))
        if mode == "const":
            data = _check_keys(data, ("mode", "c"), path)
            return cls(mode, c=_number(_require(data, "c", path), f"{path}.c"))
        if mode == "values":
            data = _check_keys(data, ("mode", "file"), path)
            file = _require(data, "file", path)
            if not isinstance(file, str):
                raise ValidationError(f"{path}.file", "expected a path")
            return cls(mode, file=file)
        raise ValidationError(f"{path}.mode", f"expected one of {', '.join(cls.MODES)}")

    def profile(self, grid: SpatialGrid, base_dir: Path, path: str) -> np.ndarray:
        if self.mode == "sin":
            return self.c * np.sin(self.k * np.pi * grid.nodes / grid.length)
        if self.mode == "const":
            return np.full(grid.nx, self.c)
        source = base_dir / str(self.file)
        try:
            values = np.loadtxt(source, dtype=float, ndmin=1)
        except OSError as err:
            raise IoError(f"cannot read initial state ({err.strerror or err})", source)
        except ValueError as err:
            raise ValidationError(f"{path}.file", f"not a list of numbers: {err}")
        if values.shape != (grid.nx,):
            raise ValidationError(
                f"{path}.file", f"expected {grid.nx} values, got {values.size}"
            )
        return values

    def to_dict(self) -> dict:
        if self.mode == "sin":
            return {"mode": "sin", "k": self.k, "c": self.c}
        if self.mode == "const":
            return {"mode": "const", "c": self.c}
        return {"mode": "values", "file": self.file}


@dataclass(frozen=True)
class MinTimeConfig:
    #: control-norm budget
    M: Optional[float] = None
    options: MinTimeOptions = field(default_factory=MinTimeOptions)

    KEYS = ("M", "T_lo", "T_hi", "bisect_tol", "norm_tol", "T_max", "borderline", "max_iter")

    @classmethod
    def from_dict(cls, data: Any, nt_ref: int = NT_REF) -> "MinTimeConfig":
        data = _check_keys(data, cls.KEYS, "mintime")
        M = data.get("M")
        kwargs: Dict[str, Any] = {"nt_ref": nt_ref}
        for key in cls.KEYS[1:]:
            if key in data:
                if key == "max_iter":
                    kwargs[key] = _integer(data[key], "mintime.max_iter", minimum=1)
                else:
                    kwargs[key] = _number(data[key], f"mintime.{key}")
        return cls(
            M=None if M is None else _positive(M, "mintime.M"),
            options=MinTimeOptions(**kwargs),
        )

    def to_dict(self) -> dict:
        data: Dict[str, Any] = {}
        if self.M is not None:
            data["M"] = self.M
        for key in self.KEYS[1:]:
            data[key] = getattr(self.options, key)
        return data


def _hum_options(data: Any) -> HumOptions:
    names = [f.name for f in fields(HumOptions)]
    data = _check_keys(data, names, "solver")
    kwargs: Dict[str, Any] = {}
    for key, value in data.items():
        if value is None:
            continue
        if key == "cg_max_iter":
            kwargs[key] = _integer(value, "solver.cg_max_iter", minimum=1)
        else:
            kwargs[key] = _number(value, f"solver.{key}")
    return HumOptions(**kwargs)


@dataclass(frozen=True)
class OutputsConfig:
    dir: str = "out"
    formats: Tuple[str, ...] = DEFAULT_FORMATS

    @classmethod
    def from_dict(cls, data: Any) -> "OutputsConfig":
        data = _check_keys(data, ("dir", "formats"), "outputs")
        directory = data.get("dir", "out")
        if not isinstance(directory, str) or not directory:
            raise ValidationError("outputs.dir", "expected a directory path")
        formats = data.get("formats", list(DEFAULT_FORMATS))
        if not isinstance(formats, list) or not all(isinstance(f, str) for f in formats):
            raise ValidationError("outputs.formats", "expected a list of format names")
        return cls(directory, tuple(formats))

    def to_dict(self) -> dict:
        return {"dir": self.dir, "formats": list(self.formats)}


@dataclass(frozen=True)
class ProblemConfig:
    matrices: MatricesConfig
    domain: DomainConfig
    #: control region as a list of open intervals
    omega: Tuple[Tuple[float, float], ...]
    time: TimeConfig
    initial_state: Tuple[InitialComponent, ...]
    solver: HumOptions = field(default_factory=HumOptions)
    mintime: MinTimeConfig = field(default_factory=MinTimeConfig)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)
    seed: int = 0
    #: directory that relative file paths are resolved against
    base_dir: Path = field(default=Path("."), compare=False)

    SECTIONS = (
        "matrices",
        "domain",
        "omega",
        "time",
        "initial_state",
        "solver",
        "mintime",
        "outputs",
        "seed",
    )

    @classmethod
    def from_dict(
        cls, data: Any, base_dir: Union[str, Path, None] = None
    ) -> "ProblemConfig":
        """Validate a parsed configuration object."""
        data = _check_keys(data, cls.SECTIONS, "")
        matrices = MatricesConfig.from_dict(_require(data, "matrices", ""))
        domain = DomainConfig.from_dict(_require(data, "domain", ""))

        raw_omega = _require(data, "omega", "")
        if not isinstance(raw_omega, list) or not raw_omega:
            raise ValidationError("omega", "expected a non-empty list of [a, b] intervals")
        omega = []
        for i, interval in enumerate(raw_omega):
            a, b = cls._interval(interval, f"omega[{i}]", domain.length)
            omega.append((a, b))

        time = TimeConfig.from_dict(data.get("time", {}))

        raw_initial = _require(data, "initial_state", "")
        if not isinstance(raw_initial, list) or len(raw_initial) != matrices.n:
            raise ValidationError(
                "initial_state", f"expected a list of {matrices.n} component specs"
            )
        initial = tuple(
            InitialComponent.from_dict(spec, f"initial_state[{i}]")
            for i, spec in enumerate(raw_initial)
        )

        seed = _integer(data.get("seed", 0), "seed", minimum=0)
        config = cls(
            matrices=matrices,
            domain=domain,
            omega=tuple(omega),
            time=time,
            initial_state=initial,
            solver=_hum_options(data.get("solver", {})),
            mintime=MinTimeConfig.from_dict(data.get("mintime", {}), time.nt_ref),
            outputs=OutputsConfig.from_dict(data.get("outputs", {})),
            seed=seed,
            base_dir=Path(base_dir) if base_dir is not None else Path("."),
        )
        # the region must contain a node of this grid
        try:
            config.mask()
        except (InvalidDimension, ValueError) as err:
            raise ValidationError("omega", str(err))
        return config

    @staticmethod
    def _interval(value: Any, path: str, length: float) -> Tuple[float, float]:
        if not isinstance(value, list) or len(value) != 2:
            raise ValidationError(path, "expected [a, b]")
        a, b = (_number(v, path) for v in value)
        if not 0 <= a < b <= length:
            raise ValidationError(path, f"must satisfy 0 <= a < b <= {length}")
        return a, b

    def pair(self) -> CouplingPair:
        return self.matrices.pair()

    def grid(self) -> SpatialGrid:
        return build_grid(self.domain.length, self.domain.nx)

    def mask(self) -> OmegaMask:
        return omega_mask(self.grid(), self.omega)

    def resolve_initial_state(self) -> np.ndarray:
        """The initial state ``y0`` as an ``n × nx`` array on the configured grid."""
        grid = self.grid()
        return np.stack(
            [
                spec.profile(grid, self.base_dir, f"initial_state[{i}]")
                for i, spec in enumerate(self.initial_state)
            ]
        )

    def to_dict(self) -> dict:
        return {
            "matrices": self.matrices.to_dict(),
            "domain": self.domain.to_dict(),
            "omega": [list(interval) for interval in self.omega],
            "time": self.time.to_dict(),
            "initial_state": [spec.to_dict() for spec in self.initial_state],
            "solver": {
                f.name: getattr(self.solver, f.name)
                for f in fields(HumOptions)
                if getattr(self.solver, f.name) is not None
            },
            "mintime": self.mintime.to_dict(),
            "outputs": self.outputs.to_dict(),
            "seed": self.seed,
        }

    def to_string(self) -> str:
        return to_string(self.to_dict())

    def digest(self) -> str:
        """sha256 of the canonical serialization."""
        return hashlib.sha256(self.to_string().encode("utf-8")).hexdigest()


def loads(text: str, base_dir: Union[str, Path, None] = None) -> ProblemConfig:
    return ProblemConfig.from_dict(parse(text), base_dir)


def load_config(path: Union[str, Path]) -> ProblemConfig:
    """Read, parse and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise IoError(f"cannot read config ({err.strerror or err})", path)
    config = loads(text, path.parent)
    logger.debug("loaded config %s (sha256 %s)", path, config.digest()[:12])
    return config

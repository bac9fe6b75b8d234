"""Experiment configuration: the four builtin experiments and YAML config files."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .adjust import Strategy
from .data import Task
from .errors import ConfigError, InfeasibleMomentsError, ValidationError
from .scm import EnvironmentMoments, error_covariance
from .selection import CellProbs

COV_SWEEP = (0.8, 0.6, 0.4, 0.2, 0.0, -0.2, -0.4, -0.6, -0.8)
VAR_SWEEP = (1.00, 1.25, 1.50, 1.75, 2.00, 2.25, 2.50, 2.75, 3.00)

REGRESSION_STRATEGIES = (Strategy.CAUSALITY_AWARE, Strategy.POOR_MANS, Strategy.NO_ADJUSTMENT)
CLASSIFICATION_STRATEGIES = (
    Strategy.CAUSALITY_AWARE,
    Strategy.POOR_MANS,
    Strategy.MATCHING,
    Strategy.NO_ADJUSTMENT,
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep over environments x strategies x replications.

    ``environments[0]`` is the training environment; the rest are the test
    environments, numbered from 1 in results.
    """

    task: Task
    environments: tuple[EnvironmentMoments, ...]
    strategies: tuple[Strategy, ...]
    n_train: int = 1000
    n_test: int = 1000
    n_population: int = 10_000
    replications: int = 1000
    master_seed: int = 0
    feature_count: int = 5
    confounder_count: int = 1
    adjust_intercept: bool = False
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "environments", tuple(self.environments))
        object.__setattr__(
            self, "strategies", tuple(Strategy.parse(s) for s in self.strategies)
        )
        self.validate()

    def validate(self) -> None:
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if len(self.environments) < 3:
            raise ValidationError(
                "need a training environment plus at least 2 test environments"
            )
        if not self.strategies:
            raise ValidationError("at least one strategy is required")
        if len(set(self.strategies)) != len(self.strategies):
            raise ValidationError("strategies must be unique")
        if self.master_seed < 0:
            raise ValidationError("master_seed must be >= 0")
        if self.feature_count < 1 or self.confounder_count < 1:
            raise ValidationError("feature_count and confounder_count must be >= 1")
        if min(self.n_train, self.n_test) < 2:
            raise ValidationError("n_train and n_test must be >= 2")
        regression = self.task is Task.REGRESSION
        for k, env in enumerate(self.environments):
            if env.is_regression != regression:
                raise ValidationError(
                    f"environment {k} does not match task {self.task.value}"
                )
            if regression:
                check_target_moments(env, self.confounder_count, label=f"environment {k}")
        if regression:
            bad = [s.value for s in self.strategies if s.needs_binary_cells]
            if bad:
                raise ValidationError(
                    f"strategies {bad} need binary C and Y; use a classification task"
                )
        else:
            if self.confounder_count != 1:
                raise ValidationError("classification experiments need exactly one confounder")
            if max(self.n_train, self.n_test) > self.n_population:
                raise ValidationError("n_train and n_test must not exceed n_population")

    @property
    def train_environment(self) -> EnvironmentMoments:
        return self.environments[0]

    @property
    def test_environments(self) -> tuple[EnvironmentMoments, ...]:
        return self.environments[1:]

    @property
    def metric(self) -> str:
        return "mse" if self.task is Task.REGRESSION else "auroc"

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "task": self.task.value,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_population": self.n_population,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "feature_count": self.feature_count,
            "confounder_count": self.confounder_count,
            "adjust_intercept": self.adjust_intercept,
            "strategies": [s.value for s in self.strategies],
            "environments": [e.to_dict() for e in self.environments],
        }


def check_target_moments(env: EnvironmentMoments, m: int = 1, label: str = "environment"):
    """Reject (C, Y) targets that no error covariance can reproduce.

    The error covariance is an invertible linear image of the target
    covariance, so feasibility does not depend on the drawn beta_yc.
    """
    sigma = error_covariance(env.var_c, env.cov_cy, env.var_y, np.zeros(m))
    if np.linalg.eigvalsh(sigma)[0] < -1e-12 * max(1.0, np.abs(sigma).max()):
        raise InfeasibleMomentsError(
            f"{label}: var_c={env.var_c}, cov_cy={env.cov_cy}, var_y={env.var_y} "
            f"(with {m} uncorrelated confounder(s)) is not a valid covariance, so "
            "phi_cc = var_c, phi_cy = cov_cy - beta_yc*var_c, "
            "phi_yy = var_y + beta_yc^2*var_c - 2*beta_yc*cov_cy "
            "is infeasible for every beta_yc"
        )


def _cells(p11, p10, p01, p00) -> EnvironmentMoments:
    return EnvironmentMoments(cell_probs=CellProbs(p00=p00, p01=p01, p10=p10, p11=p11))


def _table_s1():
    return [
        _cells(round(0.45 - 0.05 * k, 2), round(0.05 + 0.05 * k, 2),
               round(0.05 + 0.05 * k, 2), round(0.45 - 0.05 * k, 2))
        for k in range(9)
    ]


def _table_s2():
    return [
        _cells(round(0.45 - 0.05 * k, 2), round(0.05 + 0.10 * k, 2),
               0.05, round(0.45 - 0.05 * k, 2))
        for k in range(9)
    ]


BUILTIN_NAMES = ("regr_exp1", "regr_exp2", "class_exp1", "class_exp2")


def builtin_config(name: str) -> ExperimentConfig:
    """Built-in synthetic experiments at full (1000 replication) scale."""
    if name == "regr_exp1":
        train = EnvironmentMoments(var_c=1.0, cov_cy=0.8, var_y=1.0)
        tests = [EnvironmentMoments(var_c=v, cov_cy=c, var_y=1.0) for c, v in zip(COV_SWEEP, VAR_SWEEP)]
        return ExperimentConfig(Task.REGRESSION, [train, *tests], REGRESSION_STRATEGIES, name=name)
    if name == "regr_exp2":
        train = EnvironmentMoments(var_c=1.0, cov_cy=0.8, var_y=1.0)
        tests = [EnvironmentMoments(var_c=1.0, cov_cy=c, var_y=v) for c, v in zip(COV_SWEEP, VAR_SWEEP)]
        return ExperimentConfig(Task.REGRESSION, [train, *tests], REGRESSION_STRATEGIES, name=name)
    if name in ("class_exp1", "class_exp2"):
        train = _cells(0.45, 0.05, 0.05, 0.45)
        tests = _table_s1() if name == "class_exp1" else _table_s2()
        return ExperimentConfig(
            Task.CLASSIFICATION, [train, *tests], CLASSIFICATION_STRATEGIES, name=name
        )
    raise ValidationError(f"unknown builtin {name!r}; expected one of {', '.join(BUILTIN_NAMES)}")


# YAML loading ---------------------------------------------------------------

_INT_KEYS = ("n_train", "n_test", "n_population", "replications", "master_seed",
             "feature_count", "confounder_count")
_KNOWN_KEYS = set(_INT_KEYS) | {"name", "task", "strategies", "environments",
                                "adjust_intercept", "builtin"}


def _key_lines(node) -> dict:
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def _env_from_mapping(d, key, line) -> EnvironmentMoments:
    if not isinstance(d, dict):
        raise ConfigError("environment entries must be mappings", key, line)
    try:
        if "cell_probs" in d:
            cp = d["cell_probs"]
            if isinstance(cp, dict):
                cells = CellProbs(float(cp["p00"]), float(cp["p01"]), float(cp["p10"]), float(cp["p11"]))
            else:
                cells = CellProbs.from_sequence(cp)
            return EnvironmentMoments(cell_probs=cells)
        return EnvironmentMoments(
            var_c=float(d["var_c"]), cov_cy=float(d["cov_cy"]), var_y=float(d["var_y"])
        )
    except KeyError as exc:
        raise ConfigError(f"environment is missing {exc.args[0]!r}", key, line) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid environment: {exc}", key, line) from None


def config_from_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse a YAML experiment config.

    A config may start from ``builtin: <name>`` and override any field.
    """
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(
            f"{source}: malformed YAML: {getattr(exc, 'problem', exc)}",
            line=None if mark is None else mark.line + 1,
            key="<document>",
        ) from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping", key="<document>", line=1)
    lines = _key_lines(root)

    for key in data:
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"{source}: unknown key", key, lines.get(key))

    fields: dict = {}
    if "builtin" in data:
        try:
            fields = {f.name: getattr(builtin_config(str(data["builtin"])), f.name)
                      for f in dataclasses.fields(ExperimentConfig)}
        except ValidationError as exc:
            raise ConfigError(f"{source}: {exc}", "builtin", lines.get("builtin")) from None

    for key in _INT_KEYS:
        if key in data:
            val = data[key]
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"{source}: expected an integer", key, lines.get(key))
            fields[key] = val
    for key in ("name", "task"):
        if key in data:
            fields[key] = str(data[key])
    if "adjust_intercept" in data:
        if not isinstance(data["adjust_intercept"], bool):
            raise ConfigError(f"{source}: expected true/false", "adjust_intercept",
                              lines.get("adjust_intercept"))
        fields["adjust_intercept"] = data["adjust_intercept"]
    if "strategies" in data:
        if not isinstance(data["strategies"], list):
            raise ConfigError(f"{source}: expected a list", "strategies", lines.get("strategies"))
        try:
            fields["strategies"] = tuple(Strategy.parse(s) for s in data["strategies"])
        except ValidationError as exc:
            raise ConfigError(f"{source}: {exc}", "strategies", lines.get("strategies")) from None
    if "environments" in data:
        envs = data["environments"]
        if not isinstance(envs, list):
            raise ConfigError(f"{source}: expected a list", "environments", lines.get("environments"))
        env_nodes = []
        for k, v in root.value:
            if k.value == "environments" and isinstance(v, yaml.SequenceNode):
                env_nodes = v.value
        out = []
        for i, env in enumerate(envs):
            line = env_nodes[i].start_mark.line + 1 if i < len(env_nodes) else lines.get("environments")
            out.append(_env_from_mapping(env, f"environments[{i}]", line))
        fields["environments"] = tuple(out)

    for key in ("task", "environments", "strategies"):
        if key not in fields:
            raise ConfigError(f"{source}: missing required key", key, None)
    try:
        fields["task"] = Task(fields["task"])
    except ValueError:
        raise ConfigError(f"{source}: task must be regression or classification",
                          "task", lines.get("task")) from None
    try:
        return ExperimentConfig(**fields)
    except InfeasibleMomentsError:
        raise
    except ValidationError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def config_from_dict(d: dict, source: str = "<dict>") -> ExperimentConfig:
    return config_from_text(yaml.safe_dump(d, sort_keys=False), source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return config_from_text(path.read_text(), source=str(path))


def config_to_yaml(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)

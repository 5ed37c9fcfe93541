"""Experiment configuration files.

A config is a flat ``key = value`` document (``#`` starts a comment) plus
optional repeated ``[target.component]`` / ``[aux.component]`` blocks that
define inline Gaussian mixtures::

    target = inline
    [target.component]
    mean = 0, 0
    sd = 0.5
    weight = 0.3

Recognised top-level keys and their defaults are in ``DEFAULTS``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, UnknownTarget
from ..metrics import OtConfig
from ..models import GaussianDensity, GaussianMixtureDensity, blr_from_csv
from .registry import registry

SCHEMES = {"hmc": "hmc_forward_only", "adhmc": "adhmc"}
ADAPTIVE_AUX = ("adapt_single", "adapt_many")

DEFAULTS = {
    "target": None,
    "aux": "std_normal",
    "scheme": "adhmc",
    "particles": 900,
    "iterations": 300,
    "n_a": 150,
    "step_size": 0.025,
    "n_steps": 100,
    "mh": True,
    "metric_every": 50,
    "ot_p": 2,
    "ot_blur": None,
    "ot_max_iters": 20000,
    "ot_tol": 1e-3,
    "seed": 0,
    "replications": 1,
    "output_dir": "out",
    "compare_budget": False,
    "init_sd": 3.0,
    "reference_size": 900,
    "record_timing": True,
    "blr_data": None,
    "blr_use_col": "use",
    "blr_livch_col": "livch",
    "blr_age_col": "age",
    "blr_urban_col": "urban",
    "blr_prior_sd": 10.0,
}

_INTS = {"particles", "iterations", "n_a", "n_steps", "metric_every", "ot_p", "ot_max_iters",
         "seed", "replications", "reference_size"}
_FLOATS = {"step_size", "ot_blur", "ot_tol", "init_sd", "blr_prior_sd"}
_BOOLS = {"mh", "compare_budget", "record_timing"}
_POSITIVE = {"particles", "n_a", "step_size", "ot_max_iters", "ot_tol", "init_sd",
             "replications", "reference_size", "blr_prior_sd", "ot_blur"}
_NONNEG = {"iterations", "n_steps", "metric_every", "seed"}
_COMPONENT_KEYS = {"mean", "sd", "cov", "weight"}


@dataclass
class ExperimentConfig:
    target_name: str
    aux_name: str
    scheme: str
    particles: int
    iterations: int
    n_a: int
    step_size: float
    n_steps: int
    mh: bool
    metric_every: int
    ot: OtConfig
    seed: int
    replications: int
    output_dir: str
    compare_budget: bool
    init_sd: float
    reference_size: int
    record_timing: bool
    blr: dict = field(default_factory=dict)
    target_components: list = field(default_factory=list)
    aux_components: list = field(default_factory=list)

    @property
    def kernel_scheme(self):
        return SCHEMES[self.scheme]

    @property
    def effective_iterations(self):
        """HMC gets twice the iterations when runs are compared on a budget."""
        if self.compare_budget and self.scheme == "hmc":
            return 2 * self.iterations
        return self.iterations

    @property
    def adaptive(self):
        return self.aux_name in ADAPTIVE_AUX

    def build_target(self):
        if self.target_name == "inline":
            return _mixture(self.target_components)
        if self.target_name == "blr":
            b = self.blr
            return blr_from_csv(b["data"], b["use_col"], b["livch_col"], b["age_col"],
                                b["urban_col"], b["prior_sd"])
        return registry(self.target_name)

    def build_aux(self, dim):
        """Fixed auxiliary, or the ``N(0, I)`` start of an adaptive scheme."""
        if self.adaptive or self.aux_name == "std_normal":
            return GaussianDensity.isotropic(dim)
        if self.aux_name == "inline":
            return _mixture(self.aux_components)
        return registry(self.aux_name)

    def with_overrides(self, **kw):
        return replace(self, **kw)


def _mixture(components):
    comps = [GaussianDensity(c["mean"], c["cov"]) for c in components]
    if len(comps) == 1:
        return comps[0]
    return GaussianMixtureDensity(comps, [c["weight"] for c in components])


def _parse_bool(key, text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def _parse_scalar(key, text):
    if key in _BOOLS:
        return _parse_bool(key, text)
    if text.lower() in ("none", "") and DEFAULTS[key] is None:
        return None
    if key in _INTS:
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {text!r}") from None
        if not value.is_integer():
            raise ConfigError(key, f"expected an integer, got {text!r}")
        return int(value)
    if key in _FLOATS:
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(key, f"expected a number, got {text!r}") from None
        if not math.isfinite(value):
            raise ConfigError(key, "must be finite")
        return value
    return text


def _parse_vector(key, text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(key, f"expected comma-separated numbers, got {text!r}") from None


def _finish_component(prefix, index, raw):
    path = f"{prefix}.component[{index}]"
    if "mean" not in raw:
        raise ConfigError(f"{path}.mean", "missing")
    mean = _parse_vector(f"{path}.mean", raw["mean"])
    d = mean.size
    if ("sd" in raw) == ("cov" in raw):
        raise ConfigError(path, "give exactly one of sd or cov")
    if "sd" in raw:
        sd = _float(f"{path}.sd", raw["sd"])
        if not sd > 0:
            raise ConfigError(f"{path}.sd", "must be positive")
        cov = sd**2 * np.eye(d)
    else:
        flat = _parse_vector(f"{path}.cov", raw["cov"])
        if flat.size == d:
            cov = np.diag(flat)
        elif flat.size == d * d:
            cov = flat.reshape(d, d)
        else:
            raise ConfigError(f"{path}.cov", f"need {d} diagonal or {d * d} full entries")
        try:
            np.linalg.cholesky(0.5 * (cov + cov.T))
        except np.linalg.LinAlgError:
            raise ConfigError(f"{path}.cov", "not positive definite") from None
    weight = _float(f"{path}.weight", raw.get("weight", "1"))
    if not weight > 0:
        raise ConfigError(f"{path}.weight", "must be positive")
    return {"mean": mean, "cov": cov, "weight": weight}


def _float(key, text):
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(key, "must be finite")
    return value


def parse_config(text):
    """Parse and validate config text.

    Raises:
        ConfigError: naming the offending key path.
    """
    values = {}
    blocks = {"target": [], "aux": []}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            section = line.strip("[]").strip()
            if section not in ("target.component", "aux.component"):
                raise ConfigError(section, f"unknown section on line {lineno}")
            current = {}
            blocks[section.split(".")[0]].append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if current is not None:
            if key not in _COMPONENT_KEYS:
                raise ConfigError(key, f"unknown component key on line {lineno}")
            current[key] = value
            continue
        if key not in DEFAULTS:
            raise ConfigError(key, "unknown key")
        if key in values:
            raise ConfigError(key, "given twice")
        values[key] = _parse_scalar(key, value)
    return _validate(values, blocks)


def _validate(values, blocks):
    v = dict(DEFAULTS)
    v.update(values)
    if not v["target"]:
        raise ConfigError("target", "required")
    for key in _POSITIVE:
        if v[key] is not None and not v[key] > 0:
            raise ConfigError(key, "must be positive")
    for key in _NONNEG:
        if v[key] < 0:
            raise ConfigError(key, "must be nonnegative")
    if v["scheme"] not in SCHEMES:
        raise ConfigError("scheme", f"must be one of {sorted(SCHEMES)}")
    if v["ot_p"] not in (1, 2):
        raise ConfigError("ot_p", "must be 1 or 2")

    target_comps = [_finish_component("target", i, b) for i, b in enumerate(blocks["target"])]
    aux_comps = [_finish_component("aux", i, b) for i, b in enumerate(blocks["aux"])]
    if (v["target"] == "inline") != bool(target_comps):
        raise ConfigError("target", "inline targets need [target.component] blocks and vice versa")
    if (v["aux"] == "inline") != bool(aux_comps):
        raise ConfigError("aux", "inline auxiliaries need [aux.component] blocks and vice versa")
    for comps, name in ((target_comps, "target"), (aux_comps, "aux")):
        if comps and len({c["mean"].size for c in comps}) != 1:
            raise ConfigError(f"{name}.component", "components differ in dimension")
    if v["target"] == "blr" and not v["blr_data"]:
        raise ConfigError("blr_data", "required when target = blr")
    if v["target"] not in ("inline", "blr"):
        try:
            registry(v["target"])
        except UnknownTarget:
            raise ConfigError("target", f"unknown registry name {v['target']!r}") from None
    if v["aux"] not in ADAPTIVE_AUX + ("inline", "std_normal"):
        try:
            registry(v["aux"])
        except UnknownTarget:
            raise ConfigError("aux", f"unknown auxiliary {v['aux']!r}") from None

    return ExperimentConfig(
        target_name=v["target"], aux_name=v["aux"], scheme=v["scheme"],
        particles=v["particles"], iterations=v["iterations"], n_a=v["n_a"],
        step_size=v["step_size"], n_steps=v["n_steps"], mh=v["mh"],
        metric_every=v["metric_every"],
        ot=OtConfig(v["ot_p"], v["ot_blur"], v["ot_max_iters"], v["ot_tol"]),
        seed=v["seed"], replications=v["replications"], output_dir=v["output_dir"],
        compare_budget=v["compare_budget"], init_sd=v["init_sd"],
        reference_size=v["reference_size"], record_timing=v["record_timing"],
        blr={"data": v["blr_data"], "use_col": v["blr_use_col"], "livch_col": v["blr_livch_col"],
             "age_col": v["blr_age_col"], "urban_col": v["blr_urban_col"],
             "prior_sd": v["blr_prior_sd"]},
        target_components=target_comps, aux_components=aux_comps,
    )


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("path", f"cannot read {path}: {exc}") from None
    return parse_config(text)


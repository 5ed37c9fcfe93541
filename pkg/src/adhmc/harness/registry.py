"""Named targets and auxiliaries.

The three-dimensional mixtures are stored exactly as tabulated (means,
isotropic standard deviations, raw weights); the raw weights do not sum to
one and are normalised when the model is built.
"""

import re
from dataclasses import dataclass

import numpy as np

from ..errors import UnknownTarget
from ..models import GaussianDensity, GaussianMixtureDensity


@dataclass(frozen=True)
class TargetRegistryEntry:
    name: str
    means: tuple
    sds: tuple
    raw_weights: tuple
    description: str = ""

    def build(self):
        comps = [GaussianDensity(np.array(m, dtype=float), (s**2) * np.eye(len(m)))
                 for m, s in zip(self.means, self.sds)]
        return GaussianMixtureDensity(comps, np.array(self.raw_weights))


LINES12 = TargetRegistryEntry(
    "lines12",
    means=(
        (2.48, 1.75, 1.75), (1.77, -1.25, 1.25), (0.00, 0.00, 0.00), (-1.06, 0.75, -0.75),
        (-1.41, 1.00, -1.00), (-2.47, 1.75, -1.75), (3.75, 0.00, 0.15), (4.00, 3.46, -0.20),
        (0.63, -3.68, 0.10), (2.04, 2.07, 0.47), (1.64, 2.40, 1.35), (0.59, 3.35, 2.77),
    ),
    sds=(0.75, 0.50, 0.25, 0.25, 0.50, 0.75, 0.15, 0.15, 0.15, 0.15, 0.20, 0.25),
    raw_weights=(0.058, 0.058, 0.058, 0.058, 0.033, 0.067, 0.11, 0.11, 0.11, 0.11, 0.11, 0.11),
    description="12 isotropic Gaussians along three lines in R^3",
)

HELIX7 = TargetRegistryEntry(
    "helix7",
    means=(
        (0.00, 1.00, 0.00), (0.15, 0.15, 0.79), (-0.57, 0.00, 1.57), (-0.96, 0.96, 2.36),
        (0.00, 2.14, 3.14), (2.07, 2.07, 3.93), (3.71, 0.00, 4.71),
    ),
    sds=(0.69, 0.49, 0.29, 0.10, 0.10, 0.29, 0.49),
    raw_weights=(0.14,) * 7,
    description="7 isotropic Gaussians along an expanding helix in R^3",
)

SIMPLE_TARGET_AUX = TargetRegistryEntry(
    "simple_target_aux",
    means=(
        (-0.68, 1.33, -1.33), (0.68, -1.33, 1.33), (0.00, -2.00, 0.00),
        (0.00, 2.00, 0.00), (0.87, -1.00, -1.50), (-0.87, 1.00, 1.50),
    ),
    sds=(0.75, 0.25, 0.15, 0.15, 0.25, 0.15),
    raw_weights=(0.17,) * 6,
    description="asymmetric six-Gaussian auxiliary built from knowledge of lines12",
)

BIMODAL_1D = TargetRegistryEntry(
    "bimodal_1d",
    means=((-1.5,), (1.5,)),
    sds=(0.6, 0.6),
    raw_weights=(0.5, 0.5),
    description="1D two-bump target for the transfer-operator checks",
)

ASYM_AUX_1D = TargetRegistryEntry(
    "asym_aux_1d",
    means=((-1.0,), (0.8,)),
    sds=(0.5, 0.7),
    raw_weights=(0.35, 0.65),
    description="1D asymmetric two-Gaussian auxiliary",
)

ENTRIES = {e.name: e for e in (LINES12, HELIX7, SIMPLE_TARGET_AUX, BIMODAL_1D, ASYM_AUX_1D)}

_PARAM = re.compile(r"^(std_normal|iso_normal)\(([^)]*)\)$")


def names():
    return sorted(ENTRIES) + ["std_normal(d)", "iso_normal(sd,d)"]


def registry(name):
    """Model for a registry name.

    Besides the tabulated mixtures, ``std_normal(d)`` is ``N(0, I_d)`` and
    ``iso_normal(sd,d)`` is ``N(0, sd^2 I_d)``; ``std_normal`` alone means
    ``d = 1``.
    """
    name = name.strip()
    if name in ENTRIES:
        return ENTRIES[name].build()
    if name == "std_normal":
        return GaussianDensity.isotropic(1)
    m = _PARAM.match(name.replace(" ", ""))
    if m:
        try:
            args = [float(a) for a in m.group(2).split(",")]
        except ValueError:
            raise UnknownTarget(name) from None
        if m.group(1) == "std_normal" and len(args) == 1 and args[0] >= 1 and args[0].is_integer():
            return GaussianDensity.isotropic(int(args[0]))
        if m.group(1) == "iso_normal" and len(args) == 2 and args[0] > 0 and args[1] >= 1 and args[1].is_integer():
            return GaussianDensity.isotropic(int(args[1]), args[0])
    raise UnknownTarget(name)

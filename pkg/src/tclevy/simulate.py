"""Observed increment panels Z_j = Y_{j delta} - Y_{(j-1) delta} of Y_t = L_{T(t)}."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .levy import LevyComponentSpec, NigParams, sample_nig_increment
from .numerics import ContractError, DomainError, RngStream
from .timechange import TimeChangeSpec, sample_increments, timechange_from_dict


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class IncrementPanel:
    z: np.ndarray
    delta: float
    seed: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        if z.ndim != 2 or z.shape[1] < 2:
            raise ConfigurationError("a panel needs d >= 2 columns")
        if z.shape[0] < 4:
            raise ConfigurationError("a panel needs n >= 4 rows")
        if not np.all(np.isfinite(z)):
            raise ContractError("panel contains non-finite increments")
        if not self.delta > 0:
            raise DomainError("delta must be positive")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]

    def to_csv(self, path) -> None:
        """Write ``j,z1,...,zd`` rows plus a ``<stem>.json`` metadata sidecar."""
        path = Path(path)
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["j"] + [f"z{k + 1}" for k in range(self.d)])
            for j, row in enumerate(self.z, start=1):
                w.writerow([j] + [f"{v:.17g}" for v in row])
        meta = {"delta": self.delta, "n": self.n, "d": self.d, "seed": self.seed, "model": self.model}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> IncrementPanel:
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[0] != "j" or len(header) < 3:
            raise ContractError(f"{path}: bad panel header {header}")
        z = np.array([[float(v) for v in r[1:]] for r in body])
        return cls(z, meta["delta"], meta.get("seed", {}), meta.get("model", {}))


def model_description(components: Sequence[LevyComponentSpec], spec: TimeChangeSpec) -> dict:
    return {"components": [c.as_dict() for c in components], "timechange": spec.as_dict()}


def components_from_dicts(items) -> list[LevyComponentSpec]:
    out = []
    for c in items:
        c = dict(c)
        sigma = c.pop("sigma", 0.0)
        out.append(LevyComponentSpec(NigParams(**c), sigma))
    return out


def simulate_panel(components: Sequence[LevyComponentSpec], spec: TimeChangeSpec, n: int,
                   delta: float, seed: RngStream) -> IncrementPanel:
    """Draw n increments of the time-changed process.

    Clock increments come from substream 0 of ``seed``; component k uses
    substream k + 1, so adding components leaves the clock draws unchanged.
    Given T_j, entry k is exact NIG(alpha_k, kappa_k, T_j delta_k, T_j mu_k)
    plus sigma_k sqrt(T_j) N.
    """
    components = list(components)
    if len(components) < 2:
        raise ConfigurationError(f"need at least 2 Lévy components, got {len(components)}")
    t = sample_increments(spec, delta, n, seed.substream(0))
    cols = []
    for k, comp in enumerate(components):
        g = seed.substream(k + 1).generator
        col = sample_nig_increment(comp.nig, t, g)
        if comp.sigma > 0:
            col = col + comp.sigma * np.sqrt(t) * g.standard_normal(n)
        cols.append(col)
    return IncrementPanel(np.column_stack(cols), delta, seed.descriptor(),
                          model_description(components, spec))


def empirical_cf(panel: IncrementPanel, u) -> complex:
    """(1/n) sum_j exp(i u . Z_j)."""
    u = np.asarray(u, dtype=float)
    return complex(np.mean(np.exp(1j * (panel.z @ u))))


__all__ = [
    "ConfigurationError",
    "IncrementPanel",
    "components_from_dicts",
    "empirical_cf",
    "model_description",
    "simulate_panel",
    "timechange_from_dict",
]

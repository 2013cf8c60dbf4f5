"""The trained artifact: five class-indexed lookup tables plus filter settings."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from agu.classify import ClassConfig
from agu.errors import InvalidModelError
from agu.imaging import KernelConfig

FORMAT_VERSION = "agu-model/1"
LUT_NAMES = ("lut_sigma", "lut_xi", "lut_tau", "lut_ecb_a", "lut_ecb_b")

# ablation switch -> tables it zeroes
DISABLE_GROUPS = {
    "tau": ("lut_tau",),
    "sigma": ("lut_sigma",),
    "xi": ("lut_xi",),
    "ecb": ("lut_ecb_a", "lut_ecb_b"),
}


@dataclass(eq=False)
class AguModel:
    """Lookup tables and configuration needed to run the upsampler.

    ``lut_sigma``, ``lut_xi``, ``lut_ecb_a`` and ``lut_ecb_b`` are indexed by
    edge class, ``lut_tau`` by brightness class. The regularizer of the
    guided filter is ``lam * lut_sigma[c] ** 2``.
    """

    lut_sigma: np.ndarray
    lut_xi: np.ndarray
    lut_tau: np.ndarray
    lut_ecb_a: np.ndarray
    lut_ecb_b: np.ndarray
    lam: float = 0.01
    kernel_cfg: KernelConfig = field(default_factory=KernelConfig)
    clamp_log: float = 32.0
    version: str = FORMAT_VERSION
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in LUT_NAMES:
            setattr(self, name, np.array(getattr(self, name), dtype=np.float64).reshape(-1))
        self.validate()

    @classmethod
    def zeros(
        cls,
        n_classes: int = 121,
        lam: float = 0.01,
        kernel_cfg: KernelConfig | None = None,
        clamp_log: float = 32.0,
    ) -> "AguModel":
        z = np.zeros(n_classes)
        return cls(
            z.copy(), z.copy(), z.copy(), z.copy(), z.copy(),
            lam=lam, kernel_cfg=kernel_cfg or KernelConfig(), clamp_log=clamp_log,
        )

    @property
    def n_classes(self) -> int:
        return self.lut_sigma.size

    @property
    def radius(self) -> int:
        return self.kernel_cfg.radius

    @property
    def class_cfg(self) -> ClassConfig:
        return ClassConfig(n_classes=self.n_classes, clamp_log=self.clamp_log)

    def validate(self) -> None:
        n = self.lut_sigma.size
        for name in LUT_NAMES:
            lut = getattr(self, name)
            if lut.size != n:
                raise InvalidModelError(f"{name} has {lut.size} entries, expected {n}")
            if not np.all(np.isfinite(lut)):
                raise InvalidModelError(f"{name} contains non-finite values")
        if np.any(self.lut_sigma < 0):
            raise InvalidModelError("lut_sigma entries must be >= 0")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise InvalidModelError(f"lambda must be >= 0, got {self.lam}")
        try:
            ClassConfig(n_classes=n, clamp_log=self.clamp_log)
        except ValueError as exc:
            raise InvalidModelError(str(exc)) from exc

    def copy(self, **changes) -> "AguModel":
        base = {name: getattr(self, name).copy() for name in LUT_NAMES}
        base["provenance"] = dict(self.provenance)
        base.update(changes)
        return replace(self, **base)

    def disabled(self, groups) -> "AguModel":
        """Copy with the named parameter groups (``tau``, ``ecb``, ...) zeroed."""
        changes = {}
        for g in groups:
            if g not in DISABLE_GROUPS:
                raise InvalidModelError(
                    f"unknown parameter group {g!r}; valid: {', '.join(DISABLE_GROUPS)}"
                )
            for name in DISABLE_GROUPS[g]:
                changes[name] = np.zeros(self.n_classes)
        return self.copy(**changes)

    def to_dict(self) -> dict:
        d = {
            "version": self.version,
            "n_classes": self.n_classes,
            "radius": self.radius,
            "lambda": self.lam,
            "clamp_log": self.clamp_log,
            "kernel_cfg": self.kernel_cfg.to_dict(),
        }
        for name in LUT_NAMES:
            d[name] = [float(v) for v in getattr(self, name)]
        d["provenance"] = self.provenance
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AguModel":
        try:
            if d.get("version") != FORMAT_VERSION:
                raise InvalidModelError(f"unsupported model version {d.get('version')!r}")
            kcfg = KernelConfig.from_dict(d["kernel_cfg"])
            if int(d["radius"]) != kcfg.radius:
                raise InvalidModelError("radius disagrees with kernel_cfg.radius")
            model = cls(
                *(d[name] for name in LUT_NAMES),
                lam=float(d["lambda"]),
                kernel_cfg=kcfg,
                clamp_log=float(d.get("clamp_log", ClassConfig.clamp_log)),
                version=d["version"],
                provenance=dict(d.get("provenance", {})),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidModelError(f"malformed model: {exc}") from exc
        if model.n_classes != int(d["n_classes"]):
            raise InvalidModelError(
                f"n_classes={d['n_classes']} but tables have {model.n_classes} entries"
            )
        return model

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "AguModel":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidModelError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(d)

"""Soft-target construction for every training strategy.

All functions here are pure: they map label rows (and, for the learned
variants, smoothing rows produced by the model) to target distributions.
"""

import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Batch, ConfigError

ROW_SUM_TOL = 1e-6

KINDS = (
    "baseline",
    "uls",
    "mixup",
    "mixup_uls",
    "pls",
    "pls_ud",
    "pls_coeff",
    "pls_nolearned",
)

_DISPLAY = {
    "baseline": "Baseline",
    "uls": "ULS",
    "mixup": "Mixup",
    "mixup_uls": "MixupULS",
    "pls": "PLS",
    "pls_ud": "PLS_UD",
    "pls_coeff": "PLS_Coeff",
    "pls_nolearned": "PLS_NoLearned",
}


_ALIASES = {**{k: k for k in KINDS}, **{v.lower(): k for k, v in _DISPLAY.items()}}


class TargetDistributionError(ValueError):
    pass


@dataclass(frozen=True)
class TargetStrategy:
    """How soft targets are built for a training step.

    ``alpha`` is the uniform smoothing strength (ULS, MixupULS, PLS_UD) and
    ``w`` the weight of the learned smoothing distribution (PLS family).
    ``lam`` pins the Mixup ratio; ``None`` draws it from U[0, 1] per batch.
    """

    kind: str = "baseline"
    alpha: float = 0.0
    w: float = 0.5
    lam: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown strategy kind {self.kind!r}; expected one of {KINDS}")
        for field in ("alpha", "w"):
            value = getattr(self, field)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{field} must lie in [0, 1], got {value}")
        if self.lam is not None and not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lam must lie in [0, 1], got {self.lam}")

    @property
    def pairs(self):
        """Whether training steps are built from sample pairs."""
        return self.kind not in ("baseline", "uls")

    @property
    def is_pls(self):
        return self.kind.startswith("pls")

    @property
    def learned(self):
        return self.kind in ("pls", "pls_coeff")

    @property
    def is_mixup(self):
        return self.kind in ("mixup", "mixup_uls")

    @property
    def coefficient_head(self):
        return self.kind == "pls_coeff"

    def label(self):
        name = _DISPLAY[self.kind]
        if self.kind in ("uls", "mixup_uls", "pls_ud"):
            return f"{name}({self.alpha:g})"
        if self.kind in ("pls", "pls_coeff") and self.w != 0.5:
            return f"{name}({self.w:g})"
        return name

    def to_dict(self):
        out = {"kind": self.kind, "alpha": self.alpha, "w": self.w}
        if self.lam is not None:
            out["lam"] = self.lam
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d.get("kind", "baseline").lower(),
            alpha=float(d.get("alpha", 0.0)),
            w=float(d.get("w", 0.5)),
            lam=None if d.get("lam") is None else float(d["lam"]),
        )

    @classmethod
    def parse(cls, text):
        """Parse compact names such as ``PLS``, ``ULS(0.1)`` or ``PLS_UD(0.2)``."""
        m = re.fullmatch(r"\s*([A-Za-z_]+)\s*(?:\(\s*([0-9.eE+-]+)\s*\))?\s*", text)
        if not m:
            raise ConfigError(f"cannot parse strategy {text!r}")
        kind = _ALIASES.get(m.group(1).lower())
        arg = m.group(2)
        if kind is None:
            raise ConfigError(f"unknown strategy kind {m.group(1)!r}")
        if arg is None:
            return cls(kind=kind)
        if kind in ("uls", "mixup_uls", "pls_ud"):
            return cls(kind=kind, alpha=float(arg))
        if kind == "mixup":
            return cls(kind=kind, lam=float(arg))
        return cls(kind=kind, w=float(arg))


@dataclass(frozen=True)
class PairedBatch:
    inputs: np.ndarray  # B x D mixed inputs
    targets: np.ndarray  # B x K mixed label rows
    perm: np.ndarray  # partner index of every row


def check_rows(q, name="targets", tol=ROW_SUM_TOL):
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2:
        raise TargetDistributionError(f"{name} must be 2-D, got shape {q.shape}")
    if (q < -tol).any():
        raise TargetDistributionError(f"{name} has negative entries")
    err = np.abs(q.sum(axis=1) - 1.0)
    if (err > tol).any():
        bad = int(err.argmax())
        raise TargetDistributionError(
            f"{name} row {bad} sums to {q[bad].sum():.12g}, expected 1"
        )
    return q


def _check_perm(perm, n):
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError(f"perm must be a permutation of 0..{n - 1}")
    return perm


def midpoint(batch: Batch, perm) -> PairedBatch:
    """Average every sample with its partner ``perm[i]``, inputs and labels alike."""
    perm = _check_perm(perm, batch.inputs.shape[0])
    x = (batch.inputs + batch.inputs[perm]) / 2
    q = (batch.onehot + batch.onehot[perm]) / 2
    return PairedBatch(x, q, perm)


def mixup(batch: Batch, perm, lam) -> PairedBatch:
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"mixing ratio must lie in [0, 1], got {lam}")
    perm = _check_perm(perm, batch.inputs.shape[0])
    x = lam * batch.inputs + (1 - lam) * batch.inputs[perm]
    q = lam * batch.onehot + (1 - lam) * batch.onehot[perm]
    return PairedBatch(x, q, perm)


def uls_target(onehot, alpha):
    """Uniform label smoothing: ``(1 - alpha) * onehot + alpha / K``."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    onehot = np.asarray(onehot, dtype=np.float64)
    return (1 - alpha) * onehot + alpha / onehot.shape[1]


def ud_smoothing(q, alpha):
    """Uniform substitute for the learned distribution; same algebra as ULS on ``q``."""
    return uls_target(check_rows(q, "q"), alpha)


def pls_target(q, u_prime, w):
    """Mix label rows with the learned smoothing rows: ``(1 - w) q + w u'``."""
    q = check_rows(q, "q")
    u_prime = check_rows(u_prime, "u_prime")
    if q.shape != u_prime.shape:
        raise TargetDistributionError(f"q {q.shape} and u_prime {u_prime.shape} differ in shape")
    return (1 - w) * q + w * u_prime


def coefficient_distribution(q, s):
    """Per-row smoothing distribution driven by a scalar coefficient ``s`` in (0, 1)."""
    q = np.asarray(q, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64).reshape(-1, 1)
    if s.shape[0] != q.shape[0]:
        raise ValueError(f"{s.shape[0]} coefficients for {q.shape[0]} rows")
    if ((s < 0) | (s > 1)).any():
        raise ValueError("smoothing coefficients must lie in [0, 1]")
    return (1 - s) * q + s / q.shape[1]


def coeff_smoothing(q, s, w):
    """Target for the coefficient-prediction variant.

    ``(1 - w) q + w [(1 - s) q + s / K]``: the predicted scalar moves the
    smoothing component from the labels themselves toward uniform.
    """
    q = check_rows(q, "q")
    return (1 - w) * q + w * coefficient_distribution(q, s)

"""EER, DET operating points and the tandem detection cost function.

Scores are oriented so that higher means more bona fide; a trial is
accepted when its score is at or above the threshold.  Operating points
are enumerated at every distinct observed score plus ``+inf`` (reject
everything), so the first point accepts all trials.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from importlib import resources
from typing import Optional

import numpy as np
from scipy.stats import norm

from ..errors import ConfigError, MetricError, ParameterError


def _split(bona, spoof):
    if spoof is None:
        bona, spoof = bona.split()
    bona = np.asarray(bona, dtype=np.float64).ravel()
    spoof = np.asarray(spoof, dtype=np.float64).ravel()
    if bona.size == 0 or spoof.size == 0:
        raise MetricError("need at least one bona fide and one spoof score")
    if not (np.all(np.isfinite(bona)) and np.all(np.isfinite(spoof))):
        raise MetricError("scores must be finite")
    return bona, spoof


def operating_points(bona, spoof=None):
    """Return ``(thresholds, far, frr)`` ordered by increasing threshold.

    ``far`` is the fraction of spoof trials accepted and ``frr`` the fraction
    of bona fide trials rejected.
    """
    bona, spoof = _split(bona, spoof)
    thr = np.unique(np.concatenate([bona, spoof]))
    frr = np.searchsorted(np.sort(bona), thr, side="left") / bona.size
    far = (spoof.size - np.searchsorted(np.sort(spoof), thr, side="left")) / spoof.size
    return (np.append(thr, np.inf), np.append(far, 0.0), np.append(frr, 1.0))


@dataclass
class EerResult:
    eer: float
    threshold: float


def compute_eer(bona, spoof=None) -> EerResult:
    """Equal error rate where the FRR and FAR curves cross.

    Pass bona fide and spoof score arrays, or a keyed :class:`ScoreSet` alone.

    The crossing is interpolated linearly between the two adjacent operating
    points that bracket it; if some operating point has FRR == FAR exactly,
    the lowest such threshold is used.
    """
    thr, far, frr = operating_points(bona, spoof)
    d = frr - far
    k = int(np.argmax(d >= 0))
    if d[k] == 0:
        return EerResult(float(frr[k]), float(thr[k]))
    lam = -d[k - 1] / (d[k] - d[k - 1])
    eer = frr[k - 1] + lam * (frr[k] - frr[k - 1])
    t = thr[k - 1] + lam * (thr[k] - thr[k - 1]) if np.isfinite(thr[k]) else thr[k - 1]
    return EerResult(float(eer), float(t))


@dataclass
class DetPoint:
    threshold: float
    far: float
    frr: float
    probit_far: float
    probit_frr: float


def probit(p, eps: float = 1e-6):
    return norm.ppf(np.clip(p, eps, 1.0 - eps))


def det_points(bona, spoof=None) -> list:
    """One DET operating point per distinct threshold (plus reject-all)."""
    thr, far, frr = operating_points(bona, spoof)
    pf, pr = probit(far), probit(frr)
    return [DetPoint(float(t), float(a), float(r), float(x), float(y))
            for t, a, r, x, y in zip(thr, far, frr, pf, pr)]


# t-DCF ---------------------------------------------------------------------

@dataclass
class TdcfParams:
    """Priors, costs and ASV error rates of the tandem cost function.

    ``version`` selects the ASVspoof 2019 form (``"2019"``) or the revised
    form with a constant ASV-only term (``"2021"``); ``C_fa_spoof_asv`` is
    only used by the latter.
    """

    pi_tar: float = 0.9405
    pi_non: float = 0.0095
    pi_spoof: float = 0.05
    C_miss_asv: float = 1.0
    C_fa_asv: float = 10.0
    C_miss_cm: float = 1.0
    C_fa_cm: float = 10.0
    C_fa_spoof_asv: float = 10.0
    P_miss_asv: float = 0.0
    P_fa_asv: float = 0.0
    P_miss_spoof_asv: float = 0.0
    version: str = "2019"

    def __post_init__(self):
        priors = (self.pi_tar, self.pi_non, self.pi_spoof)
        if any(p <= 0 for p in priors):
            raise ConfigError("priors must be positive", "tdcf.pi_tar")
        if abs(sum(priors) - 1.0) > 1e-9:
            raise ConfigError(f"priors sum to {sum(priors)}, not 1", "tdcf.pi_tar")
        for name in ("C_miss_asv", "C_fa_asv", "C_miss_cm", "C_fa_cm", "C_fa_spoof_asv"):
            if getattr(self, name) <= 0:
                raise ConfigError("costs must be positive", f"tdcf.{name}")
        for name in ("P_miss_asv", "P_fa_asv", "P_miss_spoof_asv"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError("rates must lie in [0, 1]", f"tdcf.{name}")
        if self.version not in ("2019", "2021"):
            raise ConfigError("version must be '2019' or '2021'", "tdcf.version")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TdcfParams":
        d = {k: v for k, v in d.items() if not k.startswith("_")}
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "tdcf")
        if "version" in d:
            d["version"] = str(d["version"])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TdcfParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_asv_rates(self, rates: dict) -> "TdcfParams":
        return TdcfParams.from_dict({**self.to_dict(), **rates})

    def constants(self) -> tuple:
        """``(C0, C1, C2)`` such that t-DCF = C0 + C1*P_miss_cm + C2*P_fa_cm."""
        if self.version == "2019":
            c0 = 0.0
            c1 = (self.pi_tar * (self.C_miss_cm - self.C_miss_asv * self.P_miss_asv)
                  - self.pi_non * self.C_fa_asv * self.P_fa_asv)
            c2 = self.C_fa_cm * self.pi_spoof * (1.0 - self.P_miss_spoof_asv)
        else:
            c0 = self.pi_tar * self.C_miss_asv * self.P_miss_asv + self.pi_non * self.C_fa_asv * self.P_fa_asv
            c1 = self.pi_tar * self.C_miss_asv - c0
            c2 = self.pi_spoof * self.C_fa_spoof_asv * (1.0 - self.P_miss_spoof_asv)
        return c0, c1, c2

    def normalizer(self) -> float:
        c0, c1, c2 = self.constants()
        return c0 + min(c1, c2)


def default_tdcf_params() -> TdcfParams:
    """Cost model shipped in ``tdcf_asvspoof2019.json``."""
    text = resources.files(__package__).joinpath("tdcf_asvspoof2019.json").read_text()
    return TdcfParams.from_dict(json.loads(text))


@dataclass
class TdcfResult:
    min_tdcf: float
    threshold: float


def tdcf_curve(bona, spoof, p: TdcfParams):
    """Normalized t-DCF at every operating point; returns ``(thresholds, values)``."""
    c0, c1, c2 = p.constants()
    if c1 <= 0 or c2 <= 0:
        raise ParameterError(f"degenerate t-DCF constants C1={c1:.6g}, C2={c2:.6g}", "tdcf")
    thr, far, frr = operating_points(bona, spoof)
    return thr, (c0 + c1 * frr + c2 * far) / p.normalizer()


def compute_min_tdcf(bona, spoof, p: Optional[TdcfParams] = None) -> TdcfResult:
    p = p or default_tdcf_params()
    thr, values = tdcf_curve(bona, spoof, p)
    k = int(np.argmin(values))
    return TdcfResult(float(values[k]), float(thr[k]))


def asv_error_rates(target, nontarget, spoof) -> dict:
    """ASV miss/false-alarm rates at the ASV's own EER threshold."""
    target = np.asarray(target, dtype=np.float64)
    nontarget = np.asarray(nontarget, dtype=np.float64)
    spoof = np.asarray(spoof, dtype=np.float64)
    if spoof.size == 0:
        raise MetricError("ASV scores contain no spoof trials")
    thr = compute_eer(target, nontarget).threshold
    return {
        "P_miss_asv": float(np.mean(target < thr)),
        "P_fa_asv": float(np.mean(nontarget >= thr)),
        "P_miss_spoof_asv": float(np.mean(spoof < thr)),
    }

"""Windowed majority-voting ensemble over base detectors, plus its risk model.

A member votes +1 at instant i when it emitted a drift at some j with
i - W < j <= i (W = the vote window). The ensemble declares a drift at the
first instant where at least ceil((N+1)/2) members vote +1; all recorded
firings are then cleared so one cluster of member firings produces exactly
one ensemble drift.

The analysis layer treats the vote average phi in [-1, +1] as the ensemble
score, decides +1 / reject / -1 against a rejection threshold t, and bounds
the decision risk with a Cantelli-style inequality driven by mu_z = E[y*phi]
and the average pairwise correlation between members.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .detectors import DETECTOR_NAMES, Signal, make_detector
from .errors import ConfigError, DataError, ParameterError

__all__ = [
    "PRESETS",
    "EnsembleConfig",
    "VotingEnsemble",
    "ensemble_score",
    "decide",
    "risk_upper_bound",
    "empirical_risk",
    "pairwise_correlation",
]

# member sets that cover each drift shape well; vote windows sized for
# ~10k-100k instance streams (2000) and ~50k-sample business data (1000)
PRESETS = {
    "abrupt": ("adwin", "hddm_a", "kswin"),
    "gradual": ("hddm_a", "hddm_w", "ph"),
}
DEFAULT_WINDOW = 2000
COMPACT_WINDOW = 1000


@dataclass(frozen=True)
class EnsembleConfig:
    """Members, vote window and rejection threshold of a voting ensemble."""

    members: tuple[str, ...]
    window: int = DEFAULT_WINDOW
    threshold: float = 0.0
    member_configs: tuple[dict, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if len(self.members) < 2:
            raise ConfigError("an ensemble needs at least 2 members")
        for m in self.members:
            if m not in DETECTOR_NAMES:
                raise ConfigError(f"unknown member {m!r}")
        if self.window < 1:
            raise ConfigError("vote window must be >= 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")
        if self.member_configs and len(self.member_configs) != len(self.members):
            raise ConfigError("member_configs must match members")

    @classmethod
    def preset(cls, name: str, window: int | None = None, **kwargs) -> "EnsembleConfig":
        key = name.strip().lower()
        if key not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
        return cls(members=PRESETS[key], window=window or DEFAULT_WINDOW, **kwargs)

    @property
    def quorum(self) -> int:
        base = (len(self.members) + 2) // 2  # ceil((N+1)/2)
        if self.threshold > 0.0:
            n = len(self.members)
            base = max(base, math.ceil(n * (1.0 + self.threshold) / 2.0))
        return base


class VotingEnsemble:
    """Stateful windowed majority vote over per-member drift signals.

    Can either own its member detectors (``update`` feeds the observation to
    every member) or consume externally produced member outputs
    (``update_from_signals``).
    """

    def __init__(self, config: EnsembleConfig, detectors=None):
        self.config = config
        if detectors is None:
            cfgs = config.member_configs or tuple({} for _ in config.members)
            detectors = [make_detector(name, **cfg) for name, cfg in zip(config.members, cfgs)]
        if len(detectors) != len(config.members):
            raise ConfigError("detector list must match the members list")
        self.detectors = list(detectors)
        self.index = -1
        self.last_fired = [None] * len(self.detectors)
        self.member_drifts: list[list[int]] = [[] for _ in self.detectors]
        self.drift_indices: list[int] = []
        self.vote_log: list[tuple[int, int, bool]] = []  # (index, bitmask, drift)

    # -- core vote rule ---------------------------------------------------
    def update_from_signals(self, signals, index: int | None = None) -> Signal:
        """Advance one instant given the members' signals at that instant."""
        if len(signals) != len(self.detectors):
            raise DataError("one signal per member required")
        if index is None:
            index = self.index + 1
        if index <= self.index:
            raise DataError(f"instance index {index} not increasing (at {self.index})")
        self.index = index
        for m, sig in enumerate(signals):
            if sig == Signal.DRIFT:
                self.last_fired[m] = index
                self.member_drifts[m].append(index)
        window = self.config.window
        votes = 0
        bitmask = 0
        for m, fired in enumerate(self.last_fired):
            if fired is not None and index - window < fired <= index:
                votes += 1
                bitmask |= 1 << m
        drift = votes >= self.config.quorum
        if drift:
            self.last_fired = [None] * len(self.detectors)
            self.drift_indices.append(index)
        if bitmask or drift:
            self.vote_log.append((index, bitmask, drift))
        return Signal.DRIFT if drift else Signal.IN_CONTROL

    def update(self, x) -> Signal:
        """Feed one observation to every member, then apply the vote rule."""
        signals = [det.update(x) for det in self.detectors]
        return self.update_from_signals(signals)

    def reset(self):
        for det in self.detectors:
            det.reset()
        self.index = -1
        self.last_fired = [None] * len(self.detectors)
        self.member_drifts = [[] for _ in self.detectors]
        self.drift_indices = []
        self.vote_log = []

    def write_event_log(self, path) -> None:
        """Sparse CSV of vote activity: index, members-active bitmask, decision."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("index,members_bitmask,drift\n")
            for index, bitmask, drift in self.vote_log:
                fh.write(f"{index},{bitmask},{1 if drift else 0}\n")


def member_vote_matrix(member_drifts, n: int, window: int) -> np.ndarray:
    """Dense +-1 vote matrix (members x instants) from firing indices.

    A member votes +1 at instant i when it fired at some j with
    i - window < j <= i.
    """
    votes = -np.ones((len(member_drifts), n), dtype=np.int8)
    for m, fired in enumerate(member_drifts):
        for j in fired:
            votes[m, j : min(n, j + window)] = 1
    return votes


def ensemble_score(votes) -> float:
    """Average of +-1 member votes; lands in [-1, +1]."""
    votes = list(votes)
    if not votes:
        raise ConfigError("vote list is empty")
    if any(v not in (-1, 1) for v in votes):
        raise DataError("votes must be +1 or -1")
    return sum(votes) / len(votes)


def decide(phi: float, t: float) -> int | str:
    """Three-way decision: -1 below -t, 'reject' inside (-t, t), +1 at or
    above t. At t = 0 this reduces to the sign with 0 mapped to +1."""
    if t < 0:
        raise ParameterError("threshold must be >= 0")
    # the >= branch wins at phi == t == 0, so t = 0 reduces to a sign decision
    if phi >= t:
        return 1
    if phi <= -t:
        return -1
    return "reject"


def risk_upper_bound(mu_z: float, rho_bar: float, c1: float, c2: float = 0.0,
                     t: float = 0.0) -> float:
    """Cantelli-style upper bound on the ensemble decision risk.

    With var(z) <= rho_bar * (1 - mu_z^2), the bound is
    (c1 - c2) / (1 + (mu_z + t)^2 / (rho_bar (1 - mu_z^2)))
    + c2 / (1 + (mu_z - t)^2 / (rho_bar (1 - mu_z^2)))
    and requires mu_z > t. At t = 0 the two terms merge into
    c1 / (1 + mu_z^2 / (rho_bar (1 - mu_z^2))).
    """
    if not -1.0 < mu_z < 1.0:
        raise ParameterError("mu_z must be in (-1, 1)")
    if not 0.0 <= rho_bar <= 1.0:
        raise ParameterError("rho_bar must be in [0, 1]")
    if c1 < c2 or c2 < 0.0:
        raise ParameterError("costs must satisfy c1 >= c2 >= 0")
    if t < 0.0:
        raise ParameterError("threshold must be >= 0")
    if mu_z <= t:
        raise ParameterError(f"bound requires mu_z > t (mu_z={mu_z}, t={t})")
    if rho_bar == 0.0:
        warnings.warn("rho_bar = 0: returning the limiting bound 0", stacklevel=2)
        return 0.0
    spread = rho_bar * (1.0 - mu_z * mu_z)
    term1 = (c1 - c2) / (1.0 + (mu_z + t) ** 2 / spread)
    term2 = c2 / (1.0 + (mu_z - t) ** 2 / spread)
    return term1 + term2


def empirical_risk(z_trace, t: float, c1: float, c2: float) -> tuple[float, float, float]:
    """(P_E, P_R, R) from a trace of z = y * phi values.

    P_E = fraction(z <= -t), P_R = fraction(-t < z < t),
    R = c1 * P_E + c2 * P_R.
    """
    z = np.asarray(z_trace, dtype=float)
    if z.size == 0:
        raise DataError("z trace is empty")
    if (np.abs(z) > 1.0).any():
        raise DataError("z values must lie in [-1, 1]")
    if t < 0.0:
        raise ParameterError("threshold must be >= 0")
    p_e = float(np.mean(z <= -t))
    p_r = float(np.mean((z > -t) & (z < t)))
    return p_e, p_r, c1 * p_e + c2 * p_r


def pairwise_correlation(vote_histories) -> float:
    """Mean Pearson correlation over all member pairs.

    Pairs involving a constant history have undefined correlation; they are
    excluded with a warning. All pairs undefined is an error.
    """
    histories = [np.asarray(h, dtype=float) for h in vote_histories]
    if len(histories) < 2:
        raise DataError("need at least 2 members")
    length = histories[0].size
    if any(h.size != length for h in histories):
        raise DataError("vote histories must have equal length")
    values = []
    skipped = 0
    for a in range(len(histories)):
        for b in range(a + 1, len(histories)):
            sa = float(np.std(histories[a]))
            sb = float(np.std(histories[b]))
            if sa == 0.0 or sb == 0.0:
                skipped += 1
                continue
            values.append(float(np.corrcoef(histories[a], histories[b])[0, 1]))
    if skipped:
        warnings.warn(f"{skipped} constant-history pair(s) excluded from rho_bar",
                      stacklevel=2)
    if not values:
        raise DataError("no pair has nonzero variance; rho_bar undefined")
    return float(np.mean(values))


@dataclass
class RiskReport:
    """Empirical risk numbers plus the analytic bound for one run."""

    mu_z: float
    rho_bar: float | None
    p_e: float
    p_r: float
    risk: float
    bound: float | None
    c1: float
    c2: float
    t: float
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "mu_z": self.mu_z,
            "rho_bar": self.rho_bar,
            "p_e": self.p_e,
            "p_r": self.p_r,
            "risk": self.risk,
            "bound": self.bound,
            "c1": self.c1,
            "c2": self.c2,
            "t": self.t,
            "notes": list(self.notes),
        }


def risk_report(member_votes, truth_votes, *, c1: float = 1.0, c2: float = 0.5,
                t: float = 0.0) -> RiskReport:
    """Assemble the risk report from per-instant member votes and truth.

    ``member_votes`` is one +-1 sequence per member; ``truth_votes`` the
    +-1 ground truth per instant (drift active or not). z is the product of
    the truth and the vote average.
    """
    votes = np.asarray(member_votes, dtype=float)
    y = np.asarray(truth_votes, dtype=float)
    if votes.ndim != 2 or votes.shape[1] != y.size:
        raise DataError("member votes must be (members, instants) aligned with truth")
    phi = votes.mean(axis=0)
    z = y * phi
    mu_z = float(z.mean())
    p_e, p_r, risk = empirical_risk(z, t, c1, c2)
    notes = []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rho = pairwise_correlation(votes)
    except DataError as exc:
        rho = None
        notes.append(f"rho_bar undefined: {exc}")
    bound = None
    if rho is not None and rho > 0.0 and mu_z > t:
        bound = risk_upper_bound(mu_z, rho, c1, c2, t)
    elif rho is not None and mu_z <= t:
        notes.append("bound inapplicable: mu_z <= t")
    return RiskReport(mu_z=mu_z, rho_bar=rho, p_e=p_e, p_r=p_r, risk=risk,
                      bound=bound, c1=c1, c2=c2, t=t, notes=tuple(notes))

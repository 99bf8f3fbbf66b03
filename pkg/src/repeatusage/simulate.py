"""Synthetic usage data from the gamma-Poisson population model.

Each repeat user has a Poisson usage rate drawn from a gamma distribution,
so usage counts are negative binomial; users with zero usage are never
observed and are discarded. A share of the observed users are one-time users
with exactly one incidence. All randomness flows from ``spec.seed``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import NbdParams, nbd_summary
from .estimation import FrequencyTable
from .sessionize import DEFAULT_TIMEOUT, UsageEvent

__all__ = [
    "PopulationSpec",
    "sample_user_counts",
    "sample_counts",
    "sample_lsd_otb",
    "events_from_counts",
    "sample_events",
]

YEAR = 365 * 86400


@dataclass(frozen=True)
class PopulationSpec:
    """Generator settings for one item.

    ``n_users`` is the number of *observed* users (usage >= 1) to produce.
    ``gamma_shape`` and ``mean_rate`` are the NBD exponent ``k`` and mean ``m``
    over the whole population, non-users included.
    """

    n_users: int
    gamma_shape: float
    mean_rate: float
    otb_fraction: float = 0.0
    period_length: float = YEAR
    seed: int = 0

    def __post_init__(self):
        if self.n_users <= 0:
            raise ValueError("n_users must be positive")
        if self.gamma_shape <= 0 or self.mean_rate <= 0:
            raise ValueError("gamma_shape and mean_rate must be positive")
        if not 0.0 <= self.otb_fraction < 1.0:
            raise ValueError("otb_fraction must lie in [0, 1)")

    @property
    def nbd(self) -> NbdParams:
        return NbdParams(self.mean_rate, self.gamma_shape)

    @classmethod
    def for_lsd(cls, q: float, n_users: int, otb_fraction: float = 0.0, gamma_shape: float = 0.01, **kwargs):
        """Spec whose zero-truncated NBD approximates LSD(q) (small ``gamma_shape``)."""
        return cls(n_users, gamma_shape, q * gamma_shape / (1.0 - q), otb_fraction, **kwargs)


def _positive_nbd(rng: np.random.Generator, n: int, m: float, k: float) -> np.ndarray:
    b, _ = nbd_summary(NbdParams(m, k))
    out: list[np.ndarray] = []
    need = n
    while need > 0:
        batch = int(min(math.ceil(1.2 * need / max(b, 1e-12)) + 64, 50_000_000))
        mu = rng.gamma(k, m / k, size=batch)
        counts = rng.poisson(mu)
        counts = counts[counts > 0]
        out.append(counts[:need])
        need -= len(out[-1])
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def sample_user_counts(spec: PopulationSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """One usage count per observed user: one-time users first, then repeat users."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    n_otb = int(rng.binomial(spec.n_users, spec.otb_fraction)) if spec.otb_fraction > 0 else 0
    repeat = _positive_nbd(rng, spec.n_users - n_otb, spec.mean_rate, spec.gamma_shape)
    return np.concatenate([np.ones(n_otb, dtype=np.int64), repeat.astype(np.int64)])


def sample_counts(spec: PopulationSpec, period_id: str = "") -> FrequencyTable:
    """Frequency table of ``spec.n_users`` observed users."""
    return FrequencyTable.from_observations(sample_user_counts(spec), period_id)


def sample_lsd_otb(n_users: int, q: float, pi: float = 0.0, seed: int = 0, period_id: str = "") -> FrequencyTable:
    """Exact LSD/OTB draws (no gamma-Poisson approximation)."""
    rng = np.random.default_rng(seed)
    x = rng.logseries(q, size=n_users)
    if pi > 0:
        x[rng.random(n_users) < pi] = 1
    return FrequencyTable.from_observations(x, period_id)


def events_from_counts(
    counts: np.ndarray,
    item_id: str,
    start: float,
    end: float,
    rng: np.random.Generator,
    timeout: int = DEFAULT_TIMEOUT,
    hits_per_session: int = 1,
    user_prefix: str | None = None,
) -> list[UsageEvent]:
    """Place each user's incidences in ``[start, end)``, one session apiece.

    The range is cut into slots of two timeouts; a user's incidences go to
    distinct random slots at a jittered offset, which keeps consecutive
    incidences at least ``timeout`` apart. Extra hits within a session land
    shortly after its first event.
    """
    timeout = int(timeout)
    if end <= start or len(counts) == 0:
        return []
    n_slots = int((end - start) // (2 * timeout))
    if counts.max() > n_slots:
        raise ValueError(f"a user with {counts.max()} incidences does not fit {n_slots} slots")
    prefix = user_prefix if user_prefix is not None else item_id
    jitter = max(timeout // 2, 1)
    spread = max(timeout // 4, 1)
    events = []
    for i, r in enumerate(counts):
        user = f"{prefix}-u{i}"
        slots = np.sort(rng.choice(n_slots, size=int(r), replace=False))
        base = start + slots * 2 * timeout + rng.integers(0, jitter, size=len(slots))
        for t in base:
            events.append(UsageEvent(float(t), user, item_id))
            for extra in rng.integers(1, spread + 1, size=hits_per_session - 1):
                events.append(UsageEvent(float(t + extra), user, item_id))
    events.sort(key=lambda e: (e.timestamp, e.user_key))
    return events


def sample_events(
    spec: PopulationSpec,
    item_id: str,
    start: float = 0.0,
    end: float | None = None,
    timeout: int = DEFAULT_TIMEOUT,
    hits_per_session: int = 1,
) -> list[UsageEvent]:
    """Synthetic log events for one item.

    Uses the same random stream as :func:`sample_counts`, so sessionizing the
    events reproduces ``sample_counts(spec)`` exactly.
    """
    end = start + spec.period_length if end is None else end
    if end <= start:
        return []
    rng = np.random.default_rng(spec.seed)
    counts = sample_user_counts(spec, rng)
    return events_from_counts(counts, item_id, start, end, rng, timeout, hits_per_session)

"""Dueling policies: Sup-KLUCB, RUCB, Double Thompson Sampling, uniform random.

Every policy follows the same protocol: ``propose(n)`` returns a canonical
pair ``(i, j)`` with ``i <= j``, ``observe(w)`` reports whether ``i`` won
(``w = 1``) and ``recommend()`` returns the current winner estimate.

The per-round selection and update rules are numba kernels that take a
``numpy.random.Generator``.  numba reproduces numpy's streams exactly, so the
object-level protocol and the fused simulation loops (``run_fused``) consume
the same random numbers and yield identical traces.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .kl import kl_ucb_index_raw
from .pairs import PairIndexMap

RUCB_DEFAULT_ALPHA = 1.01
DTS_DEFAULT_ALPHA = 0.51


class PolicyProtocolError(RuntimeError):
    """propose/observe called out of order."""


# ---------------------------------------------------------------------------
# shared kernels


@numba.njit(cache=True, nogil=True)
def _argmax_random_tie(values, rng):
    best = values[0]
    count = 1
    for c in range(1, values.shape[0]):
        v = values[c]
        if v > best:
            best = v
            count = 1
        elif v == best:
            count += 1
    if count == 1:
        for c in range(values.shape[0]):
            if values[c] == best:
                return c
    pick = rng.integers(0, count)
    for c in range(values.shape[0]):
        if values[c] == best:
            if pick == 0:
                return c
            pick -= 1
    return -1


@numba.njit(cache=True, nogil=True)
def _duel(p, i, j, env_rng):
    return 1 if env_rng.random() < p[i, j] else 0


@numba.njit(cache=True, nogil=True)
def _pair_regret(scores, winner, i, j):
    return (2.0 * scores[winner] - scores[i] - scores[j]) / 2.0


@numba.njit(cache=True, nogil=True)
def _record_wins(wins, i, j, w):
    if i != j:
        wins[i, j] += w
        wins[j, i] += 1 - w


def _empirical_copeland_winner(wins: np.ndarray) -> int:
    beats = (wins > wins.T).sum(axis=1)
    return int(np.argmax(beats))


class DuelPolicy(ABC):
    """Propose a pair, observe one duel outcome, repeat."""

    name: str = "policy"

    def __init__(self, k: int):
        if k < 2:
            raise ValueError(f"need at least 2 arms, got k={k}")
        self.k = k
        self._pending: Optional[tuple[int, int]] = None

    def propose(self, n: int) -> tuple[int, int]:
        if self._pending is not None:
            raise PolicyProtocolError("propose called twice without observe")
        pair = self._propose(n)
        self._pending = pair
        return pair

    def observe(self, outcome: int) -> None:
        if self._pending is None:
            raise PolicyProtocolError("observe called without a pending proposal")
        if outcome not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {outcome!r}")
        i, j = self._pending
        self._pending = None
        self._observe(i, j, int(outcome))

    @abstractmethod
    def _propose(self, n: int) -> tuple[int, int]: ...

    @abstractmethod
    def _observe(self, i: int, j: int, w: int) -> None: ...

    @abstractmethod
    def recommend(self) -> int: ...

    def run_fused(self, p, env_rng, scores, winner, start, horizon, checkpoints):
        """Play rounds ``start..horizon`` inside one compiled loop.

        Returns cumulative regret (from ``start``) at each round listed in
        ``checkpoints``, or ``None`` when the policy has no fused loop.
        """
        return None


# ---------------------------------------------------------------------------
# Sup-KLUCB


def default_constants(k: int) -> tuple[float, float]:
    """Exploration constants ``c1 = 2/K`` and ``c2 = 3/K + 40/(K-2)^2``."""
    if k <= 2:
        raise ValueError(
            f"default Sup-KLUCB constants are singular at k={k}: c2 = 3/K + 40/(K-2)^2 "
            "divides by zero for K = 2; pass c1 and c2 explicitly"
        )
    return 2.0 / k, 3.0 / k + 40.0 / (k - 2) ** 2


@dataclass(frozen=True)
class SupKlucbConfig:
    c1: float
    c2: float
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.c1 > 0:
            raise ValueError(f"c1 must be positive, got {self.c1}")
        if not self.c2 >= 0:
            raise ValueError(f"c2 must be nonnegative, got {self.c2}")

    @classmethod
    def defaults(cls, k: int, seed: Optional[int] = None) -> "SupKlucbConfig":
        c1, c2 = default_constants(k)
        return cls(c1, c2, seed)


@numba.njit(cache=True, nogil=True)
def exploration_threshold(n, kbar, c1, c2):
    m = n - kbar
    return c1 * math.log(m) + c2 * math.log(math.log(m) + 1.0)


@numba.njit(cache=True, nogil=True)
def _pair_sign(w, n):
    # +1: first arm ahead, -1: second arm ahead, 0: empirical tie
    d = 2 * w - n
    if d > 0:
        return 1
    if d < 0:
        return -1
    return 0


@numba.njit(cache=True, nogil=True)
def _suk_indices(n, k, kbar, n_plays, beats, first, second, c1, c2, out):
    tau = exploration_threshold(n, kbar, c1, c2)
    inv = 1.0 / (k - 1)
    for c in range(kbar):
        mu = (beats[first[c]] * inv) * (beats[second[c]] * inv)
        out[c] = kl_ucb_index_raw(n_plays[c], mu, tau)


@numba.njit(cache=True, nogil=True)
def _suk_select(n, k, kbar, n_plays, beats, first, second, c1, c2, rng, buf):
    if n <= kbar:
        return n - 1
    _suk_indices(n, k, kbar, n_plays, beats, first, second, c1, c2, buf)
    return _argmax_random_tie(buf, rng)


@numba.njit(cache=True, nogil=True)
def _suk_update(a, w, n_plays, wins, beats, first, second):
    i = first[a]
    j = second[a]
    if i == j:
        n_plays[a] += 1
        wins[a] += w
        return
    before = _pair_sign(wins[a], n_plays[a])
    n_plays[a] += 1
    wins[a] += w
    after = _pair_sign(wins[a], n_plays[a])
    if before == after:
        return
    if before == 1:
        beats[i] -= 1
    elif before == -1:
        beats[j] -= 1
    if after == 1:
        beats[i] += 1
    elif after == -1:
        beats[j] += 1


@numba.njit(cache=True, nogil=True)
def _suk_loop(k, kbar, n_plays, wins, beats, first, second, c1, c2, rng,
              p, env_rng, scores, winner, start, horizon, checkpoints):
    buf = np.empty(kbar)
    out = np.empty(checkpoints.shape[0])
    ci = 0
    while ci < checkpoints.shape[0] and checkpoints[ci] < start:
        ci += 1
    cum = 0.0
    for n in range(start, horizon + 1):
        a = _suk_select(n, k, kbar, n_plays, beats, first, second, c1, c2, rng, buf)
        i = first[a]
        j = second[a]
        w = _duel(p, i, j, env_rng)
        _suk_update(a, w, n_plays, wins, beats, first, second)
        cum += _pair_regret(scores, winner, i, j)
        if ci < checkpoints.shape[0] and checkpoints[ci] == n:
            out[ci] = cum
            ci += 1
    return out


def estimate_sup_copeland(pairs: PairIndexMap, n_plays: np.ndarray, wins: np.ndarray) -> np.ndarray:
    """Empirical Copeland scores from per-pair counters, recomputed from scratch.

    ``wins[c]`` counts wins of the lower-numbered arm of pair ``c``.  Every
    distinct-arm pair must have been played at least once.
    """
    k = pairs.k
    idx = pairs.index_matrix()
    n = n_plays[idx]
    if np.any(n[~np.eye(k, dtype=bool)] == 0):
        raise ValueError("every pair of distinct arms must be played before estimating scores")
    lower_wins = wins[idx]
    upper = np.triu(np.ones((k, k), dtype=bool), 1)
    # p_hat[i, j] > 1/2, written in integers: 2 * W > N for i < j, 2 * W < N for i > j
    beats_upper = upper & (2 * lower_wins > n)
    beats_lower = upper.T & (2 * lower_wins < n)
    return (beats_upper | beats_lower).sum(axis=1) / (k - 1)


class SupKLUCB(DuelPolicy):
    """Copeland dueling bandit solved as a K(K+1)/2-armed KL-UCB problem.

    Each unordered pair, self-pairs included, is one arm whose mean is the
    product of its members' empirical Copeland scores.  The first K(K+1)/2
    rounds play every pair once, in flat-index order.
    """

    name = "sup-klucb"

    def __init__(self, k: int, config: Optional[SupKlucbConfig] = None, seed: Optional[int] = None):
        super().__init__(k)
        if config is None:
            config = SupKlucbConfig.defaults(k, seed)
        self.config = config
        self.pairs = PairIndexMap(k)
        kbar = self.pairs.kbar
        self.n_plays = np.zeros(kbar, dtype=np.int64)
        self.wins = np.zeros(kbar, dtype=np.int64)
        self.beats = np.zeros(k, dtype=np.int64)
        self.rng = np.random.default_rng(config.seed if seed is None else seed)
        self._buf = np.empty(kbar)
        self._last_index: Optional[int] = None

    @property
    def sup_hat(self) -> np.ndarray:
        return self.beats / (self.k - 1)

    @property
    def mu_hat(self) -> np.ndarray:
        s = self.sup_hat
        return s[self.pairs.first] * s[self.pairs.second]

    def indices(self, n: int) -> np.ndarray:
        """KL-UCB index of every pair at round ``n`` (``n`` past initialisation)."""
        out = np.empty(self.pairs.kbar)
        _suk_indices(n, self.k, self.pairs.kbar, self.n_plays, self.beats,
                     self.pairs.first, self.pairs.second, self.config.c1, self.config.c2, out)
        return out

    def select(self, n: int) -> int:
        return int(_suk_select(n, self.k, self.pairs.kbar, self.n_plays, self.beats,
                               self.pairs.first, self.pairs.second,
                               self.config.c1, self.config.c2, self.rng, self._buf))

    def _propose(self, n):
        a = self.select(n)
        self._last_index = a
        return int(self.pairs.first[a]), int(self.pairs.second[a])

    def _observe(self, i, j, w):
        a = self.pairs.pair_to_index(i, j)
        _suk_update(a, w, self.n_plays, self.wins, self.beats, self.pairs.first, self.pairs.second)

    def recommend(self) -> int:
        return int(np.argmax(self.beats))

    def run_fused(self, p, env_rng, scores, winner, start, horizon, checkpoints):
        if self._pending is not None:
            raise PolicyProtocolError("cannot run a fused loop with a pending proposal")
        return _suk_loop(self.k, self.pairs.kbar, self.n_plays, self.wins, self.beats,
                         self.pairs.first, self.pairs.second, self.config.c1, self.config.c2,
                         self.rng, p, env_rng, scores, winner, start, horizon, checkpoints)


# ---------------------------------------------------------------------------
# RUCB


@numba.njit(cache=True, nogil=True)
def _confidence_bounds(wins, alpha, t, upper, lower):
    k = wins.shape[0]
    log_t = math.log(t)
    for i in range(k):
        for j in range(k):
            if i == j:
                upper[i, j] = 0.5
                lower[i, j] = 0.5
                continue
            n = wins[i, j] + wins[j, i]
            if n == 0:
                upper[i, j] = 1.0
                lower[i, j] = 0.0
            else:
                mean = wins[i, j] / n
                radius = math.sqrt(alpha * log_t / n)
                upper[i, j] = mean + radius
                lower[i, j] = mean - radius


@numba.njit(cache=True, nogil=True)
def _rucb_select(wins, alpha, t, rng, upper, lower, buf):
    k = wins.shape[0]
    _confidence_bounds(wins, alpha, t, upper, lower)
    n_cand = 0
    for i in range(k):
        ok = True
        for j in range(k):
            if upper[i, j] < 0.5:
                ok = False
                break
        buf[i] = 1.0 if ok else 0.0
        if ok:
            n_cand += 1
    if n_cand == 0:
        c = rng.integers(0, k)
    else:
        c = _argmax_random_tie(buf, rng)
    for j in range(k):
        buf[j] = upper[j, c]
    d = _argmax_random_tie(buf, rng)
    return c, d


@numba.njit(cache=True, nogil=True)
def _rucb_loop(wins, alpha, rng, p, env_rng, scores, winner, start, horizon, checkpoints):
    k = wins.shape[0]
    upper = np.empty((k, k))
    lower = np.empty((k, k))
    buf = np.empty(k)
    out = np.empty(checkpoints.shape[0])
    ci = 0
    while ci < checkpoints.shape[0] and checkpoints[ci] < start:
        ci += 1
    cum = 0.0
    for t in range(start, horizon + 1):
        c, d = _rucb_select(wins, alpha, t, rng, upper, lower, buf)
        i = min(c, d)
        j = max(c, d)
        w = _duel(p, i, j, env_rng)
        _record_wins(wins, i, j, w)
        cum += _pair_regret(scores, winner, i, j)
        if ci < checkpoints.shape[0] and checkpoints[ci] == t:
            out[ci] = cum
            ci += 1
    return out


class _WinMatrixPolicy(DuelPolicy):
    def __init__(self, k: int, seed: Optional[int] = None):
        super().__init__(k)
        self.wins = np.zeros((k, k), dtype=np.int64)
        self.rng = np.random.default_rng(seed)

    def _observe(self, i, j, w):
        _record_wins(self.wins, i, j, w)

    def recommend(self) -> int:
        return _empirical_copeland_winner(self.wins)


class RUCB(_WinMatrixPolicy):
    """Relative UCB.

    The first arm is drawn uniformly among arms whose optimistic preference
    against every other arm is at least 1/2 (uniform over all arms if none
    qualify); the second arm maximises the optimistic preference against it.
    """

    name = "rucb"

    def __init__(self, k: int, alpha: float = RUCB_DEFAULT_ALPHA, seed: Optional[int] = None):
        if not alpha > 0.5:
            raise ValueError(f"RUCB needs alpha > 0.5, got {alpha}")
        super().__init__(k, seed)
        self.alpha = alpha
        self._upper = np.empty((k, k))
        self._lower = np.empty((k, k))
        self._buf = np.empty(k)

    def upper_bounds(self, t: int) -> np.ndarray:
        _confidence_bounds(self.wins, self.alpha, t, self._upper, self._lower)
        return self._upper.copy()

    def candidates(self, t: int) -> np.ndarray:
        u = self.upper_bounds(t)
        return np.flatnonzero((u >= 0.5).all(axis=1))

    def _propose(self, n):
        c, d = _rucb_select(self.wins, self.alpha, n, self.rng, self._upper, self._lower, self._buf)
        return (int(c), int(d)) if c <= d else (int(d), int(c))

    def run_fused(self, p, env_rng, scores, winner, start, horizon, checkpoints):
        if self._pending is not None:
            raise PolicyProtocolError("cannot run a fused loop with a pending proposal")
        return _rucb_loop(self.wins, self.alpha, self.rng, p, env_rng, scores, winner,
                          start, horizon, checkpoints)


# ---------------------------------------------------------------------------
# Double Thompson Sampling


@numba.njit(cache=True, nogil=True)
def _dts_select(wins, alpha, t, rng, upper, lower, theta, buf):
    k = wins.shape[0]
    _confidence_bounds(wins, alpha, t, upper, lower)

    # optimistic Copeland counts; candidates attain the maximum
    best = -1
    for i in range(k):
        cnt = 0
        for j in range(k):
            if j != i and upper[i, j] > 0.5:
                cnt += 1
        buf[i] = cnt
        if cnt > best:
            best = cnt

    # first sample: one Beta draw per unordered pair, row-major
    for i in range(k):
        theta[i, i] = 0.5
        for j in range(i + 1, k):
            x = rng.beta(wins[i, j] + 1.0, wins[j, i] + 1.0)
            theta[i, j] = x
            theta[j, i] = 1.0 - x
    for i in range(k):
        if buf[i] == best:
            cnt = 0
            for j in range(k):
                if theta[i, j] > 0.5:
                    cnt += 1
            buf[i] = cnt
        else:
            buf[i] = -1.0
    first = _argmax_random_tie(buf, rng)

    # second sample against the first arm, among arms not ruled out
    for i in range(k):
        if i == first:
            x = 0.5
        else:
            x = rng.beta(wins[i, first] + 1.0, wins[first, i] + 1.0)
        buf[i] = x if lower[i, first] <= 0.5 else -1.0
    second = _argmax_random_tie(buf, rng)
    return first, second


@numba.njit(cache=True, nogil=True)
def _dts_loop(wins, alpha, rng, p, env_rng, scores, winner, start, horizon, checkpoints):
    k = wins.shape[0]
    upper = np.empty((k, k))
    lower = np.empty((k, k))
    theta = np.empty((k, k))
    buf = np.empty(k)
    out = np.empty(checkpoints.shape[0])
    ci = 0
    while ci < checkpoints.shape[0] and checkpoints[ci] < start:
        ci += 1
    cum = 0.0
    for t in range(start, horizon + 1):
        a1, a2 = _dts_select(wins, alpha, t, rng, upper, lower, theta, buf)
        i = min(a1, a2)
        j = max(a1, a2)
        w = _duel(p, i, j, env_rng)
        _record_wins(wins, i, j, w)
        cum += _pair_regret(scores, winner, i, j)
        if ci < checkpoints.shape[0] and checkpoints[ci] == t:
            out[ci] = cum
            ci += 1
    return out


class DTS(_WinMatrixPolicy):
    """Double Thompson Sampling for Copeland dueling bandits.

    Confidence bounds prune the first arm to maximisers of the optimistic
    Copeland score; one posterior sample of the whole preference matrix picks
    the first arm among them, and a second sample of its column picks the
    opponent among arms whose lower bound does not already lose to it.
    """

    name = "dts"

    def __init__(self, k: int, alpha: float = DTS_DEFAULT_ALPHA, seed: Optional[int] = None):
        if not alpha > 0.5:
            raise ValueError(f"DTS needs alpha > 0.5, got {alpha}")
        super().__init__(k, seed)
        self.alpha = alpha
        self._upper = np.empty((k, k))
        self._lower = np.empty((k, k))
        self._theta = np.empty((k, k))
        self._buf = np.empty(k)

    def _propose(self, n):
        a1, a2 = _dts_select(self.wins, self.alpha, n, self.rng,
                             self._upper, self._lower, self._theta, self._buf)
        return (int(a1), int(a2)) if a1 <= a2 else (int(a2), int(a1))

    def run_fused(self, p, env_rng, scores, winner, start, horizon, checkpoints):
        if self._pending is not None:
            raise PolicyProtocolError("cannot run a fused loop with a pending proposal")
        return _dts_loop(self.wins, self.alpha, self.rng, p, env_rng, scores, winner,
                         start, horizon, checkpoints)


# ---------------------------------------------------------------------------
# uniform random baseline


@numba.njit(cache=True, nogil=True)
def _random_loop(wins, kbar, first, second, rng, p, env_rng, scores, winner,
                 start, horizon, checkpoints):
    out = np.empty(checkpoints.shape[0])
    ci = 0
    while ci < checkpoints.shape[0] and checkpoints[ci] < start:
        ci += 1
    cum = 0.0
    for t in range(start, horizon + 1):
        a = rng.integers(0, kbar)
        i = first[a]
        j = second[a]
        w = _duel(p, i, j, env_rng)
        _record_wins(wins, i, j, w)
        cum += _pair_regret(scores, winner, i, j)
        if ci < checkpoints.shape[0] and checkpoints[ci] == t:
            out[ci] = cum
            ci += 1
    return out


class RandomPolicy(_WinMatrixPolicy):
    """Uniformly random canonical pair every round."""

    name = "random"

    def __init__(self, k: int, seed: Optional[int] = None):
        super().__init__(k, seed)
        self.pairs = PairIndexMap(k)

    def _propose(self, n):
        a = int(self.rng.integers(0, self.pairs.kbar))
        return int(self.pairs.first[a]), int(self.pairs.second[a])

    def run_fused(self, p, env_rng, scores, winner, start, horizon, checkpoints):
        if self._pending is not None:
            raise PolicyProtocolError("cannot run a fused loop with a pending proposal")
        return _random_loop(self.wins, self.pairs.kbar, self.pairs.first, self.pairs.second,
                            self.rng, p, env_rng, scores, winner, start, horizon, checkpoints)


# ---------------------------------------------------------------------------

POLICIES = {
    SupKLUCB.name: SupKLUCB,
    RUCB.name: RUCB,
    DTS.name: DTS,
    RandomPolicy.name: RandomPolicy,
}


def make_policy(name: str, k: int, seed: Optional[int] = None, **params) -> DuelPolicy:
    """Build a policy by registry name.

    ``sup-klucb`` accepts ``c1``/``c2`` (both or neither); ``rucb`` and ``dts``
    accept ``alpha``.
    """
    if name == SupKLUCB.name:
        c1 = params.pop("c1", None)
        c2 = params.pop("c2", None)
        if params:
            raise ValueError(f"unknown sup-klucb parameters: {sorted(params)}")
        if (c1 is None) != (c2 is None):
            raise ValueError("sup-klucb needs both c1 and c2, or neither")
        config = SupKlucbConfig.defaults(k, seed) if c1 is None else SupKlucbConfig(c1, c2, seed)
        return SupKLUCB(k, config)
    if name in (RUCB.name, DTS.name):
        unknown = set(params) - {"alpha"}
        if unknown:
            raise ValueError(f"unknown {name} parameters: {sorted(unknown)}")
        return POLICIES[name](k, seed=seed, **params)
    if name == RandomPolicy.name:
        if params:
            raise ValueError(f"random policy takes no parameters, got {sorted(params)}")
        return RandomPolicy(k, seed=seed)
    raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}")

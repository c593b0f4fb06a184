"""Ground-truth dueling-bandit instances.

A :class:`PreferenceMatrix` holds ``p[i, j]``, the probability that arm ``i``
is preferred over arm ``j``.  Arms are 0-based throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np

SKEW_TOL = 1e-12
NEAR_HALF = 1e-9
DEFAULT_MAX_ATTEMPTS = 10_000

ScoreKind = Literal["copeland", "borda", "normalized"]


class InvalidPreferenceMatrix(ValueError):
    pass


class GenerationBudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PreferenceMatrix:
    """Validated K x K duel-probability matrix.

    Construct through :func:`validate_preference_matrix` (or the random
    generator); the stored array is read-only and exactly skew-symmetric.
    """

    p: np.ndarray

    @property
    def k(self) -> int:
        return self.p.shape[0]

    def __getitem__(self, idx):
        return self.p[idx]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PreferenceMatrix):
            return NotImplemented
        return np.array_equal(self.p, other.p)

    def permuted(self, perm: Sequence[int]) -> "PreferenceMatrix":
        perm = np.asarray(perm)
        return validate_preference_matrix(self.p[np.ix_(perm, perm)])


@dataclass(frozen=True, eq=False)
class ScoreVector:
    values: np.ndarray
    kind: ScoreKind

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("scores must be a 1-d vector")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("scores must lie in [0, 1]")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True)
class NormalizationSpec:
    """Raw per-arm criterion ``h`` with known range ``[alpha, beta]``."""

    h: Sequence[float]
    alpha: float
    beta: float
    direction: Literal["maximize", "minimize"] = "maximize"

    def __post_init__(self):
        if not self.alpha < self.beta:
            raise ValueError(f"need alpha < beta, got alpha={self.alpha}, beta={self.beta}")
        if self.direction not in ("maximize", "minimize"):
            raise ValueError(f"unknown direction {self.direction!r}")
        h = np.asarray(self.h, dtype=float)
        if np.any(h < self.alpha) or np.any(h > self.beta):
            raise ValueError("h values must lie in [alpha, beta]")


def validate_preference_matrix(raw) -> PreferenceMatrix:
    """Check a raw matrix and return an exactly skew-symmetric copy.

    The upper triangle is kept and the lower triangle is rebuilt as
    ``1 - p[i, j]`` once the skew-symmetry check passes.
    """
    p = np.array(raw, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise InvalidPreferenceMatrix(f"expected a square matrix, got shape {p.shape}")
    k = p.shape[0]
    if k < 2:
        raise InvalidPreferenceMatrix(f"need at least 2 arms, got {k}")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidPreferenceMatrix("entries must lie in [0, 1]")
    diag = np.diag(p)
    if np.any(np.abs(diag - 0.5) > SKEW_TOL):
        raise InvalidPreferenceMatrix("diagonal entries must equal 0.5")
    skew = np.abs(p + p.T - 1.0)
    if np.any(skew > SKEW_TOL):
        i, j = np.unravel_index(np.argmax(skew), skew.shape)
        raise InvalidPreferenceMatrix(
            f"p[{i},{j}] + p[{j},{i}] = {p[i, j] + p[j, i]!r}, expected 1"
        )
    iu = np.triu_indices(k, 1)
    out = np.full((k, k), 0.5)
    out[iu] = p[iu]
    out[iu[1], iu[0]] = 1.0 - p[iu]
    out.flags.writeable = False
    return PreferenceMatrix(out)


def copeland_scores(pm: PreferenceMatrix) -> ScoreVector:
    k = pm.k
    wins = (pm.p > 0.5).sum(axis=1)
    return ScoreVector(wins / (k - 1), "copeland")


def borda_scores(pm: PreferenceMatrix) -> ScoreVector:
    # the self term p[i, i] = 0.5 is part of the average
    return ScoreVector(pm.p.sum(axis=1) / pm.k, "borda")


def normalize_scores(spec: NormalizationSpec) -> ScoreVector:
    h = np.asarray(spec.h, dtype=float)
    width = spec.beta - spec.alpha
    if spec.direction == "maximize":
        values = (h - spec.alpha) / width
    else:
        values = (spec.beta - h) / width
    return ScoreVector(np.clip(values, 0.0, 1.0), "normalized")


def unique_winner(scores: Union[ScoreVector, Sequence[float]]) -> Optional[int]:
    """Index of the strict maximum, or ``None`` when the maximum is shared."""
    values = np.asarray(scores.values if isinstance(scores, ScoreVector) else scores)
    top = values.max()
    hits = np.flatnonzero(values == top)
    if len(hits) != 1:
        return None
    return int(hits[0])


def _copeland_gap(values: np.ndarray) -> float:
    ordered = np.sort(values)
    return float(ordered[-1] - ordered[-2])


def generate_random_instance(
    k: int,
    seed: Union[int, np.random.Generator, np.random.SeedSequence, None] = None,
    min_gap: float = 0.0,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> PreferenceMatrix:
    """Draw a random preference matrix with a unique Copeland winner.

    Upper-triangle entries are i.i.d. uniform on [0, 1].  Whole matrices are
    redrawn until the winner is unique, the top-two Copeland gap is at least
    ``min_gap`` and no off-diagonal entry sits within 1e-9 of 0.5.
    """
    if k < 3:
        raise ValueError(f"random instances need k >= 3, got {k}")
    if not 0.0 <= min_gap < 1.0:
        raise ValueError(f"min_gap must lie in [0, 1), got {min_gap}")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(k, 1)
    for _ in range(max_attempts):
        upper = rng.random(len(iu[0]))
        if np.any(np.abs(upper - 0.5) < NEAR_HALF):
            continue
        p = np.full((k, k), 0.5)
        p[iu] = upper
        p[iu[1], iu[0]] = 1.0 - upper
        wins = (p > 0.5).sum(axis=1) / (k - 1)
        if unique_winner(wins) is None:
            continue
        if _copeland_gap(wins) < min_gap:
            continue
        return validate_preference_matrix(p)
    raise GenerationBudgetExhausted(
        f"no instance with k={k}, min_gap={min_gap} in {max_attempts} attempts"
    )


def load_matrix_csv(path: Union[str, Path]) -> PreferenceMatrix:
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    return validate_preference_matrix(raw)


def save_matrix_csv(pm: PreferenceMatrix, path: Union[str, Path]) -> None:
    # repr-precision decimals so a reload reproduces the matrix bit-exactly
    with open(path, "w", newline="") as fh:
        for row in pm.p:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")

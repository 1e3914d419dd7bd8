"""Exemplar selection: rank candidates by normalized quality and pick one.

Scores are oriented so lower is better (higher-is-better scorers are
negated), min-max normalized over the candidate set, and the argmin is
selected; ties break to the lowest index. A human override replaces the
automatic pick while preserving the scores for audit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ccol.errors import ScorerError
from ccol.quality import HIGHER_IS_BETTER, QualityModel, Scorer, brisque_features, brisque_score, niqe_score

METHOD_FIQ = "fiq"
METHOD_BN = "bn"
METHOD_HUMAN = "human_override"


@dataclass
class CandidateSet:
    """The pool of possible exemplars produced by the candidate generator."""

    frames: np.ndarray  # (N, H, W, 3) uint8
    source: str
    seed_info: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        f = np.asarray(self.frames)
        if f.ndim != 4 or f.shape[3] != 3 or f.shape[0] == 0:
            raise ValueError(f"candidates must have shape (N, H, W, 3), got {f.shape}")
        if f.dtype != np.uint8:
            raise ValueError(f"candidates must be uint8, got {f.dtype}")
        self.frames = f
        if not self.seed_info:
            self.seed_info = [0] * f.shape[0]
        if len(self.seed_info) != f.shape[0]:
            raise ValueError("seed_info length must match candidate count")

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass
class ExemplarChoice:
    """A selected exemplar plus its selection provenance."""

    index: int
    exemplar: np.ndarray
    raw_scores: list[float]
    normalized_scores: list[float]
    method: str
    overridden_from: Optional[int] = None
    candidates: Optional[CandidateSet] = field(default=None, repr=False)

    def to_json_dict(self, exemplar_path: Optional[str] = None) -> dict:
        d = {
            "index": self.index,
            "raw_scores": [float(s) for s in self.raw_scores],
            "normalized_scores": [float(s) for s in self.normalized_scores],
            "method": self.method,
            "overridden_from": self.overridden_from,
        }
        if exemplar_path is not None:
            d["exemplar_path"] = exemplar_path
        return d


def normalize_scores(scores: list[float]) -> list[float]:
    """Min-max normalize to [0, 1]; all-equal input maps to all 0.5."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot normalize an empty score list")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores must be finite")
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return [0.5] * arr.size
    return list((arr - lo) / (hi - lo))


def _argmin_lowest_index(values: list[float]) -> int:
    return int(np.argmin(np.asarray(values)))


def select_exemplar(cands: CandidateSet, scorer: Scorer, method: str = METHOD_FIQ) -> ExemplarChoice:
    """Score every candidate, normalize, and select the argmin.

    Higher-is-better scorers are negated before normalization so the
    minimum always lands on the best-quality candidate.
    """
    oriented = []
    raw = []
    for i in range(len(cands)):
        try:
            s = scorer(cands.frames[i])
        except ScorerError:
            raise
        except Exception as e:
            raise ScorerError(f"scorer failed on candidate {i}: {e}") from e
        raw.append(float(s.value))
        oriented.append(-float(s.value) if s.polarity == HIGHER_IS_BETTER else float(s.value))
    normalized = normalize_scores(oriented)
    idx = _argmin_lowest_index(normalized)
    return ExemplarChoice(
        index=idx,
        exemplar=cands.frames[idx],
        raw_scores=raw,
        normalized_scores=normalized,
        method=method,
        candidates=cands,
    )


def select_exemplar_bn(
    cands: CandidateSet, niqe_model: QualityModel, brisque_model: QualityModel
) -> ExemplarChoice:
    """Ablation selector: minimum of combined normalized NSS distances."""
    niqe_vals = [float(niqe_score(cands.frames[i], niqe_model).value) for i in range(len(cands))]
    brisque_vals = [
        float(brisque_score(brisque_features(cands.frames[i]), brisque_model).value)
        for i in range(len(cands))
    ]
    combined = [a + b for a, b in zip(normalize_scores(niqe_vals), normalize_scores(brisque_vals))]
    idx = _argmin_lowest_index(combined)
    return ExemplarChoice(
        index=idx,
        exemplar=cands.frames[idx],
        raw_scores=combined,
        normalized_scores=normalize_scores(combined),
        method=METHOD_BN,
        candidates=cands,
    )


def apply_override(choice: ExemplarChoice, human_index: int) -> ExemplarChoice:
    """Replace the automatic pick with a human-selected candidate index."""
    if choice.candidates is None:
        raise ValueError("choice carries no candidate set to override within")
    if not 0 <= human_index < len(choice.candidates):
        raise IndexError(
            f"override index {human_index} out of range for {len(choice.candidates)} candidates"
        )
    return ExemplarChoice(
        index=human_index,
        exemplar=choice.candidates.frames[human_index],
        raw_scores=list(choice.raw_scores),
        normalized_scores=list(choice.normalized_scores),
        method=METHOD_HUMAN,
        overridden_from=choice.index,
        candidates=choice.candidates,
    )

"""Hypnogram track: soft-agreement reliability, scorer ranking, majority-vote
consensus with ranked tie-breaking, cross-source stage intersection, and Cohen's
kappa variability matrices.

All operations work on three-class labels. Epochs where any scorer of the subject
(either source) assigned MOVEMENT or UNKNOWN are excluded everywhere, and the
exclusion count is reported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import EarsimError, Hypnogram, Stage3, STAGE3_ORDER

_STAGE_CODE = {stage: i for i, stage in enumerate(STAGE3_ORDER)}
_N_CLASSES = len(STAGE3_ORDER)


def _collapsed_codes(hyp: Hypnogram) -> np.ndarray:
    """Label codes 0..2, or -1 where the label collapses to None."""
    return np.array(
        [-1 if s is None else _STAGE_CODE[s] for s in hyp.collapsed()], dtype=np.int64
    )


def _check_same_length(hyps: list[Hypnogram]) -> int:
    lengths = {len(h.labels) for h in hyps}
    if len(lengths) != 1:
        raise EarsimError(f"hypnogram length mismatch: {sorted(lengths)}")
    return lengths.pop()


def valid_epoch_mask(hyps: list[Hypnogram]) -> np.ndarray:
    """True where every provided hypnogram has a collapsible (non-artifact) label."""
    if not hyps:
        raise EarsimError("valid_epoch_mask: no hypnograms")
    _check_same_length(hyps)
    codes = np.stack([_collapsed_codes(h) for h in hyps])
    return np.all(codes >= 0, axis=0)


def soft_agreement(hyps: list[Hypnogram], mask: np.ndarray | None = None) -> dict[str, float]:
    """Per-scorer mean of the other scorers' normalized vote mass at the scorer's
    own label. Vote counts at each epoch are divided by the max class count, so a
    scorer sitting on a tied class still collects 1."""
    if len(hyps) < 2:
        raise EarsimError(f"soft_agreement needs at least 2 scorers, got {len(hyps)}")
    T = _check_same_length(hyps)
    if mask is None:
        mask = valid_epoch_mask(hyps)
    codes = np.stack([_collapsed_codes(h) for h in hyps])[:, mask]  # (J, T_kept)
    if codes.shape[1] == 0:
        raise EarsimError("soft_agreement: no epochs left after exclusion")
    if np.any(codes < 0):
        raise EarsimError("soft_agreement: artifact labels inside the kept mask")
    J, Tk = codes.shape
    onehot = np.zeros((_N_CLASSES, J, Tk), dtype=np.int64)
    for c in range(_N_CLASSES):
        onehot[c] = codes == c
    totals = onehot.sum(axis=1)  # (C, T_kept) votes per class, all scorers
    scores: dict[str, float] = {}
    for j, hyp in enumerate(hyps):
        others = totals - onehot[:, j, :]  # remove scorer j's own vote
        peak = others.max(axis=0)
        own = others[codes[j], np.arange(Tk)]
        # peak == 0 only when J == 1 for the others, impossible with J >= 2
        z = np.where(peak > 0, own / np.maximum(peak, 1), 0.0)
        scores[hyp.scorer] = float(z.mean())
    return scores


def rank_scorers(scores: dict[str, float]) -> list[str]:
    """Scorer ids sorted by descending score; ties broken by ascending id."""
    return [s for s, _ in sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))]


@dataclass(frozen=True)
class ConsensusHypnogram:
    subject: str
    source: str
    labels: tuple[Stage3 | None, ...]
    tie_flags: tuple[bool, ...]

    @property
    def tie_count(self) -> int:
        return sum(self.tie_flags)


def majority_vote(
    hyps: list[Hypnogram], ranking: list[str], mask: np.ndarray | None = None
) -> ConsensusHypnogram:
    """Strictly most voted stage per epoch; ties take the top-ranked scorer's label.
    Excluded epochs get label None and tie_flag False."""
    if len(hyps) < 2:
        raise EarsimError(f"majority_vote needs at least 2 scorers, got {len(hyps)}")
    T = _check_same_length(hyps)
    if mask is None:
        mask = valid_epoch_mask(hyps)
    by_scorer = {h.scorer: h for h in hyps}
    if set(ranking) != set(by_scorer):
        raise EarsimError("ranking does not cover exactly the provided scorers")
    top = by_scorer[ranking[0]]
    codes = np.stack([_collapsed_codes(h) for h in hyps])
    counts = np.zeros((_N_CLASSES, T), dtype=np.int64)
    for c in range(_N_CLASSES):
        counts[c] = np.sum(codes == c, axis=0)
    peak = counts.max(axis=0)
    n_at_peak = np.sum(counts == peak[None, :], axis=0)
    winner = counts.argmax(axis=0)
    top_codes = _collapsed_codes(top)

    labels: list[Stage3 | None] = []
    ties: list[bool] = []
    for t in range(T):
        if not mask[t]:
            labels.append(None)
            ties.append(False)
            continue
        if n_at_peak[t] > 1:
            labels.append(STAGE3_ORDER[top_codes[t]])
            ties.append(True)
        else:
            labels.append(STAGE3_ORDER[winner[t]])
            ties.append(False)
    first = hyps[0]
    return ConsensusHypnogram(
        subject=first.subject, source=first.source, labels=tuple(labels), tie_flags=tuple(ties)
    )


@dataclass(frozen=True)
class StageIntersection:
    """Epochs where both source consensuses agree, with per-stage bookkeeping."""

    labels: tuple[Stage3 | None, ...]
    counts: dict[Stage3, int]
    percentages: dict[Stage3, float]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def stage_intersection(psg: ConsensusHypnogram, inear: ConsensusHypnogram) -> StageIntersection:
    if len(psg.labels) != len(inear.labels):
        raise EarsimError(
            f"consensus length mismatch: {len(psg.labels)} vs {len(inear.labels)}"
        )
    labels: list[Stage3 | None] = []
    counts = {s: 0 for s in STAGE3_ORDER}
    for a, b in zip(psg.labels, inear.labels):
        if a is not None and a == b:
            labels.append(a)
            counts[a] += 1
        else:
            labels.append(None)
    total = sum(counts.values())
    percentages = {
        s: (100.0 * counts[s] / total if total else 0.0) for s in STAGE3_ORDER
    }
    return StageIntersection(labels=tuple(labels), counts=counts, percentages=percentages)


def cohens_kappa(a, b) -> float:
    """Unweighted Cohen's kappa over the union of observed labels.

    Returns 1.0 when both raters agree perfectly on a single label (p_o = p_e = 1).
    Returns nan when p_e = 1 with p_o < 1 (undefined); callers treat nan as a flag."""
    a = list(a)
    b = list(b)
    if len(a) != len(b):
        raise EarsimError(f"kappa length mismatch: {len(a)} vs {len(b)}")
    if not a:
        raise EarsimError("kappa of empty sequences")
    n = len(a)
    alphabet = sorted({*a, *b}, key=str)
    index = {lab: i for i, lab in enumerate(alphabet)}
    confusion = np.zeros((len(alphabet), len(alphabet)), dtype=np.int64)
    for x, y in zip(a, b):
        confusion[index[x], index[y]] += 1
    po = float(np.trace(confusion)) / n
    pa = confusion.sum(axis=1) / n
    pb = confusion.sum(axis=0) / n
    pe = float(np.dot(pa, pb))
    if po == 1.0:
        return 1.0
    if pe == 1.0:
        return math.nan
    return (po - pe) / (1.0 - pe)


@dataclass(frozen=True)
class KappaReport:
    """intra: scorer -> kappa(PSG_j, InEar_j). inter: source -> {(i,j) -> kappa}."""

    intra: dict[str, float]
    inter: dict[str, dict[tuple[str, str], float]]
    missing: tuple[str, ...] = ()


def variability_report(hyps: list[Hypnogram], mask: np.ndarray | None = None) -> KappaReport:
    """Intra-scorer (across sources) and inter-scorer (within source) kappas for one
    subject's hypnogram set. Missing counterparts are listed, not fatal."""
    if not hyps:
        return KappaReport(intra={}, inter={}, missing=("no hypnograms provided",))
    if mask is None:
        mask = valid_epoch_mask(hyps)
    by_source: dict[str, dict[str, Hypnogram]] = {}
    for h in hyps:
        by_source.setdefault(h.source, {})[h.scorer] = h

    def kept_codes(h: Hypnogram) -> np.ndarray:
        return _collapsed_codes(h)[mask]

    missing: list[str] = []
    intra: dict[str, float] = {}
    psg = by_source.get("psg", {})
    inear = by_source.get("inear", {})
    for scorer in sorted(set(psg) | set(inear)):
        if scorer not in psg:
            missing.append(f"scorer {scorer}: no psg hypnogram")
            continue
        if scorer not in inear:
            missing.append(f"scorer {scorer}: no inear hypnogram")
            continue
        intra[scorer] = cohens_kappa(kept_codes(psg[scorer]), kept_codes(inear[scorer]))

    inter: dict[str, dict[tuple[str, str], float]] = {}
    for source in sorted(by_source):
        scorers = sorted(by_source[source])
        pairs = {}
        for s1, s2 in combinations(scorers, 2):
            pairs[(s1, s2)] = cohens_kappa(
                kept_codes(by_source[source][s1]), kept_codes(by_source[source][s2])
            )
        inter[source] = pairs
    return KappaReport(intra=intra, inter=inter, missing=tuple(missing))


@dataclass(frozen=True)
class SubjectConsensus:
    """Full hypnogram-track result for one subject."""

    subject: str
    excluded_epochs: tuple[int, ...]
    soft_scores: dict[str, dict[str, float]]      # source -> scorer -> score
    rankings: dict[str, list[str]]                # source -> ranked scorer ids
    consensus: dict[str, ConsensusHypnogram]      # source -> consensus
    intersection: StageIntersection | None
    kappa: KappaReport


def consensus_for_subject(hyps: list[Hypnogram]) -> SubjectConsensus:
    """Run the whole hypnogram track for one subject: one shared exclusion mask,
    per-source soft agreement + ranking + majority vote, cross-source intersection
    when both sources are present, and the kappa report."""
    if not hyps:
        raise EarsimError("consensus_for_subject: no hypnograms")
    subjects = {h.subject for h in hyps}
    if len(subjects) != 1:
        raise EarsimError(f"hypnograms span multiple subjects: {sorted(subjects)}")
    mask = valid_epoch_mask(hyps)
    excluded = tuple(int(i) for i in np.flatnonzero(~mask))

    by_source: dict[str, list[Hypnogram]] = {}
    for h in hyps:
        by_source.setdefault(h.source, []).append(h)

    soft_scores: dict[str, dict[str, float]] = {}
    rankings: dict[str, list[str]] = {}
    consensus: dict[str, ConsensusHypnogram] = {}
    for source in sorted(by_source):
        group = sorted(by_source[source], key=lambda h: h.scorer)
        scores = soft_agreement(group, mask)
        ranking = rank_scorers(scores)
        soft_scores[source] = scores
        rankings[source] = ranking
        consensus[source] = majority_vote(group, ranking, mask)

    intersection = None
    if "psg" in consensus and "inear" in consensus:
        intersection = stage_intersection(consensus["psg"], consensus["inear"])

    kappa = variability_report(hyps, mask)
    return SubjectConsensus(
        subject=next(iter(subjects)),
        excluded_epochs=excluded,
        soft_scores=soft_scores,
        rankings=rankings,
        consensus=consensus,
        intersection=intersection,
        kappa=kappa,
    )

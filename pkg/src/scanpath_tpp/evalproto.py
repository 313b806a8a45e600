"""Distribution-level comparison of simulated and real scanpaths.

Within each stimulus, all unordered pairs of real scanpaths give the
reference similarity distribution P, and all real-simulated pairs give Q;
both are pooled over stimuli and compared with a histogram KL divergence on
shared bin edges.  Edit distance is reported as a raw mean instead.
"""

from __future__ import annotations

import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .concurrency import run_ordered
from .datamodel import Dataset, Scanpath, Stimulus
from .metrics import (
    MM_COMPONENTS,
    ScanMatchConfig,
    build_clusters,
    multimatch,
    scanmatch,
    sequence_score,
    string_edit_distance,
)
from .svgplot import histogram_overlay_svg

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreDistributionPair:
    metric: str
    variant: str
    real_real: np.ndarray
    real_sim: np.ndarray


@dataclass(frozen=True)
class EvalConfig:
    metrics: tuple[str, ...] = ("mm", "sm", "ss", "sed")
    kl_bins: int = 20
    kl_epsilon: float = 1e-10
    scanmatch: ScanMatchConfig = field(default_factory=ScanMatchConfig)
    sed_grid: int = 5
    ss_bandwidth_fraction: float = 0.1
    temporal_bin: float = 0.050
    mm_direction_threshold: float = 45.0
    mm_amplitude_fraction: float = 0.10
    mm_duration_fraction: float = 0.3
    threads: int = 1


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[tuple[str, str, float], ...]
    distributions: tuple[ScoreDistributionPair, ...]

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("metric,variant,value\n")
            for metric, variant, value in self.rows:
                fh.write(f"{metric},{variant},{value!r}\n")

    def pretty(self) -> str:
        lines = [f"{'metric':<8} {'variant':<18} {'value':>12}", "-" * 40]
        for metric, variant, value in self.rows:
            lines.append(f"{metric:<8} {variant:<18} {value:>12.6f}")
        return "\n".join(lines)

    def write_svgs(self, out_dir: str, bins: int = 20) -> list[str]:
        paths = []
        for dist in self.distributions:
            name = f"{dist.metric}_{dist.variant}.svg"
            path = os.path.join(out_dir, name)
            histogram_overlay_svg(
                [("real-real", dist.real_real), ("real-sim", dist.real_sim)],
                path,
                bins=bins,
                title=f"{dist.metric} / {dist.variant}",
                x_label="pair score",
            )
            paths.append(path)
        return paths


def kl_divergence(
    p_samples: np.ndarray,
    q_samples: np.ndarray,
    bins: int = 20,
    epsilon: float = 1e-10,
) -> float:
    """Histogram KL(P || Q) in nats over shared bin edges.

    Edges span the pooled sample range; counts get additive smoothing before
    normalization, so the result is finite even for disjoint supports.
    """
    p_samples = np.asarray(p_samples, dtype=float)
    q_samples = np.asarray(q_samples, dtype=float)
    if len(p_samples) == 0 or len(q_samples) == 0:
        raise ValueError("need samples on both sides for a KL divergence")
    pooled = np.concatenate([p_samples, q_samples])
    lo, hi = float(pooled.min()), float(pooled.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    p = np.histogram(p_samples, bins=edges)[0].astype(float) + epsilon
    q = np.histogram(q_samples, bins=edges)[0].astype(float) + epsilon
    p /= p.sum()
    q /= q.sum()
    return float(np.sum(p * np.log(p / q)))


PairTask = tuple[Scanpath, Scanpath, Stimulus]


def _group_pairs(
    real: Sequence[Scanpath], sim: Sequence[Scanpath], stimuli
) -> tuple[list[PairTask], list[PairTask]]:
    by_real: dict[str, list[Scanpath]] = defaultdict(list)
    by_sim: dict[str, list[Scanpath]] = defaultdict(list)
    for sp in real:
        by_real[sp.stimulus_id].append(sp)
    for sp in sim:
        by_sim[sp.stimulus_id].append(sp)
    rr: list[PairTask] = []
    rs: list[PairTask] = []
    for stim_id in sorted(by_real):
        stim = stimuli[stim_id]
        group = by_real[stim_id]
        if len(group) < 2:
            log.warning("stimulus %s has fewer than two real scanpaths", stim_id)
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                rr.append((group[i], group[j], stim))
        sims = by_sim.get(stim_id, [])
        if not sims:
            log.warning("stimulus %s has no simulated scanpaths", stim_id)
        for a in group:
            for b in sims:
                rs.append((a, b, stim))
    return rr, rs


def pairwise_scores(
    real: Sequence[Scanpath],
    sim: Sequence[Scanpath],
    metric_fn: Callable[[Scanpath, Scanpath, Stimulus], float],
    stimuli,
    threads: int = 1,
    metric: str = "",
    variant: str = "",
) -> ScoreDistributionPair:
    """Pooled per-stimulus pair scores: real-real vs real-simulated."""
    rr, rs = _group_pairs(real, sim, stimuli)
    rr_scores = run_ordered(lambda t: metric_fn(*t), rr, threads)
    rs_scores = run_ordered(lambda t: metric_fn(*t), rs, threads)
    return ScoreDistributionPair(
        metric=metric, variant=variant,
        real_real=np.array(rr_scores, dtype=float),
        real_sim=np.array(rs_scores, dtype=float),
    )


def evaluate(
    real_dataset: Dataset, sim_scanpaths: Sequence[Scanpath], cfg: EvalConfig = EvalConfig()
) -> EvalReport:
    """Score a simulated ensemble against real scanpaths.

    Alignment metrics are reported as KL divergences between the real-real
    and real-simulated score distributions (plus their average over the five
    vector components); edit distance is reported as the mean over
    real-simulated pairs.  Scanpaths with fewer than two fixations carry no
    saccades and are excluded from both ensembles.
    """
    real = [sp for sp in real_dataset.scanpaths if len(sp) >= 2]
    sim_kept = [sp for sp in sim_scanpaths if len(sp) >= 2]
    for name, before, after in (
        ("real", len(real_dataset.scanpaths), len(real)),
        ("simulated", len(sim_scanpaths), len(sim_kept)),
    ):
        if before > after:
            log.warning(
                "ignoring %d %s scanpaths with fewer than two fixations",
                before - after, name,
            )
    sim_scanpaths = sim_kept
    stimuli = real_dataset.stimuli
    if not sim_scanpaths:
        raise ValueError("no simulated scanpaths with two or more fixations")
    if not real:
        raise ValueError("no real scanpaths to evaluate against")
    rr, rs = _group_pairs(real, sim_scanpaths, stimuli)
    if not rr:
        raise ValueError("no stimulus has two or more real scanpaths")
    if not rs:
        raise ValueError("no stimulus has both real and simulated scanpaths")

    rows: list[tuple[str, str, float]] = []
    dists: list[ScoreDistributionPair] = []

    def kl(p, q):
        return kl_divergence(p, q, bins=cfg.kl_bins, epsilon=cfg.kl_epsilon)

    for metric in cfg.metrics:
        if metric == "mm":
            def mm_fn(task):
                a, b, stim = task
                return multimatch(
                    a, b, stim,
                    direction_threshold=cfg.mm_direction_threshold,
                    amplitude_fraction=cfg.mm_amplitude_fraction,
                    duration_fraction=cfg.mm_duration_fraction,
                )
            rr_scores = run_ordered(mm_fn, rr, cfg.threads)
            rs_scores = run_ordered(mm_fn, rs, cfg.threads)
            comp_kls = []
            for comp in MM_COMPONENTS:
                p = np.array([getattr(s, comp) for s in rr_scores])
                q = np.array([getattr(s, comp) for s in rs_scores])
                value = kl(p, q)
                comp_kls.append(value)
                rows.append(("mm", comp, value))
                dists.append(ScoreDistributionPair("mm", comp, p, q))
            rows.append(("mm", "avg", float(np.mean(comp_kls))))
        elif metric == "sm":
            for variant, with_duration in (("with_duration", True), ("without_duration", False)):
                def sm_fn(task, wd=with_duration):
                    a, b, stim = task
                    return scanmatch(a, b, stim, cfg=cfg.scanmatch, with_duration=wd)
                p = np.array(run_ordered(sm_fn, rr, cfg.threads))
                q = np.array(run_ordered(sm_fn, rs, cfg.threads))
                rows.append(("sm", variant, kl(p, q)))
                dists.append(ScoreDistributionPair("sm", variant, p, q))
        elif metric == "ss":
            clusters = {}
            by_stim = defaultdict(list)
            for sp in real:
                by_stim[sp.stimulus_id].append(sp)
            for stim_id, group in by_stim.items():
                stim = stimuli[stim_id]
                clusters[stim_id] = build_clusters(
                    group, stim, bandwidth=cfg.ss_bandwidth_fraction * stim.diagonal
                )
            for variant, with_duration in (("with_duration", True), ("without_duration", False)):
                def ss_fn(task, wd=with_duration):
                    a, b, stim = task
                    return sequence_score(
                        a, b, clusters[stim.id], with_duration=wd,
                        temporal_bin=cfg.temporal_bin,
                    )
                p = np.array(run_ordered(ss_fn, rr, cfg.threads))
                q = np.array(run_ordered(ss_fn, rs, cfg.threads))
                rows.append(("ss", variant, kl(p, q)))
                dists.append(ScoreDistributionPair("ss", variant, p, q))
        elif metric == "sed":
            def sed_fn(task):
                a, b, stim = task
                return float(string_edit_distance(a, b, stim, grid_n=cfg.sed_grid))
            p = np.array(run_ordered(sed_fn, rr, cfg.threads))
            q = np.array(run_ordered(sed_fn, rs, cfg.threads))
            rows.append(("sed", "mean", float(np.mean(q))))
            dists.append(ScoreDistributionPair("sed", "mean", p, q))
        else:
            raise ValueError(f"unknown metric {metric!r}")
    return EvalReport(rows=tuple(rows), distributions=tuple(dists))

"""Seeded batch evaluation of classification modes over many episodes."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from rdc.embedding_store import EmbeddingSet, load_embeddings
from rdc.errors import EpisodeFailed, RDCError
from rdc.episodes import Episode, make_rng, sample_episode
from rdc.finetune import evaluate_after_finetune, finetune_episode
from rdc.metric import npc_classify_from_matrix, npc_episode
from rdc.rerank import CalibrationConfig, episode_features, rdc_pipeline

log = logging.getLogger(__name__)

MODES = ("npc", "npc-l2", "rdc-no-subspace", "rdc", "rdcft-no-subspace", "rdcft")
FT_MODES = ("rdcft-no-subspace", "rdcft")
SCHEMA = "rdc-report/1"


@dataclass(frozen=True)
class RunConfig:
    mode: str = "rdc"
    episodes: int = 2000
    C: int = 5
    K: int = 1
    Q: int = 15
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    seed: int = 0
    input: str | None = None
    output: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        if self.episodes < 1:
            raise ValueError("episodes must be at least 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass
class EpisodeOutcome:
    index: int
    accuracy: float
    initial_loss: float | None = None
    final_loss: float | None = None


@dataclass
class RunReport:
    mode: str
    outcomes: list[EpisodeOutcome]
    config: RunConfig
    wall_time: float = 0.0

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([o.accuracy for o in self.outcomes])

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def ci95(self) -> float:
        return ci95(self.accuracies)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema={SCHEMA} mode={self.mode}\n")
        w = csv.writer(buf, lineterminator="\n")
        ft = self.mode in FT_MODES
        w.writerow(["episode_index", "accuracy"] + (["initial_loss", "final_loss"] if ft else []))
        for o in self.outcomes:
            row = [o.index, repr(o.accuracy)]
            if ft:
                row += [repr(o.initial_loss), repr(o.final_loss)]
            w.writerow(row)
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    def summary(self) -> str:
        cal = self.config.calibration
        lines = [
            f"mode        {self.mode}",
            f"task        {self.config.C}-way {self.config.K}-shot, {self.config.Q} queries/class",
            f"episodes    {len(self.outcomes)}",
            f"accuracy    {100 * self.mean:.2f} +- {100 * self.ci95:.2f} (95% CI)",
            f"k/k2/lambda {cal.k}/{cal.k2}/{cal.lam}",
            f"wall time   {self.wall_time:.2f}s",
        ]
        return "\n".join(lines)


def ci95(acc) -> float:
    """Half-width 1.96 * sample stddev / sqrt(N); 0 for a single episode."""
    acc = np.asarray(acc, dtype=np.float64)
    if acc.size < 2:
        return 0.0
    return float(1.96 * acc.std(ddof=1) / math.sqrt(acc.size))


def episode_seed(seed: int, index: int) -> int:
    return seed ^ index


def generate_synthetic(
    classes: int, per_class: int, m: int, sigma: float, seed: int
) -> EmbeddingSet:
    """Gaussian clusters around class means drawn uniformly on the unit sphere."""
    if classes < 1 or per_class < 1 or m < 1 or sigma < 0:
        raise ValueError("classes, per_class and m must be positive, sigma non-negative")
    rng = make_rng(seed)
    means = rng.standard_normal((classes, m))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    noise = rng.standard_normal((classes, per_class, m))
    vectors = (means[:, None, :] + sigma * noise).reshape(classes * per_class, m)
    labels = np.repeat(np.arange(classes), per_class)
    ids = [f"c{c}_{j}" for c in range(classes) for j in range(per_class)]
    return EmbeddingSet(vectors, labels, ids)


# overlapping-cluster benchmark: NPC+l2 5-way 1-shot accuracy sits near 0.68
BENCHMARK = dict(classes=20, per_class=40, m=128, sigma=0.22, seed=7)


def benchmark_embeddings() -> EmbeddingSet:
    return generate_synthetic(**BENCHMARK)


def predict(mode: str, features, episode: Episode, cal: CalibrationConfig):
    """Query predictions for one episode; returns (labels, loss trace or None)."""
    if mode == "npc":
        return npc_episode(episode_features(features, episode), episode), None
    if mode == "npc-l2":
        return npc_episode(episode_features(features, episode), episode, normalize=True), None
    # the *-no-subspace modes force the branch off; the others honour the config flag
    if mode.endswith("no-subspace"):
        cal = cal.with_(use_subspace=False)
    if mode in ("rdc", "rdc-no-subspace"):
        return npc_classify_from_matrix(rdc_pipeline(features, episode, cal), episode), None
    adapter, losses = finetune_episode(features, episode, cal)
    return evaluate_after_finetune(features, episode, adapter), losses


def run_episode(emb: EmbeddingSet, config: RunConfig, index: int) -> EpisodeOutcome:
    ep = sample_episode(emb, config.C, config.K, config.Q, episode_seed(config.seed, index))
    pred, losses = predict(config.mode, emb.vectors, ep, config.calibration)
    acc = float(np.mean(pred == ep.query_true_labels))
    if losses is None:
        return EpisodeOutcome(index, acc)
    return EpisodeOutcome(index, acc, losses[0], losses[-1])


def run(config: RunConfig, embeddings: EmbeddingSet | None = None, workers: int = 1) -> RunReport:
    emb = embeddings if embeddings is not None else load_embeddings(config.input)
    start = time.perf_counter()

    def one(index: int) -> EpisodeOutcome:
        try:
            return run_episode(emb, config, index)
        except RDCError as exc:
            raise EpisodeFailed(index, exc) from exc

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(one, range(config.episodes)))
    else:
        outcomes = [one(e) for e in range(config.episodes)]
    report = RunReport(config.mode, outcomes, config, time.perf_counter() - start)
    if config.output:
        report.write_csv(config.output)
    return report


# key=value config files share names with the long CLI flags
CONFIG_KEYS = {
    "mode": ("mode", str),
    "input": ("input", str),
    "out": ("output", str),
    "episodes": ("episodes", int),
    "way": ("C", int),
    "shot": ("K", int),
    "query": ("Q", int),
    "seed": ("seed", int),
    "k": ("k", int),
    "k2": ("k2", int),
    "lambda": ("lam", float),
    "p": ("p", int),
    "alpha": ("alpha", float),
    "tau": ("tau", float),
    "epochs": ("T", int),
    "lr": ("beta", float),
    "loss": ("loss", str),
    "optimizer": ("optimizer", str),
    "no-attention": ("use_attention", "negflag"),
    "no-subspace": ("use_subspace", "negflag"),
    "qe-plain-knn": ("qe_plain_knn", "flag"),
    "soften-sign": ("soften_sign", str),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(key: str, text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"{key}: expected a boolean, got {text!r}")


def parse_config_text(text: str) -> dict[str, object]:
    """Parse ``key=value`` lines (``#`` comments allowed) into typed settings."""
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        target, kind = CONFIG_KEYS[key]
        if kind == "negflag":
            out[target] = not _parse_bool(key, value)
        elif kind == "flag":
            out[target] = _parse_bool(key, value)
        else:
            out[target] = kind(value)
    return out


_CAL_FIELDS = {f.name for f in fields(CalibrationConfig)}


def build_run_config(settings: dict[str, object]) -> RunConfig:
    cal = {k: v for k, v in settings.items() if k in _CAL_FIELDS}
    run_kw = {k: v for k, v in settings.items() if k not in _CAL_FIELDS}
    if "soften_sign" in cal and cal["soften_sign"] == "paper_literal":
        cal["soften_sign"] = "paper"
    return RunConfig(calibration=CalibrationConfig(**cal), **run_kw)


def config_echo(config: RunConfig) -> dict[str, object]:
    d = asdict(config)
    d.update(d.pop("calibration"))
    return d

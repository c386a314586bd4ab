"""Error rate, winning-score histograms, ECE, temperature scaling and OOD reports."""

import csv
import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import nn, tensor
from .data import Batch, ConfigError, one_hot
from .smoothing import coefficient_distribution, midpoint, ud_smoothing
from .train import predict

# logit multipliers searched by temperature scaling
DEFAULT_TEMPERATURE_GRID = tuple(round(0.05 * i, 2) for i in range(1, 41))


@dataclass
class CalibrationBin:
    lower: float
    upper: float
    count: int
    mean_confidence: float
    accuracy: float


@dataclass
class EvalReport:
    winning_scores: np.ndarray
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    error_rate: Optional[float] = None
    ece: Optional[float] = None
    bins: List[CalibrationBin] = field(default_factory=list)
    temperature: Optional[float] = None

    @property
    def median_score(self):
        return float(np.median(self.winning_scores))

    @property
    def frac_above_90(self):
        return float((self.winning_scores > 0.9).mean())

    def summary(self):
        out = {
            "num_samples": int(len(self.winning_scores)),
            "median_winning_score": self.median_score,
            "frac_winning_above_0.9": self.frac_above_90,
        }
        if self.error_rate is not None:
            out["error_rate"] = self.error_rate
        if self.ece is not None:
            out["ece"] = self.ece
        if self.temperature is not None:
            out["temperature"] = self.temperature
        return out


def probabilities(model, inputs, temperature=1.0):
    """Softmax of the logits multiplied by ``temperature``."""
    return tensor.softmax_rows(temperature * predict(model, inputs))


def error_rate_from_logits(logits, labels):
    # np.argmax breaks ties toward the lowest index
    return float((np.asarray(logits).argmax(axis=1) != np.asarray(labels)).mean())


def error_rate(model, dataset):
    if len(dataset) == 0:
        raise ValueError("error rate of an empty dataset is undefined")
    return error_rate_from_logits(predict(model, dataset.inputs), dataset.labels)


def ece(confidences, correct, num_bins=15):
    """Expected calibration error over ``num_bins`` equal-width bins on [0, 1].

    Bins are right-open except the last, which also holds confidence 1.
    Returns ``(ece, bins)``; empty bins contribute nothing.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    if conf.shape != correct.shape:
        raise ValueError(f"{conf.shape[0]} confidences but {correct.shape[0]} outcomes")
    if len(conf) == 0:
        raise ValueError("no samples")
    if ((conf < 0) | (conf > 1)).any():
        raise ValueError("confidences must lie in [0, 1]")
    idx = np.minimum((conf * num_bins).astype(np.int64), num_bins - 1)
    n = len(conf)
    total = 0.0
    bins = []
    for b in range(num_bins):
        mask = idx == b
        count = int(mask.sum())
        if count:
            c, a = float(conf[mask].mean()), float(correct[mask].mean())
            total += count / n * abs(a - c)
        else:
            c = a = 0.0
        bins.append(CalibrationBin(b / num_bins, (b + 1) / num_bins, count, c, a))
    return total, bins


def ece_from_logits(logits, labels, temperature=1.0, num_bins=15):
    p = tensor.softmax_rows(temperature * np.asarray(logits))
    return ece(p.max(axis=1), p.argmax(axis=1) == np.asarray(labels), num_bins)


def temperature_search(model, calibration, grid=DEFAULT_TEMPERATURE_GRID, num_bins=15):
    """Grid value minimizing calibration-split ECE; ties go to the smallest value."""
    if len(grid) == 0:
        raise ConfigError("temperature grid is empty")
    logits = predict(model, calibration.inputs)
    best_t, best = None, np.inf
    for t in sorted(grid):
        value = ece_from_logits(logits, calibration.labels, t, num_bins)[0]
        if value < best:
            best_t, best = float(t), value
    return best_t


def histogram(scores, bin_width=0.05, min_score=0.0):
    """Fixed-width counts over ``[min_score, 1]`` of the scores at or above ``min_score``."""
    scores = np.asarray(scores, dtype=np.float64)
    span = 1.0 - min_score
    nbins = int(round(span / bin_width))
    if nbins < 1 or abs(nbins * bin_width - span) > 1e-9:
        raise ConfigError(f"bin width {bin_width} does not divide [{min_score}, 1] evenly")
    edges = np.linspace(min_score, 1.0, nbins + 1)
    kept = scores[scores >= min_score]
    idx = np.clip(np.searchsorted(edges, kept, side="right") - 1, 0, nbins - 1)
    return edges, np.bincount(idx, minlength=nbins)


def winning_score_histogram(model, dataset, bin_width=0.05, min_score=0.0, temperature=1.0):
    scores = probabilities(model, dataset.inputs, temperature).max(axis=1)
    edges, counts = histogram(scores, bin_width, min_score)
    return EvalReport(scores, edges, counts)


def evaluate(model, dataset, num_bins=15, bin_width=0.05, min_score=0.0, temperature=1.0):
    """Full in-distribution report: error, ECE, winning-score histogram."""
    logits = predict(model, dataset.inputs)
    p = tensor.softmax_rows(temperature * logits)
    scores = p.max(axis=1)
    value, bins = ece(scores, p.argmax(axis=1) == dataset.labels, num_bins)
    edges, counts = histogram(scores, bin_width, min_score)
    return EvalReport(scores, edges, counts, error_rate_from_logits(logits, dataset.labels),
                      value, bins, temperature)


def ood_report(model, dataset, bin_width=0.05, min_score=0.0, temperature=1.0):
    """Confidence-only report on out-of-distribution inputs."""
    if dataset.dim != model.input_dim:
        raise ConfigError(
            f"OOD inputs have {dataset.dim} features, model expects {model.input_dim}"
        )
    return winning_score_histogram(model, dataset, bin_width, min_score, temperature)


@dataclass
class SignalStats:
    ground_truth: np.ndarray  # mean of the two label masses, larger first
    top_non_ground_truth: np.ndarray  # mean of the largest remaining masses, descending
    mean_target: np.ndarray  # mean target row, indexed by class
    num_pairs: int


def training_signal_stats(model, dataset, strategy, seed=0, top=5):
    """Average PLS training targets over midpoints of distinct-label pairs."""
    if not strategy.is_pls:
        raise ConfigError(f"training-signal statistics need a PLS strategy, got {strategy.kind}")
    k = dataset.num_classes
    rng = np.random.default_rng(seed)
    batch = Batch(dataset.inputs, one_hot(dataset.labels, k))
    paired = midpoint(batch, rng.permutation(len(dataset)))
    i = np.flatnonzero(dataset.labels != dataset.labels[paired.perm])
    if len(i) == 0:
        raise ValueError("no pairs with distinct labels")
    q = paired.targets[i]
    trace = nn.forward(model, paired.inputs[i])
    w = strategy.w
    if strategy.kind == "pls":
        target = (1 - w) * q + w * trace.u_prime
    elif strategy.kind == "pls_coeff":
        target = (1 - w) * q + w * coefficient_distribution(q, trace.v)
    elif strategy.kind == "pls_ud":
        target = ud_smoothing(q, strategy.alpha)
    else:
        target = q

    rows = np.arange(len(i))
    a, b = dataset.labels[i], dataset.labels[paired.perm[i]]
    gt = np.sort(np.stack([target[rows, a], target[rows, b]], axis=1), axis=1)[:, ::-1]
    rest = target.copy()
    rest[rows, a] = -np.inf
    rest[rows, b] = -np.inf
    top = min(top, k - 2)
    others = np.sort(rest, axis=1)[:, ::-1][:, :top]
    return SignalStats(gt.mean(axis=0), others.mean(axis=0), target.mean(axis=0), len(i))


def write_csv(path, header, rows, provenance=None):
    with open(path, "w", newline="") as f:
        if provenance:
            f.write("# " + " ".join(f"{k}={v}" for k, v in provenance.items()) + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_histogram_csv(report, path, provenance=None):
    rows = [
        (repr(float(lo)), repr(float(hi)), int(c))
        for lo, hi, c in zip(report.hist_edges[:-1], report.hist_edges[1:], report.hist_counts)
    ]
    write_csv(path, ["bin_lower", "bin_upper", "count"], rows, provenance)


def write_ece_csv(report, path, provenance=None):
    rows = [(repr(b.lower), repr(b.upper), b.count, repr(b.mean_confidence), repr(b.accuracy))
            for b in report.bins]
    write_csv(path, ["lower", "upper", "count", "confidence", "accuracy"], rows, provenance)


def write_json(doc, path, provenance=None):
    if provenance:
        doc = {**doc, "provenance": provenance}
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")

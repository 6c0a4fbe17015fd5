"""Classification datasets: sparse-text parsing, synthesis, serialization.

The text format is one sample per line, "label idx:val idx:val ..." with
1-based ascending indices; blank lines and '#' comments are skipped.
Parsed data is densified (the solvers are dense-vector codes at desk
scale) and labels are normalized to {-1, +1}, mapping the 0/1 convention
to -1/+1.  Datasets are immutable after construction.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "parse_libsvm",
    "load_libsvm",
    "to_libsvm",
    "synthesize",
]


class DatasetFormatError(ValueError):
    """Malformed sparse-text input; the message carries the line number."""


class Dataset:
    """Dense m x n sample matrix with labels in {-1, +1}."""

    def __init__(self, samples, labels, source=""):
        samples = np.array(samples, dtype=float)
        labels = np.array(labels, dtype=float)
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-D array")
        if labels.shape != (samples.shape[0],):
            raise ValueError("labels must be one per sample")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must lie in {-1, +1}")
        samples.setflags(write=False)
        labels.setflags(write=False)
        self.samples = samples
        self.labels = labels
        self.source = source

    @property
    def m(self):
        return self.samples.shape[0]

    @property
    def n(self):
        return self.samples.shape[1]

    def __repr__(self):
        return "Dataset(m=%d, n=%d, source=%r)" % (self.m, self.n, self.source)


def _normalize_label(token, lineno):
    try:
        value = float(token)
    except ValueError:
        raise DatasetFormatError(
            "line %d: label %r is not numeric" % (lineno, token)
        ) from None
    if value in (-1.0, 1.0):
        return value
    if value == 0.0:
        return -1.0
    raise DatasetFormatError(
        "line %d: label %r is not in {-1, 0, +1}" % (lineno, token)
    )


def parse_libsvm(text, n_features=None, source=""):
    """Parse sparse classification text into a dense Dataset.

    ``text`` may be a string or an iterable of lines.  ``n_features``
    overrides the dimension when the maximum index underestimates it.
    """
    if isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = text
    rows = []
    labels = []
    max_index = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        labels.append(_normalize_label(tokens[0], lineno))
        previous = 0
        entries = []
        for token in tokens[1:]:
            index_text, sep, value_text = token.partition(":")
            if not sep:
                raise DatasetFormatError(
                    "line %d: expected idx:val, got %r" % (lineno, token)
                )
            try:
                index = int(index_text)
                value = float(value_text)
            except ValueError:
                raise DatasetFormatError(
                    "line %d: non-numeric token %r" % (lineno, token)
                ) from None
            if index < 1:
                raise DatasetFormatError(
                    "line %d: index %d must be at least 1" % (lineno, index)
                )
            if index <= previous:
                raise DatasetFormatError(
                    "line %d: index %d does not ascend past %d"
                    % (lineno, index, previous)
                )
            entries.append((index, value))
            previous = index
        max_index = max(max_index, previous)
        rows.append(entries)

    n = max_index if n_features is None else int(n_features)
    if n < max_index:
        raise DatasetFormatError(
            "n_features=%d is below the maximum index %d" % (n, max_index)
        )
    samples = np.zeros((len(rows), n))
    for i, entries in enumerate(rows):
        for index, value in entries:
            samples[i, index - 1] = value
    return Dataset(samples, np.asarray(labels), source=source)


def load_libsvm(path, n_features=None):
    with open(path, "r", encoding="utf-8") as handle:
        return parse_libsvm(handle, n_features=n_features, source=str(path))


def to_libsvm(dataset):
    """Serialize back to sparse text; numeric content round-trips exactly
    (repr of float64 is shortest-round-trip)."""
    lines = []
    for i in range(dataset.m):
        parts = ["%+d" % int(dataset.labels[i])]
        row = dataset.samples[i]
        for j in np.nonzero(row)[0]:
            parts.append("%d:%s" % (j + 1, repr(float(row[j]))))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def synthesize(n, m, seed=0, separability=3.0, source=None):
    """A reproducible planted-model instance: gaussian features, labels
    drawn from a logistic model around a random unit direction.  Larger
    ``separability`` means less label noise."""
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and m >= 1")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(n)
    direction /= np.linalg.norm(direction)
    samples = rng.standard_normal((m, n))
    prob_positive = expit(separability * (samples @ direction))
    labels = np.where(rng.random(m) < prob_positive, 1.0, -1.0)
    if source is None:
        source = "synthetic(n=%d,m=%d,seed=%r)" % (n, m, seed)
    return Dataset(samples, labels, source=source)

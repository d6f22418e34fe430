"""Similarity graphs over pulses and spectral clustering into families.

Edge weights are w = 1 / (dist + eps) with a small regularizer
(eps = 1e-4), forming a fully connected weighted graph over the
optimized pulses. Clustering uses the symmetric-normalized Laplacian
L = I - D^(-1/2) W D^(-1/2): the rows of the k lowest-eigenvalue
eigenvector matrix are length-normalized and grouped by seeded k-means.
The cluster count comes from the elbow of the within-cluster dispersion
curve, and clustering quality against known families is scored by the
conditional probability that a found same-cluster pair is truly
same-family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from sklearn.cluster import KMeans

from .pulses import PulseSet, ShapingConfig
from .transport import TransportConfig, pulse_set_distance_matrix

DEFAULT_EPSILON = 1e-4


@dataclass
class SimilarityMatrix:
    entries: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        m = self.entries.shape[0]
        if self.entries.shape != (m, m):
            raise ValueError("similarity matrix must be square")
        if np.max(np.abs(self.entries - self.entries.T)) > 1e-9:
            raise ValueError("similarity matrix must be symmetric")
        if np.any(self.entries < 0):
            raise ValueError("similarity weights must be nonnegative")

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def distances(self) -> np.ndarray:
        """Recover the distance matrix (1/w - eps)."""
        return 1.0 / self.entries - self.epsilon


@dataclass
class ClusterLabels:
    labels: np.ndarray
    k: int
    seed: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)


@dataclass
class ElbowResult:
    k: int
    confident: bool
    dispersions: np.ndarray


def similarity_from_distances(distances: np.ndarray,
                              epsilon: float = DEFAULT_EPSILON) -> SimilarityMatrix:
    """Edge weights w = (dist + eps)^-1, self-weights included."""
    d = np.asarray(distances, dtype=float)
    d = 0.5 * (d + d.T)
    return SimilarityMatrix(1.0 / (d + epsilon), epsilon)


def similarity_matrix(pulsesets: list[PulseSet], metric: str = "w2",
                      epsilon: float = DEFAULT_EPSILON,
                      cfg: TransportConfig = TransportConfig(),
                      shaping: ShapingConfig = ShapingConfig()) -> SimilarityMatrix:
    """Fully connected similarity graph over a list of pulse sets."""
    if len(pulsesets) < 2:
        raise ValueError("need at least 2 pulse sets")
    return similarity_from_distances(
        pulse_set_distance_matrix(pulsesets, metric, cfg, shaping), epsilon)


def _compress_labels(raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Map labels to consecutive ints in order of first appearance."""
    mapping: dict[int, int] = {}
    out = np.empty_like(raw)
    for i, lab in enumerate(raw):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out, len(mapping)


def spectral_cluster(sim: SimilarityMatrix, k: int, seed: int = 0) -> ClusterLabels:
    """Normalized spectral clustering into k families.

    If k-means leaves a cluster index unused, labels are compressed and
    the reported k shrinks accordingly.
    """
    m = sim.size
    if k < 1 or k > m:
        raise ValueError(f"k must be in [1, {m}], got {k}")
    if k == 1:
        return ClusterLabels(np.zeros(m, dtype=int), 1, seed)

    w = 0.5 * (sim.entries + sim.entries.T)
    np.fill_diagonal(w, 0.0)  # self-loops carry no grouping information
    deg = w.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.maximum(deg, 1e-300))
    lap = np.eye(m) - inv_sqrt[:, None] * w * inv_sqrt[None, :]
    _, vecs = eigh(lap, subset_by_index=[0, k - 1])
    norms = np.linalg.norm(vecs, axis=1)
    embedding = vecs / np.maximum(norms, 1e-15)[:, None]

    km = KMeans(n_clusters=k, n_init=10, init="k-means++", random_state=int(seed))
    raw = km.fit_predict(embedding)
    labels, used = _compress_labels(raw)
    return ClusterLabels(labels, used, seed)


def _dispersion(distances: np.ndarray, labels: np.ndarray) -> float:
    total = 0.0
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        block = distances[np.ix_(members, members)]
        total += float(block.sum()) / members.size
    return total


def elbow_k(sim: SimilarityMatrix, k_max: int, seed: int = 0) -> ElbowResult:
    """Cluster-count selection by the knee of the dispersion curve.

    Computes the within-cluster dispersion D(k) for k = 1..k_max and
    returns the k maximizing the discrete second difference
    D(k-1) - 2 D(k) + D(k+1); ties go to the smaller k. When the largest
    second difference is below 10% of D(1) the curve shows no usable
    knee: the result is flagged unconfident and k = 1 is reported.
    """
    if k_max < 3:
        raise ValueError("k_max must be >= 3")
    if k_max > sim.size:
        raise ValueError(f"k_max must be <= {sim.size}")
    distances = sim.distances()
    disp = np.array([
        _dispersion(distances, spectral_cluster(sim, k, seed).labels)
        for k in range(1, k_max + 1)
    ])
    second = disp[:-2] - 2.0 * disp[1:-1] + disp[2:]
    best = int(np.argmax(second))
    k = best + 2
    confident = bool(second[best] >= 0.1 * disp[0]) and disp[0] > 0
    if not confident:
        k = 1
    return ElbowResult(k=k, confident=confident, dispersions=disp)


def match_probability(found, truth, include_diagonal: bool = True) -> float:
    """P(correct | found): the fraction of found same-cluster pairs that
    are truly same-family.

    The double sum runs over ordered pairs; the printed formula includes
    the i = j diagonal (always correct), excludable for sensitivity
    studies via ``include_diagonal=False``.
    """
    f = np.asarray(found.labels if isinstance(found, ClusterLabels) else found)
    t = np.asarray(truth.labels if isinstance(truth, ClusterLabels) else truth)
    if f.shape != t.shape:
        raise ValueError(f"label lengths differ: {f.shape} vs {t.shape}")
    same_f = f[:, None] == f[None, :]
    same_t = t[:, None] == t[None, :]
    if not include_diagonal:
        off = ~np.eye(f.size, dtype=bool)
        same_f = same_f & off
    den = int(same_f.sum())
    if den == 0:
        return 1.0
    num = int((same_f & same_t).sum())
    return num / den

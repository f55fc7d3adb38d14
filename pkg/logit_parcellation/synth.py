"""Synthetic cohorts with a planted parcellation.

Each seed's logit tractogram is the connectivity vector of its parcel plus
a per-seed deviation shared by all subjects and a per-subject deviation:

    logit(T[s, p]) = beta[c(p)] + eps_c[p] + eps_s[s, p]

Optionally every entry is observed through N Bernoulli streamline trials.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import expit

from .baselines import homogeneous_random_parcellation
from .cluster import Parcellation
from .errors import ParameterError
from .fileio import write_cmat, write_manifest, write_off, write_parcellation
from .mesh import SurfaceMesh, build_adjacency
from .transform import ConnectivityMatrix, Space, StreamlineCounts, estimate_tractogram
from .utils import RNG_ALGORITHM, derive_seed, make_rng

logger = logging.getLogger(__name__)

NOISE_CONVENTION = "eps_c=per_seed;eps_s=per_subject_seed"
BETA_RANGE = 6.0

# sub-stream tags
_PARTITION, _BETAS, _SEED_NOISE, _SUBJECT = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class GroundTruthModel:
    """Parameters of a synthetic cohort.

    Attributes:
        partition: Planted parcellation of the seeds.
        betas: (n_parcels, n_targets) logit connectivity of every parcel.
        sigma_c: Std of the per-seed deviation, in logit units.
        sigma_s: Std of the per-subject deviation, in logit units.
        n_subjects: Number of subjects to sample.
        streamlines_per_seed: N for the observation layer, or None.
        seed: Seed the model was planted with, if any (kept for the manifest).
    """

    partition: Parcellation
    betas: np.ndarray
    sigma_c: float = 0.0
    sigma_s: float = 0.0
    n_subjects: int = 1
    streamlines_per_seed: Optional[int] = None
    seed: Optional[int] = None
    noise_convention: str = NOISE_CONVENTION

    def __post_init__(self):
        betas = np.array(self.betas, dtype=np.float64)
        if betas.ndim != 2 or betas.shape[0] != self.partition.n_parcels:
            raise ParameterError(
                f"betas must have one row per parcel ({self.partition.n_parcels}), "
                f"got shape {betas.shape}"
            )
        if not np.all(np.isfinite(betas)):
            raise ParameterError("betas must be finite")
        if self.sigma_c < 0 or self.sigma_s < 0:
            raise ParameterError("Noise standard deviations must be non-negative")
        if self.n_subjects < 1:
            raise ParameterError(f"n_subjects must be at least 1, got {self.n_subjects}")
        if self.streamlines_per_seed is not None and self.streamlines_per_seed < 1:
            raise ParameterError(
                f"streamlines_per_seed must be positive, got {self.streamlines_per_seed}"
            )
        if betas.shape[0] > 1 and pdist(betas).min() == 0.0:
            raise ParameterError("Distinct parcels must have distinct connectivity vectors")
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)

    @property
    def n_parcels(self):
        return self.partition.n_parcels

    @property
    def n_targets(self):
        return self.betas.shape[1]

    def with_noise(self, sigma_c=0.0, sigma_s=0.0, n_subjects=1, streamlines_per_seed=None):
        """Copy of the model with the noise and cohort parameters replaced."""
        return GroundTruthModel(self.partition, self.betas, sigma_c, sigma_s, n_subjects,
                                streamlines_per_seed, self.seed)


@dataclass(frozen=True, eq=False)
class SyntheticCohort:
    """One draw from a GroundTruthModel.

    ``counts`` and ``observed`` are None unless the model sets N.
    """

    model: GroundTruthModel
    eps_c: np.ndarray
    eps_s: np.ndarray
    subjects: List[ConnectivityMatrix]
    counts: Optional[List[StreamlineCounts]] = None
    observed: Optional[List[ConnectivityMatrix]] = None
    seed: Optional[int] = None


def grid_mesh(rows, cols, spacing=1.0):
    """Planar grid with every cell split into two triangles along one diagonal.

    Vertex ``r * cols + c`` sits at (c * spacing, r * spacing, 0).

    Args:
        rows (int): Vertex rows, at least 2.
        cols (int): Vertex columns, at least 2.
        spacing (float): Distance between neighbouring vertices in mm.

    Returns:
        SurfaceMesh: (rows - 1) * (cols - 1) * 2 triangles.
    """
    if rows < 2 or cols < 2:
        raise ParameterError(f"Grid needs at least 2x2 vertices, got {rows}x{cols}")
    if spacing <= 0:
        raise ParameterError(f"spacing must be positive, got {spacing}")
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    positions = np.column_stack((c.reshape(-1) * spacing, r.reshape(-1) * spacing,
                                 np.zeros(rows * cols)))
    corner = (np.arange(rows - 1)[:, None] * cols + np.arange(cols - 1)[None, :]).reshape(-1)
    lower = np.column_stack((corner, corner + 1, corner + cols + 1))
    upper = np.column_stack((corner, corner + cols + 1, corner + cols))
    return SurfaceMesh(positions, np.vstack((lower, upper)))


def planted_partition(mesh, k, n_targets, separation, seed):
    """Plant a random connected parcellation with well-separated connectivity.

    The parcels come from a homogeneous random parcellation of the mesh.
    Parcel vectors are drawn uniformly in [-6, 6] and, when two of them are
    closer than ``separation``, spread about their mean until the closest
    pair is ``separation`` apart.

    Returns:
        GroundTruthModel: Noise-free single-subject model; use
        :meth:`GroundTruthModel.with_noise` to set the cohort parameters.
    """
    if k < 1:
        raise ParameterError(f"k must be at least 1, got {k}")
    if n_targets < 1:
        raise ParameterError(f"n_targets must be at least 1, got {n_targets}")
    if separation <= 0:
        raise ParameterError(f"separation must be positive, got {separation}")

    graph = build_adjacency(mesh)
    partition = homogeneous_random_parcellation(graph, k, derive_seed(seed, _PARTITION))
    rng = make_rng(seed, _BETAS)
    betas = rng.uniform(-BETA_RANGE, BETA_RANGE, size=(k, n_targets))
    if k > 1:
        closest = pdist(betas).min()
        while closest == 0.0:
            betas = rng.uniform(-BETA_RANGE, BETA_RANGE, size=(k, n_targets))
            closest = pdist(betas).min()
        if closest < separation:
            center = betas.mean(axis=0)
            # the extra 1e-9 keeps the closest pair at or above separation after rounding
            betas = center + (betas - center) * (separation / closest * (1.0 + 1e-9))
    logger.debug("Planted %d parcels over %d seeds", k, mesh.n_vertices)
    return GroundTruthModel(partition, betas, seed=seed)


def sample_cohort(model, seed):
    """Draw every subject's logit tractograms, and observations when N is set.

    The per-seed deviation is drawn once and shared by all subjects; each
    subject then draws its own per-seed deviation and, with N set, its
    binomial streamline counts from its own sub-stream.

    Args:
        model (GroundTruthModel): Cohort parameters.
        seed (int): RNG seed.

    Returns:
        SyntheticCohort: Subjects in logit space, in subject order.
    """
    labels = model.partition.labels
    shape = (labels.size, model.n_targets)
    eps_c = model.sigma_c * make_rng(seed, _SEED_NOISE).standard_normal(shape)
    base = model.betas[labels] + eps_c

    eps_s = np.empty((model.n_subjects,) + shape)
    subjects, counts, observed = [], [], []
    for s in range(model.n_subjects):
        rng = make_rng(seed, _SUBJECT, s)
        eps_s[s] = model.sigma_s * rng.standard_normal(shape)
        logits = base + eps_s[s]
        subjects.append(ConnectivityMatrix(logits, Space.LOGIT))
        if model.streamlines_per_seed is not None:
            hits = StreamlineCounts(rng.binomial(model.streamlines_per_seed, expit(logits)),
                                    model.streamlines_per_seed)
            counts.append(hits)
            observed.append(estimate_tractogram(hits))

    if model.streamlines_per_seed is None:
        counts = observed = None
    logger.debug("Sampled %d subjects of shape %s", model.n_subjects, shape)
    return SyntheticCohort(model, eps_c, eps_s, subjects, counts, observed, seed)


def split_subjects(n_subjects, n_groups, seed):
    """Randomly divide subject indices into disjoint groups of near-equal size.

    Returns:
        list of np.ndarray: Sorted subject indices per group.
    """
    if not 1 <= n_groups <= n_subjects:
        raise ParameterError(f"n_groups must lie in [1, {n_subjects}], got {n_groups}")
    order = make_rng(seed).permutation(n_subjects)
    return [np.sort(group) for group in np.array_split(order, n_groups)]


def save_cohort(cohort, mesh, out_dir):
    """Write a cohort to a directory.

    Files: mesh.off, manifest.txt, partition.csv, betas.cmat and one
    subject_XXX.cmat per subject. With an observation layer the observed
    probabilities go to subject_XXX.cmat and the exact logits to
    subject_XXX_logit.cmat.

    Returns:
        list of Path: The subject matrices the pipeline should read.
    """
    model = cohort.model
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_off(out / "mesh.off", mesh)
    write_parcellation(out / "partition.csv", model.partition)
    write_cmat(out / "betas.cmat", ConnectivityMatrix(model.betas, Space.LOGIT))
    write_manifest(out / "manifest.txt", {
        "k": model.n_parcels,
        "n_seeds": model.partition.n_seeds,
        "n_targets": model.n_targets,
        "sigma_c": repr(float(model.sigma_c)),
        "sigma_s": repr(float(model.sigma_s)),
        "n_subjects": model.n_subjects,
        "streamlines": model.streamlines_per_seed if model.streamlines_per_seed is not None else "none",
        "model_seed": model.seed if model.seed is not None else "none",
        "seed": cohort.seed if cohort.seed is not None else "none",
        "rng": RNG_ALGORITHM,
        "noise_convention": model.noise_convention,
    })

    paths = []
    for s, logits in enumerate(cohort.subjects):
        path = out / f"subject_{s:03d}.cmat"
        if cohort.observed is not None:
            write_cmat(path, cohort.observed[s])
            write_cmat(out / f"subject_{s:03d}_logit.cmat", logits)
        else:
            write_cmat(path, logits)
        paths.append(path)
    logger.info("Wrote cohort of %d subjects to %s", len(paths), out)
    return paths

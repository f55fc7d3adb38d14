"""Command-line front end.

Every subcommand reads its inputs, runs one stage of the pipeline and
writes CSV/CMAT outputs. Failures map to exit codes: 2 bad parameters,
3 I/O errors, 4 malformed files, 5 unsatisfiable constraints.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .baselines import DEFAULT_INITIAL_PARCELS, MODES, baseline_curve
from .cluster import (SIZE_MODES, Parcellation, build_dendrogram, cut_by_count, cut_by_height,
                      parcel_fingerprint)
from .errors import CorrespondenceError, ParameterError, ParcellationError
from .fileio import (SPACE_CHOICES, load_matrix, read_dendrogram, read_mask, read_off,
                     read_parcellation, read_parcellation_labels, write_cmat, write_dendrogram,
                     write_parcellation, write_rows_csv)
from .mesh import build_adjacency, induced_submesh, vertex_areas
from .metrics import adjusted_rand_index, consistency_curve, match_labels
from .synth import grid_mesh, planted_partition, sample_cohort, save_cohort
from .transform import Space, default_clamp_eps, groupwise_average, logit_transform
from .utils import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_MIN_AREA = 3.0
DEFAULT_TRIALS = 1000
IO_ERROR_EXIT = 3


@dataclass
class PipelineConfig:
    """Validated parameters of one command.

    Input paths must exist; numeric parameters are range-checked here so
    commands can trust them.
    """

    mesh: Optional[str] = None
    matrices: List[str] = field(default_factory=list)
    mask: Optional[str] = None
    dendrograms: List[str] = field(default_factory=list)
    parcellations: List[str] = field(default_factory=list)
    clamp_eps: Optional[float] = None
    streamlines: Optional[int] = None
    min_area: float = DEFAULT_MIN_AREA
    k_values: List[int] = field(default_factory=list)
    height: Optional[float] = None
    seed: int = 0
    out: str = "."
    space: str = "auto"
    size_mode: str = "auto"
    allow_disconnected: bool = False
    mode: str = "homogeneous"
    trials: int = DEFAULT_TRIALS
    initial_parcels: int = DEFAULT_INITIAL_PARCELS

    def __post_init__(self):
        inputs = [self.mesh, self.mask, *self.matrices, *self.dendrograms, *self.parcellations]
        for path in inputs:
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"Input file not found: {path}")
        if self.streamlines is not None and self.streamlines < 1:
            raise ParameterError(f"--streamlines must be positive, got {self.streamlines}")
        if self.clamp_eps is None:
            self.clamp_eps = default_clamp_eps(self.streamlines)
        if not 0.0 < self.clamp_eps < 0.5:
            raise ParameterError(f"--clamp-eps must lie in (0, 0.5), got {self.clamp_eps}")
        if self.min_area < 0:
            raise ParameterError(f"--min-area must be non-negative, got {self.min_area}")
        if any(k < 1 for k in self.k_values):
            raise ParameterError(f"Every k must be at least 1, got {self.k_values}")
        if self.height is not None and self.height < 0:
            raise ParameterError(f"--height must be non-negative, got {self.height}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError(f"--seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.space not in SPACE_CHOICES:
            raise ParameterError(f"--space must be one of {SPACE_CHOICES}")
        if self.size_mode not in ("auto",) + SIZE_MODES:
            raise ParameterError(f"--size-mode must be auto, area or count, got {self.size_mode}")
        if self.mode not in MODES:
            raise ParameterError(f"--mode must be one of {MODES}, got {self.mode}")
        if self.trials < 2:
            raise ParameterError(f"--trials must be at least 2, got {self.trials}")
        if self.initial_parcels < 1:
            raise ParameterError(f"--initial-parcels must be positive, got {self.initial_parcels}")


def parse_k_list(text):
    """Parse '2,3,5-8' into [2, 3, 5, 6, 7, 8]."""
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = (int(x) for x in part.split("-", 1))
                values.extend(range(lo, hi + 1))
            else:
                values.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid k list {text!r}") from None
    return values


def _config(args, **overrides):
    fields = {name: getattr(args, name) for name in PipelineConfig.__dataclass_fields__
              if getattr(args, name, None) is not None}
    fields.update(overrides)
    return PipelineConfig(**fields)


def _load_domain(config):
    """Mesh restricted to the mask, and the original index of every seed."""
    full = read_off(config.mesh)
    if config.mask is None:
        return full, full.n_vertices, np.arange(full.n_vertices)
    mask = read_mask(config.mask, full.n_vertices)
    mesh, _ = induced_submesh(full, mask)
    logger.info("Mask keeps %d of %d vertices", mesh.n_vertices, full.n_vertices)
    return mesh, full.n_vertices, np.flatnonzero(mask)


def _load_features(path, config, n_rows, seeds):
    m = load_matrix(path, config.space)
    if m.n_seeds != n_rows:
        raise CorrespondenceError(f"{path} has {m.n_seeds} rows, mesh has {n_rows} vertices")
    m = m.select_rows(seeds)
    if m.space is Space.PROBABILITY:
        m = logit_transform(m, config.clamp_eps)
    return m


def _cluster(features, mesh, config):
    size_mode = config.size_mode
    if size_mode == "auto":
        size_mode = "area"
        if mesh.is_planar():
            size_mode = "count"
            logger.warning("Planar mesh: measuring cluster size in seeds, minimum %g seeds",
                           config.min_area)
    return build_dendrogram(features, build_adjacency(mesh), vertex_areas(mesh),
                            config.min_area, size_mode, config.allow_disconnected)


def _write_outputs(d, seeds, config):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dendrogram(out / "dendrogram.csv", d)
    for k in config.k_values:
        write_parcellation(out / f"parcellation_k{k}.csv", cut_by_count(d, k), seeds)
    logger.info("Wrote dendrogram and %d parcellations to %s", len(config.k_values), out)


def cmd_parcellate(args):
    config = _config(args)
    if len(config.matrices) != 1:
        raise ParameterError("parcellate takes exactly one --matrix")
    mesh, n_rows, seeds = _load_domain(config)
    features = _load_features(config.matrices[0], config, n_rows, seeds)
    _write_outputs(_cluster(features, mesh, config), seeds, config)
    return 0


def cmd_groupwise(args):
    config = _config(args)
    if not config.matrices:
        raise ParameterError("groupwise needs at least one --matrix")
    mesh, n_rows, seeds = _load_domain(config)
    subjects = [_load_features(path, config, n_rows, seeds) for path in config.matrices]
    for path, m in zip(config.matrices, subjects):
        if m.shape != subjects[0].shape:
            raise CorrespondenceError(f"{path} has shape {m.shape}, expected {subjects[0].shape}")
    mean = groupwise_average(subjects)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cmat(out / "groupwise.cmat", mean)
    _write_outputs(_cluster(mean, mesh, config), seeds, config)
    return 0


def cmd_cut(args):
    config = _config(args, dendrograms=[args.dendrogram],
                      parcellations=[args.reference] if args.reference else [])
    if not config.k_values and config.height is None:
        raise ParameterError("cut needs --k or --height")
    d = read_dendrogram(args.dendrogram)
    seeds = np.arange(d.n_leaves)
    reference = None
    if args.reference:
        seeds, reference = read_parcellation(args.reference)
        if seeds.size != d.n_leaves:
            raise CorrespondenceError(
                f"Reference has {seeds.size} seeds, dendrogram {d.n_leaves} leaves"
            )

    cuts = [(f"k{k}", cut_by_count(d, k)) for k in config.k_values]
    if config.height is not None:
        cuts.append((f"h{config.height:g}", cut_by_height(d, config.height)))
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, p in cuts:
        labels = match_labels(reference, p) if reference is not None else p
        write_parcellation(out / f"parcellation_{name}.csv", labels, seeds)
    return 0


def cmd_fingerprint(args):
    config = _config(args, parcellations=[args.parcellation])
    seeds, stored = read_parcellation_labels(args.parcellation)
    p = Parcellation.from_labels(stored)
    m = load_matrix(config.matrices[0], config.space)
    if seeds.size and (seeds.min() < 0 or seeds.max() >= m.n_seeds):
        raise CorrespondenceError(
            f"Parcellation references seed {seeds.max()}, matrix has {m.n_seeds} rows"
        )
    m = m.select_rows(seeds)
    if m.space is Space.PROBABILITY:
        m = logit_transform(m, config.clamp_eps)
    labels = np.unique(stored).tolist()
    if args.label is not None:
        if args.label not in labels:
            raise ParameterError(f"Label {args.label} does not occur in {args.parcellation}")
        labels = [args.label]
    rows = []
    for label in labels:
        # labels in the file need not follow the canonical order
        parcel = int(p.labels[np.flatnonzero(stored == label)[0]])
        rows.append([label] + parcel_fingerprint(m, p, parcel).tolist())
    header = ["label"] + [f"t{j}" for j in range(m.n_targets)]
    write_rows_csv(config.out, header, rows)
    return 0


def _read_aligned(path_a, path_b):
    """Two parcellations over the same seeds, rows ordered by seed index."""
    seeds_a, labels_a = read_parcellation_labels(path_a)
    seeds_b, labels_b = read_parcellation_labels(path_b)
    if seeds_a.size == seeds_b.size and not np.array_equal(seeds_a, seeds_b):
        order_a = np.argsort(seeds_a, kind="stable")
        order_b = np.argsort(seeds_b, kind="stable")
        if not np.array_equal(seeds_a[order_a], seeds_b[order_b]):
            raise CorrespondenceError(f"{path_a} and {path_b} cover different seeds")
        logger.warning("Seed order differs between %s and %s; aligning on seed index",
                       path_a, path_b)
        labels_a, labels_b = labels_a[order_a], labels_b[order_b]
    return Parcellation.from_labels(labels_a), Parcellation.from_labels(labels_b)


def cmd_ari(args):
    _config(args, parcellations=list(args.parcellations))
    a, b = _read_aligned(*args.parcellations)
    print(f"{adjusted_rand_index(a, b):.6f}")
    return 0


def cmd_consistency(args):
    config = _config(args, dendrograms=list(args.dendrogram))
    if len(config.dendrograms) < 2:
        raise ParameterError("consistency needs at least two --dendrogram files")
    if not config.k_values:
        raise ParameterError("consistency needs --k")
    rows = consistency_curve([read_dendrogram(path) for path in config.dendrograms],
                             config.k_values)
    write_rows_csv(config.out, ["k", "pair_a", "pair_b", "ari"], rows)
    return 0


def cmd_baseline(args):
    config = _config(args)
    if not config.k_values:
        raise ParameterError("baseline needs --k")
    mesh, _, _ = _load_domain(config)
    if args.unconstrained and config.mode != "hierarchical":
        logger.warning("--unconstrained only affects hierarchical mode")
    rows = baseline_curve(build_adjacency(mesh), config.trials, config.k_values, config.mode,
                          config.seed, n_initial=config.initial_parcels,
                          adjacency_constrained=not args.unconstrained)
    write_rows_csv(config.out, ["k", "mode", "mean_ari", "std_ari", "n_trials"], rows)
    return 0


def cmd_synth(args):
    config = _config(args)
    mesh = grid_mesh(args.rows, args.cols, args.spacing)
    model = planted_partition(mesh, args.parcels, args.targets, args.separation,
                              derive_seed(config.seed, 0))
    model = model.with_noise(args.sigma_c, args.sigma_s, args.subjects, args.streamlines)
    cohort = sample_cohort(model, derive_seed(config.seed, 1))
    save_cohort(cohort, mesh, config.out)
    return 0


def _add_common(parser, out_help):
    parser.add_argument("--out", required=True, help=out_help)
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="Log progress (-v) or debug details (-vv)")


def _add_domain(parser):
    parser.add_argument("--mesh", required=True, help="Surface mesh (OFF)")
    parser.add_argument("--mask", help="Vertex mask, one 0/1 per line")


def _add_clustering(parser):
    parser.add_argument("--matrix", dest="matrices", action="append", required=True,
                        help="Connectivity matrix (.cmat or .csv); repeat for several subjects")
    parser.add_argument("--space", choices=SPACE_CHOICES, default="auto",
                        help="Space of the matrix entries (CMAT files carry it)")
    parser.add_argument("--streamlines", type=int,
                        help="Streamlines per seed behind probability inputs; sets the default clamp")
    parser.add_argument("--clamp-eps", type=float,
                        help="Clipping margin before the logit; default 1/(2N) with --streamlines, else 1e-4")
    parser.add_argument("--min-area", type=float, default=DEFAULT_MIN_AREA,
                        help="Minimum finest-level cluster size (mm², or seeds in count mode)")
    parser.add_argument("--size-mode", choices=("auto",) + SIZE_MODES, default="auto",
                        help="Measure cluster size by area or seed count")
    parser.add_argument("--allow-disconnected", action="store_true",
                        help="Accept isolated seeds and disconnected domains")
    parser.add_argument("--k", dest="k_values", type=parse_k_list, default=[],
                        help="Parcel counts to cut at, e.g. 2,4,6-10")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="logit_parcellation",
        description="Connectivity-based parcellation of surface meshes in logit space.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parcellate", help="Cluster one subject's tractograms")
    _add_domain(p)
    _add_clustering(p)
    _add_common(p, "Output directory")
    p.set_defaults(func=cmd_parcellate)

    p = sub.add_parser("groupwise", help="Cluster the average of several subjects in logit space")
    _add_domain(p)
    _add_clustering(p)
    _add_common(p, "Output directory")
    p.set_defaults(func=cmd_groupwise)

    p = sub.add_parser("cut", help="Cut a dendrogram into parcellations")
    p.add_argument("--dendrogram", required=True, help="Dendrogram CSV")
    p.add_argument("--k", dest="k_values", type=parse_k_list, default=[],
                   help="Parcel counts to cut at")
    p.add_argument("--height", type=float, help="Cut height")
    p.add_argument("--reference", help="Parcellation whose labels the cuts are matched to")
    _add_common(p, "Output directory")
    p.set_defaults(func=cmd_cut)

    p = sub.add_parser("fingerprint", help="Connectivity fingerprint of parcels")
    p.add_argument("--matrix", dest="matrices", action="append", required=True,
                   help="Connectivity matrix the parcellation was computed from")
    p.add_argument("--parcellation", required=True, help="Parcellation CSV")
    p.add_argument("--label", type=int, help="Single parcel; default all")
    p.add_argument("--space", choices=SPACE_CHOICES, default="auto")
    p.add_argument("--streamlines", type=int, help="Streamlines per seed behind probability inputs")
    p.add_argument("--clamp-eps", type=float)
    _add_common(p, "Output CSV")
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("ari", help="Print the adjusted Rand index of two parcellations")
    p.add_argument("parcellations", nargs=2, metavar="PARCELLATION")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.set_defaults(func=cmd_ari)

    p = sub.add_parser("consistency", help="Pairwise ARI between dendrograms per k")
    p.add_argument("--dendrogram", action="append", required=True, help="Repeat per dendrogram")
    p.add_argument("--k", dest="k_values", type=parse_k_list, default=[])
    _add_common(p, "Output CSV")
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("baseline", help="Chance-level ARI of random parcellations")
    _add_domain(p)
    p.add_argument("--mode", choices=MODES, default="homogeneous")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--k", dest="k_values", type=parse_k_list, default=[])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--initial-parcels", type=int, default=DEFAULT_INITIAL_PARCELS,
                   help="Initial parcels for hierarchical mode")
    p.add_argument("--unconstrained", action="store_true",
                   help="Merge random parcel pairs regardless of adjacency (hierarchical mode)")
    _add_common(p, "Output CSV")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("synth", help="Sample a synthetic cohort with a planted parcellation")
    p.add_argument("--rows", type=int, default=20)
    p.add_argument("--cols", type=int, default=20)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--parcels", type=int, default=6)
    p.add_argument("--targets", type=int, default=50)
    p.add_argument("--separation", type=float, default=8.0)
    p.add_argument("--sigma-c", type=float, default=0.0)
    p.add_argument("--sigma-s", type=float, default=0.0)
    p.add_argument("--subjects", type=int, default=1)
    p.add_argument("--streamlines", type=int, help="Streamlines per seed; exact logits if unset")
    p.add_argument("--seed", type=int, default=0)
    _add_common(p, "Output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    """Run the command line; returns the process exit code."""
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParcellationError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s", exc)
        return IO_ERROR_EXIT


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end tests of the command-line front end."""

import numpy as np
import pytest
from logit_parcellation import cli
from logit_parcellation.cli import PipelineConfig, main, parse_k_list
from logit_parcellation.cluster import Parcellation
from logit_parcellation.fileio import (read_cmat, read_dendrogram, read_parcellation,
                                       write_cmat, write_mask, write_off, write_parcellation)
from logit_parcellation.mesh import SurfaceMesh
from logit_parcellation.synth import grid_mesh
from logit_parcellation.transform import ConnectivityMatrix, Space


@pytest.fixture
def cohort(tmp_path):
    """Noise-free synthetic cohort of two subjects with four planted parcels."""
    out = tmp_path / "cohort"
    assert main(["synth", "--rows", "10", "--cols", "10", "--parcels", "4", "--targets", "12",
                 "--subjects", "2", "--seed", "3", "--out", str(out)]) == 0
    return out


@pytest.fixture
def noisy_cohort(tmp_path):
    """Synthetic cohort of three subjects with subject noise."""
    out = tmp_path / "noisy"
    assert main(["synth", "--rows", "8", "--cols", "8", "--parcels", "3", "--targets", "10",
                 "--separation", "10", "--sigma-s", "1.0", "--subjects", "3", "--seed", "4",
                 "--out", str(out)]) == 0
    return out


def subject_args(directory, n):
    args = []
    for s in range(n):
        args += ["--matrix", str(directory / f"subject_{s:03d}.cmat")]
    return args


def test_parse_k_list():
    """Test comma lists with ranges."""
    assert parse_k_list("2,4,6-8") == [2, 4, 6, 7, 8]


def test_config_validation(tmp_path):
    """Test missing files and out-of-range parameters."""
    with pytest.raises(FileNotFoundError):
        PipelineConfig(mesh=str(tmp_path / "missing.off"))
    with pytest.raises(ValueError):
        PipelineConfig(clamp_eps=0.5)
    with pytest.raises(ValueError):
        PipelineConfig(k_values=[0])
    with pytest.raises(ValueError):
        PipelineConfig(trials=1)


def test_synth_writes_cohort(cohort):
    """Test the files of a synthetic cohort."""
    for name in ("mesh.off", "manifest.txt", "partition.csv", "betas.cmat",
                 "subject_000.cmat", "subject_001.cmat"):
        assert (cohort / name).is_file()


def test_groupwise_recovers_planted_parcels(cohort, tmp_path, capsys):
    """Test synth, groupwise clustering and ARI against the truth end to end."""
    out = tmp_path / "group"
    code = main(["groupwise", "--mesh", str(cohort / "mesh.off"), *subject_args(cohort, 2),
                 "--min-area", "0", "--k", "4", "--out", str(out)])
    assert code == 0
    assert read_cmat(out / "groupwise.cmat").space is Space.LOGIT
    assert read_dendrogram(out / "dendrogram.csv").is_complete()
    assert main(["ari", str(out / "parcellation_k4.csv"), str(cohort / "partition.csv")]) == 0
    assert capsys.readouterr().out.strip() == "1.000000"


def test_parcellate_single_subject(cohort, tmp_path, capsys):
    """Test that one noise-free subject also recovers the truth."""
    out = tmp_path / "single"
    assert main(["parcellate", "--mesh", str(cohort / "mesh.off"), *subject_args(cohort, 1),
                 "--min-area", "0", "--k", "2,4", "--out", str(out)]) == 0
    assert (out / "parcellation_k2.csv").is_file()
    main(["ari", str(out / "parcellation_k4.csv"), str(cohort / "partition.csv")])
    assert capsys.readouterr().out.strip() == "1.000000"


def test_parcellate_dendrogram_only(cohort, tmp_path):
    """Test that an empty k list writes only the dendrogram."""
    out = tmp_path / "dendro"
    assert main(["parcellate", "--mesh", str(cohort / "mesh.off"), *subject_args(cohort, 1),
                 "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["dendrogram.csv"]


def test_groupwise_single_subject_matches_parcellate(noisy_cohort, tmp_path):
    """Test that averaging one subject is the same as clustering it."""
    common = ["--mesh", str(noisy_cohort / "mesh.off"), *subject_args(noisy_cohort, 1),
              "--k", "3"]
    assert main(["parcellate", *common, "--out", str(tmp_path / "a")]) == 0
    assert main(["groupwise", *common, "--out", str(tmp_path / "b")]) == 0
    for name in ("dendrogram.csv", "parcellation_k3.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_groupwise_subject_order(noisy_cohort, tmp_path):
    """Test that permuting subjects leaves the parcellation unchanged."""
    mesh = ["--mesh", str(noisy_cohort / "mesh.off"), "--k", "3"]
    forward = subject_args(noisy_cohort, 3)
    backward = [arg for pair in reversed(list(zip(forward[::2], forward[1::2]))) for arg in pair]
    assert main(["groupwise", *mesh, *forward, "--out", str(tmp_path / "f")]) == 0
    assert main(["groupwise", *mesh, *backward, "--out", str(tmp_path / "r")]) == 0
    np.testing.assert_allclose(read_cmat(tmp_path / "f" / "groupwise.cmat").values,
                               read_cmat(tmp_path / "r" / "groupwise.cmat").values, atol=1e-12)
    assert ((tmp_path / "f" / "parcellation_k3.csv").read_text()
            == (tmp_path / "r" / "parcellation_k3.csv").read_text())


def test_groupwise_shape_mismatch(cohort, tmp_path):
    """Test that a subject with other targets is rejected naming the file."""
    odd = tmp_path / "odd.cmat"
    write_cmat(odd, ConnectivityMatrix(np.zeros((100, 5)), Space.LOGIT))
    code = main(["groupwise", "--mesh", str(cohort / "mesh.off"), *subject_args(cohort, 1),
                 "--matrix", str(odd), "--out", str(tmp_path / "g")])
    assert code == 2


def test_parcellate_with_mask(cohort, tmp_path):
    """Test that masked runs keep original vertex indices."""
    mask = np.ones(100, dtype=bool)
    mask[:10] = False
    write_mask(tmp_path / "mask.txt", mask)
    out = tmp_path / "masked"
    assert main(["parcellate", "--mesh", str(cohort / "mesh.off"), *subject_args(cohort, 1),
                 "--mask", str(tmp_path / "mask.txt"), "--min-area", "0", "--k", "4",
                 "--out", str(out)]) == 0
    seeds, p = read_parcellation(out / "parcellation_k4.csv")
    assert seeds.tolist() == list(range(10, 100))
    assert p.n_parcels == 4


def test_empty_mask(cohort, tmp_path):
    """Test that a mask excluding every vertex fails with a parameter error."""
    write_mask(tmp_path / "mask.txt", np.zeros(100, dtype=bool))
    code = main(["parcellate", "--mesh", str(cohort / "mesh.off"), *subject_args(cohort, 1),
                 "--mask", str(tmp_path / "mask.txt"), "--out", str(tmp_path / "x")])
    assert code == 2


def test_missing_input(tmp_path):
    """Test that a missing mesh is an I/O failure."""
    code = main(["parcellate", "--mesh", str(tmp_path / "nope.off"),
                 "--matrix", str(tmp_path / "nope.cmat"), "--out", str(tmp_path / "x")])
    assert code == 3


def test_malformed_matrix(cohort, tmp_path):
    """Test that a corrupt CMAT is a format failure."""
    bad = tmp_path / "bad.cmat"
    bad.write_bytes(b"NOPE" + b"\0" * 40)
    code = main(["parcellate", "--mesh", str(cohort / "mesh.off"), "--matrix", str(bad),
                 "--out", str(tmp_path / "x")])
    assert code == 4


def test_unsatisfiable_min_size(tmp_path):
    """Test that small disconnected components are a constraint failure."""
    mesh = SurfaceMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0]],
                       [[0, 1, 2], [3, 4, 5]])
    write_off(tmp_path / "two.off", mesh)
    write_cmat(tmp_path / "m.cmat", ConnectivityMatrix(np.arange(12.0).reshape(6, 2), Space.LOGIT))
    code = main(["parcellate", "--mesh", str(tmp_path / "two.off"),
                 "--matrix", str(tmp_path / "m.cmat"), "--min-area", "5",
                 "--out", str(tmp_path / "x")])
    assert code == 5


def test_probability_input_is_transformed(tmp_path):
    """Test that probability matrices go through the logit before clustering."""
    mesh = grid_mesh(3, 3)
    write_off(tmp_path / "g.off", mesh)
    values = np.where(np.arange(9)[:, None] < 4, 0.9, 0.1) * np.ones((9, 3))
    write_cmat(tmp_path / "p.cmat", ConnectivityMatrix(values, Space.PROBABILITY))
    out = tmp_path / "prob"
    assert main(["parcellate", "--mesh", str(tmp_path / "g.off"), "--matrix",
                 str(tmp_path / "p.cmat"), "--min-area", "0", "--k", "2",
                 "--out", str(out)]) == 0
    _, p = read_parcellation(out / "parcellation_k2.csv")
    assert p.labels.tolist() == [0, 0, 0, 0, 1, 1, 1, 1, 1]


def test_ari_command(tmp_path, capsys, caplog):
    """Test ARI of a file with itself, the 4-seed example and a length mismatch."""
    write_parcellation(tmp_path / "a.csv", Parcellation([0, 0, 1, 1]))
    write_parcellation(tmp_path / "b.csv", Parcellation([0, 0, 0, 1]))
    write_parcellation(tmp_path / "c.csv", Parcellation([0, 1, 1]))
    assert main(["ari", str(tmp_path / "a.csv"), str(tmp_path / "a.csv")]) == 0
    assert main(["ari", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]) == 0
    assert capsys.readouterr().out.split() == ["1.000000", "0.000000"]
    assert main(["ari", str(tmp_path / "a.csv"), str(tmp_path / "c.csv")]) == 2
    assert "4 and 3" in caplog.text


def test_cut_command(cohort, tmp_path):
    """Test cuts by count, by height and matched to a reference."""
    group = tmp_path / "group"
    main(["groupwise", "--mesh", str(cohort / "mesh.off"), *subject_args(cohort, 2),
          "--min-area", "0", "--out", str(group)])
    out = tmp_path / "cuts"
    assert main(["cut", "--dendrogram", str(group / "dendrogram.csv"), "--k", "4",
                 "--height", "0", "--reference", str(cohort / "partition.csv"),
                 "--out", str(out)]) == 0
    _, truth = read_parcellation(cohort / "partition.csv")
    text = (out / "parcellation_k4.csv").read_text()
    assert text == (cohort / "partition.csv").read_text()
    _, zero_cut = read_parcellation(out / "parcellation_h0.csv")
    assert zero_cut == truth
    assert main(["cut", "--dendrogram", str(group / "dendrogram.csv"), "--out", str(out)]) == 2


def test_fingerprint_command(cohort, tmp_path):
    """Test that noise-free fingerprints are the inverse logit of the parcel vectors."""
    out = tmp_path / "fp.csv"
    assert main(["fingerprint", "--matrix", str(cohort / "subject_000.cmat"),
                 "--parcellation", str(cohort / "partition.csv"), "--out", str(out)]) == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1, ndmin=2)
    betas = read_cmat(cohort / "betas.cmat").values
    assert rows.shape == (4, 13)
    np.testing.assert_array_equal(rows[:, 0], np.arange(4))
    np.testing.assert_allclose(rows[:, 1:], 1 / (1 + np.exp(-betas)), rtol=1e-6)
    assert (out.read_text().splitlines()[0]).startswith("label,t0,t1")


def test_consistency_command(cohort, tmp_path):
    """Test pairwise ARI rows between two identical dendrograms."""
    main(["groupwise", "--mesh", str(cohort / "mesh.off"), *subject_args(cohort, 2),
          "--min-area", "0", "--out", str(tmp_path / "g")])
    d = str(tmp_path / "g" / "dendrogram.csv")
    out = tmp_path / "consistency.csv"
    assert main(["consistency", "--dendrogram", d, "--dendrogram", d, "--k", "2-4",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines == ["k,pair_a,pair_b,ari", "2,0,1,1", "3,0,1,1", "4,0,1,1"]


def test_baseline_deterministic(cohort, tmp_path):
    """Test that baseline runs with the same seed are byte-identical."""
    args = ["baseline", "--mesh", str(cohort / "mesh.off"), "--trials", "4", "--k", "2,5",
            "--seed", "9"]
    assert main([*args, "--out", str(tmp_path / "a.csv")]) == 0
    assert main([*args, "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "k,mode,mean_ari,std_ari,n_trials"
    assert len(lines) == 3


def test_baseline_hierarchical(cohort, tmp_path):
    """Test the hierarchical baseline with a small initial parcellation."""
    out = tmp_path / "h.csv"
    assert main(["baseline", "--mesh", str(cohort / "mesh.off"), "--mode", "hierarchical",
                 "--trials", "2", "--k", "1,3", "--initial-parcels", "20", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[1].startswith("1,hierarchical,1,0,2")


def test_synth_with_streamlines(tmp_path):
    """Test that an observation layer writes probability matrices."""
    out = tmp_path / "obs"
    assert main(["synth", "--rows", "4", "--cols", "4", "--parcels", "2", "--targets", "3",
                 "--streamlines", "100", "--out", str(out)]) == 0
    assert read_cmat(out / "subject_000.cmat").space is Space.PROBABILITY
    assert (out / "subject_000_logit.cmat").is_file()


def test_fingerprint_keeps_stored_labels(tmp_path):
    """Test that --label and the output refer to the labels written in the file."""
    values = np.where(np.isin(np.arange(6), [2, 5]), 5.0, -5.0)[:, None]
    write_cmat(tmp_path / "m.cmat", ConnectivityMatrix(values, Space.LOGIT))
    (tmp_path / "p.csv").write_text("0,1\n1,1\n2,0\n3,1\n4,1\n5,0\n")
    out = tmp_path / "fp.csv"
    base = ["fingerprint", "--matrix", str(tmp_path / "m.cmat"),
            "--parcellation", str(tmp_path / "p.csv"), "--out", str(out)]
    assert main([*base, "--label", "1"]) == 0
    label, value = out.read_text().splitlines()[1].split(",")
    assert label == "1"
    assert float(value) == pytest.approx(1 / (1 + np.exp(5.0)), rel=1e-6)

    assert main(base) == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1, ndmin=2)
    np.testing.assert_array_equal(rows[:, 0], [0, 1])
    np.testing.assert_allclose(rows[:, 1], 1 / (1 + np.exp([-5.0, 5.0])), rtol=1e-6)
    assert main([*base, "--label", "7"]) == 2


def test_ari_aligns_seed_order(tmp_path, capsys, caplog):
    """Test that rows are matched by seed index and different seed sets are rejected."""
    write_parcellation(tmp_path / "a.csv", Parcellation([0, 0, 1, 1]))
    (tmp_path / "b.csv").write_text("2,1\n0,0\n1,0\n3,1\n")
    (tmp_path / "c.csv").write_text("0,0\n1,0\n2,1\n5,1\n")
    assert main(["ari", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]) == 0
    assert capsys.readouterr().out.split() == ["1.000000"]
    assert "aligning on seed index" in caplog.text
    assert main(["ari", str(tmp_path / "a.csv"), str(tmp_path / "c.csv")]) == 2
    assert "different seeds" in caplog.text


def test_baseline_unconstrained_flag(cohort, tmp_path, monkeypatch):
    """Test that --unconstrained reaches the random merging."""
    seen = []
    real = cli.baseline_curve

    def recording(*args, **kwargs):
        seen.append(kwargs["adjacency_constrained"])
        return real(*args, **kwargs)

    monkeypatch.setattr(cli, "baseline_curve", recording)
    args = ["baseline", "--mesh", str(cohort / "mesh.off"), "--mode", "hierarchical",
            "--trials", "2", "--k", "1,3", "--initial-parcels", "20"]
    assert main([*args, "--out", str(tmp_path / "c.csv")]) == 0
    assert main([*args, "--unconstrained", "--out", str(tmp_path / "u.csv")]) == 0
    assert seen == [True, False]
    assert (tmp_path / "u.csv").read_text().splitlines()[1].startswith("1,hierarchical,1,0,2")


def test_streamlines_set_clamp(tmp_path):
    """Test that a streamline count gives the clamp 1/(2N) unless one is given."""
    assert PipelineConfig().clamp_eps == pytest.approx(1e-4)
    assert PipelineConfig(streamlines=50).clamp_eps == pytest.approx(0.01)
    assert PipelineConfig(streamlines=50, clamp_eps=0.2).clamp_eps == 0.2
    with pytest.raises(ValueError):
        PipelineConfig(streamlines=0)

    obs = tmp_path / "obs"
    assert main(["synth", "--rows", "5", "--cols", "5", "--parcels", "2", "--targets", "4",
                 "--streamlines", "50", "--seed", "2", "--out", str(obs)]) == 0
    common = ["parcellate", "--mesh", str(obs / "mesh.off"), "--matrix",
              str(obs / "subject_000.cmat"), "--min-area", "0"]
    assert main([*common, "--streamlines", "50", "--out", str(tmp_path / "n")]) == 0
    assert main([*common, "--clamp-eps", "0.01", "--out", str(tmp_path / "e")]) == 0
    by_count = (tmp_path / "n" / "dendrogram.csv").read_bytes()
    assert by_count == (tmp_path / "e" / "dendrogram.csv").read_bytes()

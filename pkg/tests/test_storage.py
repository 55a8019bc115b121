"""Round-trips, determinism, and integrity checks for the on-disk formats."""

import json

import numpy as np
import pytest

from tvgraphs.changepoint import ChangepointReport
from tvgraphs.errors import (
    IntegrityError,
    MissingMetadataError,
    ParseError,
)
from tvgraphs.glm import Mode, RegressionSetting, TimeSeriesPanel
from tvgraphs.kernels import Side
from tvgraphs.pna import Factorization
from tvgraphs.storage import (
    Manifest,
    read_changepoints,
    read_factorization,
    read_graph_sequence,
    read_ground_truth,
    read_manifest,
    read_metrics_report,
    read_panel,
    write_changepoint_report,
    write_factorization,
    write_graph_sequence,
    write_ground_truth,
    write_manifest,
    write_metrics_report,
    write_panel,
)
from tvgraphs.synth import SynthConfig, generate
from tvgraphs.tvgraph import GraphSequence


def rand_sequence(rng, setting, K=6, latent=False):
    m, p = setting.m, setting.p
    mask = setting.mask.reshape(-1)
    # np.where keeps dropped entries at exact +0.0; a multiplicative mask
    # would leave -0.0, which the sparse on-disk format cannot represent
    keep = (rng.random((K, m * p)) < 0.4) & (mask[None, :] > 0)
    Acal = np.where(keep, rng.normal(size=(K, m * p)), 0.0)
    Aprime = np.where(
        rng.random((K, m * p)) < 0.3, rng.normal(size=(K, m * p)), 0.0
    )
    Lcal = rng.normal(size=(K, m * p)) * 0.1 if latent else None
    Acal[:2] = 0.0
    Aprime[:2] = 0.0
    return GraphSequence(
        Acal=Acal, Aprime=Aprime, setting=setting, Lcal=Lcal,
        side=Side.CENTER, valid_start=2,
    )


class TestManifest:
    def test_roundtrip(self, tmp_path):
        m = Manifest(kind="x", shape={"K": 3}, seed=7, config={"a": 1.5})
        write_manifest(tmp_path, m)
        back = read_manifest(tmp_path)
        assert back.kind == "x" and back.seed == 7
        assert back.shape == {"K": 3} and back.config == {"a": 1.5}

    def test_missing(self, tmp_path):
        with pytest.raises(MissingMetadataError):
            read_manifest(tmp_path)

    def test_corrupt_json(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{not json")
        with pytest.raises(ParseError):
            read_manifest(tmp_path)

    def test_missing_version(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps({"kind": "x"}))
        with pytest.raises(IntegrityError):
            read_manifest(tmp_path)


class TestPanel:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        panel = TimeSeriesPanel(rng.normal(size=(4, 9)) * 1e-7)
        path = tmp_path / "panel.csv"
        write_panel(path, panel)
        back = read_panel(path)
        assert back.X.tobytes() == panel.X.tobytes()

    def test_deterministic_bytes(self, tmp_path):
        rng = np.random.default_rng(1)
        panel = TimeSeriesPanel(rng.normal(size=(3, 5)))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_panel(a, panel)
        write_panel(b, panel)
        assert a.read_bytes() == b.read_bytes()

    def test_ragged_rejected(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("t0,t1\n1.0,2.0\n3.0\n")
        with pytest.raises(ParseError):
            read_panel(p)

    def test_non_numeric_rejected(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("t0,t1\n1.0,oops\n")
        with pytest.raises(ParseError):
            read_panel(p)

    def test_empty_rejected(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("")
        with pytest.raises(ParseError):
            read_panel(p)


class TestGraphSequence:
    @pytest.mark.parametrize("latent", [False, True])
    def test_roundtrip_exact(self, tmp_path, latent):
        rng = np.random.default_rng(2)
        setting = RegressionSetting(Mode.DIRECTED_AR, N=3, M=2)
        seq = rand_sequence(rng, setting, latent=latent)
        # zero masked positions: they are not representable on disk
        write_graph_sequence(tmp_path, seq, seed=3)
        back = read_graph_sequence(tmp_path)
        assert back.Acal.tobytes() == seq.Acal.tobytes()
        assert back.Aprime.tobytes() == seq.Aprime.tobytes()
        if latent:
            assert back.Lcal.tobytes() == seq.Lcal.tobytes()
        else:
            assert back.Lcal is None
        assert back.side == seq.side
        assert back.valid_start == 2
        assert back.setting.mode == setting.mode

    def test_deterministic_directory(self, tmp_path):
        rng = np.random.default_rng(3)
        setting = RegressionSetting(Mode.UNDIRECTED, N=4)
        seq = rand_sequence(rng, setting)
        d1, d2 = tmp_path / "one", tmp_path / "two"
        write_graph_sequence(d1, seq)
        write_graph_sequence(d2, seq)
        for name in ("graphs.csv", "graphs_deriv.csv", "manifest.json"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_kind_mismatch(self, tmp_path):
        write_manifest(tmp_path, Manifest(kind="factorization"))
        with pytest.raises(IntegrityError):
            read_graph_sequence(tmp_path)

    def test_mask_violation_detected(self, tmp_path):
        rng = np.random.default_rng(4)
        setting = RegressionSetting(Mode.UNDIRECTED, N=3)
        seq = rand_sequence(rng, setting)
        write_graph_sequence(tmp_path, seq)
        # forge a diagonal (masked) entry in the graphs file
        path = tmp_path / "graphs.csv"
        path.write_text(path.read_text() + "3,1,1,0,0.5\r\n")
        with pytest.raises(IntegrityError):
            read_graph_sequence(tmp_path)

    def test_out_of_range_entry(self, tmp_path):
        rng = np.random.default_rng(5)
        setting = RegressionSetting(Mode.UNDIRECTED, N=3)
        seq = rand_sequence(rng, setting)
        write_graph_sequence(tmp_path, seq)
        path = tmp_path / "graphs.csv"
        path.write_text(path.read_text() + "99,0,1,0,0.5\r\n")
        with pytest.raises(IntegrityError):
            read_graph_sequence(tmp_path)


class TestFactorization:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        setting = RegressionSetting(Mode.DIRECTED_AR, N=3, M=2)
        mask = setting.mask.reshape(-1)
        fac = Factorization(
            C=rng.normal(size=(8, 2)),
            Bcal=rng.normal(size=(setting.m * setting.p, 2)) * mask[:, None],
            setting=setting,
            lam_star=0.3,
            lam_1=0.05,
        )
        write_factorization(tmp_path, fac, seed=1)
        back = read_factorization(tmp_path)
        assert back.C.tobytes() == fac.C.tobytes()
        assert back.Bcal.tobytes() == fac.Bcal.tobytes()
        assert back.lam_star == 0.3 and back.lam_1 == 0.05

    def test_rank_consistency_enforced(self, tmp_path):
        rng = np.random.default_rng(7)
        setting = RegressionSetting(Mode.DIRECTED_AR, N=2, M=1)
        fac = Factorization(
            C=rng.normal(size=(5, 2)),
            Bcal=rng.normal(size=(setting.m * setting.p, 2)),
            setting=setting,
        )
        write_factorization(tmp_path, fac)
        nets = tmp_path / "networks.csv"
        nets.write_text(nets.read_text() + "5,0,1,0,0.5\r\n")
        with pytest.raises(IntegrityError):
            read_factorization(tmp_path)


class TestGroundTruth:
    def test_roundtrip(self, tmp_path):
        gt = generate(SynthConfig(seed=9, N=5, K=30))
        write_ground_truth(tmp_path, gt)
        back = read_ground_truth(tmp_path)
        assert back.panel.X.tobytes() == gt.panel.X.tobytes()
        assert back.weights.tobytes() == gt.weights.tobytes()
        assert back.changepoints == gt.changepoints
        assert back.scale == gt.scale
        assert back.config == gt.config
        for a, b in zip(back.eigennetworks, gt.eigennetworks):
            assert a.tobytes() == b.tobytes()


class TestChangepointReport:
    def test_roundtrip_and_residuals(self, tmp_path):
        K = 6
        I = np.array(["", "", "c", "l", "r", "c"])
        residuals = {
            Side.LEFT: np.array([np.nan, np.nan, 1.0, 0.5, 2.0, 1.0]),
            Side.CENTER: np.array([np.nan, np.nan, 0.2, 0.9, 1.5, 0.1]),
            Side.RIGHT: np.array([np.nan, np.nan, 1.5, 0.8, 0.3, np.inf]),
        }
        report = ChangepointReport(
            I=I, changepoints=[3], gamma=1.0, residuals=residuals
        )
        write_changepoint_report(tmp_path, report)
        assert read_changepoints(tmp_path) == [3]
        man = read_manifest(tmp_path)
        assert man.config["gamma"] == 1.0
        text = (tmp_path / "selection.csv").read_text()
        assert "inf" in text  # one-sided windows may be empty

    def test_missing_changepoints_file(self, tmp_path):
        with pytest.raises(MissingMetadataError):
            read_changepoints(tmp_path)


class TestMetricsReport:
    def test_roundtrip_sorted(self, tmp_path):
        path = tmp_path / "metrics.json"
        write_metrics_report(path, {"b": 2, "a": [1.5, 2.5]})
        assert read_metrics_report(path) == {"b": 2, "a": [1.5, 2.5]}
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')

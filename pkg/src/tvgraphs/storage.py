"""Deterministic, versioned on-disk formats.

Everything is plain text: CSV payloads plus a JSON manifest per bundle
directory.  Floats are serialized with Python's shortest round-trip
representation, and writers emit rows in a canonical sort order, so a given
in-memory value always produces byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .changepoint import ChangepointReport
from .errors import (
    IntegrityError,
    MissingMetadataError,
    ParameterError,
    ParseError,
)
from .glm import Mode, RegressionSetting, TimeSeriesPanel
from .kernels import Side
from .pna import Factorization
from .synth import GroundTruth, SynthConfig
from .tvgraph import GraphSequence

FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.json"


@dataclass
class Manifest:
    kind: str
    shape: dict = field(default_factory=dict)
    seed: Optional[int] = None
    config: dict = field(default_factory=dict)
    created: Optional[str] = None  # omitted by default to keep writes deterministic
    format_version: int = FORMAT_VERSION

    def to_dict(self):
        d = {
            "format_version": self.format_version,
            "kind": self.kind,
            "shape": self.shape,
            "seed": self.seed,
            "config": self.config,
        }
        if self.created is not None:
            d["created"] = self.created
        return d


def write_manifest(directory: Path, manifest: Manifest):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    text = json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"
    (directory / MANIFEST_NAME).write_text(text)


def read_manifest(directory: Path) -> Manifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise MissingMetadataError(f"missing manifest: {path}")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid manifest {path}: {exc}") from exc
    if "format_version" not in d:
        raise IntegrityError(f"manifest {path} lacks format_version")
    return Manifest(
        kind=d.get("kind", ""),
        shape=d.get("shape", {}),
        seed=d.get("seed"),
        config=d.get("config", {}),
        created=d.get("created"),
        format_version=d["format_version"],
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"non-numeric cell at {where}: {text!r}") from None


# ---------------------------------------------------------------- panels


def write_panel(path: Path, panel: TimeSeriesPanel):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"t{j}" for j in range(panel.K)])
        for row in panel.X:
            writer.writerow([_fmt(v) for v in row])


def read_panel(path: Path) -> TimeSeriesPanel:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file, expected a header row")
    header = rows[0]
    K = len(header)
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != K:
            raise ParseError(
                f"{path}: row {r} has {len(row)} cells, expected {K}"
            )
        data.append(
            [_parse_float(c, f"{path} row {r} col {i+1}") for i, c in enumerate(row)]
        )
    if not data:
        raise ParseError(f"{path}: no data rows")
    return TimeSeriesPanel(X=np.array(data))


# ------------------------------------------------------------- settings


def _setting_to_dict(setting: RegressionSetting) -> dict:
    return {"mode": setting.mode.value, "N": setting.N, "M": setting.M}


def _setting_from_dict(d: dict, mask=None) -> RegressionSetting:
    return RegressionSetting(
        mode=Mode(d["mode"]), N=int(d["N"]), M=int(d["M"]), J=mask
    )


def _write_mask(directory: Path, setting: RegressionSetting):
    if setting.J is None:
        return
    with (Path(directory) / "mask.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in setting.J:
            writer.writerow([str(int(v)) for v in row])


def _read_mask(directory: Path):
    path = Path(directory) / "mask.csv"
    if not path.exists():
        return None
    with path.open(newline="") as fh:
        return np.array([[int(c) for c in row] for row in csv.reader(fh)])


# -------------------------------------------------------- edge matrices


def _write_edge_list(path: Path, mats: dict, header: list[str], N: int):
    """Edge-list CSV; ``mats`` maps a leading key (k or r) to an m x p
    matrix whose columns are split into lag blocks of width N."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for key in sorted(mats):
            mat = mats[key]
            m, p = mat.shape
            n_lags = p // N
            for i in range(m):
                for j in range(N):
                    for lag in range(n_lags):
                        w = mat[i, lag * N + j]
                        if w != 0.0:
                            writer.writerow([key, i, j, lag, _fmt(w)])


def _read_edge_list(path: Path, header: list[str]):
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != header:
        raise ParseError(f"{path}: expected header {header}")
    out = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != 5:
            raise ParseError(f"{path}: row {r} has {len(row)} cells, expected 5")
        key, i, j, lag = (int(v) for v in row[:4])
        out.append((key, i, j, lag, _parse_float(row[4], f"{path} row {r}")))
    return out


# -------------------------------------------------------- graph sequence


def write_graph_sequence(directory: Path, seq: GraphSequence, seed=None, config=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    setting = seq.setting
    header = ["k", "i", "j", "lag", "weight"]
    mats = {k: seq.graph(k) for k in range(seq.K)}
    _write_edge_list(directory / "graphs.csv", mats, header, setting.N)
    derivs = {k: seq.deriv(k) for k in range(seq.K)}
    _write_edge_list(directory / "graphs_deriv.csv", derivs, header, setting.N)
    if seq.Lcal is not None:
        latents = {k: seq.latent(k) for k in range(seq.K)}
        _write_edge_list(directory / "graphs_latent.csv", latents, header, setting.N)
    _write_mask(directory, setting)
    manifest = Manifest(
        kind="graph_sequence",
        shape={
            "K": seq.K,
            "N": setting.N,
            "M": setting.M,
            "m": setting.m,
            "p": setting.p,
        },
        seed=seed,
        config=dict(
            config or {},
            setting=_setting_to_dict(setting),
            side=seq.side.value if seq.side else None,
            valid_start=seq.valid_start,
            has_latent=seq.Lcal is not None,
        ),
    )
    write_manifest(directory, manifest)


def _fill_from_edges(edges, K, setting, path, check_mask):
    mp = setting.m * setting.p
    out = np.zeros((K, mp))
    mask = setting.mask
    for k, i, j, lag, w in edges:
        if not (0 <= k < K and 0 <= i < setting.m and 0 <= j < setting.N):
            raise IntegrityError(f"{path}: entry ({k},{i},{j},{lag}) out of range")
        col = lag * setting.N + j
        if col >= setting.p:
            raise IntegrityError(f"{path}: lag {lag} out of range")
        if check_mask and mask[i, col] == 0:
            raise IntegrityError(
                f"{path}: entry ({k},{i},{j},lag={lag}) violates the "
                "structural mask"
            )
        out[k, i * setting.p + col] = w
    return out


def read_graph_sequence(directory: Path) -> GraphSequence:
    directory = Path(directory)
    manifest = read_manifest(directory)
    if manifest.kind != "graph_sequence":
        raise IntegrityError(
            f"{directory}: manifest kind {manifest.kind!r}, expected "
            "'graph_sequence'"
        )
    setting = _setting_from_dict(
        manifest.config["setting"], mask=_read_mask(directory)
    )
    K = int(manifest.shape["K"])
    if manifest.shape.get("m") != setting.m or manifest.shape.get("p") != setting.p:
        raise IntegrityError(f"{directory}: manifest shape disagrees with setting")
    header = ["k", "i", "j", "lag", "weight"]
    Acal = _fill_from_edges(
        _read_edge_list(directory / "graphs.csv", header),
        K, setting, directory / "graphs.csv", check_mask=True,
    )
    Aprime = _fill_from_edges(
        _read_edge_list(directory / "graphs_deriv.csv", header),
        K, setting, directory / "graphs_deriv.csv", check_mask=False,
    )
    Lcal = None
    if manifest.config.get("has_latent"):
        Lcal = _fill_from_edges(
            _read_edge_list(directory / "graphs_latent.csv", header),
            K, setting, directory / "graphs_latent.csv", check_mask=False,
        )
    side = manifest.config.get("side")
    return GraphSequence(
        Acal=Acal,
        Aprime=Aprime,
        setting=setting,
        Lcal=Lcal,
        side=Side(side) if side else None,
        valid_start=int(manifest.config.get("valid_start", 0)),
    )


# -------------------------------------------------------- factorization


def _write_matrix(path: Path, mat: np.ndarray, prefix: str):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{prefix}{r}" for r in range(mat.shape[1])])
        for row in mat:
            writer.writerow([_fmt(v) for v in row])


def _read_matrix(path: Path) -> np.ndarray:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    width = len(rows[0])
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ParseError(f"{path}: ragged row {r}")
        data.append([_parse_float(c, f"{path} row {r}") for c in row])
    return np.array(data).reshape(-1, width)


def write_factorization(directory: Path, fact: Factorization, seed=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_matrix(directory / "weights.csv", fact.C, "c")
    header = ["r", "i", "j", "lag", "weight"]
    mats = {r: fact.network(r) for r in range(fact.R)}
    _write_edge_list(directory / "networks.csv", mats, header, fact.setting.N)
    _write_mask(directory, fact.setting)
    manifest = Manifest(
        kind="factorization",
        shape={
            "K": fact.C.shape[0],
            "R": fact.R,
            "N": fact.setting.N,
            "M": fact.setting.M,
            "m": fact.setting.m,
            "p": fact.setting.p,
        },
        seed=seed,
        config={
            "lam_star": fact.lam_star,
            "lam_1": fact.lam_1,
            "setting": _setting_to_dict(fact.setting),
        },
    )
    write_manifest(directory, manifest)


def read_factorization(directory: Path) -> Factorization:
    directory = Path(directory)
    manifest = read_manifest(directory)
    if manifest.kind != "factorization":
        raise IntegrityError(
            f"{directory}: manifest kind {manifest.kind!r}, expected "
            "'factorization'"
        )
    setting = _setting_from_dict(
        manifest.config["setting"], mask=_read_mask(directory)
    )
    C = _read_matrix(directory / "weights.csv")
    R = int(manifest.shape["R"])
    if C.shape[1] != R:
        raise IntegrityError(
            f"{directory}: weights file has {C.shape[1]} columns, manifest "
            f"says R={R}"
        )
    header = ["r", "i", "j", "lag", "weight"]
    edges = _read_edge_list(directory / "networks.csv", header)
    if any(e[0] >= R for e in edges):
        raise IntegrityError(f"{directory}: networks file references r >= R={R}")
    Bcal = np.zeros((setting.m * setting.p, R))
    for r, i, j, lag, w in edges:
        Bcal[i * setting.p + lag * setting.N + j, r] = w
    return Factorization(
        C=C,
        Bcal=Bcal,
        setting=setting,
        lam_star=float(manifest.config.get("lam_star", 0.0)),
        lam_1=float(manifest.config.get("lam_1", 0.0)),
    )


# ---------------------------------------------------------- ground truth


def write_ground_truth(directory: Path, gt: GroundTruth):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg = gt.config
    write_panel(directory / "panel.csv", gt.panel)
    _write_matrix(directory / "true_weights.csv", gt.weights, "c")
    header = ["r", "i", "j", "lag", "weight"]
    mats = {r: gt.eigennetworks[r] for r in range(len(gt.eigennetworks))}
    _write_edge_list(directory / "true_networks.csv", mats, header, cfg.N)
    with (directory / "changepoints.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k"])
        for c in gt.changepoints:
            writer.writerow([c])
    cfg_dict = asdict(cfg)
    cfg_dict["level_range"] = list(cfg.level_range)
    cfg_dict["amp_range"] = list(cfg.amp_range)
    cfg_dict["phases"] = list(cfg.phases) if cfg.phases is not None else None
    manifest = Manifest(
        kind="ground_truth",
        shape={"N": cfg.N, "K": cfg.K, "M": cfg.M, "R": cfg.R, "S": cfg.S},
        seed=cfg.seed,
        config={"generator": cfg_dict, "scale": gt.scale},
    )
    write_manifest(directory, manifest)


def read_ground_truth(directory: Path) -> GroundTruth:
    directory = Path(directory)
    manifest = read_manifest(directory)
    if manifest.kind != "ground_truth":
        raise IntegrityError(
            f"{directory}: manifest kind {manifest.kind!r}, expected "
            "'ground_truth'"
        )
    gen = dict(manifest.config["generator"])
    gen["level_range"] = tuple(gen["level_range"])
    gen["amp_range"] = tuple(gen["amp_range"])
    if gen.get("phases") is not None:
        gen["phases"] = tuple(gen["phases"])
    cfg = SynthConfig(**gen)
    panel = read_panel(directory / "panel.csv")
    weights = _read_matrix(directory / "true_weights.csv")
    header = ["r", "i", "j", "lag", "weight"]
    edges = _read_edge_list(directory / "true_networks.csv", header)
    nets = [np.zeros((cfg.N, cfg.M * cfg.N)) for _ in range(cfg.R)]
    for r, i, j, lag, w in edges:
        nets[r][i, lag * cfg.N + j] = w
    with (directory / "changepoints.csv").open(newline="") as fh:
        rows = list(csv.reader(fh))
    cps = [int(row[0]) for row in rows[1:]]
    return GroundTruth(
        config=cfg,
        eigennetworks=nets,
        weights=weights,
        changepoints=cps,
        panel=panel,
        scale=float(manifest.config.get("scale", 1.0)),
    )


# --------------------------------------------------------------- reports


def write_changepoint_report(directory: Path, report: ChangepointReport):
    """Write selection + changepoint CSVs.

    When the directory already holds another bundle's manifest (the detect
    pipeline colocates the report with the selected graph sequence), the
    report metadata is merged into that manifest instead of replacing it.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    K = len(report.I)
    with (directory / "selection.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "selected", "eps_left", "eps_center", "eps_right"])
        for k in range(K):
            row = [k, report.I[k]]
            if report.residuals is not None:
                for side in (Side.LEFT, Side.CENTER, Side.RIGHT):
                    vec = report.residuals.get(side)
                    v = vec[k] if vec is not None else np.nan
                    row.append("" if np.isnan(v) else _fmt(v))
            else:
                row.extend(["", "", ""])
            writer.writerow(row)
    with (directory / "changepoints.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k"])
        for c in report.changepoints:
            writer.writerow([c])
    report_config = {"gamma": report.gamma, "changepoints": report.changepoints}
    if (directory / MANIFEST_NAME).exists():
        manifest = read_manifest(directory)
        manifest.config["changepoint_report"] = report_config
    else:
        manifest = Manifest(
            kind="changepoint_report", shape={"K": K}, config=report_config
        )
    write_manifest(directory, manifest)


def read_changepoints(directory: Path) -> list[int]:
    path = Path(directory) / "changepoints.csv"
    if not path.exists():
        raise MissingMetadataError(f"missing changepoints file: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    return [int(row[0]) for row in rows[1:]]


def write_metrics_report(path: Path, payload: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_metrics_report(path: Path) -> dict:
    return json.loads(Path(path).read_text())

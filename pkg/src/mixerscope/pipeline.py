"""Stage runners that read and write the documented on-disk artifacts.

Every stage reads its inputs from files produced by earlier stages, so each
one can be re-run on its own. Outputs never depend on the thread count.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import networkx as nx
import numpy as np

from . import __version__
from .clustering import DEFAULT_EPS_SWEEP, ClusterConfig, compare_assignments, hdbscan, sweep_eps
from .community import LouvainConfig, detect, induced_community, load_communities
from .export import to_dot, write_graph
from .features import FEATURE_NAMES, feature_matrix, standardize
from .graph import BuildConfig, build_graphs, dump_graphs, index_transactions, load_graphs, merge_report
from .ingest import Category, LabelDirectory, parse_labels, parse_seeds, parse_transactions
from .patterns import canonical_signature, detect_passthrough, entity_profile, predominant_topology

INCOMPLETE = "INCOMPLETE"
MANIFEST = "run_manifest.json"


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"{stage}: {message}")


@dataclass(frozen=True)
class PipelineConfig:
    transactions: str | None = None
    labels: str | None = None
    seeds: str | None = None
    out: str = "out"
    n: int = 2
    max_nodes: int | None = None
    resolution: float = 1.0
    threshold: float = 1e-07
    min_pts: int = 5
    eps: tuple[float, ...] = DEFAULT_EPS_SWEEP
    theta: float = 0.8
    threads: int = 1

    def __post_init__(self):
        BuildConfig(n=self.n, max_nodes=self.max_nodes, threads=self.threads)
        LouvainConfig(self.resolution, self.threshold)
        ClusterConfig(self.min_pts, self.eps)
        if not 0.5 < self.theta <= 1:
            raise ValueError("theta must lie in (0.5, 1]")

    def manifest_view(self) -> dict:
        # worker count and output location do not influence results
        d = asdict(self)
        for key in ("threads", "out"):
            d.pop(key)
        d["eps"] = list(self.eps)
        return d


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key == "eps":
        return tuple(float(x) for x in raw.replace(" ", "").split(",") if x)
    if key in ("n", "min_pts", "threads"):
        return int(raw)
    if key == "max_nodes":
        return None if raw.lower() in ("", "none") else int(raw)
    if key in ("resolution", "threshold", "theta"):
        return float(raw)
    return raw


def read_config(path: str | Path) -> dict:
    """``key = value`` lines, ``#`` comments; relative paths resolve against the file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file {path} not found")
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.read_string("[pipeline]\n" + path.read_text())
    known = {f.name for f in fields(PipelineConfig)}
    out: dict = {}
    for key, raw in parser["pipeline"].items():
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"unknown config key {key!r} in {path}")
        value = _convert(key, raw)
        if key in ("transactions", "labels", "seeds", "out") and not Path(value).is_absolute():
            value = str(path.parent / value)
        out[key] = value
    return out


def make_config(file_values: dict | None = None, **overrides) -> PipelineConfig:
    """Defaults, then config-file values, then explicit overrides (``None`` means unset)."""
    values = dict(file_values or {})
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)


# --- small I/O helpers -------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _read_csv(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def _require(path: Path, stage: str, what: str, producer: str) -> Path:
    if not path.exists():
        raise StageError(stage, f"{what} not found ({path.name}); run the {producer} stage first")
    return path


def _input(path: str | None, stage: str, role: str) -> Path:
    if path is None:
        raise StageError(stage, f"no {role} file configured")
    p = Path(path)
    if not p.is_file():
        raise StageError(stage, f"{role} file {p} not found")
    return p


def _clear(directory: Path, pattern: str) -> None:
    if directory.is_dir():
        for p in sorted(directory.glob(pattern)):
            p.unlink()


# --- stages ------------------------------------------------------------------


def run_build(cfg: PipelineConfig) -> list:
    stage = "build"
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        txs = parse_transactions(_input(cfg.transactions, stage, "transactions").read_text())
        seeds = parse_seeds(_input(cfg.seeds, stage, "seeds").read_text())
        labels = parse_labels(Path(cfg.labels).read_text()) if cfg.labels else LabelDirectory()
        graphs = build_graphs(
            index_transactions(txs),
            seeds,
            BuildConfig(n=cfg.n, max_nodes=cfg.max_nodes, threads=cfg.threads),
            labels,
        )
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc

    (out / "graphs.json").write_text(dump_graphs(graphs))
    report = merge_report(graphs)
    rows = []
    for ag in graphs:
        for sid in ag.seed_ids:
            rows.append([sid, seeds.addresses[sid - 1], ag.graph_id])
    _write_csv(out / "graphs_per_seed.csv", ["seed_id", "address", "graph_id"], sorted(rows))
    _write_csv(out / "seeds_histogram.csv", ["seeds_per_graph", "n_graphs"], report.histogram.items())
    _write_csv(
        out / "graphs.csv",
        ["graph_id", "n_seeds", "n_addresses", "n_transactions", "n_edges"],
        [[ag.graph_id, len(ag.seed_ids), len(ag.addresses()), len(ag.transactions()), ag.g.number_of_edges()] for ag in graphs],
    )
    gdir = out / "graphs"
    _clear(gdir, "graph_*")
    for ag in graphs:
        write_graph(ag, gdir / f"graph_{ag.graph_id:04d}", name=f"graph_{ag.graph_id}")
    return graphs


def _load_graphs(out: Path, stage: str):
    return load_graphs(_require(out / "graphs.json", stage, "graphs", "build").read_text())


def run_detect(cfg: PipelineConfig) -> list:
    stage = "detect"
    out = Path(cfg.out)
    graphs = _load_graphs(out, stage)
    lcfg = LouvainConfig(cfg.resolution, cfg.threshold)
    try:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            partitions = list(pool.map(lambda ag: detect(ag, lcfg), graphs))
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc
    communities = []
    per_graph = []
    for ag, part in zip(graphs, partitions):
        members = part.members()
        per_graph.append({"graph_id": ag.graph_id, "modularity": part.modularity, "n_communities": len(members)})
        for cid, nodes in enumerate(members):
            communities.append(induced_community(ag, cid, nodes))
    _write_json(
        out / "communities.json",
        {
            "graphs": per_graph,
            "communities": [
                {"graph_id": c.graph_id, "community_id": c.community_id, "nodes": sorted(c.g.nodes())} for c in communities
            ],
        },
    )
    _write_csv(
        out / "communities.csv",
        ["graph_id", "community_id", "n_nodes", "n_addresses", "n_transactions"],
        [[c.graph_id, c.community_id, len(c), c.n_addresses(), c.n_transactions()] for c in communities],
    )
    sizes: dict[tuple[int, int], int] = {}
    for c in communities:
        key = (c.n_addresses(), c.n_transactions())
        sizes[key] = sizes.get(key, 0) + 1
    _write_csv(
        out / "community_sizes.csv",
        ["n_addresses", "n_transactions", "count"],
        [[a, t, k] for (a, t), k in sorted(sizes.items())],
    )
    cdir = out / "communities"
    _clear(cdir, "community_*")
    for c in communities:
        write_graph(c, cdir / f"community_{c.graph_id:04d}_{c.community_id:04d}", name=f"g{c.graph_id}_c{c.community_id}")
    return communities


def _load_communities(out: Path, stage: str):
    graphs = _load_graphs(out, stage)
    data = json.loads(_require(out / "communities.json", stage, "communities", "detect").read_text())
    return load_communities(graphs, data["communities"])


def run_features(cfg: PipelineConfig):
    stage = "features"
    out = Path(cfg.out)
    communities = _load_communities(out, stage)
    try:
        vectors = feature_matrix(communities, threads=cfg.threads)
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc
    keys = [[c.graph_id, c.community_id] for c in communities]
    _write_csv(
        out / "features.csv",
        ["graph_id", "community_id", *FEATURE_NAMES],
        [k + [v if isinstance(v, int) else repr(v) for v in vec] for k, vec in zip(keys, vectors)],
    )
    z_rows = []
    if vectors:
        z = standardize(vectors).points
        z_rows = [k + [repr(float(x)) for x in row] for k, row in zip(keys, z)]
    _write_csv(out / "features_z.csv", ["graph_id", "community_id", *(f + "_z" for f in FEATURE_NAMES)], z_rows)
    return vectors


def _load_features(out: Path, stage: str) -> tuple[list[tuple[int, int]], np.ndarray]:
    path = out / "features.csv"
    if not path.exists():
        raise StageError(stage, "features matrix not found (features.csv); run the features stage first")
    rows = _read_csv(path)
    keys = [(int(r["graph_id"]), int(r["community_id"])) for r in rows]
    x = np.array([[float(r[f]) for f in FEATURE_NAMES] for r in rows], dtype=float).reshape(len(rows), len(FEATURE_NAMES))
    return keys, x


def run_cluster(cfg: PipelineConfig) -> dict:
    stage = "cluster"
    out = Path(cfg.out)
    keys, x = _load_features(out, stage)
    ccfg = ClusterConfig(cfg.min_pts, cfg.eps)
    if len(keys) == 0:
        _write_csv(out / "sweep.csv", ["eps", "n_clusters", "n_outliers"], [[_fmt(e), 0, 0] for e in ccfg.eps_sweep])
        _write_csv(out / "reachability.csv", ["order", "graph_id", "community_id", "reachability", "core_distance"], [])
        _write_csv(out / "assignments.csv", ["graph_id", "community_id", "optics_cluster", "hdbscan_cluster"], [])
        agreement = {"optics_eps": None, **compare_assignments([], []).to_dict()}
        _write_json(out / "agreement.json", agreement)
        return agreement
    try:
        z = standardize(x).points
        sweep = sweep_eps(z, ccfg)
        optics = sweep.at(sweep.saturation_eps)
        hdb = hdbscan(z, ccfg.min_pts)
        agreement = compare_assignments(optics, hdb)
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc
    _write_csv(out / "sweep.csv", ["eps", "n_clusters", "n_outliers"], [[_fmt(r.eps), r.n_clusters, r.n_outliers] for r in sweep.rows])
    plot = sweep.plot
    _write_csv(
        out / "reachability.csv",
        ["order", "graph_id", "community_id", "reachability", "core_distance"],
        [[i, *keys[p], _fmt(plot.reachability[p]), _fmt(plot.core_distance[p])] for i, p in enumerate(plot.ordering.tolist())],
    )
    _write_csv(
        out / "assignments.csv",
        ["graph_id", "community_id", "optics_cluster", "hdbscan_cluster"],
        [[*k, int(a), int(b)] for k, a, b in zip(keys, optics.labels, hdb.labels)],
    )
    result = {"optics_eps": sweep.saturation_eps, **agreement.to_dict()}
    _write_json(out / "agreement.json", result)
    return result


def _cluster_section(communities, labels: list[int], algorithm: str, theta: float, motif_dir: Path) -> list[dict]:
    sigs = [canonical_signature(c) for c in communities]
    by_cluster: dict[int, list[int]] = {}
    for i, cid in enumerate(labels):
        by_cluster.setdefault(int(cid), []).append(i)
    section = []
    for cid in sorted(by_cluster):
        idx = by_cluster[cid]
        members = [communities[i] for i in idx]
        top = predominant_topology(members, [sigs[i] for i in idx])
        ex = top.exemplar
        dot_name = f"{algorithm}_cluster_{cid}.dot" if cid >= 0 else f"{algorithm}_outliers.dot"
        (motif_dir / dot_name).write_text(to_dot(ex, name=f"{algorithm}_{cid}"))
        reports = []
        for c in members:
            r = detect_passthrough(c, theta)
            if r is not None:
                reports.append({"graph_id": c.graph_id, "community_id": c.community_id, **r.to_dict()})
        section.append(
            {
                "cluster": cid,
                "n_communities": len(members),
                "predominant": {
                    "signature": top.signature.digest,
                    "exact": top.signature.exact,
                    "count": top.count,
                    "exemplar": {"graph_id": ex.graph_id, "community_id": ex.community_id},
                    "exemplar_dot": f"motifs/{dot_name}",
                },
                "n_signatures": len(set(sigs[i] for i in idx)),
                "passthrough": reports,
            }
        )
    return section


def run_report(cfg: PipelineConfig) -> dict:
    stage = "report"
    out = Path(cfg.out)
    communities = _load_communities(out, stage)
    rows = _read_csv(_require(out / "assignments.csv", stage, "cluster assignments", "cluster"))
    by_key = {(c.graph_id, c.community_id): c for c in communities}
    try:
        ordered = [by_key[(int(r["graph_id"]), int(r["community_id"]))] for r in rows]
    except KeyError as exc:
        raise StageError(stage, f"assignments refer to unknown community {exc}") from None
    optics = [int(r["optics_cluster"]) for r in rows]
    hdb = [int(r["hdbscan_cluster"]) for r in rows]
    motif_dir = out / "motifs"
    motif_dir.mkdir(exist_ok=True)
    _clear(motif_dir, "*.dot")
    try:
        report = {
            "theta": cfg.theta,
            "optics": _cluster_section(ordered, optics, "optics", cfg.theta, motif_dir),
            "hdbscan": _cluster_section(ordered, hdb, "hdbscan", cfg.theta, motif_dir),
        }
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc
    _write_json(out / "motifs.json", report)
    header = None
    prof_rows = []
    for algorithm, assignment in (("optics", optics), ("hdbscan", hdb)):
        profile = entity_profile(ordered, assignment) if ordered else {}
        for cid, counts in profile.items():
            header = header or list(counts)
            prof_rows.append([algorithm, cid, *counts.values()])
    if header is None:
        header = [c.value for c in Category]
    _write_csv(out / "entity_profile.csv", ["algorithm", "cluster", *header], prof_rows)
    return report


STAGES = ("build", "detect", "features", "cluster", "report")
_RUNNERS = {"build": run_build, "detect": run_detect, "features": run_features, "cluster": run_cluster, "report": run_report}


def run_stage(name: str, cfg: PipelineConfig):
    return _RUNNERS[name](cfg)


def write_manifest(cfg: PipelineConfig) -> dict:
    inputs = {}
    for role in ("transactions", "labels", "seeds"):
        path = getattr(cfg, role)
        if path is not None and Path(path).is_file():
            inputs[role] = {"file": Path(path).name, "sha256": _sha256(Path(path))}
    manifest = {
        "config": cfg.manifest_view(),
        "inputs": inputs,
        "versions": {
            "mixerscope": __version__,
            "python": platform.python_version(),
            "networkx": nx.__version__,
            "numpy": np.__version__,
        },
        "stages": list(STAGES),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _write_json(Path(cfg.out) / MANIFEST, manifest)
    return manifest


def run_pipeline(cfg: PipelineConfig) -> dict:
    """All stages in order; an ``INCOMPLETE`` marker names the failing stage."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / INCOMPLETE
    marker.write_text("running\n")
    results = {}
    for name in STAGES:
        try:
            results[name] = run_stage(name, cfg)
        except StageError as exc:
            marker.write_text(f"failed at stage {exc.stage}: {exc}\n")
            raise
        except Exception as exc:
            marker.write_text(f"failed at stage {name}: {exc}\n")
            raise StageError(name, str(exc)) from exc
    write_manifest(cfg)
    marker.unlink()
    return results

"""
Cluster Graph Construction
One cluster {x_j^i, p_j, X^i} per observed projection, connected by
superimposing one tree per latent variable, plus a running-intersection
checker and a DOT dump.
"""

from collections import defaultdict
from dataclasses import dataclass, field
import logging

import numpy as np

from src.errors import DuplicateObservation, UnderconstrainedFeature
from src.gaussian import feature_var, pose_var, projection_var

logger = logging.getLogger(__name__)

MIN_VIEWS_PER_FEATURE = 2


@dataclass(frozen=True)
class Track:
    """A measured projection x̂ of feature `feat` in camera `cam` with noise σ."""

    cam: int
    feat: int
    uv: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "uv", np.asarray(self.uv, dtype=float).reshape(-1))
        object.__setattr__(self, "sigma", float(self.sigma))


@dataclass(frozen=True)
class Cluster:
    cluster_id: int
    camera_id: int
    feature_id: int
    projection: object      # VariableId of x_j^i
    pose: object            # VariableId of p_j
    feature: object         # VariableId of X^i
    observation: np.ndarray
    sigma_obs: float

    @property
    def scope(self):
        return tuple(sorted((self.projection, self.pose, self.feature)))


@dataclass(frozen=True)
class Sepset:
    edge: tuple
    variables: tuple


@dataclass
class ClusterGraph:
    mode: object
    clusters: list
    sepsets: dict = field(default_factory=dict)     # (a, b) with a < b -> Sepset
    adjacency: dict = field(default_factory=dict)   # cluster id -> sorted neighbour ids

    def sepset(self, a, b):
        return self.sepsets[(min(a, b), max(a, b))]

    def directed_edges(self):
        """Message schedule: (cluster id, neighbour id) in sorted order."""
        return [(c, n) for c in sorted(self.adjacency) for n in self.adjacency[c]]

    @property
    def n_edges(self):
        return len(self.sepsets)

    def clusters_containing(self, var):
        return [c.cluster_id for c in self.clusters if var in c.scope]

    def latent_variables(self):
        seen = {}
        for c in self.clusters:
            seen.setdefault(c.feature, None)
            seen.setdefault(c.pose, None)
        return sorted(seen)


@dataclass
class RipReport:
    """Per-variable running-intersection verdicts."""

    verdicts: dict = field(default_factory=dict)   # VariableId -> (ok, reason)

    @property
    def passed(self):
        return all(ok for ok, _ in self.verdicts.values())

    @property
    def failures(self):
        return {v: reason for v, (ok, reason) in self.verdicts.items() if not ok}


def make_clusters(tracks, mode):
    """One cluster per (camera, feature) track, ids ordered by (camera, feature)."""
    seen = set()
    views = defaultdict(int)
    for t in tracks:
        key = (t.cam, t.feat)
        if key in seen:
            raise DuplicateObservation(f"camera {t.cam} observes feature {t.feat} more than once")
        seen.add(key)
        views[t.feat] += 1

    for feat in sorted(views):
        if views[feat] < MIN_VIEWS_PER_FEATURE:
            raise UnderconstrainedFeature(feat, views[feat])

    clusters = []
    for cid, t in enumerate(sorted(tracks, key=lambda t: (t.cam, t.feat))):
        clusters.append(Cluster(
            cluster_id=cid,
            camera_id=t.cam,
            feature_id=t.feat,
            projection=projection_var(t.cam, t.feat, mode),
            pose=pose_var(t.cam, mode),
            feature=feature_var(t.feat, mode),
            observation=t.uv,
            sigma_obs=t.sigma,
        ))
    return clusters


def build_cluster_graph(clusters, mode):
    """Superimpose a star per variable, centred on its lowest-id cluster.

    Edges chosen by several variables merge into one multivariate sepset.
    """
    members = defaultdict(list)
    for c in clusters:
        for v in c.scope:
            members[v].append(c.cluster_id)

    labels = defaultdict(set)
    for var, ids in members.items():
        if len(ids) < 2:
            continue
        centre = min(ids)
        for other in ids:
            if other != centre:
                labels[(centre, other) if centre < other else (other, centre)].add(var)

    graph = ClusterGraph(mode=mode, clusters=list(clusters))
    graph.adjacency = {c.cluster_id: [] for c in clusters}
    for edge in sorted(labels):
        graph.sepsets[edge] = Sepset(edge=edge, variables=tuple(sorted(labels[edge])))
        a, b = edge
        graph.adjacency[a].append(b)
        graph.adjacency[b].append(a)
    for cid in graph.adjacency:
        graph.adjacency[cid].sort()

    logger.info("Built cluster graph: %d clusters, %d edges", len(graph.clusters), graph.n_edges)
    return graph


def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


def validate_rip(graph):
    """For every variable, the edges labelled with it must form a spanning tree of its clusters."""
    scopes = {c.cluster_id: set(c.scope) for c in graph.clusters}
    variables = sorted({v for s in scopes.values() for v in s} |
                       {v for sep in graph.sepsets.values() for v in sep.variables})
    report = RipReport()

    for var in variables:
        holders = [cid for cid, s in scopes.items() if var in s]
        edges = [sep.edge for sep in graph.sepsets.values() if var in sep.variables]

        outside = [e for e in edges if e[0] not in holders or e[1] not in holders]
        if outside:
            report.verdicts[var] = (False, f"{var} labels edge {outside[0]} outside its clusters")
            continue

        parent = {cid: cid for cid in holders}
        cycle = None
        for a, b in edges:
            ra, rb = _find(parent, a), _find(parent, b)
            if ra == rb:
                cycle = (a, b)
                break
            parent[ra] = rb
        if cycle is not None:
            report.verdicts[var] = (False, f"{var}-labelled edges form a cycle through edge {cycle}")
            continue

        roots = {_find(parent, cid) for cid in holders}
        if len(roots) > 1:
            report.verdicts[var] = (False, f"clusters holding {var} fall into {len(roots)} disconnected parts")
            continue
        report.verdicts[var] = (True, "")

    for sep in graph.sepsets.values():
        if not sep.variables:
            report.verdicts[("empty", sep.edge)] = (False, f"edge {sep.edge} has an empty sepset")

    if not report.passed:
        logger.warning("Running intersection check failed for %d variable(s)", len(report.failures))
    return report


def to_dot(graph):
    """Graphviz DOT text for the cluster graph (clusters labelled by scope, edges by sepset)."""
    lines = ["graph clusters {", "  node [shape=box];"]
    for c in graph.clusters:
        label = ", ".join(str(v) for v in c.scope)
        lines.append(f'  c{c.cluster_id} [label="C{c.cluster_id}: {{{label}}}"];')
    for (a, b), sep in sorted(graph.sepsets.items()):
        label = ", ".join(str(v) for v in sep.variables)
        lines.append(f'  c{a} -- c{b} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"

"""
Loopy Belief Propagation
Cluster beliefs from sigma-point joints, sum-product message passing over
the cluster graph, and the outer loop that re-linearizes around the current
posterior and inflates the linearization spread when progress stalls.
"""

from dataclasses import asdict, dataclass, field, replace
import logging
from typing import Callable, Optional

import numpy as np

from src.errors import (
    ConfigError, NotPositiveDefinite, SamError, SingularEliminationBlock, SolveError, TransformUndefined,
)
from src.gaussian import GaussianFactor, VarKind, max_param_delta
from src.geometry import Pose, project_batch, reprojection_distances
from src.unscented import (
    DEFAULT_SCHEME, DEFAULT_W0, SigmaScheme, joint_sigma_points, linear_gaussian_fit, sigma_points,
)

logger = logging.getLogger(__name__)

# --- Solver defaults ---
DEFAULT_INNER_TOL = 1e-6
DEFAULT_MAX_INNER_SWEEPS = 200
DEFAULT_MAX_OUTER_ITERS = 50
DEFAULT_OUTER_TOL = 1e-4
DEFAULT_PATIENCE = 3
DEFAULT_INFLATION = 10.0
DEFAULT_DAMPING = 0.3

# --- Message schedules ---
SCHEDULE_VARIABLES = "variables"
SCHEDULE_EDGES = "edges"
SCHEDULES = (SCHEDULE_VARIABLES, SCHEDULE_EDGES)

# --- Stall detection & gauge ---
STALL_WINDOW = 2
STALL_THRESHOLD = 0.01
MAX_CONSECUTIVE_INFLATIONS = 2
ANCHOR_VARIANCE = 1e-8
RESIDUAL_FLOOR_REL = 1e-8


@dataclass
class BpConfig:
    inner_tol: float = DEFAULT_INNER_TOL
    max_inner_sweeps: int = DEFAULT_MAX_INNER_SWEEPS
    max_outer_iters: int = DEFAULT_MAX_OUTER_ITERS
    outer_tol: float = DEFAULT_OUTER_TOL
    patience: int = DEFAULT_PATIENCE
    inflation: float = DEFAULT_INFLATION
    damping: float = DEFAULT_DAMPING
    sigma_obs: Optional[float] = None     # overrides the per-track sigma when set
    scheme: SigmaScheme = DEFAULT_SCHEME
    w0: float = DEFAULT_W0
    seed: int = 0                         # provenance only; the solver draws no random numbers
    prior_split: bool = True
    anchor_variance: float = ANCHOR_VARIANCE
    schedule: str = SCHEDULE_VARIABLES

    def __post_init__(self):
        if isinstance(self.scheme, str):
            self.scheme = SigmaScheme.parse(self.scheme)
        checks = [
            (self.inner_tol > 0, "inner_tol must be positive"),
            (self.max_inner_sweeps >= 1, "max_inner_sweeps must be at least 1"),
            (self.max_outer_iters >= 1, "max_outer_iters must be at least 1"),
            (self.outer_tol > 0, "outer_tol must be positive"),
            (self.patience >= 1, "patience must be at least 1"),
            (self.inflation >= 1.0, "inflation factor must be >= 1"),
            (0.0 <= self.damping < 1.0, "damping must lie in [0, 1)"),
            (self.sigma_obs is None or self.sigma_obs > 0, "sigma_obs must be positive"),
            (self.scheme is not SigmaScheme.PRODUCT, "product sets are not a prior scheme"),
            (self.scheme is not SigmaScheme.STANDARD or 0.0 < self.w0 < 1.0, "w0 must lie in (0, 1)"),
            (self.anchor_variance > 0, "anchor_variance must be positive"),
            (self.schedule in SCHEDULES, f"schedule must be one of {', '.join(SCHEDULES)}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_dict(self):
        out = asdict(self)
        out["scheme"] = self.scheme.value
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class Marginal:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=float).reshape(self.mean.size, self.mean.size)

    def inflated(self, factor):
        return Marginal(self.mean.copy(), self.cov * factor)


@dataclass
class VariableBeliefs:
    """Per-variable Gaussians over features and camera poses (priors or posteriors)."""

    mode: object
    features: dict
    cameras: dict

    def marginal(self, var):
        table = self.features if var.kind is VarKind.FEATURE else self.cameras
        try:
            return table[var.index[0]]
        except KeyError:
            raise ConfigError(f"no distribution supplied for {var}") from None

    def poses(self):
        return {j: Pose.from_vector(m.mean, self.mode) for j, m in self.cameras.items()}

    def points(self):
        return {i: m.mean for i, m in self.features.items()}

    def inflated(self, factor):
        return VariableBeliefs(
            self.mode,
            {i: m.inflated(factor) for i, m in self.features.items()},
            {j: m.inflated(factor) for j, m in self.cameras.items()},
        )


@dataclass
class IterationRecord:
    iteration: int
    error: float
    inner_sweeps: int
    inflated: bool
    converged: bool
    final_delta: float
    skipped_messages: int


@dataclass
class PosteriorEstimate(VariableBeliefs):
    trace: list = field(default_factory=list)
    calibration_gap: float = 0.0
    prior_error: float = float("nan")
    best_iteration: int = 0


@dataclass
class ConvergenceReport:
    sweeps: int = 0
    final_delta: float = 0.0
    skipped_messages: int = 0
    converged: bool = True


@dataclass
class BeliefState:
    """Mutable BP state layered over an immutable cluster graph."""

    graph: object
    beliefs: dict
    messages: dict
    skipped: int = 0

    potentials: dict = field(default_factory=dict)


# ── Cluster initialization ────────────────────────────────────────────

def _multiplicities(graph):
    counts = {}
    for c in graph.clusters:
        counts[c.feature] = counts.get(c.feature, 0) + 1
        counts[c.pose] = counts.get(c.pose, 0) + 1
    return counts


def _prior_factor(var, marginal, power):
    """N(mean, cov) over `var` raised to `power`."""
    full = GaussianFactor.from_moments((var,), marginal.mean, marginal.cov)
    return GaussianFactor((var,), power * full.K, power * full.h, power * full.g)


def _absorb(potential, incoming):
    belief = potential
    for message in incoming:
        belief = belief.multiply(message)
    return belief


def init_cluster_beliefs(graph, priors, config, calibrations, linearization=None, messages=None):
    """Sigma-point joint over {x, p, X} for every cluster, with its observation folded in.

    The conditional x | p, X is fitted to the product sigma set drawn from
    `linearization` (defaults to `priors`). The priors of p and X multiply in
    separately; with `prior_split` each enters every cluster at power 1/k
    (k = clusters holding the variable), so their product over the graph
    counts each prior once. `messages` warm-starts the edges; missing edges
    start at the unit factor.
    """
    mode = graph.mode
    linearization = priors if linearization is None else linearization
    counts = _multiplicities(graph) if config.prior_split else {}
    sets, prior_factors = {}, {}
    for var in graph.latent_variables():
        around = linearization.marginal(var)
        sets[var] = sigma_points(around.mean, around.cov, config.scheme, config.w0)
        prior_factors[var] = _prior_factor(var, priors.marginal(var), 1.0 / counts.get(var, 1))

    potentials = {}
    for c in graph.clusters:
        calib = calibrations[c.camera_id]

        def f(p, X, calib=calib):
            return project_batch(p, X, calib, mode)

        try:
            joint = joint_sigma_points(sets[c.feature], sets[c.pose], f, batched=True)
        except TransformUndefined as err:
            raise TransformUndefined(str(err), cluster_id=c.cluster_id) from err

        fit = linear_gaussian_fit(joint, mode.image_dim)
        floor = RESIDUAL_FLOOR_REL * max(float(np.mean(np.diag(fit.response_cov))), np.finfo(float).tiny)
        residual = fit.residual_cov + floor * np.eye(mode.image_dim)

        conditional = GaussianFactor.from_linear_gaussian(
            (c.projection,), (c.pose, c.feature), fit.gain,
            fit.response_mean, fit.conditioning_mean, residual,
        )
        potential = conditional.multiply(prior_factors[c.pose]).multiply(prior_factors[c.feature])
        sigma = config.sigma_obs if config.sigma_obs is not None else c.sigma_obs
        potentials[c.cluster_id] = potential.observe(c.projection, c.observation, sigma)

    edges = {}
    for src, dst in graph.directed_edges():
        previous = messages.get((src, dst)) if messages else None
        edges[(src, dst)] = previous if previous is not None else GaussianFactor.unit(
            graph.sepset(src, dst).variables)
    incoming = {cid: [] for cid in potentials}
    for (_, dst), m in edges.items():
        if not m.is_unit():
            incoming[dst].append(m)
    beliefs = {cid: _absorb(potential, incoming[cid]) for cid, potential in potentials.items()}
    logger.debug("Initialized %d cluster beliefs (%s messages)", len(beliefs),
                 "warm" if messages else "unit")
    return BeliefState(graph=graph, beliefs=beliefs, messages=edges, potentials=potentials)


# ── Message passing ───────────────────────────────────────────────────

def _damped(old, new, alpha):
    """Blend a new message with the previous one (moment form when both are proper)."""
    if alpha == 0.0 or old.is_unit():
        return new
    if old.is_proper() and new.is_proper():
        mu_o, cov_o = old.to_moments()
        mu_n, cov_n = new.to_moments()
        return GaussianFactor.from_moments(
            new.scope, (1 - alpha) * mu_n + alpha * mu_o, (1 - alpha) * cov_n + alpha * cov_o,
        )
    return GaussianFactor(
        new.scope, (1 - alpha) * new.K + alpha * old.K,
        (1 - alpha) * new.h + alpha * old.h, (1 - alpha) * new.g + alpha * old.g,
    )


def pass_message(state, src, dst, damping=0.0):
    """Send src -> dst: marginal of src's belief on the sepset over the reverse message.

    Returns the max parameter change of the stored message, or None when the
    sender's elimination block is singular (message skipped this sweep).
    """
    sepset = state.graph.sepset(src, dst).variables
    try:
        marginal = state.beliefs[src].marginalize(sepset)
    except SingularEliminationBlock as err:
        state.skipped += 1
        logger.debug("Skipped message %d -> %d: %s", src, dst, err)
        return None

    old = state.messages[(src, dst)]
    new = _damped(old, marginal.divide(state.messages[(dst, src)]), damping)
    state.beliefs[dst] = state.beliefs[dst].multiply(new).divide(old)
    state.messages[(src, dst)] = new
    return max_param_delta(old, new)


def _run_edge_sweeps(state, config, report):
    edges = state.graph.directed_edges()
    for sweep in range(1, config.max_inner_sweeps + 1):
        max_delta, skipped = 0.0, 0
        for src, dst in edges:
            delta = pass_message(state, src, dst, config.damping)
            if delta is None:
                skipped += 1
            else:
                max_delta = max(max_delta, delta)
        report.sweeps = sweep
        report.final_delta = max_delta
        report.skipped_messages += skipped
        logger.debug("Sweep %d: max delta %.3e, %d skipped", sweep, max_delta, skipped)
        if skipped == 0 and max_delta < config.inner_tol:
            report.converged = True
            break


# ── Stacked star schedule ─────────────────────────────────────────────

def _pd_mask(K):
    """Per-item positive definiteness of a stack of symmetric matrices."""
    mask = np.zeros(len(K), dtype=bool)
    if not len(K):
        return mask
    finite = np.all(np.isfinite(K), axis=(1, 2))
    if finite.all():
        try:
            np.linalg.cholesky(K)
            return finite
        except np.linalg.LinAlgError:
            pass
    for k in np.flatnonzero(finite):
        try:
            np.linalg.cholesky(K[k])
            mask[k] = True
        except np.linalg.LinAlgError:
            pass
    return mask


def _damp_stack(old_K, old_h, new_K, new_h, alpha):
    """Vectorized `_damped` plus `max_param_delta` over stacks of messages."""
    K, h = new_K.copy(), new_h.copy()
    n = len(K)
    unit = ~np.any(old_K, axis=(1, 2)) & ~np.any(old_h, axis=1)
    old_ok = np.zeros(n, dtype=bool)
    old_ok[~unit] = _pd_mask(old_K[~unit])
    new_ok = _pd_mask(new_K)

    if alpha > 0.0:
        moment = old_ok & new_ok
        if moment.any():
            cov_o = np.linalg.inv(old_K[moment])
            cov_n = np.linalg.inv(new_K[moment])
            mu_o = np.einsum("nij,nj->ni", cov_o, old_h[moment])
            mu_n = np.einsum("nij,nj->ni", cov_n, new_h[moment])
            cov = (1 - alpha) * cov_n + alpha * cov_o
            K_m = np.linalg.inv(cov)
            K[moment] = 0.5 * (K_m + np.swapaxes(K_m, 1, 2))
            h[moment] = np.einsum("nij,nj->ni", K_m, (1 - alpha) * mu_n + alpha * mu_o)
        canonical = ~unit & ~moment
        K[canonical] = (1 - alpha) * new_K[canonical] + alpha * old_K[canonical]
        h[canonical] = (1 - alpha) * new_h[canonical] + alpha * old_h[canonical]

    delta = np.zeros(n)
    both = old_ok & _pd_mask(K)
    if both.any():
        cov_o = np.linalg.inv(old_K[both])
        cov_r = np.linalg.inv(K[both])
        mu_gap = np.einsum("nij,nj->ni", cov_o, old_h[both]) - np.einsum("nij,nj->ni", cov_r, h[both])
        delta[both] = np.maximum(np.abs(mu_gap).max(axis=1), np.abs(cov_o - cov_r).max(axis=(1, 2)))
    rest = ~both
    if rest.any():
        k_scale = np.maximum.reduce([np.ones(rest.sum()), np.abs(old_K[rest]).max(axis=(1, 2)),
                                     np.abs(K[rest]).max(axis=(1, 2))])
        h_scale = np.maximum.reduce([np.ones(rest.sum()), np.abs(old_h[rest]).max(axis=1),
                                     np.abs(h[rest]).max(axis=1)])
        delta[rest] = np.maximum(np.abs(K[rest] - old_K[rest]).max(axis=(1, 2)) / k_scale,
                                 np.abs(h[rest] - old_h[rest]).max(axis=1) / h_scale)
    return K, h, delta


class _Star:
    """Messages of one variable kind: every holder of a variable is a leaf of its lowest-id holder."""

    def __init__(self, variables, ids, dim):
        n_clusters = len(ids)
        self.variables = variables
        first = {}
        for k in sorted(range(n_clusters), key=ids.__getitem__):
            first.setdefault(variables[k], k)
        self.hub = np.array([first[var] for var in variables], dtype=int)
        self.leaves = np.flatnonzero(self.hub != np.arange(n_clusters))
        self.up_K = np.zeros((n_clusters, dim, dim))
        self.up_h = np.zeros((n_clusters, dim))
        self.down_K = np.zeros((n_clusters, dim, dim))
        self.down_h = np.zeros((n_clusters, dim))

    def hub_sums(self):
        K, h = np.zeros_like(self.up_K), np.zeros_like(self.up_h)
        np.add.at(K, self.hub[self.leaves], self.up_K[self.leaves])
        np.add.at(h, self.hub[self.leaves], self.up_h[self.leaves])
        return K, h

    def incoming(self):
        K, h = self.hub_sums()
        return K + self.down_K, h + self.down_h


class _StackedBp:
    """Star-graph BP on the pairwise potentials left after integrating out each projection.

    One sweep updates every feature star, then every pose star. Within a
    star the leaf messages go first and the hub replies second, the order
    a sequential edge schedule would take; distinct stars of one kind share
    no cluster state during their phase.
    """

    def __init__(self, state):
        graph = state.graph
        self.state = state
        self.ids = [c.cluster_id for c in graph.clusters]
        self.index = {cid: k for k, cid in enumerate(self.ids)}
        mode = graph.mode
        D, P = mode.world_dim, mode.pose_dim
        self.blocks = {VarKind.FEATURE: slice(0, D), VarKind.POSE: slice(D, D + P)}

        n = len(self.ids)
        self.K = np.empty((n, D + P, D + P))
        self.h = np.empty((n, D + P))
        for k, c in enumerate(graph.clusters):
            pairwise = state.potentials[c.cluster_id].marginalize([c.feature, c.pose])
            self.K[k], self.h[k] = pairwise.K, pairwise.h

        self.stars = {
            VarKind.FEATURE: _Star([c.feature for c in graph.clusters], self.ids, D),
            VarKind.POSE: _Star([c.pose for c in graph.clusters], self.ids, P),
        }
        for star in self.stars.values():
            for leaf in star.leaves:
                hub_id, leaf_id = self.ids[star.hub[leaf]], self.ids[leaf]
                up, down = state.messages[(leaf_id, hub_id)], state.messages[(hub_id, leaf_id)]
                star.up_K[leaf], star.up_h[leaf] = up.K, up.h
                star.down_K[leaf], star.down_h[leaf] = down.K, down.h

    @staticmethod
    def supports(graph):
        """True when the edges are exactly one lowest-id star per variable, single-variable sepsets."""
        holders = {}
        for c in graph.clusters:
            for var in (c.feature, c.pose):
                holders.setdefault(var, []).append(c.cluster_id)
        expected = {
            (min(ids), other): (var,)
            for var, ids in holders.items() for other in ids if other != min(ids)
        }
        return {edge: sepset.variables for edge, sepset in graph.sepsets.items()} == expected

    def _pairwise_marginals(self, kind):
        """Each cluster's pairwise potential times its other incoming messages, on `kind`."""
        other = VarKind.POSE if kind is VarKind.FEATURE else VarKind.FEATURE
        s, o = self.blocks[kind], self.blocks[other]
        in_K, in_h = self.stars[other].incoming()
        K_oo = self.K[:, o, o] + in_K
        h_o = self.h[:, o] + in_h
        ok = _pd_mask(K_oo)
        mu_K = np.zeros((len(self.ids), s.stop - s.start, s.stop - s.start))
        mu_h = np.zeros((len(self.ids), s.stop - s.start))
        if ok.any():
            K_so = self.K[ok][:, s, o]
            solved_K = np.linalg.solve(K_oo[ok], np.swapaxes(K_so, 1, 2))
            solved_h = np.linalg.solve(K_oo[ok], h_o[ok][..., None])[..., 0]
            marginal_K = self.K[ok][:, s, s] - K_so @ solved_K
            mu_K[ok] = 0.5 * (marginal_K + np.swapaxes(marginal_K, 1, 2))
            mu_h[ok] = self.h[ok][:, s] - np.einsum("nij,nj->ni", K_so, solved_h)
        return mu_K, mu_h, ok

    def _phase(self, kind, alpha):
        star = self.stars[kind]
        leaves, hubs = star.leaves, star.hub[star.leaves]
        if not leaves.size:
            return 0.0, 0
        mu_K, mu_h, ok = self._pairwise_marginals(kind)

        sending = leaves[ok[leaves]]
        max_delta = 0.0
        if sending.size:
            K, h, delta = _damp_stack(star.up_K[sending], star.up_h[sending],
                                      mu_K[sending], mu_h[sending], alpha)
            star.up_K[sending], star.up_h[sending] = K, h
            max_delta = float(delta.max())

        sum_K, sum_h = star.hub_sums()
        replying = leaves[ok[hubs]]
        if replying.size:
            hub = star.hub[replying]
            new_K = mu_K[hub] + sum_K[hub] - star.up_K[replying]
            new_h = mu_h[hub] + sum_h[hub] - star.up_h[replying]
            K, h, delta = _damp_stack(star.down_K[replying], star.down_h[replying], new_K, new_h, alpha)
            star.down_K[replying], star.down_h[replying] = K, h
            max_delta = max(max_delta, float(delta.max()))

        skipped = int((~ok[leaves]).sum() + (~ok[hubs]).sum())
        return max_delta, skipped

    def sweep(self, alpha):
        f_delta, f_skipped = self._phase(VarKind.FEATURE, alpha)
        p_delta, p_skipped = self._phase(VarKind.POSE, alpha)
        return max(f_delta, p_delta), f_skipped + p_skipped

    def write_back(self):
        """Store messages and beliefs back on the state as factors."""
        state = self.state
        graph = state.graph
        incoming = {kind: star.incoming() for kind, star in self.stars.items()}
        for kind, star in self.stars.items():
            for leaf in star.leaves:
                var = star.variables[leaf]
                hub_id, leaf_id = self.ids[star.hub[leaf]], self.ids[leaf]
                state.messages[(leaf_id, hub_id)] = GaussianFactor((var,), star.up_K[leaf], star.up_h[leaf])
                state.messages[(hub_id, leaf_id)] = GaussianFactor((var,), star.down_K[leaf], star.down_h[leaf])
        for k, c in enumerate(graph.clusters):
            absorbed = [
                GaussianFactor((var,), incoming[kind][0][k], incoming[kind][1][k])
                for kind, var in ((VarKind.FEATURE, c.feature), (VarKind.POSE, c.pose))
            ]
            state.beliefs[c.cluster_id] = _absorb(state.potentials[c.cluster_id], absorbed)


def _run_stacked_sweeps(state, config, report):
    stacked = _StackedBp(state)
    for sweep in range(1, config.max_inner_sweeps + 1):
        max_delta, skipped = stacked.sweep(config.damping)
        state.skipped += skipped
        report.sweeps = sweep
        report.final_delta = max_delta
        report.skipped_messages += skipped
        logger.debug("Sweep %d: max delta %.3e, %d skipped", sweep, max_delta, skipped)
        if skipped == 0 and max_delta < config.inner_tol:
            report.converged = True
            break
    stacked.write_back()


def run_inner_bp(state, config):
    """Sweep messages until they settle, in the configured schedule.

    The "variables" schedule needs per-cluster potentials and single-variable
    star sepsets; other graphs fall back to round-robin over sorted edges.
    """
    report = ConvergenceReport()
    if not state.graph.directed_edges():
        return report

    report.converged = False
    if (config.schedule == SCHEDULE_VARIABLES and state.potentials
            and _StackedBp.supports(state.graph)):
        _run_stacked_sweeps(state, config, report)
    else:
        _run_edge_sweeps(state, config, report)

    if not report.converged:
        logger.warning("Inner BP stopped after %d sweeps (delta %.3e)", report.sweeps, report.final_delta)
    if report.skipped_messages:
        logger.warning("%d message(s) skipped on singular elimination blocks", report.skipped_messages)
    return report


def extract_posterior(state):
    """Per-variable marginals from the covering cluster with the largest precision trace.

    `calibration_gap` is the largest mean or covariance entry disagreement
    between covering clusters.
    """
    graph = state.graph
    holders = {}
    for c in graph.clusters:
        holders.setdefault(c.feature, []).append(c.cluster_id)
        holders.setdefault(c.pose, []).append(c.cluster_id)

    features, cameras = {}, {}
    gap = 0.0
    for var in sorted(holders):
        marginals = []
        for cid in holders[var]:
            try:
                marginals.append(state.beliefs[cid].marginalize([var]))
            except SingularEliminationBlock as err:
                raise NotPositiveDefinite(f"belief of cluster {cid} is improper ({err})") from err
        best = max(range(len(marginals)), key=lambda k: np.trace(marginals[k].K))
        mean, cov = marginals[best].to_moments()
        for k, other in enumerate(marginals):
            if k != best and other.is_proper():
                other_mean, other_cov = other.to_moments()
                gap = max(gap, float(np.max(np.abs(other_mean - mean))), float(np.max(np.abs(other_cov - cov))))
        target = features if var.kind is VarKind.FEATURE else cameras
        target[var.index[0]] = Marginal(mean, cov)

    if gap > 0:
        logger.debug("Calibration gap between covering clusters: %.3e", gap)
    return PosteriorEstimate(mode=graph.mode, features=features, cameras=cameras, calibration_gap=gap)


# ── Outer loop ────────────────────────────────────────────────────────
def anchor_priors(beliefs, reference, anchor_variance=ANCHOR_VARIANCE):
    """Fix the gauge: camera 0's pose and camera 1's centre-x pinned to the reference means."""
    cameras = {j: Marginal(m.mean.copy(), m.cov.copy()) for j, m in beliefs.cameras.items()}
    ids = sorted(reference.cameras)
    if ids:
        first = reference.cameras[ids[0]]
        cameras[ids[0]] = Marginal(first.mean.copy(), anchor_variance * np.eye(first.mean.size))
    if len(ids) > 1:
        pinned = cameras[ids[1]]
        pinned.mean[0] = reference.cameras[ids[1]].mean[0]
        pinned.cov[0, :] = 0.0
        pinned.cov[:, 0] = 0.0
        pinned.cov[0, 0] = anchor_variance
    features = {i: Marginal(m.mean.copy(), m.cov.copy()) for i, m in beliefs.features.items()}
    return VariableBeliefs(beliefs.mode, features, cameras)


def estimate_error(beliefs, graph, calibrations):
    """Mean reprojection error of the belief means over the graph's observations."""
    poses = beliefs.poses()
    cameras = {j: (poses[j], calibrations[j]) for j in poses}
    observations = [(c.camera_id, c.feature_id, c.observation) for c in graph.clusters]
    distances = reprojection_distances(cameras, beliefs.points(), observations, graph.mode)
    if np.all(np.isnan(distances)):
        return float("inf")
    return float(np.nanmean(distances))


def _relative_improvement(previous, current):
    if previous <= 0.0:
        return 0.0
    return (previous - current) / previous



def solve(graph, priors, config, calibrations, progress: Optional[Callable] = None):
    """Iterate {inflate if stalled; re-linearize clusters; inner BP; extract posterior}.

    The anchored input priors are the prior factors of every iteration; the
    previous posterior only supplies the sigma points of the next
    linearization. Messages carry over between iterations and restart from
    the unit factor after an inflation. Returns the estimate with the lowest
    reprojection error, carrying the full per-iteration trace.
    """
    reference = anchor_priors(priors, priors, config.anchor_variance)
    linearization, messages = reference, None
    prior_error = estimate_error(reference, graph, calibrations)
    logger.info("Solving: %d clusters, prior reprojection error %.6f", len(graph.clusters), prior_error)

    trace, errors, best_history = [], [], []
    best, best_error = None, float("inf")
    inflate_next, inflations_in_row = False, 0

    for iteration in range(1, config.max_outer_iters + 1):
        inflated = inflate_next
        if inflated:
            linearization = anchor_priors(linearization.inflated(config.inflation), reference,
                                          config.anchor_variance)
            messages = None
        try:
            state = init_cluster_beliefs(graph, reference, config, calibrations, linearization, messages)
            report = run_inner_bp(state, config)
            posterior = extract_posterior(state)
            error = estimate_error(posterior, graph, calibrations)
        except SamError as err:
            raise SolveError(iteration, err) from err

        record = IterationRecord(
            iteration=iteration, error=error, inner_sweeps=report.sweeps, inflated=inflated,
            converged=report.converged, final_delta=report.final_delta,
            skipped_messages=report.skipped_messages,
        )
        trace.append(record)
        logger.debug("Outer iteration %d: error %.6e (%d sweeps%s)",
                     iteration, error, report.sweeps, ", inflated" if inflated else "")
        if progress is not None:
            progress(record)

        if best is None or error < best_error:
            best, best_error = replace(posterior, best_iteration=iteration), error
        errors.append(error)
        best_history.append(best_error)
        if best_error == 0.0:
            break

        stalled = len(errors) > STALL_WINDOW and all(
            _relative_improvement(errors[-k - 1], errors[-k]) < STALL_THRESHOLD
            for k in range(1, STALL_WINDOW + 1)
        )
        if stalled and inflations_in_row < MAX_CONSECUTIVE_INFLATIONS:
            inflate_next = True
            inflations_in_row += 1
        else:
            inflate_next = False
            if not stalled:
                inflations_in_row = 0

        if (len(best_history) > config.patience
                and not inflate_next
                and inflations_in_row >= MAX_CONSECUTIVE_INFLATIONS
                and _relative_improvement(best_history[-config.patience - 1], best_error) < config.outer_tol):
            logger.info("Stopping after %d outer iterations (no progress over %d)", iteration, config.patience)
            break

        linearization = anchor_priors(posterior, reference, config.anchor_variance)
        messages = state.messages

    logger.info("Solved: best reprojection error %.6e at iteration %d", best_error, best.best_iteration)
    return replace(best, trace=trace, prior_error=prior_error)

"""Two-level hierarchical HMM with GMM emissions.

The top level is a fully connected graph over activities. Each activity
expands into a bottom-level HMM of m emitting states (left-to-right by
default) framed by non-emitting entry and exit states. Bottom models are
trained per activity with Baum-Welch; decoding runs Viterbi on the
flattened composite model obtained by eliminating the non-emitting
states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

MODEL_FORMAT_VERSION = 1
ROW_SUM_TOL = 1e-12
DEFAULT_VARIANCE_FLOOR = 1e-4


class InsufficientDataError(Exception):
    """Raised when an activity has too little data to fit its model."""


class NumericalError(Exception):
    pass


class ModelFormatError(Exception):
    pass


# ---------------------------------------------------------------------------
# Gaussian mixtures

@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray  # (G,)
    means: np.ndarray  # (G, D)
    variances: np.ndarray  # (G, D) diagonal

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-9 or np.any(w <= 0):
            raise ValueError("mixture weights must be positive and sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "variances", np.asarray(self.variances, dtype=float))

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    def component_log_prob(self, obs: np.ndarray) -> np.ndarray:
        """Per-component log density, shape (T, G)."""
        obs = np.atleast_2d(obs)
        diff = obs[:, None, :] - self.means[None, :, :]  # (T, G, D)
        quad = (diff**2 / self.variances[None, :, :]).sum(axis=2)
        log_norm = 0.5 * (np.log(2.0 * np.pi) * self.dimension
                          + np.log(self.variances).sum(axis=1))
        return -0.5 * quad - log_norm[None, :] + np.log(self.weights)[None, :]

    def log_prob(self, obs: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_prob(obs), axis=1)


# ---------------------------------------------------------------------------
# Model containers

def _check_stochastic(rows: np.ndarray, what: str) -> None:
    sums = np.atleast_2d(rows).sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError(f"{what} rows must sum to 1 (got sums {sums})")


@dataclass(frozen=True)
class ActivityHMM:
    activity_id: str
    entry: np.ndarray  # (m,) distribution from the non-emitting entry state
    transitions: np.ndarray  # (m, m) between emitting states
    exit: np.ndarray  # (m,) transition into the non-emitting exit state
    states: tuple  # m GaussianMixture emissions

    def __post_init__(self):
        entry = np.asarray(self.entry, dtype=float)
        trans = np.asarray(self.transitions, dtype=float)
        exit_ = np.asarray(self.exit, dtype=float)
        m = len(self.states)
        if trans.shape != (m, m) or entry.shape != (m,) or exit_.shape != (m,):
            raise ValueError("inconsistent activity model dimensions")
        _check_stochastic(entry, "entry")
        _check_stochastic(np.column_stack([trans, exit_]), "transition+exit")
        object.__setattr__(self, "entry", entry)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "exit", exit_)
        object.__setattr__(self, "states", tuple(self.states))

    @property
    def n_states(self) -> int:
        return len(self.states)

    def emission_log_probs(self, obs: np.ndarray) -> np.ndarray:
        """(T, m) log emission densities."""
        return np.column_stack([g.log_prob(obs) for g in self.states])


@dataclass(frozen=True)
class HierarchicalHMM:
    activities: tuple  # of ActivityHMM
    top_transition: np.ndarray  # (K, K)
    top_initial: np.ndarray  # (K,)
    normalizer_mean: np.ndarray | None = None
    normalizer_std: np.ndarray | None = None
    block_layout: dict | None = None

    def __post_init__(self):
        top = np.asarray(self.top_transition, dtype=float)
        init = np.asarray(self.top_initial, dtype=float)
        k = len(self.activities)
        if top.shape != (k, k) or init.shape != (k,):
            raise ValueError("inconsistent top-level dimensions")
        _check_stochastic(top, "top transition")
        _check_stochastic(init, "top initial")
        object.__setattr__(self, "top_transition", top)
        object.__setattr__(self, "top_initial", init)
        object.__setattr__(self, "activities", tuple(self.activities))

    @property
    def activity_ids(self) -> list:
        return [a.activity_id for a in self.activities]


@dataclass(frozen=True)
class CompositeHMM:
    initial: np.ndarray  # (K*m,)
    transitions: np.ndarray  # (K*m, K*m)
    states: tuple  # K*m GaussianMixture
    state_map: tuple  # of (activity_id, substate)

    def emission_log_probs(self, obs: np.ndarray) -> np.ndarray:
        return np.column_stack([g.log_prob(obs) for g in self.states])


# ---------------------------------------------------------------------------
# Initialization

def _kmeans(data: np.ndarray, k: int, seed: int, max_iter: int = 100):
    """Plain seeded Lloyd iteration; ties and empty clusters are handled
    deterministically (first minimum, cluster keeps its previous center)."""
    rng = np.random.default_rng(seed)
    if len(data) < k:
        raise InsufficientDataError(
            f"k-means needs at least {k} points, got {len(data)}"
        )
    centers = data[rng.choice(len(data), size=k, replace=False)].copy()
    assign = None
    for _ in range(max_iter):
        dist = ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = dist.argmin(axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = data[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return centers, assign


def _fit_gmm_from_points(points: np.ndarray, n_components: int, seed: int,
                         variance_floor: float) -> GaussianMixture:
    centers, assign = _kmeans(points, n_components, seed)
    weights = np.empty(n_components)
    variances = np.empty_like(centers)
    for j in range(n_components):
        members = points[assign == j]
        weights[j] = max(len(members), 1)
        if len(members):
            variances[j] = np.maximum(members.var(axis=0), variance_floor)
        else:
            variances[j] = variance_floor
    weights /= weights.sum()
    return GaussianMixture(weights=weights, means=centers, variances=variances)


def _init_transitions(m: int, topology: str):
    trans = np.zeros((m, m))
    exit_ = np.zeros(m)
    if topology == "left_to_right":
        for j in range(m):
            trans[j, j] = 0.6
            if j + 1 < m:
                trans[j, j + 1] = 0.3
            else:
                exit_[j] = 0.1
        entry = np.zeros(m)
        entry[0] = 1.0
    elif topology == "ergodic":
        trans[:] = 0.9 / m
        exit_[:] = 0.1
        entry = np.full(m, 1.0 / m)
    else:
        raise ValueError(f"unknown topology {topology!r}")
    total = trans.sum(axis=1) + exit_
    trans /= total[:, None]
    exit_ /= total
    return entry, trans, exit_


def init_activity_hmm(activity_id: str, sequences, m: int, n_components: int = 1,
                      seed: int = 0, topology: str = "left_to_right",
                      variance_floor: float = DEFAULT_VARIANCE_FLOOR) -> ActivityHMM:
    """Initialize an m-state model from labeled training sub-sequences.

    Each sequence is split into m contiguous temporal chunks; state j is
    seeded by k-means on the pooled j-th chunks.
    """
    sequences = [np.atleast_2d(np.asarray(s, dtype=float)) for s in sequences]
    total = sum(len(s) for s in sequences)
    if total < m:
        raise InsufficientDataError(
            f"insufficient data for activity {activity_id!r}: "
            f"{total} observations for {m} states"
        )
    chunks = [[] for _ in range(m)]
    for seq in sequences:
        length = len(seq)
        for t, obs in enumerate(seq):
            chunks[t * m // length].append(obs)
    states = []
    for j, chunk in enumerate(chunks):
        if len(chunk) < n_components:
            raise InsufficientDataError(
                f"insufficient data for activity {activity_id!r}: "
                f"state {j} received {len(chunk)} observations "
                f"for {n_components} mixture components"
            )
        states.append(
            _fit_gmm_from_points(np.array(chunk), n_components, seed + j,
                                 variance_floor)
        )
    entry, trans, exit_ = _init_transitions(m, topology)
    return ActivityHMM(activity_id=activity_id, entry=entry, transitions=trans,
                       exit=exit_, states=tuple(states))


# ---------------------------------------------------------------------------
# Baum-Welch

def _log_forward_backward(model: ActivityHMM, obs: np.ndarray):
    """Log-space forward/backward including the terminal exit transition."""
    logb = model.emission_log_probs(obs)  # (T, m)
    t_len, m = logb.shape
    with np.errstate(divide="ignore"):
        log_entry = np.log(model.entry)
        log_trans = np.log(model.transitions)
        log_exit = np.log(model.exit)
    log_alpha = np.empty((t_len, m))
    log_alpha[0] = log_entry + logb[0]
    for t in range(1, t_len):
        log_alpha[t] = logsumexp(log_alpha[t - 1][:, None] + log_trans, axis=0) + logb[t]
    log_beta = np.empty((t_len, m))
    log_beta[-1] = log_exit
    for t in range(t_len - 2, -1, -1):
        log_beta[t] = logsumexp(log_trans + (logb[t + 1] + log_beta[t + 1])[None, :],
                                axis=1)
    loglik = logsumexp(log_alpha[-1] + log_exit)
    return log_alpha, log_beta, logb, loglik


def sequence_log_likelihood(model: ActivityHMM, obs: np.ndarray) -> float:
    return float(_log_forward_backward(model, np.atleast_2d(obs))[3])


def baum_welch(model: ActivityHMM, sequences, max_iter: int = 20,
               tol: float = 1e-6,
               variance_floor: float = DEFAULT_VARIANCE_FLOOR):
    """EM training; returns the trained model and the log-likelihood trace."""
    sequences = [np.atleast_2d(np.asarray(s, dtype=float)) for s in sequences]
    if not sequences:
        raise InsufficientDataError("empty sequence list")
    m = model.n_states
    trace = []
    for _ in range(max_iter):
        entry_acc = np.zeros(m)
        trans_acc = np.zeros((m, m))
        exit_acc = np.zeros(m)
        occ = np.zeros(m)
        comp_occ = [np.zeros(g.n_components) for g in model.states]
        comp_mean = [np.zeros_like(g.means) for g in model.states]
        comp_sq = [np.zeros_like(g.variances) for g in model.states]
        total_ll = 0.0
        for obs in sequences:
            log_alpha, log_beta, logb, loglik = _log_forward_backward(model, obs)
            if not np.isfinite(loglik):
                raise NumericalError(
                    "sequence has zero likelihood under the current model "
                    "(too short for the topology or numerical underflow)"
                )
            total_ll += loglik
            gamma = np.exp(log_alpha + log_beta - loglik)  # (T, m)
            entry_acc += gamma[0]
            occ += gamma.sum(axis=0)
            exit_acc += gamma[-1]
            with np.errstate(divide="ignore"):
                log_trans = np.log(model.transitions)
            for t in range(len(obs) - 1):
                log_xi = (log_alpha[t][:, None] + log_trans
                          + (logb[t + 1] + log_beta[t + 1])[None, :] - loglik)
                trans_acc += np.exp(log_xi)
            for j, gmm in enumerate(model.states):
                comp_post = gmm.component_log_prob(obs)
                comp_post = np.exp(comp_post - logsumexp(comp_post, axis=1,
                                                         keepdims=True))
                resp = comp_post * gamma[:, j][:, None]  # (T, G)
                comp_occ[j] += resp.sum(axis=0)
                comp_mean[j] += resp.T @ obs
                comp_sq[j] += resp.T @ (obs**2)
        trace.append(total_ll)
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            break

        entry = entry_acc / entry_acc.sum()
        denom = occ.copy()
        denom[denom == 0.0] = 1.0
        transitions = trans_acc / denom[:, None]
        exit_ = exit_acc / denom
        # unvisited states keep their previous outgoing rows
        row_sums = transitions.sum(axis=1) + exit_
        for j in range(m):
            if row_sums[j] <= 0.0:
                transitions[j] = model.transitions[j]
                exit_[j] = model.exit[j]
            else:
                transitions[j] /= row_sums[j]
                exit_[j] /= row_sums[j]
        states = []
        for j, gmm in enumerate(model.states):
            occ_j = comp_occ[j]
            if occ_j.sum() <= 0.0:
                states.append(gmm)
                continue
            safe = np.maximum(occ_j, 1e-300)
            means = comp_mean[j] / safe[:, None]
            variances = np.maximum(comp_sq[j] / safe[:, None] - means**2,
                                   variance_floor)
            weights = occ_j / occ_j.sum()
            if np.any(weights <= 0.0):
                weights = np.maximum(weights, 1e-12)
                weights /= weights.sum()
            states.append(GaussianMixture(weights=weights, means=means,
                                          variances=variances))
        model = ActivityHMM(activity_id=model.activity_id, entry=entry,
                            transitions=transitions, exit=exit_,
                            states=tuple(states))
    # final likelihood under the last parameter set
    final_ll = sum(sequence_log_likelihood(model, obs) for obs in sequences)
    trace.append(final_ll)
    return model, trace


# ---------------------------------------------------------------------------
# Top level

def estimate_top_transitions(label_sequences, activities):
    """Add-one-smoothed bigram estimate from per-segment activity labels.

    Returns (top_transition, top_initial) over the given activity order.
    """
    label_sequences = [list(s) for s in label_sequences]
    if not label_sequences or all(not s for s in label_sequences):
        raise ValueError("no labeled sequences given")
    index = {a: i for i, a in enumerate(activities)}
    k = len(activities)
    counts = np.ones((k, k))
    init = np.ones(k)
    for seq in label_sequences:
        if not seq:
            continue
        init[index[seq[0]]] += 1.0
        for a, b in zip(seq, seq[1:]):
            counts[index[a], index[b]] += 1.0
    return counts / counts.sum(axis=1, keepdims=True), init / init.sum()


# ---------------------------------------------------------------------------
# Flattening and decoding

def flatten(h: HierarchicalHMM) -> CompositeHMM:
    """Eliminate non-emitting entry/exit states into a flat composite model."""
    k = len(h.activities)
    m_sizes = [a.n_states for a in h.activities]
    offsets = np.cumsum([0] + m_sizes)
    n = offsets[-1]
    trans = np.zeros((n, n))
    init = np.zeros(n)
    states = []
    state_map = []
    for ai, act in enumerate(h.activities):
        o = offsets[ai]
        m = act.n_states
        trans[o : o + m, o : o + m] += act.transitions
        init[o : o + m] = h.top_initial[ai] * act.entry
        for bi, dest in enumerate(h.activities):
            od = offsets[bi]
            md = dest.n_states
            trans[o : o + m, od : od + md] += (
                act.exit[:, None] * h.top_transition[ai, bi] * dest.entry[None, :]
            )
        states.extend(act.states)
        state_map.extend((act.activity_id, j) for j in range(m))
    return CompositeHMM(initial=init, transitions=trans, states=tuple(states),
                        state_map=tuple(state_map))


def composite_log_likelihood(composite: CompositeHMM, obs: np.ndarray) -> float:
    """Total forward log-probability of an observation sequence."""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    logb = composite.emission_log_probs(obs)
    with np.errstate(divide="ignore"):
        log_init = np.log(composite.initial)
        log_trans = np.log(composite.transitions)
    log_alpha = log_init + logb[0]
    for t in range(1, len(obs)):
        log_alpha = logsumexp(log_alpha[:, None] + log_trans, axis=0) + logb[t]
    return float(logsumexp(log_alpha))


def viterbi(composite: CompositeHMM, obs: np.ndarray):
    """Max-probability decoding; returns (activity labels, log-probability).

    Ties break toward the lower state index.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    if obs.shape[1] != composite.states[0].dimension:
        raise ValueError(
            f"observation dimension {obs.shape[1]} does not match "
            f"model dimension {composite.states[0].dimension}"
        )
    logb = composite.emission_log_probs(obs)
    t_len, n = logb.shape
    with np.errstate(divide="ignore"):
        log_init = np.log(composite.initial)
        log_trans = np.log(composite.transitions)
    delta = log_init + logb[0]
    back = np.zeros((t_len, n), dtype=int)
    for t in range(1, t_len):
        scores = delta[:, None] + log_trans
        back[t] = scores.argmax(axis=0)  # argmax takes the first (lowest) index
        delta = scores[back[t], np.arange(n)] + logb[t]
    path = np.empty(t_len, dtype=int)
    path[-1] = int(delta.argmax())
    score = float(delta[path[-1]])
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    labels = [composite.state_map[s][0] for s in path]
    return labels, score


def hierarchical_path_log_prob(h: HierarchicalHMM, path, obs=None) -> float:
    """Log-probability of a complete (activity, substate) path.

    Same-activity steps marginalize over staying inside the bottom model
    versus leaving through the exit state and re-entering, matching the
    flattened composite edge mass.
    """
    ids = h.activity_ids
    k0, j0 = path[0]
    a0 = ids.index(k0)
    with np.errstate(divide="ignore"):  # impossible paths score -inf
        logp = np.log(h.top_initial[a0] * h.activities[a0].entry[j0])
        for (ka, ja), (kb, jb) in zip(path, path[1:]):
            ai, bi = ids.index(ka), ids.index(kb)
            act, dest = h.activities[ai], h.activities[bi]
            mass = act.exit[ja] * h.top_transition[ai, bi] * dest.entry[jb]
            if ai == bi:
                mass += act.transitions[ja, jb]
            logp += np.log(mass)
    if obs is not None:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        for (ka, ja), o in zip(path, obs):
            ai = ids.index(ka)
            logp += float(h.activities[ai].states[ja].log_prob(o[None, :])[0])
    return float(logp)


# ---------------------------------------------------------------------------
# Persistence

def _gmm_to_json(g: GaussianMixture) -> dict:
    return {"weights": g.weights.tolist(), "means": g.means.tolist(),
            "variances": g.variances.tolist()}


def _gmm_from_json(obj: dict) -> GaussianMixture:
    return GaussianMixture(weights=np.array(obj["weights"]),
                           means=np.array(obj["means"]),
                           variances=np.array(obj["variances"]))


def save_model(h: HierarchicalHMM, path: str | Path) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "activities": [
            {
                "id": a.activity_id,
                "entry": a.entry.tolist(),
                "transitions": a.transitions.tolist(),
                "exit": a.exit.tolist(),
                "states": [_gmm_to_json(g) for g in a.states],
            }
            for a in h.activities
        ],
        "top_transition": h.top_transition.tolist(),
        "top_initial": h.top_initial.tolist(),
        "normalizer_mean": None if h.normalizer_mean is None
        else np.asarray(h.normalizer_mean).tolist(),
        "normalizer_std": None if h.normalizer_std is None
        else np.asarray(h.normalizer_std).tolist(),
        "block_layout": h.block_layout,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))


def load_model(path: str | Path) -> HierarchicalHMM:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid model file: {exc}") from exc
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported model format version {version!r}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )
    activities = tuple(
        ActivityHMM(
            activity_id=a["id"],
            entry=np.array(a["entry"]),
            transitions=np.array(a["transitions"]),
            exit=np.array(a["exit"]),
            states=tuple(_gmm_from_json(g) for g in a["states"]),
        )
        for a in doc["activities"]
    )
    return HierarchicalHMM(
        activities=activities,
        top_transition=np.array(doc["top_transition"]),
        top_initial=np.array(doc["top_initial"]),
        normalizer_mean=None if doc.get("normalizer_mean") is None
        else np.array(doc["normalizer_mean"]),
        normalizer_std=None if doc.get("normalizer_std") is None
        else np.array(doc["normalizer_std"]),
        block_layout=doc.get("block_layout"),
    )

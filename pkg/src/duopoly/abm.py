"""Agent-based two-brand adoption on a Watts-Strogatz network.

Each agent is in one of three states: brand 1, brand 2, or non-adopter
(index 3). A non-adopter compares options pairwise through

    delta[k, j] = nu[k] - nu[j] + u[k] - u[j]

where ``nu`` are the state shares among its neighbours and ``u`` the
intrinsic utilities, and picks with the zero-temperature rule: a strictly
dominant option with certainty, ties split uniformly. Adoption is absorbing.
Each tick first seeds ``gamma1``/``gamma2`` random non-adopters, then lets
every other non-adopter decide against the pre-tick snapshot.

Randomness comes from ``numpy.random.default_rng`` (PCG64); replicate ``r``
of an ensemble is seeded with ``rng_seed + r``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, fields
from enum import IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidConfigError, IsolatedAgentError

# |delta| at or below this counts as a tie; absorbs rounding in nu_k - nu_j + u_k - u_j
TIE_TOL = 1e-12


class AgentState(IntEnum):
    BRAND1 = 1
    BRAND2 = 2
    NON_ADOPTER = 3


@dataclass
class Network:
    """Undirected simple graph in CSR form (``indptr``, ``indices``)."""

    n_agents: int
    indptr: np.ndarray
    indices: np.ndarray

    @classmethod
    def from_adjacency(cls, adjacency: Sequence[Sequence[int]]) -> "Network":
        indptr = np.zeros(len(adjacency) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in adjacency])
        indices = np.fromiter((j for a in adjacency for j in sorted(a)), dtype=np.int64,
                              count=int(indptr[-1]))
        return cls(len(adjacency), indptr, indices)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def adjacency(self) -> list[np.ndarray]:
        return [self.neighbors(i) for i in range(self.n_agents)]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def n_edges(self) -> int:
        return int(self.indptr[-1]) // 2

    def to_sparse(self) -> sp.csr_matrix:
        data = np.ones(len(self.indices), dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr),
                             shape=(self.n_agents, self.n_agents))


def build_watts_strogatz(n_agents: int, k: int, p_rewire: float,
                         rng: np.random.Generator) -> Network:
    """Ring lattice with ``k`` nearest neighbours, each edge rewired with
    probability ``p_rewire``.

    Edges ``(i, i+j)`` are visited for ``j = 1..k/2`` and ``i = 0..n-1``; a
    rewired edge keeps ``i`` and moves its far end to a uniformly random
    node that is neither ``i`` nor already adjacent to it.
    """
    if k % 2 or k < 2:
        raise InvalidConfigError(f"k must be even and >= 2, got {k}")
    if k >= n_agents - 1:
        raise InvalidConfigError(f"k must be < n_agents - 1, got k={k}, n_agents={n_agents}")
    if not 0.0 <= p_rewire <= 1.0:
        raise InvalidConfigError(f"p_rewire must lie in [0, 1], got {p_rewire}")
    adj = [set() for _ in range(n_agents)]
    for j in range(1, k // 2 + 1):
        for i in range(n_agents):
            v = (i + j) % n_agents
            adj[i].add(v)
            adj[v].add(i)
    if p_rewire > 0:
        for j in range(1, k // 2 + 1):
            coins = rng.random(n_agents)
            for i in range(n_agents):
                if coins[i] >= p_rewire:
                    continue
                v = (i + j) % n_agents
                if v not in adj[i] or len(adj[i]) >= n_agents - 1:
                    continue
                w = int(rng.integers(n_agents))
                while w == i or w in adj[i]:
                    w = int(rng.integers(n_agents))
                adj[i].discard(v)
                adj[v].discard(i)
                adj[i].add(w)
                adj[w].add(i)
    return Network.from_adjacency(adj)


# --- decision rule ------------------------------------------------------------

def local_shares(agent: int, net: Network, states: np.ndarray) -> tuple[float, float, float]:
    nb = net.neighbors(agent)
    if len(nb) == 0:
        raise IsolatedAgentError(f"agent {agent} has no neighbours")
    counts = np.bincount(states[nb], minlength=4)
    deg = len(nb)
    return counts[1] / deg, counts[2] / deg, counts[3] / deg


def effective_delta(k_state: int, j_state: int, nu: Sequence[float], u: Sequence[float]) -> float:
    """``nu_k - nu_j + u_k - u_j`` for states numbered 1..3."""
    if k_state not in (1, 2, 3) or j_state not in (1, 2, 3):
        raise ValueError("states are numbered 1, 2, 3")
    if k_state == j_state:
        return 0.0
    k, j = k_state - 1, j_state - 1
    return (nu[k] - nu[j]) + (u[k] - u[j])


def _choice_probability(d_a: float, d_b: float) -> float:
    # d_a, d_b: deltas of a state against the two others
    if d_a < -TIE_TOL or d_b < -TIE_TOL:
        return 0.0
    ties = (abs(d_a) <= TIE_TOL) + (abs(d_b) <= TIE_TOL)
    return 1.0 / (1 + ties)


def state_probabilities(nu: Sequence[float], u: Sequence[float]) -> tuple[float, float, float]:
    """Zero-temperature probabilities of ending up in states 1, 2, 3."""
    probs = []
    for s in (1, 2, 3):
        others = [o for o in (1, 2, 3) if o != s]
        probs.append(_choice_probability(effective_delta(s, others[0], nu, u),
                                         effective_delta(s, others[1], nu, u)))
    return tuple(probs)


def _probabilities_vectorized(nu: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise ``state_probabilities`` for an (m, 3) array of shares."""
    score = nu + u  # delta[k, j] = score[k] - score[j]
    out = np.empty_like(nu)
    for s in range(3):
        a, b = [o for o in range(3) if o != s]
        da = score[:, s] - score[:, a]
        db = score[:, s] - score[:, b]
        ties = (np.abs(da) <= TIE_TOL).astype(np.int64) + (np.abs(db) <= TIE_TOL)
        p = 1.0 / (1 + ties)
        p[(da < -TIE_TOL) | (db < -TIE_TOL)] = 0.0
        out[:, s] = p
    return out


# --- configuration and simulation ---------------------------------------------

@dataclass
class AbmConfig:
    """Agent-based model settings.

    ``u`` holds the utilities of (brand 1, brand 2, non-adoption); by default
    both brands sit ``0.6`` above non-adoption. Use ``-inf`` for a brand's
    utility to remove it from the choice set. ``gamma1``/``gamma2`` are
    seeded agents per tick.
    """

    n_agents: int = 10_000
    k: int = 8
    p_rewire: float = 0.0
    u: tuple[float, float, float] = (0.6, 0.6, 0.0)
    gamma1: int = 109
    gamma2: int = 239
    seeding_dispersion: str = "uniform"
    max_ticks: int = 200
    rng_seed: int = 0

    def __post_init__(self):
        self.u = tuple(float(x) for x in self.u)
        if len(self.u) != 3:
            raise InvalidConfigError("u must hold three utilities")
        if any(math.isnan(x) or x == math.inf for x in self.u) or not math.isfinite(self.u[2]):
            raise InvalidConfigError(f"utilities must be finite (brands may be -inf), got {self.u}")
        if all(math.isinf(x) for x in self.u[:2]):
            raise InvalidConfigError("at least one brand needs a finite utility")
        if not self.n_agents > self.k >= 2:
            raise InvalidConfigError(f"need n_agents > k >= 2, got n_agents={self.n_agents}, k={self.k}")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise InvalidConfigError("gamma1 and gamma2 must be >= 0")
        if not 0.0 <= self.p_rewire <= 1.0:
            raise InvalidConfigError(f"p_rewire must lie in [0, 1], got {self.p_rewire}")
        if self.seeding_dispersion != "uniform":
            raise InvalidConfigError(f"unsupported seeding_dispersion {self.seeding_dispersion!r}")
        if self.max_ticks < 0:
            raise InvalidConfigError("max_ticks must be >= 0")

    @classmethod
    def from_fractions(cls, gamma1_frac: float, gamma2_frac: float, **kw) -> "AbmConfig":
        """Build a config from seeding rates given as population fractions per tick."""
        n = kw.get("n_agents", cls.n_agents)
        return cls(gamma1=round(gamma1_frac * n), gamma2=round(gamma2_frac * n), **kw)

    @property
    def gamma_fractions(self) -> tuple[float, float]:
        return self.gamma1 / self.n_agents, self.gamma2 / self.n_agents

    @classmethod
    def from_dict(cls, d: dict) -> "AbmConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"gamma1_frac", "gamma2_frac", "replicates"}
        if unknown:
            raise InvalidConfigError(f"unknown abm keys: {sorted(unknown)}")
        d = {k: v for k, v in d.items() if k in known or k.endswith("_frac")}
        if "gamma1_frac" in d or "gamma2_frac" in d:
            n = d.get("n_agents", cls.n_agents)
            if "gamma1_frac" in d:
                d["gamma1"] = round(d.pop("gamma1_frac") * n)
            if "gamma2_frac" in d:
                d["gamma2"] = round(d.pop("gamma2_frac") * n)
        if "u" in d:
            d["u"] = tuple(d["u"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["u"] = list(self.u)
        return d


@dataclass
class AbmTrajectory:
    t: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    n1_sd: np.ndarray | None = None
    n2_sd: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def final(self) -> tuple[float, float]:
        return float(self.n1[-1]), float(self.n2[-1])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        with_sd = self.n1_sd is not None
        buf.write("t,n1,n2,n1_sd,n2_sd\n" if with_sd else "t,n1,n2\n")
        for i in range(len(self.t)):
            row = f"{self.t[i]:.17g},{self.n1[i]:.17g},{self.n2[i]:.17g}"
            if with_sd:
                row += f",{self.n1_sd[i]:.17g},{self.n2_sd[i]:.17g}"
            buf.write(row + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text

    def padded(self, length: int) -> "AbmTrajectory":
        """Extend to ``length`` ticks by holding the last (absorbing) values."""
        extra = length - len(self.t)
        if extra <= 0:
            return self
        t = np.arange(length, dtype=float)
        return AbmTrajectory(t, np.concatenate([self.n1, np.full(extra, self.n1[-1])]),
                             np.concatenate([self.n2, np.full(extra, self.n2[-1])]),
                             meta=dict(self.meta))


def _seed(states: np.ndarray, config: AbmConfig, rng: np.random.Generator) -> None:
    g1, g2 = config.gamma1, config.gamma2
    if g1 + g2 == 0:
        return
    pool = np.flatnonzero(states == AgentState.NON_ADOPTER)
    if len(pool) == 0:
        return
    if len(pool) >= g1 + g2:
        chosen = rng.choice(pool, size=g1 + g2, replace=False)
        states[chosen[:g1]] = AgentState.BRAND1
        states[chosen[g1:]] = AgentState.BRAND2
        return
    # fewer non-adopters than seeds: all of them go, split g1:g2
    rest = len(pool)
    s1 = rest * g1 // (g1 + g2)
    s2 = rest * g2 // (g1 + g2)
    for _ in range(rest - s1 - s2):
        if rng.random() < g1 / (g1 + g2):
            s1 += 1
        else:
            s2 += 1
    chosen = rng.permutation(pool)
    states[chosen[:s1]] = AgentState.BRAND1
    states[chosen[s1:]] = AgentState.BRAND2


def step(net: Network, states: np.ndarray, config: AbmConfig, rng: np.random.Generator,
         tick: int = 0, *, adjacency: sp.csr_matrix | None = None) -> np.ndarray:
    """Advance one tick; returns a new state array.

    ``adjacency`` may carry a cached ``net.to_sparse()``.
    """
    snapshot = states
    states = states.copy()
    _seed(states, config, rng)
    undecided = np.flatnonzero(states == AgentState.NON_ADOPTER)
    if len(undecided) == 0:
        return states
    A = adjacency if adjacency is not None else net.to_sparse()
    deg = net.degrees[undecided]
    if np.any(deg == 0):
        raise IsolatedAgentError("isolated non-adopter cannot evaluate its neighbourhood")
    one_hot = np.zeros((len(snapshot), 3))
    one_hot[np.arange(len(snapshot)), snapshot - 1] = 1.0
    counts = A[undecided] @ one_hot
    nu = counts / deg[:, None]
    probs = _probabilities_vectorized(nu, np.asarray(config.u, dtype=float))
    draws = rng.random(len(undecided))
    cum1 = probs[:, 0]
    cum2 = probs[:, 0] + probs[:, 1]
    choice = np.where(draws < cum1, 1, np.where(draws < cum2, 2, 3)).astype(states.dtype)
    states[undecided] = choice
    return states


def run(config: AbmConfig, *, net: Network | None = None) -> AbmTrajectory:
    """Simulate from an all-non-adopter population.

    The network is built from the same generator as the dynamics unless
    ``net`` is given. Stops at ``max_ticks`` or once everyone has adopted.
    """
    rng = np.random.default_rng(config.rng_seed)
    if net is None:
        net = build_watts_strogatz(config.n_agents, config.k, config.p_rewire, rng)
    A = net.to_sparse()
    states = np.full(config.n_agents, AgentState.NON_ADOPTER, dtype=np.int8)
    n = config.n_agents
    t, n1, n2 = [0.0], [0.0], [0.0]
    for tick in range(1, config.max_ticks + 1):
        states = step(net, states, config, rng, tick, adjacency=A)
        c = np.bincount(states, minlength=4)
        t.append(float(tick))
        n1.append(c[1] / n)
        n2.append(c[2] / n)
        if c[3] == 0:
            break
    return AbmTrajectory(np.array(t), np.array(n1), np.array(n2),
                         meta={"rng_seed": config.rng_seed})


def ensemble(config: AbmConfig, replicates: int) -> AbmTrajectory:
    """Per-tick mean (and sample SD) over replicates seeded ``rng_seed + r``."""
    if replicates < 1:
        raise InvalidConfigError("replicates must be >= 1")
    runs = []
    for r in range(replicates):
        cfg = AbmConfig(**{**config.__dict__, "rng_seed": config.rng_seed + r})
        runs.append(run(cfg))
    length = max(len(r) for r in runs)
    runs = [r.padded(length) for r in runs]
    N1 = np.vstack([r.n1 for r in runs])
    N2 = np.vstack([r.n2 for r in runs])
    ddof = 1 if replicates > 1 else 0
    return AbmTrajectory(np.arange(length, dtype=float), N1.sum(axis=0) / replicates,
                         N2.sum(axis=0) / replicates, N1.std(axis=0, ddof=ddof),
                         N2.std(axis=0, ddof=ddof),
                         meta={"rng_seed": config.rng_seed, "replicates": replicates})

"""
Tabular Markov decision processes, induced chains and episode simulation.

(state, action) pairs are stored flat, sorted by state and then action id,
with CSR transition rows. Chains are ``scipy.sparse`` CSR matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from core.logging import logger
from core.resilience import (
    InfeasibleAction,
    InvalidInstance,
    NoContraction,
    NotUnichain,
    NumericalBreakdown,
    surface_io_error,
)
from core.rng import RandomStream
from core.schemas import RiskMappingSpec
from core.validation import MdpFile, load_model
from risk.distribution import DiscreteDistribution

ROW_TOL = 1e-9
DIRECT_SOLVE_LIMIT = 2000
STATIONARY_TOL = 1e-10


def gather_positions(ptr: np.ndarray, selected: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Flat CSR positions of the selected rows, plus the owning output row of each"""
    starts = ptr[selected]
    lengths = ptr[selected + 1] - starts
    owner = np.repeat(np.arange(selected.size), lengths)
    offsets = np.arange(owner.size) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    return starts[owner] + offsets, owner


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Controlled finite Markov chain with costs and a restart distribution.

    Build it with :meth:`from_triplets`; the arrays are treated as read-only.
    """

    n_states: int
    discount: float
    pair_state: np.ndarray
    pair_action: np.ndarray
    pair_cost: np.ndarray
    pair_discount: np.ndarray
    row_ptr: np.ndarray
    row_idx: np.ndarray
    row_prob: np.ndarray
    terminal: np.ndarray  # boolean mask
    restart: DiscreteDistribution
    state_ptr: np.ndarray = field(init=False)

    def __post_init__(self):
        ptr = np.searchsorted(self.pair_state, np.arange(self.n_states + 1))
        object.__setattr__(self, "state_ptr", ptr)

    @classmethod
    def from_triplets(
        cls,
        n_states: int,
        transitions: Iterable[Tuple[int, int, int, float]],
        costs: Iterable[Tuple[int, int, float]] = (),
        discount: float = 0.9,
        terminal_states: Iterable[int] = (),
        restart: Optional[Sequence[float]] = None,
        action_discounts: Iterable[Tuple[int, int, float]] = (),
    ) -> "FiniteMdp":
        """Assemble an MDP from sparse (i, u, j, p) triplets.

        Duplicate triplets are summed. A terminal state without any action gets
        a zero-cost self-loop with action id 0.
        """
        if not 0.0 < discount < 1.0:
            raise InvalidInstance(f"discount {discount} must lie strictly inside (0, 1)")
        rows: Dict[Tuple[int, int], Dict[int, float]] = {}
        for i, u, j, p in transitions:
            if not (0 <= i < n_states and 0 <= j < n_states):
                raise InvalidInstance(f"transition ({i}, {u}, {j}) outside 0..{n_states - 1}")
            if p < 0:
                raise InvalidInstance(f"negative probability {p} for ({i}, {u}, {j})")
            row = rows.setdefault((int(i), int(u)), {})
            row[int(j)] = row.get(int(j), 0.0) + float(p)

        terminal = np.zeros(n_states, dtype=bool)
        with_actions = {key[0] for key in rows}
        for i in terminal_states:
            terminal[int(i)] = True
            if int(i) not in with_actions:
                rows[(int(i), 0)] = {int(i): 1.0}

        keys = sorted(rows)
        index = {key: k for k, key in enumerate(keys)}
        pair_cost = np.zeros(len(keys))
        for i, u, c in costs:
            if (i, u) not in index:
                raise InvalidInstance(f"cost given for undefined pair ({i}, {u})")
            pair_cost[index[(i, u)]] = float(c)
        pair_discount = np.full(len(keys), float(discount))
        for i, u, d in action_discounts:
            if (i, u) not in index:
                raise InvalidInstance(f"discount given for undefined pair ({i}, {u})")
            if not 0.0 < d <= 1.0:
                raise InvalidInstance(f"pair discount {d} must lie in (0, 1]")
            pair_discount[index[(i, u)]] = float(d)

        row_ptr = [0]
        row_idx: List[int] = []
        row_prob: List[float] = []
        for key in keys:
            entries = sorted(rows[key].items())
            total = sum(p for _, p in entries)
            if abs(total - 1.0) > ROW_TOL:
                raise InvalidInstance(f"transition row {key} sums to {total}")
            row_idx.extend(j for j, _ in entries)
            row_prob.extend(p / total for _, p in entries)
            row_ptr.append(len(row_idx))

        if restart is None:
            weights = (~terminal).astype(float) if not terminal.all() else np.ones(n_states)
            restart_dist = DiscreteDistribution.from_weights(weights)
        else:
            restart_dist = DiscreteDistribution.from_weights(restart)

        mdp = cls(
            n_states=n_states,
            discount=float(discount),
            pair_state=np.array([k[0] for k in keys], dtype=np.int64),
            pair_action=np.array([k[1] for k in keys], dtype=np.int64),
            pair_cost=pair_cost,
            pair_discount=pair_discount,
            row_ptr=np.array(row_ptr, dtype=np.int64),
            row_idx=np.array(row_idx, dtype=np.int64),
            row_prob=np.array(row_prob, dtype=float),
            terminal=terminal,
            restart=restart_dist,
        )
        mdp.validate()
        return mdp

    def validate(self) -> None:
        counts = np.diff(self.state_ptr)
        if np.any(counts == 0):
            raise InvalidInstance(f"state {int(np.flatnonzero(counts == 0)[0])} has no feasible action")
        for i in np.flatnonzero(self.terminal):
            if not any(
                self.pair_cost[k] == 0.0 and self.row_idx[self.row_ptr[k]:self.row_ptr[k + 1]].tolist() == [i]
                for k in range(self.state_ptr[i], self.state_ptr[i + 1])
            ):
                raise InvalidInstance(f"terminal state {i} lacks a zero-cost self-loop")

    @property
    def n_pairs(self) -> int:
        return int(self.pair_state.size)

    def actions(self, state: int) -> np.ndarray:
        """Feasible action ids U(state), ascending"""
        return self.pair_action[self.state_ptr[state]:self.state_ptr[state + 1]]

    def pair_index(self, state: int, action: int) -> int:
        lo, hi = self.state_ptr[state], self.state_ptr[state + 1]
        k = lo + int(np.searchsorted(self.pair_action[lo:hi], action))
        if k >= hi or self.pair_action[k] != action:
            raise InfeasibleAction(state, action)
        return k

    def successors(self, state: int, action: int) -> Tuple[np.ndarray, np.ndarray]:
        """Successor states and their probabilities for one pair"""
        k = self.pair_index(state, action)
        lo, hi = self.row_ptr[k], self.row_ptr[k + 1]
        return self.row_idx[lo:hi], self.row_prob[lo:hi]

    def transition(self, state: int, action: int) -> DiscreteDistribution:
        idx, prob = self.successors(state, action)
        p = np.zeros(self.n_states)
        p[idx] = prob
        return DiscreteDistribution(p)

    def cost(self, state: int, action: int) -> float:
        return float(self.pair_cost[self.pair_index(state, action)])

    def pair_discount_of(self, state: int, action: int) -> float:
        return float(self.pair_discount[self.pair_index(state, action)])

    def policy_pairs(self, policy: "StationaryPolicy") -> np.ndarray:
        """Pair index of (i, policy(i)) for every state"""
        actions = policy.actions
        if actions.shape != (self.n_states,):
            raise InvalidInstance(f"policy covers {actions.size} states, MDP has {self.n_states}")
        width = int(max(self.pair_action.max(), actions.max())) + 1
        pair_key = self.pair_state * width + self.pair_action
        wanted = np.arange(self.n_states) * width + actions
        k = np.searchsorted(pair_key, wanted)
        k_clipped = np.minimum(k, self.n_pairs - 1)
        bad = (actions < 0) | (pair_key[k_clipped] != wanted)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise InfeasibleAction(i, int(actions[i]))
        return k


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Deterministic Markov policy, one action id per state"""

    actions: np.ndarray

    def __post_init__(self):
        a = np.array(self.actions, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "actions", a)

    def action_of(self, state: int) -> int:
        return int(self.actions[state])

    @classmethod
    def from_mapping(cls, n_states: int, mapping: Mapping[int, int]) -> "StationaryPolicy":
        return cls(np.array([mapping[i] for i in range(n_states)]))

    @classmethod
    def first_actions(cls, mdp: FiniteMdp) -> "StationaryPolicy":
        """Lowest feasible action id everywhere"""
        return cls(mdp.pair_action[mdp.state_ptr[:-1]])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, StationaryPolicy) and np.array_equal(self.actions, other.actions)

    def __hash__(self) -> int:
        return hash(self.actions.tobytes())


@dataclass(frozen=True)
class StepRecord:
    state: int
    action: int
    cost: float
    discount: float
    successors: Tuple[int, ...]
    next_state: int


@dataclass
class Episode:
    start_state: int
    steps: List[StepRecord] = field(default_factory=list)
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.steps)

    def states(self) -> List[int]:
        return [s.state for s in self.steps]


def induced_chain(mdp: FiniteMdp, policy: StationaryPolicy) -> sp.csr_matrix:
    """Transition matrix of the chain under a stationary policy"""
    pairs = mdp.policy_pairs(policy)
    pos, owner = gather_positions(mdp.row_ptr, pairs)
    return sp.csr_matrix(
        (mdp.row_prob[pos], (owner, mdp.row_idx[pos])), shape=(mdp.n_states, mdp.n_states)
    )


def restarted_chain(chain: sp.spmatrix, terminal_states: Iterable[int],
                    restart: DiscreteDistribution) -> sp.csr_matrix:
    """Replace the rows of terminal states by the restart distribution"""
    chain = sp.csr_matrix(chain)
    n = chain.shape[0]
    terminal = np.zeros(n, dtype=bool)
    terminal[list(terminal_states)] = True
    if not terminal.any():
        return chain
    coo = chain.tocoo()
    keep = ~terminal[coo.row]
    support = restart.support()
    term_rows = np.flatnonzero(terminal)
    rows = np.concatenate([coo.row[keep], np.repeat(term_rows, support.size)])
    cols = np.concatenate([coo.col[keep], np.tile(support, term_rows.size)])
    data = np.concatenate([coo.data[keep], np.tile(restart.probabilities[support], term_rows.size)])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def recurrent_class_count(chain: sp.spmatrix) -> int:
    """Number of closed strongly connected classes"""
    coo = sp.coo_matrix(chain)
    positive = coo.data > 0
    graph = sp.csr_matrix((np.ones(positive.sum()), (coo.row[positive], coo.col[positive])),
                          shape=chain.shape)
    n_classes, labels = connected_components(graph, directed=True, connection="strong")
    src, dst = labels[coo.row[positive]], labels[coo.col[positive]]
    leaking = np.unique(src[src != dst])
    return int(n_classes - leaking.size)


def stationary_distribution(chain: sp.spmatrix) -> DiscreteDistribution:
    """Stationary distribution q = qP of a unichain"""
    chain = sp.csr_matrix(chain)
    classes = recurrent_class_count(chain)
    if classes != 1:
        raise NotUnichain(classes)
    n = chain.shape[0]
    if n <= DIRECT_SOLVE_LIMIT:
        system = chain.T.toarray() - np.eye(n)
        system[-1, :] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        q = scipy.linalg.solve(system, rhs)
    else:
        q = _power_iteration(chain)
    q = np.clip(q, 0.0, None)
    q = q / q.sum()
    residual = float(np.abs(chain.T @ q - q).max())
    logger.debug(f"Stationary distribution of {n} states, residual {residual:.2e}")
    if not residual <= STATIONARY_TOL:
        raise NumericalBreakdown(f"stationary residual {residual:.3e} exceeds {STATIONARY_TOL:.0e}")
    return DiscreteDistribution(q)


def _power_iteration(chain: sp.csr_matrix, max_iter: int = 1_000_000) -> np.ndarray:
    n = chain.shape[0]
    transposed = chain.T.tocsr()
    q = np.full(n, 1.0 / n)
    for iteration in range(max_iter):
        moved = transposed @ q
        if np.abs(moved - q).max() <= STATIONARY_TOL:
            return q
        # lazy chain 0.5(I + P) has the same stationary vector and no period
        q = 0.5 * (q + moved)
    raise NoContraction(max_iter, float(np.abs(transposed @ q - q).max()))


def sample_successors(mdp: FiniteMdp, state: int, action: int, n: int,
                      rng: RandomStream) -> np.ndarray:
    """n i.i.d. successor states of (state, action)"""
    idx, prob = mdp.successors(state, action)
    return idx[rng.choice(idx.size, size=n, p=prob)]


def simulate_episode(mdp: FiniteMdp, policy: StationaryPolicy, spec: RiskMappingSpec,
                     rng: RandomStream, max_steps: int = 1000,
                     start: Union[int, str] = "restart") -> Episode:
    """Run one episode, drawing N successors per step.

    The next state is picked uniformly among the N draws, so it is
    marginally distributed as the transition row.
    """
    if max_steps < 1:
        raise InvalidInstance(f"max_steps {max_steps} must be >= 1")
    state = _start_state(mdp, rng, start)
    episode = Episode(start_state=state)
    for _ in range(max_steps):
        if mdp.terminal[state]:
            return episode
        action = policy.action_of(state)
        k = mdp.pair_index(state, action)
        draws = sample_successors(mdp, state, action, spec.batch_size, rng)
        chosen = int(draws[rng.integers(draws.size)])
        episode.steps.append(StepRecord(
            state=state, action=action, cost=float(mdp.pair_cost[k]),
            discount=float(mdp.pair_discount[k]),
            successors=tuple(int(s) for s in draws), next_state=chosen,
        ))
        state = chosen
    episode.truncated = not mdp.terminal[state]
    return episode


def _start_state(mdp: FiniteMdp, rng: RandomStream, start: Union[int, str]) -> int:
    if start == "restart":
        support = mdp.restart.support()
        return int(rng.choice(support, p=mdp.restart.probabilities[support]))
    state = int(start)
    if not 0 <= state < mdp.n_states:
        raise InvalidInstance(f"start state {state} outside 0..{mdp.n_states - 1}")
    return state


def restarted_trajectory(mdp: FiniteMdp, policy: StationaryPolicy, spec: RiskMappingSpec,
                         rng: RandomStream, n_steps: int) -> Iterable[StepRecord]:
    """Steps of the restarted process; terminal visits jump to the restart law.

    Terminal visits are yielded with action -1 and no successors.
    """
    state = _start_state(mdp, rng, "restart")
    for _ in range(n_steps):
        if mdp.terminal[state]:
            nxt = _start_state(mdp, rng, "restart")
            yield StepRecord(state=state, action=-1, cost=0.0, discount=0.0,
                             successors=(), next_state=nxt)
        else:
            action = policy.action_of(state)
            k = mdp.pair_index(state, action)
            draws = sample_successors(mdp, state, action, spec.batch_size, rng)
            nxt = int(draws[rng.integers(draws.size)])
            yield StepRecord(state=state, action=action, cost=float(mdp.pair_cost[k]),
                             discount=float(mdp.pair_discount[k]),
                             successors=tuple(int(s) for s in draws), next_state=nxt)
        state = nxt


def visit_frequencies(mdp: FiniteMdp, policy: StationaryPolicy, spec: RiskMappingSpec,
                      rng: RandomStream, n_steps: int) -> np.ndarray:
    """Empirical state-visit distribution of the restarted process"""
    counts = np.zeros(mdp.n_states)
    for step in restarted_trajectory(mdp, policy, spec, rng, n_steps):
        counts[step.state] += 1
    return counts / counts.sum()


def load_mdp(path: str | Path) -> FiniteMdp:
    """Read an MDP JSON file (sparse transition triplets)"""
    data = load_model(path, MdpFile)
    mdp = FiniteMdp.from_triplets(
        n_states=data.n_states,
        transitions=data.transitions,
        costs=data.costs,
        discount=data.discount,
        terminal_states=data.terminal_states,
        restart=data.restart,
        action_discounts=data.action_discounts,
    )
    logger.info(f"Loaded MDP from {path}: {mdp.n_states} states, {mdp.n_pairs} state-action pairs")
    return mdp


EPISODE_COLUMNS = ["episode", "step", "state", "action", "cost", "successors", "next"]


def write_episodes_csv(episodes: Sequence[Episode], path: str | Path) -> Path:
    """One row per step; successors are space separated"""
    path = Path(path)
    records = [
        {
            "episode": e,
            "step": t,
            "state": s.state,
            "action": s.action,
            "cost": s.cost,
            "successors": " ".join(str(j) for j in s.successors),
            "next": s.next_state,
        }
        for e, episode in enumerate(episodes)
        for t, s in enumerate(episode.steps)
    ]
    frame = pd.DataFrame.from_records(records, columns=EPISODE_COLUMNS)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise surface_io_error(path, e) from e
    return path

"""Paint-shop buffer scheduling.

Cars arrive in a fixed colour sequence and pass through a buffer of ``L``
FIFO lanes of width ``W`` before painting.  Each step either stores the next
incoming car in a lane or retrieves the front car of a lane into the paint
line.  The goal is to avoid colour changes on the outgoing sequence.

Action indices: ``0..L-1`` retrieve from lane ``i``; ``L..2L-1`` store into
lane ``i-L``.  Colours are ``1..C``; ``0`` means "empty" / "no colour yet".

Lane layout follows the buffer matrix ``B[i][j]``: cars enter at the left,
occupy a contiguous right-justified block and leave from column ``W``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Env, StepOutcome, stream
from ..masking import MaskFn, conjoin, mask_all_allow, optimal_enforcement_mask, prioritize

MASK_LEVELS = ("none", "inv", "inv+gr", "inv+gr+ft", "all")


@dataclass(frozen=True)
class PaintShopConfig:
    lanes: int = 4
    width: int = 4
    colors: int = 10
    lookahead: int = 5
    sequence_length: int = 100
    invalid_penalty: float = -10.0
    retrieval_bonus: float = 1.0
    step_cap_factor: int = 3

    def __post_init__(self):
        if self.lanes < 1 or self.width < 1:
            raise ValueError("lanes and width must be >= 1")
        if self.colors < 1 or self.lookahead < 1 or self.sequence_length < 1:
            raise ValueError("colors, lookahead and sequence_length must be >= 1")

    @property
    def n_actions(self) -> int:
        return 2 * self.lanes

    @property
    def observation_dim(self) -> int:
        return (self.lanes * self.width + self.lookahead + 1) * (self.colors + 1)


@dataclass
class PaintShopState:
    """Mutable episode state.

    ``lanes[i]`` lists the cars of lane ``i`` front first: ``lanes[i][0]`` sits
    in column ``W`` (next out), ``lanes[i][-1]`` is the most recently stored.
    """

    width: int
    lanes: list[list[int]]
    sequence: list[int]
    position: int = 0
    color: int = 0
    outgoing: list[int] = field(default_factory=list)

    @property
    def n_lanes(self) -> int:
        return len(self.lanes)

    @property
    def next_color(self) -> int:
        """e_{t,1}; 0 once the incoming sequence is exhausted."""
        return self.sequence[self.position] if self.position < len(self.sequence) else 0

    def lookahead(self, k: int) -> list[int]:
        nxt = self.sequence[self.position:self.position + k]
        return nxt + [0] * (k - len(nxt))

    def front(self, i: int) -> int:
        """B_{t,i,W}: colour at the exit of lane ``i`` (0 if empty)."""
        lane = self.lanes[i]
        return lane[0] if lane else 0

    def tail(self, i: int) -> int:
        """Colour of the most recently stored car in lane ``i`` (0 if empty)."""
        lane = self.lanes[i]
        return lane[-1] if lane else 0

    def is_full(self, i: int) -> bool:
        return len(self.lanes[i]) >= self.width

    def buffer(self) -> np.ndarray:
        out = np.zeros((self.n_lanes, self.width), dtype=np.int64)
        for i, lane in enumerate(self.lanes):
            for k, c in enumerate(lane):
                out[i, self.width - 1 - k] = c
        return out

    @property
    def in_buffer(self) -> int:
        return sum(len(lane) for lane in self.lanes)

    @property
    def retrieved(self) -> int:
        return len(self.outgoing)

    @property
    def finished(self) -> bool:
        return self.retrieved == len(self.sequence)

    def key(self) -> tuple:
        return (tuple(tuple(lane) for lane in self.lanes), self.position, self.color)

    def copy(self) -> "PaintShopState":
        return PaintShopState(
            self.width, [list(lane) for lane in self.lanes], self.sequence,
            self.position, self.color, list(self.outgoing),
        )


def ps_generate_instance(seed: int, config: PaintShopConfig) -> list[int]:
    """I.i.d. uniform colours ``1..C`` of length ``sequence_length``."""
    rng = stream(seed, 7)
    return [int(c) for c in rng.integers(1, config.colors + 1, size=config.sequence_length)]


def read_instance(path) -> list[int]:
    with open(path) as fh:
        return [int(line) for line in fh if line.strip()]


def write_instance(path, sequence) -> None:
    with open(path, "w") as fh:
        fh.writelines(f"{c}\n" for c in sequence)


def initial_state(sequence, config: PaintShopConfig) -> PaintShopState:
    return PaintShopState(config.width, [[] for _ in range(config.lanes)], list(sequence))


# --- transition ---------------------------------------------------------

def is_valid(state: PaintShopState, action: int) -> bool:
    L = state.n_lanes
    if action < L:
        return bool(state.lanes[action])
    return not state.is_full(action - L) and state.next_color != 0


def apply_action(state: PaintShopState, action: int, config: PaintShopConfig) -> tuple[float, dict]:
    """Apply ``action`` in place; returns ``(reward, info)``."""
    L = state.n_lanes
    info = {"invalid": False, "color_change": False, "retrieved_color": 0}
    if not is_valid(state, action):
        info["invalid"] = True
        return config.invalid_penalty, info
    if action < L:
        car = state.lanes[action].pop(0)
        reward = config.retrieval_bonus if car == state.color else 0.0
        info["color_change"] = state.color != 0 and car != state.color
        info["retrieved_color"] = car
        state.color = car
        state.outgoing.append(car)
        return reward, info
    state.lanes[action - L].append(state.sequence[state.position])
    state.position += 1
    return 0.0, info


def ps_encode(state: PaintShopState, config: PaintShopConfig) -> np.ndarray:
    values = np.concatenate([
        state.buffer().ravel(),
        state.lookahead(config.lookahead),
        [state.color],
    ]).astype(np.int64)
    return _eye(config.colors + 1)[values].ravel()


_EYES: dict[int, np.ndarray] = {}


def _eye(n: int) -> np.ndarray:
    if n not in _EYES:
        _EYES[n] = np.eye(n)
    return _EYES[n]


# --- masks ----------------------------------------------------------------

def ps_mask_inv(state: PaintShopState) -> np.ndarray:
    L = state.n_lanes
    out = np.zeros(2 * L, dtype=bool)
    incoming = state.next_color != 0
    for i in range(L):
        out[i] = bool(state.lanes[i])
        out[L + i] = incoming and not state.is_full(i)
    return out


def _gr_targets(state: PaintShopState) -> np.ndarray:
    L = state.n_lanes
    out = np.zeros(2 * L, dtype=bool)
    if state.color == 0:
        return out
    for i in range(L):
        out[i] = state.front(i) == state.color
    return out


def _ft_targets(state: PaintShopState) -> np.ndarray:
    L = state.n_lanes
    out = np.zeros(2 * L, dtype=bool)
    if state.color == 0 or state.next_color != state.color:
        return out
    for i in range(L):
        out[L + i] = not state.lanes[i]
    return out


def _gs_targets(state: PaintShopState) -> np.ndarray:
    L = state.n_lanes
    out = np.zeros(2 * L, dtype=bool)
    e1 = state.next_color
    if e1 == 0:
        return out
    for i in range(L):
        lane = state.lanes[i]
        out[L + i] = bool(lane) and len(lane) < state.width and lane[-1] == e1
    return out


def _enforce(targets) -> np.ndarray:
    # targets non-empty => enforce them, else allow everything
    return targets if targets.any() else np.ones_like(targets)


def ps_mask_gr(state: PaintShopState) -> np.ndarray:
    """Greedy retrieval: only retrieve lanes whose front matches the paint colour."""
    return _enforce(_gr_targets(state))


def ps_mask_ft(state: PaintShopState) -> np.ndarray:
    """Fast-track: store an incoming car of the paint colour into an empty lane."""
    return _enforce(_ft_targets(state))


def ps_mask_gs(state: PaintShopState) -> np.ndarray:
    """Greedy storage: store behind a car of the same colour when possible."""
    return _enforce(_gs_targets(state))


def _as_mask(targets_fn, name) -> MaskFn:
    return optimal_enforcement_mask(
        lambda s: bool(targets_fn(s).any()), lambda s, n: targets_fn(s), name
    )


MASK_INV = MaskFn(lambda s, n: ps_mask_inv(s), "inv")
MASK_GR = _as_mask(_gr_targets, "gr")
MASK_FT = _as_mask(_ft_targets, "ft")
MASK_GS = _as_mask(_gs_targets, "gs")


def ps_combined_mask(level: str) -> MaskFn:
    if level == "none":
        return mask_all_allow()
    if level == "inv":
        return MASK_INV
    if level == "inv+gr":
        return conjoin(MASK_INV, MASK_GR)
    if level == "inv+gr+ft":
        return conjoin(MASK_INV, prioritize(MASK_GR, MASK_FT))
    if level == "all":
        return conjoin(MASK_INV, prioritize(prioritize(MASK_GR, MASK_FT), MASK_GS))
    raise ValueError(f"unknown paint-shop mask level {level!r}; expected one of {MASK_LEVELS}")


def ps_greedy_heuristic(state: PaintShopState, rng: np.random.Generator) -> int:
    """GR, then FT, then GS (lowest lane first); otherwise a uniform valid action."""
    for targets in (_gr_targets, _ft_targets, _gs_targets):
        hits = np.flatnonzero(targets(state))
        if hits.size:
            return int(hits[0])
    valid = np.flatnonzero(ps_mask_inv(state))
    if valid.size == 0:
        raise ValueError("no valid action in this state")
    return int(valid[rng.integers(valid.size)])


def ps_count_color_changes(outgoing, expected_length: int | None = None) -> int:
    """Retrievals whose colour differs from the previous retrieval's colour."""
    outgoing = list(outgoing)
    if expected_length is not None and len(outgoing) != expected_length:
        raise ValueError(f"incomplete episode: {len(outgoing)} of {expected_length} cars retrieved")
    return sum(1 for a, b in zip(outgoing, outgoing[1:]) if a != b)


class PaintShopEnv(Env):
    """Episodes draw a fresh random sequence unless ``instance`` pins one."""

    def __init__(self, config: PaintShopConfig | None = None, instance=None, max_steps: int | None = None):
        super().__init__()
        self.config = config or PaintShopConfig()
        self.instance = list(instance) if instance is not None else None
        self.action_count = self.config.n_actions
        self.observation_dim = self.config.observation_dim
        self.horizon_limit = max_steps or self.config.step_cap_factor * self.config.sequence_length
        self._state: PaintShopState | None = None
        self.t = 0
        self.color_changes = 0

    @property
    def state(self) -> PaintShopState:
        return self._state

    def validity_mask(self) -> MaskFn:
        return MASK_INV

    def _reset(self, seed: int) -> np.ndarray:
        seq = self.instance if self.instance is not None else ps_generate_instance(seed, self.config)
        self._state = initial_state(seq, self.config)
        self.t = 0
        self.color_changes = 0
        return ps_encode(self._state, self.config)

    def _step(self, action: int) -> StepOutcome:
        reward, info = apply_action(self._state, action, self.config)
        self.t += 1
        self.color_changes += info["color_change"]
        finished = self._state.finished
        truncated = not finished and self.t >= self.horizon_limit
        info["color_changes"] = self.color_changes
        info["retrieved"] = self._state.retrieved
        return StepOutcome(ps_encode(self._state, self.config), reward, finished or truncated, info, truncated)

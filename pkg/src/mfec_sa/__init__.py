"""Model-free episodic control with state aggregation.

Per-action memories of (state key, return) entries, queried by count-weighted
k-nearest-neighbour estimates. A new experience close to a stored one in both
state and value is merged into it instead of being stored separately.
"""

from .agent import AgentConfig, EpisodeTrace, compute_returns, finish_episode, run_episode, select_action
from .embedding import ProjectionMatrix, embed, new_projection
from .envs import GridWorld, NoisyGridWorld, Scroller, make_env
from .errors import ConfigError, FormatError, InputError, MFECError, OutputError, StateError
from .store import UNLIMITED, ActionBuffer, Branch, Entry, QECStore, WritebackOutcome, restore, snapshot, total_size

__version__ = "0.1.0"

__all__ = [
    "ActionBuffer", "AgentConfig", "Branch", "ConfigError", "Entry", "EpisodeTrace", "FormatError",
    "GridWorld", "InputError", "MFECError", "NoisyGridWorld", "OutputError", "ProjectionMatrix",
    "QECStore", "Scroller", "StateError", "UNLIMITED", "WritebackOutcome", "compute_returns",
    "embed", "finish_episode", "make_env", "new_projection", "restore", "run_episode",
    "select_action", "snapshot", "total_size",
]

"""Safe RL with trajectory-level natural-language constraints.

The package learns, from (trajectory, constraint text) pairs, whether a
constraint is violated, decomposes the episodic cost over per-step actions,
and feeds the learned cost signal into a Lagrangian PPO trainer.
"""

__version__ = "0.1.0"

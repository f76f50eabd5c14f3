"""Hand-enumerated (event stream, spec, expected violation step) fixtures.

Each expected step was worked out by hand from the family semantics:
quantitative violates on the (limit+1)-th touch, sequential on touching the
second entity at any step after the first has ever been touched, mathematical
when the running HP total first reaches zero or below.  Steps are 1-based;
None means the stream never violates.
"""

from textcost.constraints import MathematicalSpec, QuantitativeSpec, SequentialSpec

L, W, G = ["lava"], ["water"], ["grass"]
F = []  # floor step, no touch event

ORACLE_FIXTURES = [
    # --- quantitative ---------------------------------------------------
    # k = 0: the very first touch violates.
    (QuantitativeSpec("lava", 0), [L], 1),
    (QuantitativeSpec("lava", 0), [F, F, L], 3),
    (QuantitativeSpec("water", 0), [L, G, W], 3),
    (QuantitativeSpec("grass", 0), [F, F, F], None),
    # k = 1: second touch violates.
    (QuantitativeSpec("lava", 1), [L, F, L], 3),
    (QuantitativeSpec("lava", 1), [L, F, F], None),
    (QuantitativeSpec("water", 1), [W, W], 2),
    # k = 2: third touch violates (other entities never count).
    (QuantitativeSpec("lava", 2), [L, F, L, L], 4),
    (QuantitativeSpec("lava", 2), [L, L, F, F, L, L], 5),
    (QuantitativeSpec("lava", 2), [W, G, W, G, W, G], None),
    (QuantitativeSpec("grass", 2), [G, G], None),
    # larger limits
    (QuantitativeSpec("water", 5), [W] * 6, 6),
    (QuantitativeSpec("water", 5), [W] * 5 + [F] * 4, None),
    (QuantitativeSpec("lava", 8), [L] * 8 + [F, L], 10),
    # --- sequential -----------------------------------------------------
    # B before A does not violate; B after A does.
    (SequentialSpec("lava", "grass"), [G, L, F, G], 4),
    (SequentialSpec("lava", "grass"), [G, G, G], None),
    (SequentialSpec("lava", "grass"), [L, G], 2),
    # A touched, B never touched: safe forever.
    (SequentialSpec("lava", "grass"), [L, L, F, L], None),
    (SequentialSpec("water", "lava"), [L, W, F, F, L], 5),
    (SequentialSpec("water", "lava"), [F, W, W], None),
    # same step: A's first touch cannot itself be "after A" (distinct entities
    # means the step carries at most one of the two).
    (SequentialSpec("grass", "water"), [G, W], 2),
    (SequentialSpec("grass", "water"), [W, F, G, F, W], 5),
    # --- mathematical ---------------------------------------------------
    (MathematicalSpec(5, (("lava", -3), ("grass", -2))), [L, G], 2),
    (MathematicalSpec(5, (("lava", -3), ("grass", -2))), [G, G, F], None),
    (MathematicalSpec(5, (("lava", -3), ("grass", -2))), [G, G, G], 3),
    (MathematicalSpec(3, (("lava", -3),)), [F, L], 2),
    (MathematicalSpec(4, (("lava", -3),)), [L, L], 2),
    (MathematicalSpec(6, (("lava", -2), ("water", -1))), [W, L, W, L], 4),
    # healing keeps the budget alive
    (
        MathematicalSpec(3, (("lava", -2), ("grass", 1))),
        [L, G, G, L, G, L],
        6,
    ),
    # healing-dominant: HP never reaches zero
    (
        MathematicalSpec(3, (("lava", -1), ("grass", 2))),
        [L, G, L, G, L, G, L, G],
        None,
    ),
    (MathematicalSpec(2, (("water", -1), ("grass", 3))), [W, G, W, W, W, W], 6),
    # entities outside the delta map are ignored
    (MathematicalSpec(2, (("lava", -1),)), [W, G, W, L, L], 5),
    (MathematicalSpec(20, (("lava", -3), ("grass", -2), ("water", 1))),
     [L, L, L, G, G, L, W, L, L], 9),
]

assert len(ORACLE_FIXTURES) >= 30

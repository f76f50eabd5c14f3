"""Trajectory-level constraint specs, the ground-truth incremental checker,
and the natural-language template renderer.

Three families over the hazard alphabet {lava, water, grass}:

* quantitative -- don't touch an entity more than ``limit`` times
  (``limit = 0`` reads "don't touch it at all"; the (limit+1)-th touch violates)
* sequential   -- after the first entity has ever been touched, touching the
  second violates
* mathematical -- a hit-point budget with per-entity deltas; reaching
  HP <= 0 violates
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

HAZARD_ENTITIES = ("grass", "lava", "water")

FAMILIES = ("quantitative", "sequential", "mathematical")


# ---------------------------------------------------------------------------
# Specs


@dataclass(frozen=True)
class QuantitativeSpec:
    entity: str
    limit: int

    family = "quantitative"

    def __post_init__(self):
        if self.entity not in HAZARD_ENTITIES:
            raise ValueError(f"unknown entity {self.entity!r}")
        if self.limit < 0:
            raise ValueError("limit must be >= 0")


@dataclass(frozen=True)
class SequentialSpec:
    first: str
    then: str

    family = "sequential"

    def __post_init__(self):
        if self.first not in HAZARD_ENTITIES or self.then not in HAZARD_ENTITIES:
            raise ValueError("unknown entity")
        if self.first == self.then:
            raise ValueError("sequential entities must differ")


@dataclass(frozen=True)
class MathematicalSpec:
    hp: int
    deltas: tuple  # sorted tuple of (entity, delta) pairs

    family = "mathematical"

    def __post_init__(self):
        if self.hp <= 0:
            raise ValueError("initial hp must be > 0")
        object.__setattr__(self, "deltas", tuple(sorted(self.deltas)))
        if not any(d < 0 for _, d in self.deltas):
            raise ValueError("at least one delta must be negative")
        for e, _ in self.deltas:
            if e not in HAZARD_ENTITIES:
                raise ValueError(f"unknown entity {e!r}")

    @property
    def delta_map(self) -> dict:
        return dict(self.deltas)


ConstraintSpec = Union[QuantitativeSpec, SequentialSpec, MathematicalSpec]


def spec_key(spec: ConstraintSpec) -> str:
    """Stable identifier for a spec's semantics."""
    if isinstance(spec, QuantitativeSpec):
        return f"quant:{spec.entity}:{spec.limit}"
    if isinstance(spec, SequentialSpec):
        return f"seq:{spec.first}:{spec.then}"
    parts = ",".join(f"{e}{d:+d}" for e, d in spec.deltas)
    return f"math:{spec.hp}:{parts}"


def spec_to_dict(spec: ConstraintSpec) -> dict:
    if isinstance(spec, QuantitativeSpec):
        return {"family": "quantitative", "entity": spec.entity, "limit": spec.limit}
    if isinstance(spec, SequentialSpec):
        return {"family": "sequential", "first": spec.first, "then": spec.then}
    return {
        "family": "mathematical",
        "hp": spec.hp,
        "deltas": {e: d for e, d in spec.deltas},
    }


def spec_from_dict(d: dict) -> ConstraintSpec:
    family = d["family"]
    if family == "quantitative":
        return QuantitativeSpec(d["entity"], int(d["limit"]))
    if family == "sequential":
        return SequentialSpec(d["first"], d["then"])
    if family == "mathematical":
        return MathematicalSpec(int(d["hp"]), tuple((e, int(v)) for e, v in d["deltas"].items()))
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# Incremental checker


@dataclass(frozen=True)
class QuantState:
    touches: int = 0
    violated: bool = False


@dataclass(frozen=True)
class SeqState:
    seen_first: bool = False
    violated: bool = False


@dataclass(frozen=True)
class MathState:
    hp: int = 0
    violated: bool = False


CheckerState = Union[QuantState, SeqState, MathState]


def init_state(spec: ConstraintSpec) -> CheckerState:
    if isinstance(spec, QuantitativeSpec):
        return QuantState()
    if isinstance(spec, SequentialSpec):
        return SeqState()
    return MathState(hp=spec.hp)


def check_step(
    spec: ConstraintSpec, state: CheckerState, events: list
) -> tuple[CheckerState, bool]:
    """Advance the checker by one step's touch events.  Pure.

    Unknown event names are ignored.  The violated flag is sticky.
    """
    if isinstance(spec, QuantitativeSpec):
        touches = state.touches + sum(1 for e in events if e == spec.entity)
        violated = state.violated or touches > spec.limit
        return QuantState(touches, violated), violated
    if isinstance(spec, SequentialSpec):
        violated = state.violated or (state.seen_first and spec.then in events)
        seen_first = state.seen_first or spec.first in events
        return SeqState(seen_first, violated), violated
    hp = state.hp
    dmap = spec.delta_map
    for e in events:
        hp += dmap.get(e, 0)
    violated = state.violated or hp <= 0
    return MathState(hp, violated), violated


def check_trajectory(spec: ConstraintSpec, event_seq: list) -> Optional[int]:
    """First 1-based step index at which the constraint is violated, or None."""
    state = init_state(spec)
    for t, events in enumerate(event_seq, start=1):
        state, violated = check_step(spec, state, events)
        if violated:
            return t
    return None


# ---------------------------------------------------------------------------
# Spec sampling


@dataclass
class SpecRanges:
    max_quant_limit: int = 10
    max_hp: int = 30
    min_hp: int = 3
    max_damage: int = 3
    heal_amount: int = 1
    heal_prob: float = 0.5
    entities: tuple = HAZARD_ENTITIES


def sample_spec(
    family: str, rng: np.random.Generator, ranges: SpecRanges | None = None
) -> ConstraintSpec:
    ranges = ranges or SpecRanges()
    ents = list(ranges.entities)
    if family == "quantitative":
        entity = ents[int(rng.integers(len(ents)))]
        limit = int(rng.integers(0, ranges.max_quant_limit + 1))
        return QuantitativeSpec(entity, limit)
    if family == "sequential":
        i, j = rng.choice(len(ents), size=2, replace=False)
        return SequentialSpec(ents[int(i)], ents[int(j)])
    if family == "mathematical":
        idx = rng.choice(len(ents), size=2, replace=False)
        deltas = [
            (ents[int(i)], -int(rng.integers(1, ranges.max_damage + 1))) for i in idx
        ]
        rest = [e for e in ents if e not in {d[0] for d in deltas}]
        if rest and rng.random() < ranges.heal_prob:
            deltas.append((rest[0], ranges.heal_amount))
        hp = int(rng.integers(ranges.min_hp, ranges.max_hp + 1))
        return MathematicalSpec(hp, tuple(deltas))
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# Number rendering

_NUMBER_WORDS = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
    "sixteen", "seventeen", "eighteen", "nineteen", "twenty", "twenty-one",
    "twenty-two", "twenty-three", "twenty-four", "twenty-five", "twenty-six",
    "twenty-seven", "twenty-eight", "twenty-nine", "thirty",
]
_WORD_TO_NUMBER = {w: i for i, w in enumerate(_NUMBER_WORDS)}


def number_word(n: int) -> str:
    if 0 <= n < len(_NUMBER_WORDS):
        return _NUMBER_WORDS[n]
    return str(n)


# ---------------------------------------------------------------------------
# Templates

_NUM = r"(\d+|" + "|".join(_NUMBER_WORDS) + r")"
_ENT = r"(grass|lava|water)"


def _parse_num(s: str) -> int:
    return _WORD_TO_NUMBER[s] if s in _WORD_TO_NUMBER else int(s)


# Quantitative, limit >= 1: template ids 0..3.
_QUANT_TEMPLATES = [
    ("Do not cross {e} more than {kw} times.",
     rf"Do not cross {_ENT} more than {_NUM} times\."),
    ("Never touch {e} more than {k} times.",
     rf"Never touch {_ENT} more than {_NUM} times\."),
    ("You may step on the {e} at most {kw} times, no more!",
     rf"You may step on the {_ENT} at most {_NUM} times, no more!"),
    ("The {e} tolerates only {k} touches before it becomes deadly.",
     rf"The {_ENT} tolerates only {_NUM} touches before it becomes deadly\."),
]

# Quantitative, limit == 0: template ids 4..6.
_QUANT_ZERO_TEMPLATES = [
    ("The {e} is very dangerous. Please don't touch it.",
     rf"The {_ENT} is very dangerous\. Please don't touch it\."),
    ("Don't touch the {e}!",
     rf"Don't touch the {_ENT}!"),
    ("Never step on {e}.",
     rf"Never step on {_ENT}\."),
]

# Sequential: template ids 0..2.
_SEQ_TEMPLATES = [
    ("After you touch {a}, don't step on {b}!",
     rf"After you touch {_ENT}, don't step on {_ENT}!"),
    ("Once you've walked past the {a}, make sure you don't set foot on {b}.",
     rf"Once you've walked past the {_ENT}, make sure you don't set foot on {_ENT}\."),
    ("After stepping through the {a}, your shoes can't touch the {b}.",
     rf"After stepping through the {_ENT}, your shoes can't touch the {_ENT}\."),
]

# Mathematical: template ids 0..2; damage/heal clauses are composed per entity.
_ENT_G = r"(?P<e>grass|lava|water)"
_NUM_G = r"(?P<n>\d+|" + "|".join(_NUMBER_WORDS) + r")"

_MATH_DMG = [
    ("stepping on {e} will cost you {aw} HP",
     rf"stepping on {_ENT_G} will cost you {_NUM_G} HP"),
    ("you will lose {a} HP every time you touch the {e}",
     rf"you will lose {_NUM_G} HP every time you touch the {_ENT_G}"),
    ("each touch of {e} drains {aw} HP",
     rf"each touch of {_ENT_G} drains {_NUM_G} HP"),
]
_MATH_HEAL = [
    ("{e} will help you regain {a} HP",
     rf"{_ENT_G} will help you regain {_NUM_G} HP"),
    ("touching the {e} restores {aw} HP",
     rf"touching the {_ENT_G} restores {_NUM_G} HP"),
    ("{e} heals you by {a} HP",
     rf"{_ENT_G} heals you by {_NUM_G} HP"),
]
_MATH_FRAMES = [
    ("You only have {hp} HP, {clauses}, please don't die!",
     rf"You only have {_NUM} HP, (.*), please don't die!"),
    ("You start with {hpw} HP. Be careful: {clauses}. Don't let your HP reach zero!",
     rf"You start with {_NUM} HP\. Be careful: (.*)\. Don't let your HP reach zero!"),
    ("Your HP is {hp} and {clauses}. Stay alive!",
     rf"Your HP is {_NUM} and (.*)\. Stay alive!"),
]


@dataclass(frozen=True)
class ConstraintText:
    text: str
    spec: ConstraintSpec
    template_id: int

    @property
    def spec_id(self) -> str:
        return spec_key(self.spec)


def n_templates(spec: ConstraintSpec) -> int:
    if isinstance(spec, QuantitativeSpec):
        return len(_QUANT_ZERO_TEMPLATES) if spec.limit == 0 else len(_QUANT_TEMPLATES)
    if isinstance(spec, SequentialSpec):
        return len(_SEQ_TEMPLATES)
    return len(_MATH_FRAMES)


def render_with_template(spec: ConstraintSpec, template_id: int) -> ConstraintText:
    if isinstance(spec, QuantitativeSpec):
        if spec.limit == 0:
            tpl = _QUANT_ZERO_TEMPLATES[template_id][0]
            text = tpl.format(e=spec.entity)
            return ConstraintText(text, spec, template_id + len(_QUANT_TEMPLATES))
        tpl = _QUANT_TEMPLATES[template_id][0]
        text = tpl.format(e=spec.entity, k=spec.limit, kw=number_word(spec.limit))
        return ConstraintText(text, spec, template_id)
    if isinstance(spec, SequentialSpec):
        tpl = _SEQ_TEMPLATES[template_id][0]
        return ConstraintText(tpl.format(a=spec.first, b=spec.then), spec, template_id)
    frame = _MATH_FRAMES[template_id][0]
    clauses = []
    for e, d in spec.deltas:
        if d < 0:
            sub = _MATH_DMG[template_id][0]
            clauses.append(sub.format(e=e, a=-d, aw=number_word(-d)))
        else:
            sub = _MATH_HEAL[template_id][0]
            clauses.append(sub.format(e=e, a=d, aw=number_word(d)))
    text = frame.format(
        hp=spec.hp, hpw=number_word(spec.hp), clauses=" and ".join(clauses)
    )
    return ConstraintText(text, spec, template_id)


def render_text(spec: ConstraintSpec, rng: np.random.Generator) -> ConstraintText:
    tid = int(rng.integers(n_templates(spec)))
    return render_with_template(spec, tid)


# ---------------------------------------------------------------------------
# Round-trip parser.  Only understands the renderer's own templates; used by
# tests and the corpus sanity pass, never for free-form input.


class ParseError(ValueError):
    pass


def parse_text(text: str) -> tuple[ConstraintSpec, int]:
    for tid, (_, pattern) in enumerate(_QUANT_TEMPLATES):
        m = re.fullmatch(pattern, text)
        if m:
            return QuantitativeSpec(m.group(1), _parse_num(m.group(2))), tid
    for tid, (_, pattern) in enumerate(_QUANT_ZERO_TEMPLATES):
        m = re.fullmatch(pattern, text)
        if m:
            return QuantitativeSpec(m.group(1), 0), tid + len(_QUANT_TEMPLATES)
    for tid, (_, pattern) in enumerate(_SEQ_TEMPLATES):
        m = re.fullmatch(pattern, text)
        if m:
            return SequentialSpec(m.group(1), m.group(2)), tid
    for tid, (_, frame_pattern) in enumerate(_MATH_FRAMES):
        m = re.fullmatch(frame_pattern, text)
        if not m:
            continue
        hp = _parse_num(m.group(1))
        deltas = []
        for clause in m.group(2).split(" and "):
            dm = re.fullmatch(_MATH_DMG[tid][1], clause)
            if dm:
                deltas.append((dm.group("e"), -_parse_num(dm.group("n"))))
                continue
            hm = re.fullmatch(_MATH_HEAL[tid][1], clause)
            if hm:
                deltas.append((hm.group("e"), _parse_num(hm.group("n"))))
                continue
            raise ParseError(f"unparseable clause {clause!r} in {text!r}")
        return MathematicalSpec(hp, tuple(deltas)), tid
    raise ParseError(f"no template matches {text!r}")


# ---------------------------------------------------------------------------
# Constraint pool


def constraint_pool(ranges: SpecRanges | None = None) -> list[tuple[ConstraintSpec, int]]:
    """Enumerate every distinct (spec, template) combination in the ranges.

    Mathematical specs are enumerated over a small grid of damage values to
    keep the pool finite.
    """
    ranges = ranges or SpecRanges()
    ents = list(ranges.entities)
    pool: list[tuple[ConstraintSpec, int]] = []
    for e in ents:
        for k in range(ranges.max_quant_limit + 1):
            spec = QuantitativeSpec(e, k)
            for tid in range(n_templates(spec)):
                pool.append((spec, tid))
    for a in ents:
        for b in ents:
            if a == b:
                continue
            spec = SequentialSpec(a, b)
            for tid in range(n_templates(spec)):
                pool.append((spec, tid))
    for i, a in enumerate(ents):
        for b in ents[i + 1:]:
            rest = [e for e in ents if e not in (a, b)]
            for da in range(1, ranges.max_damage + 1):
                for db in range(1, ranges.max_damage + 1):
                    for heal in (False, True):
                        deltas = [(a, -da), (b, -db)]
                        if heal and rest:
                            deltas.append((rest[0], ranges.heal_amount))
                        for hp in (ranges.min_hp, 10, 20, ranges.max_hp):
                            spec = MathematicalSpec(hp, tuple(deltas))
                            for tid in range(n_templates(spec)):
                                pool.append((spec, tid))
    return pool

"""Seeded random world generators for property tests.

`random_world` produces rich worlds (asks, constraints, forward rules,
existential search, specialization, remote/frameset declarations) that are
valid by construction; `random_rule_world` produces the restricted worlds the
engine/oracle comparison runs on (backward rules and defaults only).
"""

import random

from framekit import FrameDef, SlotDef, WorldBuild
from framekit.model import (
    Action,
    Binary,
    Exists,
    Lit,
    ListExpr,
    Rule,
    SlotRef,
    Specialize,
    Unary,
    iter_slot_refs,
)
from framekit.values import Kind, make_value

_WORDS = ["size", "big", "speed", "alert", "legs", "wheels", "kind", "level",
          "rank", "label", "flag", "score"]


def _int_expr(rng, slots, depth=0):
    roll = rng.random()
    if depth >= 2 or roll < 0.4 or not slots:
        if roll < 0.2 and slots:
            return SlotRef(rng.choice(slots))
        # negative numbers appear as explicit negation: that is the shape the
        # language parser produces, so printing round-trips structurally
        return Lit(make_value(Kind.INTEGER, rng.randint(0, 20)))
    if roll < 0.55 and slots:
        return SlotRef(rng.choice(slots))
    if roll < 0.65:
        return Unary("neg", _int_expr(rng, slots, depth + 1))
    op = rng.choice(["+", "-", "*", "/"])
    return Binary(op, _int_expr(rng, slots, depth + 1), _int_expr(rng, slots, depth + 1))


def _bool_expr(rng, int_slots, bool_slots, depth=0):
    roll = rng.random()
    if depth >= 2 or roll < 0.3:
        if bool_slots and roll < 0.15:
            return SlotRef(rng.choice(bool_slots))
        return Binary(rng.choice(["=", "<>", "<", "<=", ">", ">="]),
                      _int_expr(rng, int_slots, depth + 1),
                      _int_expr(rng, int_slots, depth + 1))
    if roll < 0.45:
        return Unary("not", _bool_expr(rng, int_slots, bool_slots, depth + 1))
    if roll < 0.55:
        items = tuple(Lit(make_value(Kind.INTEGER, rng.randint(0, 5)))
                      for _ in range(rng.randint(1, 3)))
        return Binary("in", _int_expr(rng, int_slots, depth + 1), ListExpr(items))
    op = rng.choice(["and", "or"])
    return Binary(op, _bool_expr(rng, int_slots, bool_slots, depth + 1),
                  _bool_expr(rng, int_slots, bool_slots, depth + 1))


def _value_expr(rng, kind, int_slots, bool_slots, frames):
    if kind is Kind.INTEGER:
        return _int_expr(rng, int_slots)
    if kind is Kind.BOOLEAN:
        if rng.random() < 0.3:
            return Lit(make_value(Kind.BOOLEAN, rng.random() < 0.5))
        return _bool_expr(rng, int_slots, bool_slots)
    if kind is Kind.STRING:
        return Lit(make_value(Kind.STRING, rng.choice(["red", "green", "blue", ""])))
    if kind is Kind.REFERENCE and frames:
        root = rng.choice(frames)
        if rng.random() < 0.5:
            return Specialize(root)
        return Exists("c", root, Binary("=", SlotRef(rng.choice(_WORDS), frame="c"),
                                        Lit(make_value(Kind.INTEGER, rng.randint(0, 4)))))
    return ListExpr(tuple(Lit(make_value(Kind.INTEGER, rng.randint(0, 9)))
                          for _ in range(rng.randint(0, 3))))


def _default_for(rng, kind, elem):
    if kind is Kind.INTEGER:
        return make_value(Kind.INTEGER, rng.randint(-9, 9))
    if kind is Kind.BOOLEAN:
        return make_value(Kind.BOOLEAN, rng.random() < 0.5)
    if kind is Kind.STRING:
        return make_value(Kind.STRING, rng.choice(["spam", "eggs", ""]))
    if kind is Kind.LIST:
        return make_value(Kind.LIST, [rng.randint(0, 9) for _ in range(rng.randint(0, 3))], elem)
    return None


def random_world(seed: int) -> WorldBuild:
    rng = random.Random(seed)
    world = WorldBuild()
    if rng.random() < 0.3:
        world.declare_extern(f"fn{rng.randint(0, 9)}", rng.randint(0, 3))
    frame_count = rng.randint(1, 6)
    names = [f"F{seed % 97}_{i}" for i in range(frame_count)]
    for i, name in enumerate(names):
        if rng.random() < 0.1:
            world.add_frame(FrameDef(name, kind="remote",
                                     url=f"kb://host:{7000 + i}/{name}"))
            continue
        if rng.random() < 0.1 and i > 0:
            world.add_frame(FrameDef(name, kind="frameset", table=f"{name}.csv",
                                     key="id", parent=rng.choice(names[:i])))
            continue
        parent = rng.choice(names[:i]) if i > 0 and rng.random() < 0.6 else None
        if parent is not None and world.frames[parent].kind != "local":
            parent = None
        frame = FrameDef(name, parent=parent)
        slot_kinds = {}
        for _ in range(rng.randint(0, 5)):
            slot_name = rng.choice(_WORDS)
            if slot_name in frame.slots:
                continue
            kind = rng.choice([Kind.INTEGER, Kind.INTEGER, Kind.BOOLEAN, Kind.STRING,
                               Kind.LIST, Kind.REFERENCE])
            elem = Kind.INTEGER if kind is Kind.LIST else None
            slot = SlotDef(slot_name, type=kind, elem=elem)
            if rng.random() < 0.5:
                slot.default = _default_for(rng, kind, elem)
            frame.slots[slot_name] = slot
            slot_kinds[slot_name] = kind
        int_slots = [s for s, k in slot_kinds.items() if k is Kind.INTEGER]
        bool_slots = [s for s, k in slot_kinds.items() if k is Kind.BOOLEAN]
        for slot_name, kind in list(slot_kinds.items()):
            if rng.random() < 0.3 and kind in (Kind.INTEGER, Kind.BOOLEAN):
                expr = (_bool_expr(rng, int_slots, bool_slots) if kind is Kind.BOOLEAN
                        else Binary(rng.choice(["<", "<=", ">", ">="]), SlotRef(slot_name),
                                    Lit(make_value(Kind.INTEGER, rng.randint(0, 5)))))
                # mirror the source language: a constraint attaches to every
                # slot it mentions, and one that mentions none is dropped
                mentioned = []
                for ref in iter_slot_refs(expr):
                    if ref.frame is None and ref.name not in mentioned:
                        mentioned.append(ref.name)
                for target in mentioned:
                    entry = frame.ensure_slot(target)
                    entry.constraints = entry.constraints + (expr,)
        for _ in range(rng.randint(0, 4)):
            if not slot_kinds:
                break
            target = rng.choice(list(slot_kinds))
            value = _value_expr(rng, slot_kinds[target], int_slots, bool_slots,
                                [n for n in names[:i] if world.frames[n].kind == "local"])
            condition = _bool_expr(rng, int_slots, bool_slots) if rng.random() < 0.6 else None
            rule = Rule(target, ((target, value),), condition, "backward")
            frame.slots[target] = frame.slots[target].with_action(Action.backward(rule))
        if slot_kinds and rng.random() < 0.3:
            trigger = rng.choice(list(slot_kinds))
            targets = rng.sample(list(slot_kinds), k=min(len(slot_kinds), rng.randint(1, 2)))
            assignments = tuple(
                (t, _value_expr(rng, slot_kinds[t], int_slots, bool_slots, []))
                for t in targets)
            condition = _bool_expr(rng, int_slots, bool_slots) if rng.random() < 0.5 else None
            rule = Rule(trigger, assignments, condition, "forward")
            frame.slots[trigger] = frame.slots[trigger].with_action(Action.forward(rule))
        if slot_kinds and rng.random() < 0.4:
            asked = rng.choice(list(slot_kinds))
            entry = frame.ensure_slot(asked)
            entry.prompt = f"Enter {asked}"
            frame.slots[asked] = entry.with_action(Action.ask())
        world.add_frame(frame)
    return world


def random_rule_world(seed: int):
    """Restricted generator for oracle comparison: <=4 local frames, <=6
    backward rules total, integer/boolean slots, defaults, no asks."""
    rng = random.Random(seed)
    world = WorldBuild()
    frame_count = rng.randint(1, 4)
    names = [f"G{i}" for i in range(frame_count)]
    slot_pool = ["u", "v", "w", "z"]
    rules_left = 6
    for i, name in enumerate(names):
        parent = rng.choice(names[:i]) if i > 0 and rng.random() < 0.7 else None
        frame = FrameDef(name, parent=parent)
        kinds = {}
        for slot_name in rng.sample(slot_pool, k=rng.randint(1, 3)):
            kind = Kind.INTEGER if rng.random() < 0.7 else Kind.BOOLEAN
            slot = SlotDef(slot_name, type=kind)
            if rng.random() < 0.45:
                slot.default = _default_for(rng, kind, None)
            frame.slots[slot_name] = slot
            kinds[slot_name] = kind
        int_slots = [s for s, k in kinds.items() if k is Kind.INTEGER]
        bool_slots = [s for s, k in kinds.items() if k is Kind.BOOLEAN]
        rule_count = rng.randint(0, min(3, rules_left))
        rules_left -= rule_count
        for _ in range(rule_count):
            target = rng.choice(slot_pool)  # may be undeclared here: inherited or dangling
            kind = kinds.get(target)
            if kind is None:
                kind = Kind.INTEGER if rng.random() < 0.7 else Kind.BOOLEAN
            value = (_int_expr(rng, slot_pool) if kind is Kind.INTEGER
                     else _bool_expr(rng, slot_pool, bool_slots))
            condition = _bool_expr(rng, slot_pool, bool_slots) if rng.random() < 0.6 else None
            rule = Rule(target, ((target, value),), condition, "backward")
            entry = frame.ensure_slot(target)
            frame.slots[target] = entry.with_action(Action.backward(rule))
        world.add_frame(frame)
    goals = []
    for name in names:
        fd = world.frames[name]
        for slot_name in fd.slots:
            goals.append((name, slot_name))
    return world, goals

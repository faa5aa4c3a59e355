"""Planning-domain definitions: predicates, logic states, a small
s-expression STRIPS subset, grounding, and the subtask record.

The file format is a deliberately narrow STRIPS slice: typed parameters,
conjunctive positive preconditions, add/delete effects.  Disjunction,
conditional effects, numeric fluents and derived predicates are rejected
by the grammar.

Grounding augments the declared effects with two structural facts of a
single-gripper tabletop domain that plain STRIPS templates cannot carry:

* a body can only be in one place: achieving ``holding(b)`` clears every
  position atom of ``b`` (ontable/on/inregion) and all ``gripperon`` atoms;
* the gripper is only over one target: achieving ``gripperon(t)`` clears
  ``gripperon(x)`` for every other ``x``.

``clear`` is never stored in effects; the symbolic search re-derives it
from the ``on`` atoms after every step (see :func:`normalize_state`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .world import Body, GripperConfig, Vec3, WorldState, settle

# ---------------------------------------------------------------------------
# predicates and logic states
# ---------------------------------------------------------------------------

# fixed vocabulary: name -> arity
PREDICATES = {
    "handempty": 0,
    "holding": 1,
    "on": 2,
    "ontable": 1,
    "clear": 1,
    "gripperon": 1,
    "inregion": 2,
}


class Predicate(tuple):
    """Ground atom: ("on", "b_G", "b_R").  Plain tuple so sets/sorting work."""

    __slots__ = ()

    def __new__(cls, name, *args):
        if name not in PREDICATES:
            raise ValueError(f"unknown predicate: {name}")
        if len(args) != PREDICATES[name]:
            raise ValueError(f"{name} expects {PREDICATES[name]} args, got {len(args)}")
        return tuple.__new__(cls, (name,) + tuple(args))

    @property
    def name(self):
        return self[0]

    @property
    def args(self):
        return self[1:]

    def __repr__(self):
        if len(self) == 1:
            return f"({self[0]})"
        return f"({self[0]} {' '.join(self[1:])})"


def atom(name, *args) -> Predicate:
    return Predicate(name, *args)


class LogicState(frozenset):
    """Set of ground atoms with subset/union/difference semantics."""

    __slots__ = ()

    def entails(self, other) -> bool:
        return frozenset(other) <= self

    def sorted_atoms(self):
        return sorted(self)

    def __repr__(self):
        return "{" + ", ".join(repr(a) for a in self.sorted_atoms()) + "}"


EMPTY_STATE = LogicState()


# ---------------------------------------------------------------------------
# s-expression reader with positions
# ---------------------------------------------------------------------------

class ParseError(ValueError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = f" at {line}:{col}" if line is not None else ""
        super().__init__(f"{message}{where}")


class _Tok(str):
    line = 0
    col = 0


def _tokenize(text):
    tokens = []
    line, col = 1, 1
    i = 0
    length = len(text)
    while i < length:
        c = text[i]
        if c == ";":
            while i < length and text[i] != "\n":
                i += 1
            continue
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            col += 1
            i += 1
            continue
        if c in "()":
            tok = _Tok(c)
            tok.line, tok.col = line, col
            tokens.append(tok)
            col += 1
            i += 1
            continue
        j = i
        while j < length and text[j] not in " \t\r\n();":
            j += 1
        tok = _Tok(text[i:j])
        tok.line, tok.col = line, col
        tokens.append(tok)
        col += j - i
        i = j
    return tokens


def _read(tokens):
    """Token list -> nested lists of _Tok."""
    if not tokens:
        raise ParseError("empty input")

    def parse_from(k):
        tok = tokens[k]
        if tok == "(":
            items = []
            k += 1
            while True:
                if k >= len(tokens):
                    raise ParseError("unbalanced '('", tok.line, tok.col)
                if tokens[k] == ")":
                    return items, k + 1
                item, k = parse_from(k)
                items.append(item)
        if tok == ")":
            raise ParseError("unexpected ')'", tok.line, tok.col)
        return tok, k + 1

    tree, k = parse_from(0)
    if k != len(tokens):
        extra = tokens[k]
        raise ParseError("trailing input", extra.line, extra.col)
    return tree


def _pos(node):
    if isinstance(node, _Tok):
        return node.line, node.col
    for item in node:
        got = _pos(item)
        if got != (None, None):
            return got
    return (None, None)


def _expect_list(node, what):
    if not isinstance(node, list):
        line, col = _pos(node)
        raise ParseError(f"expected {what}", line, col)
    return node


# ---------------------------------------------------------------------------
# domain spec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple  # ((var, type), ...)
    pre: tuple     # template atoms: (name, arg...) with ?vars
    add: tuple
    delete: tuple


@dataclass(frozen=True)
class DomainSpec:
    name: str
    types: tuple           # ((type, parent), ...)
    predicates: dict       # name -> (param types)
    schemas: tuple         # ActionSchema in declaration order

    def schema(self, name) -> ActionSchema:
        for s in self.schemas:
            if s.name == name:
                return s
        raise KeyError(name)

    def type_matches(self, obj_type: str, want: str) -> bool:
        if obj_type == want:
            return True
        parents = dict(self.types)
        seen = set()
        cur = obj_type
        while cur in parents and cur not in seen:
            seen.add(cur)
            cur = parents[cur]
            if cur == want:
                return True
        return want == "object"


def _parse_typed_list(nodes, what):
    """Parse `a b - t c d - u` into ((a, t), (b, t), (c, u), (d, u))."""
    out = []
    pending = []
    i = 0
    while i < len(nodes):
        node = nodes[i]
        if isinstance(node, list):
            line, col = _pos(node)
            raise ParseError(f"expected name in {what}", line, col)
        if node == "-":
            if not pending or i + 1 >= len(nodes):
                raise ParseError(f"dangling '-' in {what}", node.line, node.col)
            type_name = nodes[i + 1]
            if isinstance(type_name, list):
                line, col = _pos(type_name)
                raise ParseError(f"expected type name in {what}", line, col)
            out.extend((name, str(type_name)) for name in pending)
            pending = []
            i += 2
            continue
        pending.append(str(node))
        i += 1
    out.extend((name, "object") for name in pending)
    return tuple(out)


def _parse_atom_template(node, predicates, params, allow_not, where):
    node = _expect_list(node, f"atom in {where}")
    if not node:
        raise ParseError(f"empty atom in {where}")
    head = node[0]
    if isinstance(head, list):
        line, col = _pos(head)
        raise ParseError(f"expected predicate name in {where}", line, col)
    if head == "not":
        if not allow_not:
            raise ParseError(f"negation unsupported in {where}", head.line, head.col)
        if len(node) != 2:
            raise ParseError("(not ...) takes one atom", head.line, head.col)
        inner = _parse_atom_template(node[1], predicates, params, False, where)
        return ("not", inner)
    if head in ("or", "exists", "forall", "when", "imply"):
        raise ParseError(f"'{head}' unsupported (STRIPS subset)", head.line, head.col)
    name = str(head)
    if name not in predicates:
        raise ParseError(f"undeclared predicate '{name}'", head.line, head.col)
    args = []
    for arg in node[1:]:
        if isinstance(arg, list):
            line, col = _pos(arg)
            raise ParseError(f"expected argument in {where}", line, col)
        args.append(str(arg))
    if len(args) != len(predicates[name]):
        raise ParseError(
            f"predicate '{name}' expects {len(predicates[name])} args, got {len(args)}",
            head.line, head.col)
    for arg in args:
        if arg.startswith("?") and arg not in params:
            raise ParseError(f"unbound variable '{arg}'", head.line, head.col)
    return (name,) + tuple(args)


def parse_domain(text: str) -> DomainSpec:
    tree = _read(_tokenize(text))
    tree = _expect_list(tree, "(define ...)")
    if not tree or tree[0] != "define":
        raise ParseError("expected (define (domain ...) ...)", *_pos(tree))
    header = _expect_list(tree[1], "(domain name)")
    if not header or header[0] != "domain" or len(header) != 2:
        raise ParseError("expected (domain name)", *_pos(tree[1]))
    name = str(header[1])

    types = []
    predicates = {}
    schemas = []
    for section in tree[2:]:
        section = _expect_list(section, "domain section")
        if not section:
            raise ParseError("empty domain section")
        tag = section[0]
        if tag == ":types":
            types.extend(_parse_typed_list(section[1:], ":types"))
        elif tag == ":predicates":
            for decl in section[1:]:
                decl = _expect_list(decl, "predicate declaration")
                pname = str(decl[0])
                ptypes = _parse_typed_list(decl[1:], f"predicate {pname}")
                predicates[pname] = tuple(t for _, t in ptypes)
        elif tag == ":action":
            schemas.append(_parse_action(section, predicates))
        else:
            line, col = _pos(section)
            raise ParseError(f"unsupported domain section '{tag}'", line, col)
    return DomainSpec(name=name, types=tuple(types), predicates=predicates,
                      schemas=tuple(schemas))


def _parse_action(section, predicates) -> ActionSchema:
    if len(section) < 2 or isinstance(section[1], list):
        raise ParseError("expected action name", *_pos(section))
    name = str(section[1])
    params = ()
    pre = add = delete = None
    i = 2
    while i < len(section):
        key = section[i]
        if isinstance(key, list) or not str(key).startswith(":"):
            raise ParseError(f"expected :keyword in action {name}", *_pos(key))
        if i + 1 >= len(section):
            raise ParseError(f"missing value for {key} in action {name}",
                             key.line, key.col)
        value = section[i + 1]
        if key == ":parameters":
            params = _parse_typed_list(_expect_list(value, ":parameters"), ":parameters")
            for var, _ in params:
                if not var.startswith("?"):
                    raise ParseError(f"parameter '{var}' must start with '?'",
                                     key.line, key.col)
        elif key in (":precondition", ":effect"):
            value = _expect_list(value, str(key))
            if not value or value[0] != "and":
                raise ParseError(f"{key} must be (and ...)", *_pos(value))
            param_vars = {v for v, _ in params}
            atoms = [_parse_atom_template(x, predicates, param_vars,
                                          key == ":effect", str(key))
                     for x in value[1:]]
            if key == ":precondition":
                pre = tuple(a for a in atoms)
            else:
                add = tuple(a for a in atoms if a[0] != "not")
                delete = tuple(a[1] for a in atoms if a[0] == "not")
        else:
            raise ParseError(f"unsupported action field '{key}'", key.line, key.col)
        i += 2
    return ActionSchema(name=name, params=params, pre=pre or (),
                        add=add or (), delete=delete or ())


def print_domain(spec: DomainSpec) -> str:
    """Inverse of parse_domain (round-trips to an equal spec)."""
    out = [f"(define (domain {spec.name})"]
    if spec.types:
        parts = " ".join(f"{t} - {p}" for t, p in spec.types)
        out.append(f"  (:types {parts})")
    decls = []
    for pname, ptypes in spec.predicates.items():
        args = "".join(f" ?a{i} - {t}" for i, t in enumerate(ptypes))
        decls.append(f"({pname}{args})")
    out.append(f"  (:predicates {' '.join(decls)})")
    for s in spec.schemas:
        params = " ".join(f"{v} - {t}" for v, t in s.params)
        pre = " ".join(_fmt_atom(a) for a in s.pre)
        eff = " ".join([_fmt_atom(a) for a in s.add] +
                       [f"(not {_fmt_atom(a)})" for a in s.delete])
        out.append(f"  (:action {s.name}\n    :parameters ({params})\n"
                   f"    :precondition (and {pre})\n    :effect (and {eff}))")
    out.append(")")
    return "\n".join(out)


def _fmt_atom(a):
    if len(a) == 1:
        return f"({a[0]})"
    return f"({a[0]} {' '.join(a[1:])})"


# ---------------------------------------------------------------------------
# problem spec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    name: str
    domain_name: str
    objects: tuple        # ((name, type), ...)
    world0: WorldState
    goal: LogicState

    def object_type(self, name: str) -> str:
        for obj, typ in self.objects:
            if obj == name:
                return typ
        raise KeyError(name)


_KIND_BY_TYPE = {"block": "block", "table": "table", "region": "region_marker",
                 "obstacle": "obstacle"}


def parse_problem(text: str, domain: DomainSpec) -> ProblemSpec:
    tree = _read(_tokenize(text))
    tree = _expect_list(tree, "(define ...)")
    if not tree or tree[0] != "define":
        raise ParseError("expected (define (problem ...) ...)", *_pos(tree))
    header = _expect_list(tree[1], "(problem name)")
    if not header or header[0] != "problem" or len(header) != 2:
        raise ParseError("expected (problem name)", *_pos(tree[1]))
    name = str(header[1])

    domain_name = None
    objects = []
    geometry = {}
    gripper = None
    goal_atoms = None
    for section in tree[2:]:
        section = _expect_list(section, "problem section")
        tag = section[0]
        if tag == ":domain":
            domain_name = str(section[1])
        elif tag == ":objects":
            objects.extend(_parse_typed_list(section[1:], ":objects"))
        elif tag == ":geometry":
            bid = str(section[1])
            half = pose = None
            for clause in section[2:]:
                clause = _expect_list(clause, ":geometry clause")
                if clause[0] == "half-extents":
                    half = Vec3(*(float(v) for v in clause[1:4]))
                elif clause[0] == "pose":
                    pose = Vec3(*(float(v) for v in clause[1:4]))
                else:
                    raise ParseError(f"unknown geometry clause '{clause[0]}'",
                                     *_pos(clause))
            if half is None or pose is None:
                raise ParseError(f"geometry for '{bid}' needs half-extents and pose",
                                 *_pos(section))
            geometry[bid] = (half, pose)
        elif tag == ":gripper":
            gpos = None
            gwidth = 0.08
            for clause in section[1:]:
                clause = _expect_list(clause, ":gripper clause")
                if clause[0] == "pose":
                    gpos = Vec3(*(float(v) for v in clause[1:4]))
                elif clause[0] == "width":
                    gwidth = float(clause[1])
                else:
                    raise ParseError(f"unknown gripper clause '{clause[0]}'",
                                     *_pos(clause))
            gripper = GripperConfig(gpos, gwidth)
        elif tag == ":goal":
            body = _expect_list(section[1], ":goal body")
            if not body or body[0] != "and":
                raise ParseError(":goal must be (and ...)", *_pos(section[1]))
            goal_atoms = [
                _parse_atom_template(x, domain.predicates, set(), False, ":goal")
                for x in body[1:]
            ]
        else:
            line, col = _pos(section)
            raise ParseError(f"unsupported problem section '{tag}'", line, col)

    declared = {obj for obj, _ in objects}
    for bid in geometry:
        if bid not in declared:
            raise ParseError(f"geometry for undeclared object '{bid}'")
    for obj, _ in objects:
        if obj not in geometry:
            raise ParseError(f"object '{obj}' has no geometry")
    if gripper is None or gripper.position is None:
        raise ParseError("missing (:gripper (pose x y z))")
    if goal_atoms is None:
        raise ParseError("missing (:goal ...)")

    bodies = {}
    type_of = dict(objects)
    for obj, typ in objects:
        half, pose = geometry[obj]
        kind = _KIND_BY_TYPE.get(typ)
        if kind is None:
            raise ParseError(f"object '{obj}' has unknown type '{typ}'")
        bodies[obj] = Body(id=obj, half_extents=half, pose=pose, kind=kind,
                           movable=(kind in ("block", "obstacle")))

    goal = []
    for a in goal_atoms:
        for arg in a[1:]:
            if arg not in declared:
                raise ParseError(f"goal references undeclared object '{arg}'")
        goal.append(Predicate(*a))

    world0 = WorldState(bodies=bodies, gripper=gripper)
    settled = settle(world0)
    for bid, body in world0.bodies.items():
        if settled.bodies[bid].pose != body.pose:
            raise ParseError(f"initial pose of '{bid}' is not settled "
                             f"(unsupported initial stack)")
    return ProblemSpec(name=name, domain_name=domain_name or domain.name,
                       objects=tuple(objects), world0=world0,
                       goal=LogicState(goal))


# ---------------------------------------------------------------------------
# grounding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroundAction:
    name: str
    args: tuple
    pre: frozenset
    add: frozenset
    delete: frozenset

    @property
    def id(self) -> str:
        return f"{self.name}({','.join(self.args)})"

    def __repr__(self):
        return self.id


def _region_ids(objects):
    return tuple(o for o, t in objects if t == "region")


def _surface_ids(objects, domain):
    return tuple(o for o, t in objects if domain.type_matches(t, "surface"))


def rewrite_atom(a, objects_types) -> Predicate:
    """Normalize surface-dependent atoms: on(b,table)->ontable(b),
    on(b,region)->inregion(b,region)."""
    if a[0] == "on":
        t = objects_types.get(a[2])
        if t == "table":
            return Predicate("ontable", a[1])
        if t == "region":
            return Predicate("inregion", a[1], a[2])
    return Predicate(*a)


def ground(domain: DomainSpec, objects) -> list:
    """All type-consistent, all-distinct bindings of every schema, with the
    single-gripper structural expansions applied."""
    objects = tuple(objects)
    types = dict(objects)
    surfaces = _surface_ids(objects, domain)
    regions = _region_ids(objects)
    blocks = tuple(o for o, t in objects if t == "block")

    out = []
    for schema in domain.schemas:
        candidates = []
        for _, want in schema.params:
            candidates.append([o for o, t in objects if domain.type_matches(t, want)])

        def bind(i, chosen):
            if i == len(candidates):
                out.append(_ground_one(schema, tuple(chosen), types,
                                       surfaces, regions, blocks))
                return
            for obj in candidates[i]:
                if obj in chosen:
                    continue
                bind(i + 1, chosen + [obj])

        bind(0, [])
    return out


def _ground_one(schema, args, types, surfaces, regions, blocks) -> GroundAction:
    binding = {var: obj for (var, _), obj in zip(schema.params, args)}

    def subst(template):
        return tuple(binding.get(x, x) for x in template)

    pre = [rewrite_atom(subst(a), types) for a in schema.pre]
    add = [rewrite_atom(subst(a), types) for a in schema.add]
    delete = [rewrite_atom(subst(a), types) for a in schema.delete]

    for a in list(add):
        if a.name == "holding":
            b = a.args[0]
            delete.append(Predicate("ontable", b))
            for s in surfaces:
                if s != b:
                    delete.append(Predicate("on", b, s))
            for r in regions:
                delete.append(Predicate("inregion", b, r))
            for x in surfaces:
                delete.append(Predicate("gripperon", x))
        elif a.name == "gripperon":
            t = a.args[0]
            for x in surfaces:
                if x != t:
                    delete.append(Predicate("gripperon", x))

    return GroundAction(name=schema.name, args=args,
                        pre=frozenset(pre), add=frozenset(add),
                        delete=frozenset(delete))


def normalize_state(atoms, blocks, surfaces) -> LogicState:
    """Recompute derived `clear` atoms: a block is clear iff nothing is on
    it; tables and regions are always clear (multi-capacity)."""
    base = {a for a in atoms if a[0] != "clear"}
    covered = {a[2] for a in base if a[0] == "on"}
    out = set(base)
    for s in surfaces:
        if s in blocks:
            if s not in covered:
                out.add(Predicate("clear", s))
        else:
            out.add(Predicate("clear", s))
    return LogicState(out)


def apply_action(state, action: GroundAction, blocks, surfaces) -> LogicState:
    return normalize_state((set(state) - set(action.delete)) | set(action.add),
                           blocks, surfaces)


# ---------------------------------------------------------------------------
# subtasks
# ---------------------------------------------------------------------------

class PlacementCell:
    """Mutable relative-placement binding shared by a move_hold/place pair.

    offset is the placed block's center relative to the destination surface
    body; fixed for block tops, sampled for tables/regions and resampled on
    collision during replanning.
    """

    __slots__ = ("offset", "fixed")

    def __init__(self, offset: Optional[Vec3] = None, fixed: bool = False):
        self.offset = offset
        self.fixed = fixed

    def __repr__(self):
        return f"PlacementCell(offset={self.offset}, fixed={self.fixed})"


@dataclass
class Subtask:
    """Grounded primitive with its scheduling sets and planning caches.

    The logic fields (type/params/L_P/L_add/L_del) are fixed at construction;
    u_n / chi_end / bookkeeping fields are filled and refreshed by the
    subtask planner.
    """

    id: int
    type: str                      # move_free | pick | move_hold | place
    params: tuple                  # bound object ids
    L_P: LogicState
    L_add: LogicState
    L_del: LogicState
    cell: Optional[PlacementCell] = None
    check_atom: Optional[Predicate] = None
    u_n: Optional[object] = None         # Trajectory
    chi_end: Optional[WorldState] = None
    attempt: int = 0                     # fresh-plan counter (rng stream label)
    shortcut_rounds: int = 0
    validated_rev: int = -1              # world body revision u_n was checked at
    planned_len: Optional[float] = None

    @property
    def name(self) -> str:
        return f"{self.type}({','.join(self.params)})"

    @property
    def L_E(self) -> LogicState:
        """Effect set as a single union (verbatim-mode semantics)."""
        return LogicState(self.L_add | self.L_del)

    def __repr__(self):
        return f"<{self.id}:{self.name}>"

"""Independent walker over the combiner grammar, producing s-expression text.

Shares no code with the enumerator: it builds strings straight from the
productions and is used only to cross-check candidate counts.
"""
from functools import lru_cache

DELIM_TOKENS = ("nl", "tab", "sp", "comma")
NULLARY = ("add", "concat", "first", "second")


@lru_cache(maxsize=None)
def rec_trees(nodes: int) -> tuple[str, ...]:
    if nodes == 1:
        return NULLARY
    if nodes < 1:
        return ()
    return tuple(f"({op} {d} {child})" for op in ("front", "back", "fuse") for d in DELIM_TOKENS
                 for child in rec_trees(nodes - 1))


@lru_cache(maxsize=None)
def struct_trees(nodes: int) -> tuple[str, ...]:
    out = [f"(stitch {c})" for c in rec_trees(nodes - 1)]
    out += [f"(offset {d} {c})" for d in DELIM_TOKENS for c in rec_trees(nodes - 1)]
    for left in range(1, nodes - 1):
        for d in DELIM_TOKENS:
            out += [f"(stitch2 {d} {a} {b})" for a in rec_trees(left) for b in rec_trees(nodes - 1 - left)]
    return tuple(out)


def walk(max_size: int) -> set[str]:
    """All derivations of size <= max_size (size = 2 + node count)."""
    found = {"rerun", "(merge)"}
    for nodes in range(1, max_size - 1):
        found.update(rec_trees(nodes))
        found.update(struct_trees(nodes))
    return found

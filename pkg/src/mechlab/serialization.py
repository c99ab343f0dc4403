"""JSON encodings for direct mechanisms and mechanism trees.

Floats go through ``json`` unchanged, which writes the shortest repr, so a
dump/load/dump cycle reproduces the text exactly.  Tree children are keyed by
``repr`` of the allocation of the option that leads to them; optional
``labels`` use the same keys and list the types recommended to each option.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .buyer import MechanismTree, TreeNode
from .core import DiscountSequence
from .direct_mech import DirectMechanism
from .errors import StructureError
from .menus import FiniteMenu


def mechanism_to_dict(mech: DirectMechanism, seq: DiscountSequence) -> dict:
    return {
        "types": list(mech.types),
        "gamma": list(seq.gamma),
        "alloc": mech.alloc.tolist(),
        "pay": mech.pay.tolist(),
    }


def mechanism_from_dict(d: dict) -> tuple[DirectMechanism, DiscountSequence]:
    missing = {"types", "gamma", "alloc", "pay"} - set(d)
    if missing:
        raise StructureError(f"mechanism JSON lacks {sorted(missing)}")
    seq = DiscountSequence(tuple(float(x) for x in d["gamma"]))
    mech = DirectMechanism(tuple(d["types"]), np.array(d["alloc"], dtype=float), np.array(d["pay"], dtype=float))
    if mech.T != len(seq):
        raise StructureError(f"gamma has {len(seq)} entries, tables have {mech.T} columns")
    return mech, seq


def _node_to_dict(node: TreeNode) -> dict:
    out = {
        "menu": [[a, p] for a, p in node.menu.options],
        "children": {
            repr(node.menu.options[i][0]): _node_to_dict(child)
            for i, child in sorted(node.children.items())
        },
    }
    if node.labels:
        out["labels"] = {
            repr(node.menu.options[i][0]): list(types) for i, types in sorted(node.labels.items())
        }
    return out


def _node_from_dict(d: dict) -> TreeNode:
    menu = FiniteMenu(tuple((float(a), float(p)) for a, p in d["menu"]))
    index = {repr(a): k for k, a in enumerate(menu.allocations)}
    children = {}
    for key, child in d.get("children", {}).items():
        if key not in index:
            raise StructureError(f"child key {key!r} matches no menu allocation")
        children[index[key]] = _node_from_dict(child)
    labels = {}
    for key, types in d.get("labels", {}).items():
        if key not in index:
            raise StructureError(f"label key {key!r} matches no menu allocation")
        labels[index[key]] = tuple(float(x) for x in types)
    return TreeNode(menu, children, labels)


def tree_to_dict(tree: MechanismTree) -> dict:
    return {"depth": tree.depth, "root": None if tree.root is None else _node_to_dict(tree.root)}


def tree_from_dict(d: dict) -> MechanismTree:
    root = d.get("root")
    return MechanismTree(None if root is None else _node_from_dict(root), int(d["depth"]))


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=1, sort_keys=False)


def write_json(path, obj: dict) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())

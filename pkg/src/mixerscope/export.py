"""GraphML and DOT serialisation of activity graphs and communities.

Both formats carry the same node schema (``kind``, ``label``, ``entity``,
``category``, ``seed_id``) and the edge amount as ``amount_satoshi``. DOT edge
widths grow with the logarithm of the amount so large flows stand out.
"""

from __future__ import annotations

import io
import math
from pathlib import Path

import networkx as nx

from .graph import TX

NODE_FIELDS = ("kind", "label", "entity", "category", "seed_id")


def _graph(obj) -> nx.DiGraph:
    return getattr(obj, "g", obj)


def _export_view(obj) -> nx.DiGraph:
    g = _graph(obj)
    out = nx.DiGraph()
    for v in sorted(g.nodes()):
        data = g.nodes[v]
        out.add_node(
            v,
            kind=str(data.get("kind", "")),
            label=str(data.get("label", v)),
            entity=str(data.get("entity", "")),
            category=str(data.get("category", "")),
            seed_id=int(data.get("seed_id", 0)),
        )
    for u, v in sorted(g.edges()):
        out.add_edge(u, v, amount_satoshi=int(g.edges[u, v].get("amount", 0)))
    return out


def to_graphml(obj) -> str:
    buf = io.BytesIO()
    nx.write_graphml(_export_view(obj), buf, encoding="utf-8", prettyprint=True)
    return buf.getvalue().decode("utf-8")


def pen_width(amount: int) -> float:
    """Edge width for DOT output: 0.5 per decade of satoshis, never below 0.5."""
    return round(max(0.5, 0.5 * math.log10(1 + max(amount, 0))), 3)


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(obj, name: str = "G") -> str:
    view = _export_view(obj)
    lines = [f"digraph {_quote(name)} {{", "  rankdir=LR;"]
    for v, data in view.nodes(data=True):
        shape = "box" if data["kind"] == TX else "ellipse"
        attrs = [f"shape={shape}", f"label={_quote(data['label'][:12])}"]
        attrs += [f"{k}={_quote(str(data[k]))}" for k in NODE_FIELDS if k != "label"]
        if data["seed_id"]:
            attrs.append("style=filled")
            attrs.append('fillcolor="#f4a582"')
        elif data["category"]:
            attrs.append("style=filled")
            attrs.append('fillcolor="#92c5de"')
        lines.append(f"  {_quote(v)} [{', '.join(attrs)}];")
    for u, v, data in view.edges(data=True):
        amount = data["amount_satoshi"]
        lines.append(f"  {_quote(u)} -> {_quote(v)} [amount_satoshi={amount}, penwidth={pen_width(amount)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_graph(obj, base: str | Path, name: str = "G") -> tuple[Path, Path]:
    """Write ``<base>.graphml`` and ``<base>.dot``; returns both paths."""
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    graphml, dot = base.with_suffix(".graphml"), base.with_suffix(".dot")
    graphml.write_text(to_graphml(obj))
    dot.write_text(to_dot(obj, name))
    return graphml, dot

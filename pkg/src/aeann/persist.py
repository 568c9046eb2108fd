"""Versioned index blob.

Layout::

    "AEIX" | u8 version | u64 header_len (LE) | header JSON (utf-8) | .npz archive

The header carries the index parameters, the dataset exponent, the input
rescaling factor and the list of arrays.  The archive flattens every tree
into one node table:

    kind[i]         0 leaf, 1 ball, 2 partition
    a0..a4[i]       leaf:      -, -, -, pool start, pool stop
                    ball:      x0, p0, child node, pool start, pool stop (covered ids)
                    partition: table row, -, -, bucket start, bucket stop
    id_pool         leaf ids and ball-covered ids
    bucket_keys/bucket_child  sorted bucket ids and their child nodes
    centers, directions, offsets, widths, c_emp   one row per partition node
    roots           root node of each tree
    points          the indexed dataset (n, d)

All floats are stored as raw float64, so a reload answers queries bit-identically.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict

import numpy as np

from .errors import BadMagicError, TruncatedPayloadError, VersionMismatchError
from .forest import BallNode, Forest, IndexParams, Leaf, PartitionNode
from .lsh import LshFunction
from .mazur import AvgEmbedding
from .metric import Dataset

MAGIC = b"AEIX"
VERSION = 1


def _flatten(forest: Forest) -> dict:
    kind, cols = [], [[] for _ in range(5)]
    pool, bkeys, bchild = [], [], []
    centers, dirs, offsets, widths, cemp = [], [], [], [], []
    pool_len = [0]

    def new_node(k):
        kind.append(k)
        for c in cols:
            c.append(-1)
        return len(kind) - 1

    def put_pool(ids):
        start = pool_len[0]
        pool.append(np.asarray(ids, dtype=np.int64))
        pool_len[0] += len(ids)
        return start, pool_len[0]

    roots = []
    for tree in forest.trees:
        root = None
        # (node, parent index, how to link)
        stack = [(tree, None, None)]
        pending = []
        while stack:
            node, parent, link = stack.pop()
            if isinstance(node, Leaf):
                i = new_node(0)
                cols[3][i], cols[4][i] = put_pool(node.ids)
            elif isinstance(node, BallNode):
                i = new_node(1)
                cols[0][i], cols[1][i] = node.center_x0, node.representative_p0
                cols[3][i], cols[4][i] = put_pool(node.covered)
                stack.append((node.child, i, "ball"))
            else:
                i = new_node(2)
                cols[0][i] = len(centers)
                centers.append(node.embedding.center_z)
                dirs.append(node.hash.direction_a)
                offsets.append(node.hash.offset_b)
                widths.append(node.hash.width_W)
                cemp.append(node.c_emp)
                keys = sorted(node.children)
                start = len(bkeys)
                bkeys.extend(keys)
                bchild.extend([-1] * len(keys))
                cols[3][i], cols[4][i] = start, start + len(keys)
                for j, k in enumerate(keys):
                    stack.append((node.children[k], start + j, "bucket"))
            if parent is None:
                root = i
            else:
                pending.append((link, parent, i))
        for link, parent, i in pending:
            if link == "ball":
                cols[2][parent] = i
            else:
                bchild[parent] = i
        roots.append(root)

    d = forest.dataset.dim
    return {
        "points": forest.dataset.points,
        "roots": np.asarray(roots, dtype=np.int64),
        "kind": np.asarray(kind, dtype=np.int8),
        **{f"a{j}": np.asarray(c, dtype=np.int64) for j, c in enumerate(cols)},
        "id_pool": np.concatenate(pool) if pool else np.zeros(0, np.int64),
        "bucket_keys": np.asarray(bkeys, dtype=np.int64),
        "bucket_child": np.asarray(bchild, dtype=np.int64),
        "centers": np.asarray(centers, dtype=np.float64).reshape(-1, d),
        "directions": np.asarray(dirs, dtype=np.float64).reshape(-1, d),
        "offsets": np.asarray(offsets, dtype=np.float64),
        "widths": np.asarray(widths, dtype=np.float64),
        "c_emp": np.asarray(cemp, dtype=np.float64),
    }


def forest_to_bytes(forest: Forest, scale: float = 1.0) -> bytes:
    arrays = _flatten(forest)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    header = json.dumps({
        "format": "aeix",
        "version": VERSION,
        "params": asdict(forest.params),
        "p_exp": forest.dataset.p_exp,
        "scale": scale,
        "build_ms": forest.build_ms,
        "arrays": sorted(arrays),
    }).encode("utf-8")
    return MAGIC + bytes([VERSION]) + struct.pack("<Q", len(header)) + header + buf.getvalue()


def forest_from_bytes(raw: bytes) -> tuple[Forest, float]:
    """Return the forest and the input rescaling factor recorded at build time."""
    if raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 13:
        raise TruncatedPayloadError("index header truncated")
    if raw[4] != VERSION:
        raise VersionMismatchError(f"unsupported index version {raw[4]}, expected {VERSION}")
    (hlen,) = struct.unpack_from("<Q", raw, 5)
    if len(raw) < 13 + hlen:
        raise TruncatedPayloadError("index header truncated")
    header = json.loads(raw[13:13 + hlen].decode("utf-8"))
    with np.load(io.BytesIO(raw[13 + hlen:]), allow_pickle=False) as z:
        A = {k: z[k] for k in z.files}

    params = IndexParams(**header["params"])
    dataset = Dataset(A["points"], header["p_exp"])
    kind = A["kind"]
    a = [A[f"a{j}"] for j in range(5)]
    pool = A["id_pool"]
    nodes: list = [None] * kind.size
    # children always have larger indices than parents; build bottom-up
    for i in range(kind.size - 1, -1, -1):
        k = kind[i]
        if k == 0:
            nodes[i] = Leaf(pool[a[3][i]:a[4][i]].copy())
        elif k == 1:
            nodes[i] = BallNode(int(a[0][i]), int(a[1][i]), pool[a[3][i]:a[4][i]].copy(),
                                nodes[int(a[2][i])])
        else:
            row = int(a[0][i])
            emb = AvgEmbedding(dataset.p_exp, A["centers"][row])
            h = LshFunction(A["directions"][row], float(A["offsets"][row]), float(A["widths"][row]))
            children = {int(A["bucket_keys"][j]): nodes[int(A["bucket_child"][j])]
                        for j in range(a[3][i], a[4][i])}
            nodes[i] = PartitionNode(emb, h, children, float(A["c_emp"][row]))
    trees = [nodes[int(r)] for r in A["roots"]]
    return Forest(trees, params, dataset, float(header.get("build_ms", float("nan")))), float(header.get("scale", 1.0))


def save_forest(forest: Forest, path, scale: float = 1.0) -> None:
    with open(path, "wb") as fh:
        fh.write(forest_to_bytes(forest, scale))


def load_forest(path) -> tuple[Forest, float]:
    with open(path, "rb") as fh:
        return forest_from_bytes(fh.read())

#!/usr/bin/env python3
"""Independent numpy forward pass for marginflat checkpoints.

Reads a checkpoint and a corpus file, recomputes every response logit and
the retain cross-entropy, and writes them in the same layout as
`marginflat export-logits` (values printed with repr).

usage: oracle_forward.py CHECKPOINT CORPUS OUT
"""
import struct
import sys

import numpy as np

MAGIC = b"MFCKPT01"


def read_checkpoint(path):
    data = open(path, "rb").read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = data[16 : 16 + hlen].decode()
    meta, arrays, precision = {}, [], None
    for line in header.splitlines():
        if line.startswith("precision = "):
            precision = line.split(" = ", 1)[1]
        elif line.startswith("meta "):
            k, v = line[5:].split(" = ", 1)
            meta[k] = v
        elif line.startswith("array "):
            name, dims = line[6:].split(" ", 1)
            shape = () if dims == "scalar" else tuple(int(d) for d in dims.split("x"))
            arrays.append((name, shape))
    dtype = {"f64": "<f8", "f32": "<f4"}[precision]
    offset = 16 + hlen
    params = {}
    for name, shape in arrays:
        n = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(data, dtype=dtype, count=n, offset=offset).astype(np.float64).reshape(shape)
        offset += n * np.dtype(dtype).itemsize
    return meta, params


def read_corpus(path):
    lines = open(path).read().splitlines()
    vocab = int(lines[0].split("=")[1])
    splits = {"forget": [], "retain": []}
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        prompt, response, tag = (f.strip() for f in line.split("|"))
        splits[tag].append(([int(t) for t in prompt.split()], [int(t) for t in response.split()]))
    return vocab, splits


def response_logits(meta, p, prompt, response):
    seq = prompt + response
    n = len(seq)
    d = p["tok_emb"].shape[1]
    h = np.concatenate([p["bos"], p["tok_emb"][seq[: n - 1]]], axis=0) + p["pos_emb"][:n]
    if meta["model.block"] == "single-attention-plus-mlp":
        q, k, v = h @ p["attn_q"], h @ p["attn_k"], h @ p["attn_v"]
        s = (q @ k.T) / np.sqrt(d)
        s = np.where(np.tril(np.ones((n, n), dtype=bool)), s, -np.inf)
        w = np.exp(s - s.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        h = h + (w @ v) @ p["attn_o"]
    h = h + np.tanh(h @ p["mlp_in"] + p["mlp_in_bias"]) @ p["mlp_out"] + p["mlp_out_bias"]
    z = h @ p["unembed"] + p["unembed_bias"]
    return z[len(prompt) :]


def cross_entropy(z, targets):
    m = z.max(axis=1, keepdims=True)
    lse = (m + np.log(np.exp(z - m).sum(axis=1, keepdims=True)))[:, 0]
    return float(np.mean(lse - z[np.arange(len(targets)), targets]))


def main(argv):
    if len(argv) != 4:
        sys.exit(__doc__)
    meta, params = read_checkpoint(argv[1])
    vocab, splits = read_corpus(argv[2])
    rows, ces = [], []
    for tag in ("forget", "retain"):
        for i, (prompt, response) in enumerate(splits[tag]):
            z = response_logits(meta, params, prompt, response)
            if tag == "retain":
                ces.append(cross_entropy(z, response))
            for t, row in enumerate(z):
                rows.append(f"{tag} {i} {t} " + " ".join(repr(float(x)) for x in row))
    with open(argv[3], "w") as out:
        out.write(f"# vocab_size = {vocab}\n# retain_ce = {float(np.mean(ces))!r}\n")
        out.write("\n".join(rows) + "\n")


if __name__ == "__main__":
    main(sys.argv)

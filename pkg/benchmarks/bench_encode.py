#!/usr/bin/env python3
"""Benchmark the segmentation and packing kernels: numba JIT vs numpy fallback.

The backend is chosen at import time from VOCAB_GRAFT_BACKEND, so the driver
mode re-invokes this script once per backend in a subprocess and prints a
comparison table:

    python benchmarks/bench_encode.py

Run a single backend directly (e.g. inside a profiler) with:

    VOCAB_GRAFT_BACKEND=numpy python benchmarks/bench_encode.py --worker
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def build_inputs(n_pieces: int, n_records: int, record_len: int, seed: int):
    from vocab_graft.model_store import PieceKind, SpecialTokens, TokenizerModel, VocabPiece
    from vocab_graft.normalizer import NormalizerConfig

    rng = np.random.default_rng(seed)
    alphabet = list("abcdefghijklmnopqrstuvwxyzกขคงจฉชซ")
    pieces = [
        VocabPiece("<unk>", 0.0, PieceKind.UNKNOWN),
        VocabPiece("<s>", None, PieceKind.CONTROL),
        VocabPiece("</s>", None, PieceKind.CONTROL),
        VocabPiece("<pad>", None, PieceKind.CONTROL),
        VocabPiece("<mask>", None, PieceKind.CONTROL),
        VocabPiece("<_>", None, PieceKind.CONTROL),
    ]
    surfaces = {p.surface for p in pieces}
    while len(pieces) < n_pieces:
        length = int(rng.integers(1, 9))
        surface = "".join(rng.choice(alphabet, size=length))
        if surface in surfaces:
            continue
        surfaces.add(surface)
        pieces.append(VocabPiece(surface, -float(rng.random() * 12 + 0.1), PieceKind.NORMAL))
    model = TokenizerModel(
        pieces=tuple(pieces),
        specials=SpecialTokens(0, 1, 2, 3, 4, 5),
        normalizer=NormalizerConfig(),
    )
    records = [
        "".join(rng.choice(alphabet + [" "], size=record_len)) for _ in range(n_records)
    ]
    return model, records


def bench_encode(model, records) -> dict:
    from vocab_graft.normalizer import normalize
    from vocab_graft.tokenizer import Tokenizer

    tok = Tokenizer(model)
    normalized = [normalize(r, model.normalizer) for r in records]
    tok.encode(normalized[0])  # compile/warm outside the timer
    tokens = 0
    chars = sum(len(nt.text) for nt in normalized)
    t0 = time.perf_counter()
    for nt in normalized:
        tokens += len(tok.encode(nt).ids)
    elapsed = time.perf_counter() - t0
    return {"seconds": elapsed, "tokens": tokens, "chars": chars}


def bench_pack(n_lengths: int, seed: int) -> dict:
    from vocab_graft import _kernels

    rng = np.random.default_rng(seed)
    lengths = rng.integers(0, 600, size=n_lengths).astype(np.int64)
    out = np.empty(n_lengths, dtype=np.int64)
    _kernels.greedy_pack(lengths[:16], 416, out[:16])  # warm
    t0 = time.perf_counter()
    result = _kernels.greedy_pack(lengths, 416, out)
    elapsed = time.perf_counter() - t0
    return {"seconds": elapsed, "chunks": int(result[0])}


def worker(args) -> None:
    from vocab_graft import active_backend

    model, records = build_inputs(args.pieces, args.records, args.record_len, args.seed)
    encode_stats = bench_encode(model, records)
    pack_stats = bench_pack(args.pack_lengths, args.seed)
    print(json.dumps({"backend": active_backend(), "encode": encode_stats, "pack": pack_stats}))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--worker", action="store_true", help="run one backend and print JSON")
    parser.add_argument("--pieces", type=int, default=20_000)
    parser.add_argument("--records", type=int, default=400)
    parser.add_argument("--record-len", type=int, default=160)
    parser.add_argument("--pack-lengths", type=int, default=1_000_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if args.worker:
        worker(args)
        return

    results = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, VOCAB_GRAFT_BACKEND=backend)
        cmd = [sys.executable, __file__, "--worker",
               "--pieces", str(args.pieces), "--records", str(args.records),
               "--record-len", str(args.record_len),
               "--pack-lengths", str(args.pack_lengths), "--seed", str(args.seed)]
        out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
        results[backend] = json.loads(out.strip().splitlines()[-1])

    enc_nb = results["numba"]["encode"]
    enc_np = results["numpy"]["encode"]
    if enc_nb["tokens"] != enc_np["tokens"]:
        raise SystemExit("backends disagree on token counts; refusing to report")
    print(f"encode: {args.records} records x {args.record_len} chars, "
          f"{args.pieces} pieces, {enc_nb['tokens']} tokens")
    for backend in ("numba", "numpy"):
        e = results[backend]["encode"]
        print(f"  {backend:6s} {e['seconds']:8.3f} s   "
              f"{e['chars'] / e['seconds'] / 1e6:6.2f} Mchar/s   "
              f"{e['tokens'] / e['seconds'] / 1e3:8.1f} ktok/s")
    print(f"  speedup {enc_np['seconds'] / enc_nb['seconds']:.1f}x")
    print(f"pack: {args.pack_lengths} record lengths")
    for backend in ("numba", "numpy"):
        p = results[backend]["pack"]
        print(f"  {backend:6s} {p['seconds']:8.4f} s   ({p['chunks']} chunks)")
    print(f"  speedup {results['numpy']['pack']['seconds'] / results['numba']['pack']['seconds']:.1f}x")


if __name__ == "__main__":
    main()

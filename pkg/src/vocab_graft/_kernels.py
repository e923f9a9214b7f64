"""Hot inner loops: Viterbi segmentation and greedy chunk packing.

Both kernels are written once against numpy arrays and compiled with numba
when available. Set ``VOCAB_GRAFT_BACKEND=numpy`` to force the plain-Python
fallback (same functions, no JIT); ``VOCAB_GRAFT_BACKEND=numba`` insists on
the compiled path. ``benchmarks/bench_encode.py`` compares the two.
"""
from __future__ import annotations

import os

import numpy as np

BACKEND_ENV = "VOCAB_GRAFT_BACKEND"


def _viterbi_segment_impl(codes, edge_key, node_ptr, node_piece, node_score, unk_id, out):
    """Segment a span of scalar values against a flattened piece trie.

    The trie maps code sequences to scored pieces: node 0 is the root, node
    n owns the slice edge_key[node_ptr[n]:node_ptr[n+1]] of outgoing edges
    sorted by character, each key packing (char << 32) | destination_node,
    and node_piece[n] >= 0 marks a piece ending at n with score
    node_score[n].

    Dynamic program over suffixes, minimizing unknown count first, then
    maximizing total score, then minimizing token count, then preferring the
    longest first piece (leftmost-longest). Single characters reachable by
    no piece become unknown tokens carrying `unk_id`.

    `out` is an int32 scratch of length 2*len(codes): token ids land in
    out[:count], token character lengths in out[n:n+count]. Returns
    (token_count, unknown_count).
    """
    n = codes.shape[0]
    best_unk = np.empty(n + 1, np.int64)
    best_score = np.empty(n + 1, np.float64)
    best_ntok = np.empty(n + 1, np.int64)
    choice_len = np.empty(n, np.int32)
    choice_piece = np.empty(n, np.int32)
    best_unk[n] = 0
    best_score[n] = 0.0
    best_ntok[n] = 0
    for i in range(n - 1, -1, -1):
        # fallback edge: this character as a single unknown token
        b_unk = best_unk[i + 1] + 1
        b_score = best_score[i + 1]
        b_ntok = best_ntok[i + 1] + 1
        b_len = 1
        b_piece = -1
        node = 0
        for j in range(i, n):
            c = np.int64(codes[j])
            lo = node_ptr[node]
            hi = node_ptr[node + 1]
            found = -1
            while lo < hi:
                mid = (lo + hi) >> 1
                ec = edge_key[mid] >> 32
                if ec == c:
                    found = mid
                    break
                elif ec < c:
                    lo = mid + 1
                else:
                    hi = mid
            if found < 0:
                break
            node = edge_key[found] & 0xFFFFFFFF
            pid = node_piece[node]
            if pid >= 0:
                length = j - i + 1
                c_unk = best_unk[i + length]
                c_score = best_score[i + length] + node_score[node]
                c_ntok = best_ntok[i + length] + 1
                better = False
                if c_unk < b_unk:
                    better = True
                elif c_unk == b_unk:
                    if c_score > b_score:
                        better = True
                    elif c_score == b_score:
                        if c_ntok < b_ntok:
                            better = True
                        elif c_ntok == b_ntok and length > b_len:
                            better = True
                if better:
                    b_unk = c_unk
                    b_score = c_score
                    b_ntok = c_ntok
                    b_len = length
                    b_piece = pid
        best_unk[i] = b_unk
        best_score[i] = b_score
        best_ntok[i] = b_ntok
        choice_len[i] = b_len
        choice_piece[i] = b_piece
    count = 0
    i = 0
    while i < n:
        pid = choice_piece[i]
        out[count] = unk_id if pid < 0 else pid
        out[n + count] = choice_len[i]
        i += choice_len[i]
        count += 1
    unk = best_unk[0] if n > 0 else 0
    return count, unk


def _greedy_pack_impl(lengths, limit, chunk_id_out):
    """Assign records to chunks greedily in input order.

    lengths[i] > limit -> chunk_id_out[i] = -1 (discarded); lengths[i] == 0
    -> -2 (empty, skipped); otherwise the record joins the current chunk when
    it still fits, else opens a new one. Returns (n_chunks, n_discarded,
    n_empty).
    """
    n = lengths.shape[0]
    n_chunks = 0
    n_discarded = 0
    n_empty = 0
    current = -1
    current_len = limit + 1  # force a new chunk for the first packed record
    for i in range(n):
        length = lengths[i]
        if length > limit:
            chunk_id_out[i] = -1
            n_discarded += 1
        elif length == 0:
            chunk_id_out[i] = -2
            n_empty += 1
        elif current_len + length <= limit:
            chunk_id_out[i] = current
            current_len += length
        else:
            current = n_chunks
            n_chunks += 1
            current_len = length
            chunk_id_out[i] = current
    return n_chunks, n_discarded, n_empty


viterbi_segment_py = _viterbi_segment_impl
greedy_pack_py = _greedy_pack_impl

_requested = os.environ.get(BACKEND_ENV, "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {_requested!r}")

viterbi_segment_jit = None
greedy_pack_jit = None
if _requested != "numpy":
    try:
        from numba import njit

        viterbi_segment_jit = njit(cache=True, nogil=True)(_viterbi_segment_impl)
        greedy_pack_jit = njit(cache=True, nogil=True)(_greedy_pack_impl)
        _active = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _active = "numpy"
else:
    _active = "numpy"

if _active == "numba":
    viterbi_segment = viterbi_segment_jit
    greedy_pack = greedy_pack_jit
else:
    viterbi_segment = viterbi_segment_py
    greedy_pack = greedy_pack_py


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return _active

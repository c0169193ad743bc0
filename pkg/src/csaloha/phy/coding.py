"""Zero-terminated rate-1/2 convolutional code with a soft-input Viterbi decoder."""
from __future__ import annotations

import numpy as np


class ConvCode:
    """Feed-forward rate-1/n convolutional code given by octal generators.

    The default (7, 5) code has constraint length 3 and free distance 5.
    """

    def __init__(self, generators=(0o7, 0o5), constraint_length: int = 3):
        self.generators = tuple(generators)
        self.K = constraint_length
        self.memory = constraint_length - 1
        self.n_states = 1 << self.memory
        self.n_out = len(self.generators)
        # trellis tables: next state and output bits per (state, input)
        self.next_state = np.zeros((self.n_states, 2), dtype=np.int64)
        self.outputs = np.zeros((self.n_states, 2, self.n_out), dtype=np.int64)
        for st in range(self.n_states):
            for b in (0, 1):
                reg = (b << self.memory) | st
                self.next_state[st, b] = reg >> 1
                for k, g in enumerate(self.generators):
                    self.outputs[st, b, k] = bin(reg & g).count("1") & 1
        # BPSK images of each branch label, 0 -> +1, 1 -> -1
        self.branch_symbols = 1.0 - 2.0 * self.outputs

    def info_length(self, n_symbols: int) -> int:
        """Number of information bits carried by a terminated frame of n_symbols."""
        if n_symbols % self.n_out:
            raise ValueError(f"frame length {n_symbols} is not a multiple of {self.n_out}")
        k = n_symbols // self.n_out - self.memory
        if k < 1:
            raise ValueError(f"frame of {n_symbols} symbols is too short for this code")
        return k

    def encode(self, info_bits) -> np.ndarray:
        """Encode and terminate; returns code bits (0/1)."""
        bits = np.concatenate([np.asarray(info_bits, dtype=np.int64), np.zeros(self.memory, dtype=np.int64)])
        out = np.empty((bits.size, self.n_out), dtype=np.int64)
        st = 0
        for i, b in enumerate(bits):
            if b not in (0, 1):
                raise ValueError("information bits must be 0 or 1")
            out[i] = self.outputs[st, b]
            st = self.next_state[st, b]
        return out.ravel()

    def decode(self, soft) -> np.ndarray:
        """Soft-decision Viterbi decoding of a terminated frame.

        ``soft`` holds one real value per coded symbol, positive favouring bit 0
        (BPSK +1). The branch metric is the correlation with the branch symbols.
        """
        soft = np.asarray(soft, dtype=float)
        if soft.size % self.n_out:
            raise ValueError("soft input length must be a multiple of the code's output count")
        steps = soft.reshape(-1, self.n_out)
        n_info = steps.shape[0] - self.memory
        if n_info < 1:
            raise ValueError("soft input too short for a terminated frame")
        metric = np.full(self.n_states, -np.inf)
        metric[0] = 0.0
        back_state = np.zeros((steps.shape[0], self.n_states), dtype=np.int64)
        back_bit = np.zeros((steps.shape[0], self.n_states), dtype=np.int64)
        for i, obs in enumerate(steps):
            branch = self.branch_symbols @ obs  # (n_states, 2)
            allowed = (0,) if i >= n_info else (0, 1)
            new = np.full(self.n_states, -np.inf)
            for st in range(self.n_states):
                if metric[st] == -np.inf:
                    continue
                for b in allowed:
                    ns = self.next_state[st, b]
                    cand = metric[st] + branch[st, b]
                    if cand > new[ns]:
                        new[ns] = cand
                        back_state[i, ns] = st
                        back_bit[i, ns] = b
            metric = new
        st = 0
        bits = np.empty(steps.shape[0], dtype=np.int64)
        for i in range(steps.shape[0] - 1, -1, -1):
            bits[i] = back_bit[i, st]
            st = back_state[i, st]
        return bits[:n_info]


def bpsk(code_bits) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(code_bits, dtype=float)


def encode_frame(info_bits, code: ConvCode, n_symbols: int) -> np.ndarray:
    """Encode information bits into a BPSK frame of exactly n_symbols symbols."""
    info_bits = np.asarray(info_bits)
    k = code.info_length(n_symbols)
    if info_bits.size != k:
        raise ValueError(f"a {n_symbols}-symbol frame carries {k} information bits, got {info_bits.size}")
    return bpsk(code.encode(info_bits))

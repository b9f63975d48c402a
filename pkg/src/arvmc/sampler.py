"""Sampling configurations from ``|Psi(x)|^2``.

* ``sample_as``: one configuration per call, token by token.
* ``sample_bas``: ``N_s`` samples at once by splitting counts over unique
  prefixes with binomial draws; cost follows the number of unique prefixes.
* ``sample_mcmc``: Metropolis-Hastings with spin-channel swap proposals,
  kept as a baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .ansatz import BOS, AnsatzState, PrefixDecoder, evaluator, masked_log_softmax, next_log_probs
from .sector import SectorSpec, channel_mask, in_sector, sector_mask, to_bits

__all__ = [
    "SampleBatch",
    "SamplingError",
    "MCMCResult",
    "sample_as",
    "sample_bas",
    "sample_mcmc",
    "random_sector_configs",
]


class SamplingError(RuntimeError):
    pass


@dataclass(eq=False)
class SampleBatch:
    """Unique configurations with their counts.

    ``counts`` are integers for sampled batches. ``exact`` batches carry
    probabilities instead, summing to 1. ``pruned`` records mass discarded
    by BAS pruning.
    """

    configs: np.ndarray
    counts: np.ndarray
    n_orbitals: int
    sector: SectorSpec
    pruned: int = 0

    def __post_init__(self):
        self.configs = np.asarray(self.configs, dtype=np.int64)
        self.counts = np.asarray(self.counts)
        if self.configs.shape != self.counts.shape:
            raise ValueError("configs and counts differ in shape")

    @classmethod
    def from_samples(cls, samples, n_orbitals, sector) -> "SampleBatch":
        configs, counts = np.unique(np.asarray(samples, dtype=np.int64), return_counts=True)
        return cls(configs, counts.astype(np.int64), n_orbitals, sector)

    @classmethod
    def exact(cls, configs, probs, n_orbitals, sector) -> "SampleBatch":
        """Full-enumeration batch weighted by exact probabilities."""
        probs = np.asarray(probs, dtype=float)
        return cls(configs, probs / probs.sum(), n_orbitals, sector)

    @property
    def total(self):
        return self.counts.sum()

    @property
    def unique(self) -> int:
        return len(self.configs)

    @property
    def entries(self) -> dict[int, int]:
        return {int(x): c.item() for x, c in zip(self.configs, self.counts)}

    def frequencies(self) -> np.ndarray:
        return self.counts / self.counts.sum()


class MCMCResult(NamedTuple):
    batch: SampleBatch
    acceptance: float
    chains: np.ndarray


def sample_as(state: AnsatzState, sector: SectorSpec, rng: np.random.Generator) -> int:
    """Draw a single configuration autoregressively."""
    n = state.config.n_orbitals
    sector.check(n)
    bits = np.zeros((1, 0), dtype=np.int64)
    for i in range(n):
        allowed = sector_mask(bits, sector, n)
        p1 = np.exp(next_log_probs(state, bits, allowed)[0, 1])
        tok = int(rng.random() < p1)
        bits = np.concatenate([bits, [[tok]]], axis=1)
    return int((bits[0] << np.arange(n)).sum())


def sample_bas(
    state: AnsatzState,
    sector: SectorSpec,
    n_samples: int,
    rng: np.random.Generator,
    prune_threshold: int | None = None,
) -> SampleBatch:
    """Batched autoregressive sampling.

    Each unique prefix carries a count; at every position the count is split
    between the two extensions with an exact binomial draw on the masked
    conditional. Without pruning the result is an exact multinomial sample
    of size ``n_samples``. With ``prune_threshold`` set, branches whose count
    falls below it are dropped and their mass is reported in ``pruned``.
    """
    n = state.config.n_orbitals
    sector.check(n)
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    prefixes = np.zeros(1, dtype=np.int64)
    counts = np.array([n_samples], dtype=np.int64)
    pruned = 0
    decoder = PrefixDecoder(state)
    for i in range(n):
        if i == 0:
            bits = np.zeros((1, 0), dtype=np.int64)
            tokens = np.array([BOS])
        else:
            bits = to_bits(prefixes, i)
            tokens = bits[:, -1]
        allowed = sector_mask(bits, sector, n)
        logits = decoder.step(tokens)
        p1 = np.exp(masked_log_softmax(logits, allowed)[:, 1])
        n1 = rng.binomial(counts, np.clip(p1, 0.0, 1.0))
        n0 = counts - n1
        idx0, idx1 = np.flatnonzero(n0 > 0), np.flatnonzero(n1 > 0)
        parent = np.concatenate([idx0, idx1])
        prefixes = np.concatenate([prefixes[idx0], prefixes[idx1] | (np.int64(1) << i)])
        counts = np.concatenate([n0[idx0], n1[idx1]])
        if prune_threshold:
            big = counts >= prune_threshold
            pruned += int(counts[~big].sum())
            prefixes, counts, parent = prefixes[big], counts[big], parent[big]
            if len(prefixes) == 0:
                raise SamplingError(f"pruning at threshold {prune_threshold} removed every branch")
        order = np.argsort(prefixes)
        prefixes, counts = prefixes[order], counts[order]
        decoder.select(parent[order])
    return SampleBatch(prefixes, counts, n, sector, pruned=pruned)


def random_sector_configs(n_orbitals: int, sector: SectorSpec, size: int, rng) -> np.ndarray:
    """Uniformly random sector configurations."""
    half = n_orbitals // 2
    out = np.zeros(size, dtype=np.int64)
    for channel, k in ((0, sector.n_alpha), (1, sector.n_beta)):
        if k == 0:
            continue
        pick = np.argsort(rng.random((size, half)), axis=1)[:, :k]
        out |= (np.int64(1) << (2 * pick + channel)).sum(axis=1)
    return out


class _LogProbCache:
    """Sorted-array memo of ``2 log|Psi|`` for fixed parameters."""

    def __init__(self, fn):
        self.fn = fn
        self.keys = np.zeros(0, dtype=np.int64)
        self.vals = np.zeros(0)

    def __call__(self, x):
        pos = np.searchsorted(self.keys, x)
        hit = pos < len(self.keys)
        hit[hit] = self.keys[pos[hit]] == x[hit]
        if not hit.all():
            new = np.unique(x[~hit])
            self.keys = np.concatenate([self.keys, new])
            self.vals = np.concatenate([self.vals, 2.0 * self.fn(new)[0]])
            order = np.argsort(self.keys)
            self.keys, self.vals = self.keys[order], self.vals[order]
            pos = np.searchsorted(self.keys, x)
        return self.vals[pos]


def sample_mcmc(
    state: AnsatzState,
    sector: SectorSpec,
    n_samples: int,
    rng: np.random.Generator,
    burn_in: int = 1000,
    n_chains: int = 1,
    init: np.ndarray | None = None,
    cache: bool = True,
) -> MCMCResult:
    """Metropolis-Hastings over the sector.

    A proposal picks a spin channel that has both occupied and empty
    orbitals, then swaps one occupied and one empty orbital in it. The
    proposal is symmetric, so acceptance is ``min(1, |Psi(x')|^2/|Psi(x)|^2)``.
    Chains advance in lockstep; after ``burn_in`` steps every state is
    recorded (thinning 1) until ``n_samples`` are collected. With ``cache``
    the log-probabilities are memoized, which leaves the chain unchanged.
    """
    n = state.config.n_orbitals
    sector.check(n)
    if n_samples < 1 or n_chains < 1:
        raise ValueError("n_samples and n_chains must be positive")
    fn = evaluator(state, sector)
    logp = _LogProbCache(fn) if cache else (lambda x: 2.0 * fn(x)[0])

    x = random_sector_configs(n, sector, n_chains, rng) if init is None else np.array(init, dtype=np.int64)
    if x.shape != (n_chains,) or not in_sector(x, n, sector).all():
        raise ValueError("initial chain states must be n_chains sector configurations")
    lp = logp(x)

    chan_pos = np.array([[(i % 2) == c for i in range(n)] for c in (0, 1)])
    half = n // 2
    valid_channel = np.array([0 < sector.n_alpha < half, 0 < sector.n_beta < half])
    n_valid = int(valid_channel.sum())

    n_steps = burn_in + -(-n_samples // n_chains)
    recorded = np.empty(n_samples, dtype=np.int64)
    filled = 0
    accepted = proposed = 0
    for step in range(n_steps):
        if n_valid:
            if n_valid == 2:
                ch = (rng.random(n_chains) < 0.5).astype(np.int64)
            else:
                ch = np.full(n_chains, int(np.argmax(valid_channel)), dtype=np.int64)
            bits = to_bits(x, n).astype(bool)
            in_ch = chan_pos[ch]
            occ = np.argmax(rng.random((n_chains, n)) * (bits & in_ch), axis=1)
            emp = np.argmax(rng.random((n_chains, n)) * (~bits & in_ch), axis=1)
            xp = x ^ (np.int64(1) << occ) ^ (np.int64(1) << emp)
            lpp = logp(xp)
            acc = np.log(rng.random(n_chains)) < lpp - lp
            x = np.where(acc, xp, x)
            lp = np.where(acc, lpp, lp)
            accepted += int(acc.sum())
            proposed += n_chains
        if step >= burn_in:
            take = min(n_chains, n_samples - filled)
            recorded[filled:filled + take] = x[:take]
            filled += take
    batch = SampleBatch.from_samples(recorded, n, sector)
    acceptance = accepted / proposed if proposed else 1.0
    return MCMCResult(batch, acceptance, x)

"""Autoregressive transformer amplitude with an MLP phase.

``Psi(x) = |Psi(x)| exp(i phi(x))``. The amplitude comes from a decoder-only
transformer that reads ``BOS, x_0, ..., x_{n-2}`` and at position ``i``
outputs logits for ``x_i``. Conditionals are masked to the electron-number
sector and renormalized, so ``|Psi|^2`` is normalized over the sector by
construction. The phase is a two-hidden-layer tanh MLP of ``2x - 1``.

Everything is plain numpy in float64, with a hand-written backward pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .sector import SectorSpec, in_sector, masks_along, sector_mask, to_bits

__all__ = [
    "AnsatzConfig",
    "AnsatzState",
    "LogPsi",
    "DomainError",
    "InfeasibleMaskError",
    "BOS",
    "init",
    "parameter_layout",
    "parameter_count",
    "conditionals",
    "next_log_probs",
    "PrefixDecoder",
    "log_psi",
    "evaluate",
    "evaluator",
    "grad_log_psi",
    "vjp",
    "save_checkpoint",
    "load_checkpoint",
]

BOS = 2
_LN_EPS = 1e-5
CHECKPOINT_VERSION = 1


class DomainError(ValueError):
    """Configuration outside the sector the amplitude is normalized on."""


class InfeasibleMaskError(ValueError):
    """Both tokens forbidden at some position."""


@dataclass(frozen=True)
class AnsatzConfig:
    n_orbitals: int
    n_layers: int = 2
    d_model: int = 32
    n_heads: int = 4
    d_ff: int = 128
    phase_hidden: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "phase_hidden", tuple(int(h) for h in self.phase_hidden))
        dims = (self.n_orbitals, self.n_layers, self.d_model, self.n_heads, self.d_ff, *self.phase_hidden)
        if any(d < 1 for d in dims) or len(self.phase_hidden) != 2:
            raise ValueError(f"invalid ansatz dimensions: {self}")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")


class LogPsi(NamedTuple):
    log_amp: np.ndarray | float
    phase: np.ndarray | float


def parameter_layout(cfg: AnsatzConfig) -> list[tuple[str, tuple]]:
    d, f, n = cfg.d_model, cfg.d_ff, cfg.n_orbitals
    h1, h2 = cfg.phase_hidden
    layout = [("wte", (3, d)), ("wpe", (n, d))]
    for l in range(cfg.n_layers):
        layout += [
            (f"h{l}.ln1.g", (d,)), (f"h{l}.ln1.b", (d,)),
            (f"h{l}.attn.wqkv", (d, 3 * d)), (f"h{l}.attn.bqkv", (3 * d,)),
            (f"h{l}.attn.wo", (d, d)), (f"h{l}.attn.bo", (d,)),
            (f"h{l}.ln2.g", (d,)), (f"h{l}.ln2.b", (d,)),
            (f"h{l}.ff.w1", (d, f)), (f"h{l}.ff.b1", (f,)),
            (f"h{l}.ff.w2", (f, d)), (f"h{l}.ff.b2", (d,)),
        ]
    layout += [("lnf.g", (d,)), ("lnf.b", (d,)), ("head", (d, 2))]
    layout += [
        ("phase.w0", (n, h1)), ("phase.b0", (h1,)),
        ("phase.w1", (h1, h2)), ("phase.b1", (h2,)),
        ("phase.w2", (h2,)), ("phase.b2", (1,)),
    ]
    return layout


def parameter_count(cfg: AnsatzConfig, part: str | None = None) -> int:
    """Total parameters, or only those of ``part`` ('amplitude' or 'phase')."""
    total = 0
    for name, shape in parameter_layout(cfg):
        is_phase = name.startswith("phase.")
        if part is None or (part == "phase") == is_phase:
            total += math.prod(shape)
    return total


@dataclass(eq=False)
class AnsatzState:
    """Configuration plus a flat float64 parameter vector.

    ``views`` gives named, correctly shaped views into ``params``; the layout
    is fixed by ``parameter_layout`` and shared with every gradient.
    """

    config: AnsatzConfig
    params: np.ndarray
    _views: dict = field(default=None, repr=False)

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=float)
        if self.params.shape != (parameter_count(self.config),):
            raise ValueError("parameter vector does not match the configuration")
        self._views = _make_views(self.params, self.config)

    @property
    def views(self) -> dict[str, np.ndarray]:
        return self._views

    def with_params(self, params: np.ndarray) -> "AnsatzState":
        return AnsatzState(self.config, np.array(params, dtype=float))

    def copy(self) -> "AnsatzState":
        return self.with_params(self.params)

    def slices(self) -> dict[str, slice]:
        out, off = {}, 0
        for name, shape in parameter_layout(self.config):
            size = math.prod(shape)
            out[name] = slice(off, off + size)
            off += size
        return out

    def amplitude_mask(self) -> np.ndarray:
        """Boolean mask over ``params`` selecting the amplitude network."""
        mask = np.ones(len(self.params), dtype=bool)
        for name, sl in self.slices().items():
            if name.startswith("phase."):
                mask[sl] = False
        return mask


def _make_views(flat, cfg):
    views, off = {}, 0
    for name, shape in parameter_layout(cfg):
        size = math.prod(shape)
        views[name] = flat[off:off + size].reshape(shape)
        off += size
    return views


def init(cfg: AnsatzConfig) -> AnsatzState:
    """Deterministic initialization from ``cfg.seed``.

    The output head starts at zero, so every initial conditional is uniform
    over the allowed tokens.
    """
    rng = np.random.default_rng(cfg.seed)
    state = AnsatzState(cfg, np.zeros(parameter_count(cfg)))
    v = state.views
    d, f, n = cfg.d_model, cfg.d_ff, cfg.n_orbitals
    h1, h2 = cfg.phase_hidden
    resid_scale = 1.0 / math.sqrt(2 * cfg.n_layers)
    v["wte"][:] = rng.normal(0, 0.1, (3, d))
    v["wpe"][:] = rng.normal(0, 0.1, (n, d))
    for l in range(cfg.n_layers):
        v[f"h{l}.ln1.g"][:] = 1.0
        v[f"h{l}.ln2.g"][:] = 1.0
        v[f"h{l}.attn.wqkv"][:] = rng.normal(0, 1 / math.sqrt(d), (d, 3 * d))
        v[f"h{l}.attn.wo"][:] = rng.normal(0, resid_scale / math.sqrt(d), (d, d))
        v[f"h{l}.ff.w1"][:] = rng.normal(0, 1 / math.sqrt(d), (d, f))
        v[f"h{l}.ff.w2"][:] = rng.normal(0, resid_scale / math.sqrt(f), (f, d))
    v["lnf.g"][:] = 1.0
    v["phase.w0"][:] = rng.normal(0, 1 / math.sqrt(n), (n, h1))
    v["phase.w1"][:] = rng.normal(0, 1 / math.sqrt(h1), (h1, h2))
    v["phase.w2"][:] = rng.normal(0, 0.01, (h2,))
    return state


# ---------------------------------------------------------------------------
# forward / backward pieces


def _ln_fwd(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + _LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _ln_bwd(dy, g, cache):
    xhat, inv = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(0)
    db = dy.reshape(-1, xhat.shape[-1]).sum(0)
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(-1, keepdims=True) - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


_GELU_C = math.sqrt(2.0 / math.pi)


def _gelu(u):
    """tanh-form GELU; returns the activation and the tanh for the backward."""
    t = np.tanh(_GELU_C * u * (1.0 + 0.044715 * u * u))
    return 0.5 * u * (1.0 + t), t


def _gelu_grad(u, t):
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * u * u)


def _tokens(bits):
    """Shifted decoder input: BOS followed by all but the last bit."""
    bits = np.asarray(bits, dtype=np.int64)
    B, L = bits.shape
    tok = np.empty((B, L), dtype=np.int64)
    tok[:, 0] = BOS
    tok[:, 1:] = bits[:, :-1]
    return tok


def _amp_forward(state: AnsatzState, tokens: np.ndarray, keep: bool = False, last_only: bool = False):
    """Transformer logits for a ``(B, L)`` token array.

    Returns logits ``(B, L, 2)`` (or ``(B, 2)`` with ``last_only``) and the
    activation cache when ``keep`` is set.
    """
    v = state.views
    cfg = state.config
    B, L = tokens.shape
    H = cfg.n_heads
    d = cfg.d_model
    dh = d // H
    scale = 1.0 / math.sqrt(dh)
    causal = np.triu(np.full((L, L), -np.inf), k=1)

    h = v["wte"][tokens] + v["wpe"][:L]
    caches = []
    for l in range(cfg.n_layers):
        p = f"h{l}."
        a, ln1 = _ln_fwd(h, v[p + "ln1.g"], v[p + "ln1.b"])
        qkv = a @ v[p + "attn.wqkv"] + v[p + "attn.bqkv"]
        q, k, vv = (qkv[..., i * d:(i + 1) * d].reshape(B, L, H, dh).transpose(0, 2, 1, 3) for i in range(3))
        s = (q @ k.transpose(0, 1, 3, 2)) * scale + causal
        s -= s.max(-1, keepdims=True)
        pr = np.exp(s)
        pr /= pr.sum(-1, keepdims=True)
        o = (pr @ vv).transpose(0, 2, 1, 3).reshape(B, L, d)
        h = h + o @ v[p + "attn.wo"] + v[p + "attn.bo"]
        a2, ln2 = _ln_fwd(h, v[p + "ln2.g"], v[p + "ln2.b"])
        u = a2 @ v[p + "ff.w1"] + v[p + "ff.b1"]
        gu, cdf = _gelu(u)
        h = h + gu @ v[p + "ff.w2"] + v[p + "ff.b2"]
        if keep:
            caches.append((a, ln1, q, k, vv, pr, o, a2, ln2, u, gu, cdf))
    if last_only:
        h = h[:, -1:]
    hf, lnf = _ln_fwd(h, v["lnf.g"], v["lnf.b"])
    logits = hf @ v["head"]
    if last_only:
        logits = logits[:, 0]
    if not keep:
        return logits, None
    return logits, (tokens, caches, hf, lnf)


def _amp_backward(state: AnsatzState, dlogits: np.ndarray, cache, grad: dict):
    v = state.views
    cfg = state.config
    tokens, caches, hf, lnf = cache
    B, L = tokens.shape
    H = cfg.n_heads
    d = cfg.d_model
    dh = d // H
    scale = 1.0 / math.sqrt(dh)

    grad["head"] += hf.reshape(-1, d).T @ dlogits.reshape(-1, 2)
    dh_ = dlogits @ v["head"].T
    dh_, dg, db = _ln_bwd(dh_, v["lnf.g"], lnf)
    grad["lnf.g"] += dg
    grad["lnf.b"] += db

    for l in reversed(range(cfg.n_layers)):
        p = f"h{l}."
        a, ln1, q, k, vv, pr, o, a2, ln2, u, gu, cdf = caches[l]
        # feed-forward branch
        grad[p + "ff.w2"] += gu.reshape(-1, cfg.d_ff).T @ dh_.reshape(-1, d)
        grad[p + "ff.b2"] += dh_.reshape(-1, d).sum(0)
        du = (dh_ @ v[p + "ff.w2"].T) * _gelu_grad(u, cdf)
        grad[p + "ff.w1"] += a2.reshape(-1, d).T @ du.reshape(-1, cfg.d_ff)
        grad[p + "ff.b1"] += du.reshape(-1, cfg.d_ff).sum(0)
        dx, dg, db = _ln_bwd(du @ v[p + "ff.w1"].T, v[p + "ln2.g"], ln2)
        grad[p + "ln2.g"] += dg
        grad[p + "ln2.b"] += db
        dh_ = dh_ + dx
        # attention branch
        grad[p + "attn.wo"] += o.reshape(-1, d).T @ dh_.reshape(-1, d)
        grad[p + "attn.bo"] += dh_.reshape(-1, d).sum(0)
        do = (dh_ @ v[p + "attn.wo"].T).reshape(B, L, H, dh).transpose(0, 2, 1, 3)
        dpr = do @ vv.transpose(0, 1, 3, 2)
        dvv = pr.transpose(0, 1, 3, 2) @ do
        ds = pr * (dpr - (dpr * pr).sum(-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        dqkv = np.concatenate(
            [t.transpose(0, 2, 1, 3).reshape(B, L, d) for t in (dq, dk, dvv)], axis=-1
        )
        grad[p + "attn.wqkv"] += a.reshape(-1, d).T @ dqkv.reshape(-1, 3 * d)
        grad[p + "attn.bqkv"] += dqkv.reshape(-1, 3 * d).sum(0)
        dx, dg, db = _ln_bwd(dqkv @ v[p + "attn.wqkv"].T, v[p + "ln1.g"], ln1)
        grad[p + "ln1.g"] += dg
        grad[p + "ln1.b"] += db
        dh_ = dh_ + dx

    np.add.at(grad["wte"], tokens.ravel(), dh_.reshape(-1, d))
    grad["wpe"][:L] += dh_.sum(0)


def _phase_forward(state: AnsatzState, bits: np.ndarray):
    v = state.views
    z = 2.0 * bits - 1.0
    a1 = np.tanh(z @ v["phase.w0"] + v["phase.b0"])
    a2 = np.tanh(a1 @ v["phase.w1"] + v["phase.b1"])
    phi = a2 @ v["phase.w2"] + v["phase.b2"][0]
    return phi, (z, a1, a2)


def _phase_backward(state: AnsatzState, dphi: np.ndarray, cache, grad: dict):
    v = state.views
    z, a1, a2 = cache
    grad["phase.w2"] += a2.T @ dphi
    grad["phase.b2"] += dphi.sum()
    d2 = np.outer(dphi, v["phase.w2"]) * (1.0 - a2 * a2)
    grad["phase.w1"] += a1.T @ d2
    grad["phase.b1"] += d2.sum(0)
    d1 = (d2 @ v["phase.w1"].T) * (1.0 - a1 * a1)
    grad["phase.w0"] += z.T @ d1
    grad["phase.b0"] += d1.sum(0)


def masked_log_softmax(logits, allowed):
    masked = np.where(allowed, logits, -np.inf)
    top = masked.max(-1, keepdims=True)
    lse = top + np.log(np.exp(masked - top).sum(-1, keepdims=True))
    return masked - lse


# ---------------------------------------------------------------------------
# public evaluation API


def _as_configs(x):
    arr = np.asarray(x, dtype=np.int64)
    return arr.reshape(-1), arr.ndim == 0


def _check_sector(state, xs, sector):
    n = state.config.n_orbitals
    ok = in_sector(xs, n, sector)
    if not ok.all():
        bad = int(xs[np.argmin(ok)])
        raise DomainError(f"configuration {bad:#x} is outside sector {sector}")


def next_log_probs(state: AnsatzState, prefix_bits: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Masked log-conditionals of the next token for a batch of prefixes.

    ``prefix_bits`` is ``(B, i)``; ``allowed`` is ``(B, 2)``. Forbidden
    tokens get ``-inf``.
    """
    prefix_bits = np.asarray(prefix_bits, dtype=np.int64)
    B, i = prefix_bits.shape
    if i >= state.config.n_orbitals:
        raise ValueError("prefix is already a full configuration")
    allowed = np.asarray(allowed, dtype=bool).reshape(B, 2)
    if not allowed.any(-1).all():
        raise InfeasibleMaskError("both tokens are forbidden for some prefix")
    tokens = np.empty((B, i + 1), dtype=np.int64)
    tokens[:, 0] = BOS
    tokens[:, 1:] = prefix_bits
    logits, _ = _amp_forward(state, tokens, last_only=True)
    return masked_log_softmax(logits, allowed)


class PrefixDecoder:
    """Incremental decoding over a batch of prefixes with cached keys/values.

    Each ``step`` feeds one token per prefix and returns the logits for the
    next position. ``select`` re-indexes the batch (children inherit their
    parent's cache), which is what batched sampling needs when prefixes
    branch or die.
    """

    def __init__(self, state: AnsatzState):
        self.state = state
        cfg = state.config
        self.length = 0
        self.keys = [None] * cfg.n_layers
        self.values = [None] * cfg.n_layers

    def step(self, tokens: np.ndarray) -> np.ndarray:
        v = self.state.views
        cfg = self.state.config
        i = self.length
        if i >= cfg.n_orbitals:
            raise ValueError("decoder already produced every position")
        tokens = np.asarray(tokens, dtype=np.int64)
        B = len(tokens)
        H, d = cfg.n_heads, cfg.d_model
        dh = d // H
        scale = 1.0 / math.sqrt(dh)
        h = v["wte"][tokens] + v["wpe"][i]
        for l in range(cfg.n_layers):
            p = f"h{l}."
            a, _ = _ln_fwd(h, v[p + "ln1.g"], v[p + "ln1.b"])
            qkv = a @ v[p + "attn.wqkv"] + v[p + "attn.bqkv"]
            q, k, vv = (qkv[:, j * d:(j + 1) * d].reshape(B, H, 1, dh) for j in range(3))
            if i == 0:
                K, V = k, vv
            else:
                K = np.concatenate([self.keys[l], k], axis=2)
                V = np.concatenate([self.values[l], vv], axis=2)
            self.keys[l], self.values[l] = K, V
            sc = (q @ K.transpose(0, 1, 3, 2)) * scale
            sc -= sc.max(-1, keepdims=True)
            pr = np.exp(sc)
            pr /= pr.sum(-1, keepdims=True)
            o = (pr @ V).reshape(B, d)
            h = h + o @ v[p + "attn.wo"] + v[p + "attn.bo"]
            a2, _ = _ln_fwd(h, v[p + "ln2.g"], v[p + "ln2.b"])
            gu, _ = _gelu(a2 @ v[p + "ff.w1"] + v[p + "ff.b1"])
            h = h + gu @ v[p + "ff.w2"] + v[p + "ff.b2"]
        hf, _ = _ln_fwd(h, v["lnf.g"], v["lnf.b"])
        self.length += 1
        return hf @ v["head"]

    def select(self, index: np.ndarray) -> None:
        if self.length == 0:
            return
        for l in range(len(self.keys)):
            self.keys[l] = self.keys[l][index]
            self.values[l] = self.values[l][index]


def conditionals(state: AnsatzState, prefix, mask=(True, True)) -> np.ndarray:
    """``(p(x_i = 0 | prefix), p(x_i = 1 | prefix))`` under ``mask``."""
    prefix = np.asarray(prefix, dtype=np.int64).reshape(1, -1)
    lp = next_log_probs(state, prefix, np.asarray(mask, dtype=bool).reshape(1, 2))
    return np.exp(lp[0])


def evaluate(state: AnsatzState, bits: np.ndarray, sector: SectorSpec, keep: bool = False):
    """Log-amplitudes and phases for in-sector ``(B, n)`` bit arrays.

    Returns ``(log_amp, phase, cache)``; cache is None unless ``keep``.
    """
    bits = np.asarray(bits, dtype=np.int64)
    tokens = _tokens(bits)
    logits, acache = _amp_forward(state, tokens, keep=keep)
    allowed = masks_along(bits, sector)
    logp = masked_log_softmax(logits, allowed)
    chosen = np.take_along_axis(logp, bits[..., None], axis=-1)[..., 0]
    log_amp = 0.5 * chosen.sum(-1)
    phase, pcache = _phase_forward(state, bits.astype(float))
    cache = (bits, logp, acache, pcache) if keep else None
    return log_amp, phase, cache


def log_psi(state: AnsatzState, x, sector: SectorSpec) -> LogPsi:
    """``log|Psi(x)|`` and ``phi(x)`` for one configuration or an array."""
    xs, scalar = _as_configs(x)
    _check_sector(state, xs, sector)
    la, ph, _ = evaluate(state, to_bits(xs, state.config.n_orbitals), sector)
    if scalar:
        return LogPsi(float(la[0]), float(ph[0]))
    return LogPsi(la, ph)


def evaluator(state: AnsatzState, sector: SectorSpec, chunk: int = 4096):
    """Callable ``x -> (log_amp, phase)`` that returns ``-inf`` outside the sector."""
    n = state.config.n_orbitals

    def fn(x):
        xs = np.asarray(x, dtype=np.int64).reshape(-1)
        la = np.full(len(xs), -np.inf)
        ph = np.zeros(len(xs))
        ok = np.flatnonzero(in_sector(xs, n, sector))
        for lo in range(0, len(ok), chunk):
            idx = ok[lo:lo + chunk]
            a, p, _ = evaluate(state, to_bits(xs[idx], n), sector)
            la[idx] = a
            ph[idx] = p
        return la, ph

    return fn


def vjp(state: AnsatzState, x, sector: SectorSpec, w_amp, w_phase) -> np.ndarray:
    """Flat gradient of ``sum_b w_amp[b] log|Psi(x_b)| + w_phase[b] phi(x_b)``."""
    xs, _ = _as_configs(x)
    _check_sector(state, xs, sector)
    w_amp = np.broadcast_to(np.asarray(w_amp, dtype=float), xs.shape)
    w_phase = np.broadcast_to(np.asarray(w_phase, dtype=float), xs.shape)
    bits = to_bits(xs, state.config.n_orbitals).astype(np.int64)
    _, _, cache = evaluate(state, bits, sector, keep=True)
    bits, logp, acache, pcache = cache

    flat = np.zeros_like(state.params)
    grad = _make_views(flat, state.config)
    if np.any(w_amp):
        prob = np.exp(logp)
        onehot = np.zeros_like(prob)
        np.put_along_axis(onehot, bits[..., None], 1.0, axis=-1)
        dlogits = 0.5 * w_amp[:, None, None] * (onehot - prob)
        _amp_backward(state, dlogits, acache, grad)
    if np.any(w_phase):
        _phase_backward(state, np.array(w_phase, dtype=float), pcache, grad)
    return flat


def grad_log_psi(state: AnsatzState, x: int, sector: SectorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``log|Psi(x)|`` and of ``phi(x)`` in the flat layout."""
    g_amp = vjp(state, [x], sector, 1.0, 0.0)
    g_phase = vjp(state, [x], sector, 0.0, 1.0)
    return g_amp, g_phase


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, state: AnsatzState, rng: np.random.Generator | None = None, **extra) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(state.config),
        "rng": rng.bit_generator.state if rng is not None else None,
        "extra": extra,
    }
    with open(path, "wb") as f:
        np.savez(f, params=state.params, meta=np.array(json.dumps(meta)))


def load_checkpoint(path):
    """Return ``(state, rng, extra)``; ``rng`` is None if none was saved."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        params = data["params"].copy()
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
    cfg = AnsatzConfig(**meta["config"])
    rng = None
    if meta["rng"] is not None:
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng"]
    return AnsatzState(cfg, params), rng, meta.get("extra", {})

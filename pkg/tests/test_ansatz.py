import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arvmc.ansatz import (
    AnsatzConfig,
    DomainError,
    PrefixDecoder,
    conditionals,
    grad_log_psi,
    init,
    load_checkpoint,
    log_psi,
    next_log_probs,
    parameter_count,
    save_checkpoint,
)
from arvmc.sector import SectorSpec, sector_configs, sector_mask, to_bits


def random_state(n=8, seed=0, scale=0.5, **kw):
    """Model with nonzero head so conditionals are not uniform."""
    state = init(AnsatzConfig(n_orbitals=n, seed=seed, **kw))
    rng = np.random.default_rng(seed + 100)
    state.views["head"][:] = rng.normal(0, scale, state.views["head"].shape)
    state.views["phase.w2"][:] = rng.normal(0, scale, state.views["phase.w2"].shape)
    return state


def test_init_is_deterministic():
    a = init(AnsatzConfig(n_orbitals=12, seed=3))
    b = init(AnsatzConfig(n_orbitals=12, seed=3))
    assert np.array_equal(a.params, b.params)
    assert np.all(np.isfinite(a.params))


def test_position_table_is_the_only_size_dependence():
    d = 32
    small = AnsatzConfig(n_orbitals=12, d_model=d)
    large = AnsatzConfig(n_orbitals=20, d_model=d)
    assert parameter_count(large, "amplitude") - parameter_count(small, "amplitude") == 8 * d
    # the phase network reads the configuration, so its first layer grows too
    hidden = small.phase_hidden[0]
    assert parameter_count(large, "phase") - parameter_count(small, "phase") == 8 * hidden


def test_zero_head_gives_uniform_conditionals():
    state = init(AnsatzConfig(n_orbitals=6))
    for prefix in ([], [1], [0, 1, 1]):
        assert np.allclose(conditionals(state, prefix), [0.5, 0.5], atol=1e-15)


def test_mask_forbidding_one():
    state = random_state()
    assert conditionals(state, [1, 0, 1], mask=(True, False)).tolist() == [1.0, 0.0]


def test_conditionals_sum_to_one():
    state = random_state()
    rng = np.random.default_rng(0)
    for i in range(8):
        p = conditionals(state, rng.integers(0, 2, i))
        assert abs(p.sum() - 1.0) < 1e-12


@pytest.mark.parametrize("n, na, nb", [(8, 2, 1), (12, 2, 2), (14, 5, 5)])
def test_normalized_over_sector(n, na, nb):
    sector = SectorSpec(na, nb)
    state = random_state(n, scale=1.0)
    la, _ = log_psi(state, sector_configs(n, sector), sector)
    assert abs(np.exp(2 * la).sum() - 1.0) < 1e-10


def test_zero_phase_network():
    state = init(AnsatzConfig(n_orbitals=8))
    state.views["phase.w2"][:] = 0.0
    sector = SectorSpec(2, 2)
    _, ph = log_psi(state, sector_configs(8, sector), sector)
    assert np.all(ph == 0.0)


def test_log_amp_matches_stepwise_conditionals():
    n, sector = 8, SectorSpec(2, 1)
    state = random_state(n)
    for x in sector_configs(n, sector)[::5]:
        bits = to_bits([x], n)[0]
        total = 0.0
        for i in range(n):
            p = conditionals(state, bits[:i], sector_mask(bits[:i], sector, n))
            total += np.log(p[bits[i]])
        assert log_psi(state, int(x), sector).log_amp == pytest.approx(0.5 * total, abs=1e-12)


def test_prefix_consistency():
    n, sector = 8, SectorSpec(2, 2)
    state = random_state(n)
    configs = sector_configs(n, sector)
    la, _ = log_psi(state, configs, sector)
    prob = np.exp(2 * la)
    bits = to_bits(configs, n)
    for i in range(1, n):
        for prefix in np.unique(bits[:, :i], axis=0):
            inside = np.all(bits[:, :i] == prefix, axis=1)
            lp = next_log_probs(state, prefix[None], sector_mask(prefix, sector, n)[None])[0]
            for tok in (0, 1):
                child = inside & (bits[:, i] == tok)
                assert prob[child].sum() == pytest.approx(prob[inside].sum() * np.exp(lp[tok]), abs=1e-13)


def test_evaluation_is_pure():
    n, sector = 10, SectorSpec(2, 2)
    state = random_state(n)
    x = sector_configs(n, sector)[17]
    assert log_psi(state, x, sector) == log_psi(state, x, sector)


def test_outside_sector_is_a_domain_error():
    state = random_state(8)
    with pytest.raises(DomainError):
        log_psi(state, 0b1111, SectorSpec(1, 1))


def test_prefix_decoder_matches_full_forward():
    n, sector = 10, SectorSpec(3, 2)
    state = random_state(n)
    bits = to_bits(sector_configs(n, sector)[::9], n).astype(np.int64)
    dec = PrefixDecoder(state)
    for i in range(n):
        tokens = np.full(len(bits), 2) if i == 0 else bits[:, i - 1]
        logits = dec.step(tokens)
        allowed = np.ones((len(bits), 2), bool)
        ref = next_log_probs(state, bits[:, :i], allowed)
        got = logits - np.logaddexp(logits[:, :1], logits[:, 1:])
        assert np.allclose(got, ref, atol=1e-12)


def test_gradient_block_separation():
    n, sector = 8, SectorSpec(2, 2)
    state = random_state(n)
    g_amp, g_phase = grad_log_psi(state, sector_configs(n, sector)[3], sector)
    mask = state.amplitude_mask()
    assert np.all(g_amp[~mask] == 0.0)
    assert np.all(g_phase[mask] == 0.0)


def _fd_check(state, x, sector, h=1e-5):
    g_amp, g_phase = grad_log_psi(state, x, sector)
    fd = np.zeros((2, len(state.params)))
    for k in range(len(state.params)):
        p = state.params.copy()
        p[k] += h
        up = log_psi(state.with_params(p), x, sector)
        p[k] -= 2 * h
        dn = log_psi(state.with_params(p), x, sector)
        fd[0, k] = (up.log_amp - dn.log_amp) / (2 * h)
        fd[1, k] = (up.phase - dn.phase) / (2 * h)
    an = np.stack([g_amp, g_phase])
    return np.abs(an - fd).max() / np.abs(fd).max()


def test_gradient_matches_finite_differences():
    n, sector = 8, SectorSpec(2, 2)
    state = random_state(n, n_layers=2, d_model=8, n_heads=2, d_ff=16, phase_hidden=(8, 8))
    x = int(sector_configs(n, sector)[11])
    assert _fd_check(state, x, sector) < 1e-5


def test_checkpoint_round_trip(tmp_path):
    state = random_state(8)
    rng = np.random.default_rng(5)
    rng.random(3)
    save_checkpoint(tmp_path / "c.npz", state, rng=rng, note="x")
    restored, rng2, extra = load_checkpoint(tmp_path / "c.npz")
    assert np.array_equal(restored.params, state.params)
    assert restored.config == state.config
    assert rng2.random() == rng.random()
    assert extra == {"note": "x"}


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(0, 4), st.integers(0, 4))
def test_normalization_property(seed, half, na, nb):
    n = 2 * half
    sector = SectorSpec(min(na, half), min(nb, half))
    state = random_state(n, seed=seed, scale=2.0, d_model=8, n_heads=2, d_ff=16)
    la, _ = log_psi(state, sector_configs(n, sector), sector)
    assert abs(np.exp(2 * la).sum() - 1.0) < 1e-10

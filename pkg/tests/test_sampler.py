import numpy as np
import pytest
from scipy import stats

from arvmc.ansatz import AnsatzConfig, init, log_psi
from arvmc.sampler import SamplingError, sample_as, sample_bas, sample_mcmc
from arvmc.sector import SectorSpec, in_sector, sector_configs


def exact_probs(state, sector):
    configs = sector_configs(state.config.n_orbitals, sector)
    la, _ = log_psi(state, configs, sector)
    return configs, np.exp(2 * la)


def peaked_state(n, seed=0, scale=1.0):
    state = init(AnsatzConfig(n_orbitals=n, seed=seed))
    rng = np.random.default_rng(seed + 7)
    state.views["head"][:] = rng.normal(0, scale, state.views["head"].shape)
    return state


def deterministic_state(n):
    # a huge bias on token 0 makes every conditional 0/1 after masking
    state = init(AnsatzConfig(n_orbitals=n))
    state.views["lnf.g"][:] = 0.0
    state.views["lnf.b"][:] = 1.0
    state.views["head"][:, 0] = 100.0
    return state


def chi_square_pvalue(batch, configs, probs):
    observed = np.zeros(len(configs))
    observed[np.searchsorted(configs, batch.configs)] = batch.counts
    return stats.chisquare(observed, probs / probs.sum() * observed.sum()).pvalue


def test_sample_as_deterministic_model():
    state = deterministic_state(6)
    sector = SectorSpec(1, 2)
    rng = np.random.default_rng(0)
    draws = {sample_as(state, sector, rng) for _ in range(20)}
    assert len(draws) == 1
    assert in_sector(list(draws), 6, sector).all()


@pytest.mark.slow
def test_sample_as_uniform_sector():
    state = init(AnsatzConfig(n_orbitals=4))
    sector = SectorSpec(1, 1)
    rng = np.random.default_rng(1)
    draws = np.array([sample_as(state, sector, rng) for _ in range(100_000)])
    configs = sector_configs(4, sector)
    counts = np.array([(draws == c).sum() for c in configs])
    assert counts.sum() == len(draws)
    assert stats.chisquare(counts).pvalue > 0.01


def test_bas_concentrated_model():
    state = deterministic_state(8)
    batch = sample_bas(state, SectorSpec(2, 2), 12345, np.random.default_rng(0))
    assert batch.unique == 1
    assert batch.counts.tolist() == [12345]


@pytest.mark.parametrize("seed", range(5))
def test_bas_conserves_mass(seed):
    state = peaked_state(10, seed=seed, scale=2.0)
    sector = SectorSpec(3, 2)
    n = int(np.random.default_rng(seed).integers(1, 10**6))
    batch = sample_bas(state, sector, n, np.random.default_rng(seed))
    assert batch.total == n
    assert in_sector(batch.configs, 10, sector).all()
    assert np.all(batch.counts > 0)


def test_bas_uniform_sector_chi_square():
    state = init(AnsatzConfig(n_orbitals=12))
    sector = SectorSpec(2, 2)
    configs, probs = exact_probs(state, sector)
    assert len(configs) == 225
    batch = sample_bas(state, sector, 10**6, np.random.default_rng(2))
    assert batch.total == 10**6
    assert chi_square_pvalue(batch, configs, probs) > 0.01


def test_bas_unbiased_over_repetitions():
    state = peaked_state(8, scale=1.5)
    sector = SectorSpec(2, 2)
    configs, probs = exact_probs(state, sector)
    rng = np.random.default_rng(4)
    reps, n = 200, 10**4
    freq = np.zeros((reps, len(configs)))
    for r in range(reps):
        batch = sample_bas(state, sector, n, rng)
        freq[r, np.searchsorted(configs, batch.configs)] = batch.counts / n
    se = np.sqrt(probs * (1 - probs) / (n * reps))
    assert np.all(np.abs(freq.mean(0) - probs) <= 4 * se + 1e-15)


def test_bas_is_reproducible():
    state = peaked_state(10)
    sector = SectorSpec(2, 3)
    a = sample_bas(state, sector, 10**5, np.random.default_rng(9))
    b = sample_bas(state, sector, 10**5, np.random.default_rng(9))
    assert np.array_equal(a.configs, b.configs) and np.array_equal(a.counts, b.counts)


def test_bas_pruning_records_dropped_mass():
    state = peaked_state(10, scale=2.0)
    batch = sample_bas(state, SectorSpec(2, 2), 10**4, np.random.default_rng(0), prune_threshold=50)
    assert batch.pruned > 0
    assert batch.total + batch.pruned == 10**4
    assert np.all(batch.counts >= 50)


def test_bas_pruning_everything_fails():
    state = init(AnsatzConfig(n_orbitals=8))
    with pytest.raises(SamplingError):
        sample_bas(state, SectorSpec(2, 2), 100, np.random.default_rng(0), prune_threshold=1000)


def test_mcmc_uniform_model_accepts_everything():
    # uniform conditionals give a uniform |Psi|^2 on this sector
    state = init(AnsatzConfig(n_orbitals=4))
    res = sample_mcmc(state, SectorSpec(1, 1), 5000, np.random.default_rng(0), burn_in=10, n_chains=10)
    assert res.acceptance == 1.0
    assert res.batch.total == 5000


def test_mcmc_stays_in_sector_and_always_moves():
    state = peaked_state(8)
    sector = SectorSpec(2, 1)
    rng = np.random.default_rng(1)
    res = sample_mcmc(state, sector, 2000, rng, burn_in=0, n_chains=1)
    assert in_sector(res.batch.configs, 8, sector).all()
    # with a uniform model every proposal is accepted, so consecutive states always differ
    uniform = init(AnsatzConfig(n_orbitals=4))
    x = np.array([sector_configs(4, SectorSpec(1, 1))[0]])
    for _ in range(50):
        nxt = sample_mcmc(uniform, SectorSpec(1, 1), 1, rng, burn_in=0, init=x).chains
        assert nxt[0] != x[0]
        x = nxt


def test_mcmc_long_run_matches_exact_distribution():
    state = peaked_state(8, scale=1.0)
    sector = SectorSpec(2, 2)
    configs, probs = exact_probs(state, sector)
    res = sample_mcmc(state, sector, 10**6, np.random.default_rng(3), burn_in=1000, n_chains=100)
    emp = np.zeros(len(configs))
    emp[np.searchsorted(configs, res.batch.configs)] = res.batch.frequencies()
    assert 0.5 * np.abs(emp - probs).sum() < 0.02


def test_mcmc_cache_does_not_change_chain():
    state = peaked_state(8)
    sector = SectorSpec(2, 2)
    a = sample_mcmc(state, sector, 3000, np.random.default_rng(5), burn_in=50, n_chains=3, cache=True)
    b = sample_mcmc(state, sector, 3000, np.random.default_rng(5), burn_in=50, n_chains=3, cache=False)
    assert np.array_equal(a.batch.configs, b.batch.configs)
    assert np.array_equal(a.batch.counts, b.batch.counts)
    assert a.acceptance == b.acceptance

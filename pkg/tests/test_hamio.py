import io
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arvmc.hamio import FCIDumpError, MolecularIntegrals, parse_fcidump, write_fcidump

HEADER = " &FCI NORB=2,NELEC=2,MS2=0,\n  ORBSYM=1,1,\n  ISYM=1,\n &END\n"


def test_nuclear_repulsion_only():
    ints = parse_fcidump("&FCI NORB=1,NELEC=2,MS2=0, &END\n0.5 0 0 0 0\n")
    assert ints.e_nuc == 0.5
    assert ints.n_spatial == 1


def test_one_body_record():
    ints = parse_fcidump(HEADER + "0.7 1 1 0 0\n")
    assert ints.h1[0, 0] == 0.7
    assert np.count_nonzero(ints.h1) == 1
    assert np.count_nonzero(ints.g2) == 0


def test_two_body_symmetry_images():
    ints = parse_fcidump(HEADER + "0.3 1 2 1 1\n")
    for idx in [(0, 1, 0, 0), (1, 0, 0, 0), (0, 0, 0, 1), (0, 0, 1, 0)]:
        assert ints.integral(*idx) == 0.3
    assert np.count_nonzero(ints.g2) == 4


def test_integral_queries():
    ints = parse_fcidump(" &FCI NORB=4,NELEC=2,MS2=0 /\n0.1 1 2 3 4\n0.7 1 2 0 0\n")
    assert ints.integral(2, 3, 0, 1) == 0.1
    assert ints.integral(0, 0, 1, 1) == 0.0
    assert ints.integral(1, 0) == 0.7
    with pytest.raises(IndexError):
        ints.integral(4, 0)


def test_slash_terminator_and_stream():
    ints = parse_fcidump(io.StringIO("&FCI NORB=2, NELEC=2, MS2=0 /\n1.0 1 1 1 1\n"))
    assert ints.g2[0, 0, 0, 0] == 1.0


def test_fortran_exponent():
    ints = parse_fcidump(HEADER + "1.5D-01 2 2 0 0\n")
    assert ints.h1[1, 1] == 0.15


@pytest.mark.parametrize(
    "text, line",
    [
        ("&FCI NELEC=2, &END\n", 1),
        (HEADER + "0.1 3 1 0 0\n", 5),
        (HEADER + "abc 1 1 0 0\n", 5),
        (HEADER + "0.1 1 1 0\n", 5),
    ],
)
def test_format_errors_carry_line_numbers(text, line):
    with pytest.raises(FCIDumpError) as err:
        parse_fcidump(text)
    assert err.value.lineno == line
    assert f"line {line}" in str(err.value)


def test_missing_header():
    with pytest.raises(FCIDumpError):
        parse_fcidump("0.5 0 0 0 0\n")


def test_duplicate_record_warns_and_last_wins(caplog):
    with caplog.at_level(logging.WARNING):
        ints = parse_fcidump(HEADER + "0.1 1 2 0 0\n0.2 2 1 0 0\n")
    assert ints.h1[0, 1] == ints.h1[1, 0] == 0.2
    assert "conflicting" in caplog.text


def test_invalid_electron_counts():
    with pytest.raises(ValueError):
        parse_fcidump("&FCI NORB=2,NELEC=2,MS2=1 &END\n")


def test_bundled_file_invariants(h2o):
    g = h2o.g2
    assert np.array_equal(h2o.h1, h2o.h1.T)
    for perm in [(1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1), (3, 2, 1, 0)]:
        assert np.array_equal(g, g.transpose(perm))


def test_round_trip_bundled(lih):
    again = parse_fcidump(write_fcidump(lih))
    assert again.same_as(lih)


def _random_ints(seed, n):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(n, n))
    g = rng.normal(size=(n,) * 4)
    g = g + g.transpose(1, 0, 2, 3)
    g = g + g.transpose(0, 1, 3, 2)
    g = g + g.transpose(2, 3, 0, 1)
    return MolecularIntegrals(n, 2, 0, float(rng.normal()), h + h.T, g)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_round_trip_random(seed, n):
    ints = _random_ints(seed, n)
    assert parse_fcidump(write_fcidump(ints)).same_as(ints)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_record_order_is_irrelevant(seed):
    ints = _random_ints(seed, 3)
    lines = write_fcidump(ints).splitlines(keepends=True)
    head, body = lines[:4], lines[4:]
    np.random.default_rng(seed).shuffle(body)
    shuffled = parse_fcidump("".join(head) + "".join(body))
    assert shuffled.same_as(ints)

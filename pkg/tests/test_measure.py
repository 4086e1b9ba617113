import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parisi import DiscreteMeasure, cdf_eval, dirac, l1_distance, make_measure, mix, moment


@st.composite
def measures(draw):
    k = draw(st.integers(min_value=1, max_value=5))
    qs = sorted(
        draw(
            st.lists(
                st.floats(min_value=0.0, max_value=1.0),
                min_size=k,
                max_size=k,
                unique=True,
            )
        )
    )
    jumps = draw(
        st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=k, max_size=k)
    )
    ms = np.cumsum(jumps)
    ms = ms / ms[-1]
    return make_measure(qs, ms.tolist())


def test_dirac_examples():
    assert dirac(0.0).q == (0.0,) and dirac(0.0).m == (1.0,)
    assert dirac(0.5) == make_measure([0.5], [1.0])
    assert dirac(1.0).q == (1.0,)
    with pytest.raises(ValueError):
        dirac(1.5)


def test_merge_duplicate_locations():
    m = make_measure([0.2, 0.2], [0.3, 1.0])
    assert m == make_measure([0.2], [1.0])


def test_rejects_unordered_locations():
    with pytest.raises(ValueError):
        make_measure([0.3, 0.1], [0.5, 1.0])


def test_rejects_bad_masses():
    with pytest.raises(ValueError):
        make_measure([0.2, 0.4], [0.8, 0.5])
    with pytest.raises(ValueError):
        make_measure([0.2], [0.9])
    with pytest.raises(ValueError):
        make_measure([1.2], [1.0])


def test_final_mass_forced_to_one():
    m = make_measure([0.3], [1.0 - 5e-13])
    assert m.m[-1] == 1.0


def test_zero_jump_atoms_dropped():
    m = make_measure([0.1, 0.5, 0.9], [0.4, 0.4, 1.0])
    assert m.q == (0.1, 0.9)
    assert m.m == (0.4, 1.0)


def test_moment_examples():
    assert moment(dirac(0.3), 2) == pytest.approx(0.09, abs=1e-15)
    assert moment(dirac(0.0), 5) == 0.0
    two = make_measure([0.2, 0.8], [0.5, 1.0])
    assert moment(two, 2) == pytest.approx(0.34, abs=1e-15)
    with pytest.raises(ValueError):
        moment(two, 0)


def test_l1_examples():
    assert l1_distance(dirac(0.0), dirac(0.4)) == pytest.approx(0.4, abs=1e-15)
    m = make_measure([0.2, 0.8], [0.5, 1.0])
    assert l1_distance(m, m) == 0.0
    assert l1_distance(dirac(0.2), dirac(0.8)) == pytest.approx(0.6, abs=1e-15)


def test_cdf_eval_examples():
    assert cdf_eval(dirac(0.5), 0.4) == 0.0
    assert cdf_eval(dirac(0.5), 0.5) == 1.0
    two = make_measure([0.2, 0.8], [0.5, 1.0])
    assert cdf_eval(two, 0.5) == 0.5
    assert cdf_eval(two, 1.0) == 1.0
    with pytest.raises(ValueError):
        cdf_eval(two, -0.1)


def test_raw_constructor_allows_noncanonical():
    raw = DiscreteMeasure(q=(0.2, 0.2, 0.5), m=(0.3, 0.3, 1.0))
    assert not raw.is_canonical()
    assert raw.canonicalize() == make_measure([0.2, 0.5], [0.3, 1.0])


def test_csv_and_config_round_trip():
    m = make_measure([0.25, 0.75], [0.4, 1.0])
    assert DiscreteMeasure.from_config(m.to_config()) == m
    text = m.to_csv()
    assert text.splitlines()[0] == "q,m"
    assert len(text.splitlines()) == 3
    with pytest.raises(ValueError):
        DiscreteMeasure.from_config({"q": [0.5], "m": [1.0], "w": [1]})


@given(measures(), st.integers(min_value=1, max_value=6), st.integers(min_value=1, max_value=6))
def test_power_mean_inequality(m, p1, p2):
    if p1 == p2:
        return
    p1, p2 = min(p1, p2), max(p1, p2)
    lhs = moment(m, p1) ** (1.0 / p1)
    rhs = moment(m, p2) ** (1.0 / p2)
    assert lhs <= rhs + 1e-12


@given(measures(), measures(), measures())
def test_l1_triangle_inequality(a, b, c):
    assert l1_distance(a, c) <= l1_distance(a, b) + l1_distance(b, c) + 1e-12
    assert l1_distance(a, b) == pytest.approx(l1_distance(b, a), abs=1e-15)


@given(measures(), measures())
def test_l1_zero_iff_equal(a, b):
    assert l1_distance(a, a) == 0.0
    if l1_distance(a, b) == 0.0:
        assert a == b


@given(measures())
def test_moments_bounded_and_nonincreasing(m):
    vals = [moment(m, p) for p in range(1, 8)]
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert all(vals[i + 1] <= vals[i] + 1e-15 for i in range(len(vals) - 1))


@given(measures())
def test_canonicalization_idempotent(m):
    assert m.canonicalize() == m
    assert make_measure(m.q, m.m) == m


@given(measures(), measures(), st.floats(min_value=0.0, max_value=1.0))
def test_mix_interpolates_cdf(a, b, lam):
    mm = mix(a, b, lam)
    for p in (1, 2, 3):
        want = lam * moment(a, p) + (1 - lam) * moment(b, p)
        assert moment(mm, p) == pytest.approx(want, abs=1e-9)
    for x in (0.15, 0.45, 0.85):
        # merging perturbs atom locations by <= 1e-12, so stay away from atoms
        if min((abs(x - q) for q in a.q + b.q), default=1.0) < 1e-9:
            continue
        want = lam * cdf_eval(a, x) + (1 - lam) * cdf_eval(b, x)
        assert cdf_eval(mm, x) == pytest.approx(want, abs=1e-12)

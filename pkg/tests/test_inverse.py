from fractions import Fraction

import numpy as np
import pytest

from conftest import planted_function, random_function
from gowerslab.abelian import GroupSpec, e, pairing
from gowerslab.bohr import FrequencySet, bohr_enumerate, find_regular_radius
from gowerslab.fourier import DenseFunction
from gowerslab.gowers import gowers_norm
from gowerslab.heisenberg import nilseq_eval
from gowerslab.inverse import (AsymmetryError, InverseConfig, LocallyLinearMap, PreconditionError, correlate,
                               derivative_spectrum, encode_nilmanifold, extract_phase, fit_locally_linear,
                               recompute_correlation, symmetrize)
from gowerslab.lift import build_lift, verify_local_linear, verify_local_quadratic


def noisy_planted(N, a, seed, amp=0.5):
    g, ph, f = planted_function(N, a)
    noise = random_function(g, np.random.default_rng(seed), unimodular=True)
    return g, DenseFunction(g, amp * f.values + (1 - amp) * noise.values, bounded=True)


@pytest.fixture(scope="module")
def planted16():
    g, ph, f = planted_function(16, 3)
    return g, ph, f, extract_phase(f, 0.9)


@pytest.fixture(scope="module")
def encoded16(planted16):
    return encode_nilmanifold(planted16[3])


# -- derivative spectra ----------------------------------------------------


def test_spectrum_planted_z9():
    g, ph, f = planted_function(9, 2)
    fm = derivative_spectrum(f)
    for h in range(9):
        assert fm.freq((h,)) == ((2 * h) % 9,)
        assert fm.weight((h,)) == pytest.approx(1, abs=1e-12)


def test_spectrum_noise_weights_small():
    g = GroupSpec((64,))
    n = g.cardinality
    meds = []
    for seed in range(20):
        f = random_function(g, np.random.default_rng(seed), unimodular=True)
        fm = derivative_spectrum(f)
        w = fm.weights[1:]
        assert np.all(w >= 1 / n - 1e-12)  # the max is at least the Parseval average
        assert np.all(w <= 1 + 1e-12)
        meds.append(np.median(w))
    assert np.median(meds) < 8 / n


def test_spectrum_constant():
    g = GroupSpec((5, 3))
    fm = derivative_spectrum(DenseFunction(g, np.ones(15), bounded=True))
    assert np.all(fm.xi_index == 0)
    assert np.allclose(fm.weights, 1)


def test_spectrum_rejects_unbounded():
    g = GroupSpec((4,))
    with pytest.raises(PreconditionError):
        derivative_spectrum(DenseFunction(g, [2, 0, 0, 0]))


# -- locally linear fit -------------------------------------------------------


def test_fit_planted_agreement_one():
    g, ph, f = planted_function(25, 4)
    M = fit_locally_linear(derivative_spectrum(f), FrequencySet(g, ()), Fraction(1, 8))
    assert M.agreement == 1 and not M.flagged
    assert M.mode == "exhaustive"
    assert M.images == ((4,),)


def test_fit_noise_flagged():
    g = GroupSpec((64,))
    f = random_function(g, np.random.default_rng(3), unimodular=True)
    M = fit_locally_linear(derivative_spectrum(f), FrequencySet(g, ()), Fraction(1, 8))
    assert M.flagged and M.agreement < 0.5


def test_fit_nonempty_S_locally_linear():
    g, ph, f = planted_function(27, 5)
    S = FrequencySet(g, ((1,),))
    rho = find_regular_radius(S, Fraction(1, 16), Fraction(1, 8))
    M = fit_locally_linear(derivative_spectrum(f), S, rho)
    assert M.agreement == 1
    for x in M.domain.members:
        assert M(x) == ((5 * x[0]) % 27,)


def test_fit_requires_regular_radius():
    g, ph, f = planted_function(27, 5)
    with pytest.raises(PreconditionError):
        fit_locally_linear(derivative_spectrum(f), FrequencySet(g, ((1,),)), Fraction(1, 9))


def test_fit_rejects_large_rho():
    g, ph, f = planted_function(9, 1)
    with pytest.raises(ValueError):
        fit_locally_linear(derivative_spectrum(f), FrequencySet(g, ()), Fraction(1, 4))


# -- symmetrization -----------------------------------------------------------


def matrix_map(N, A, rho):
    """The locally linear M(h) = A h on Bohr({e1, e2}, 2 rho) in (Z/N)^2."""
    g = GroupSpec((N, N))
    S = FrequencySet(g, ((1, 0), (0, 1)))
    dom = bohr_enumerate(S, 2 * rho)
    A = np.asarray(A, dtype=np.int64)
    table = np.array([g.index(tuple(int(v) for v in np.mod(A @ np.array(x), N))) for x in dom.members])
    return g, LocallyLinearMap(S, Fraction(rho), build_lift(S), dom, (), table, 1.0, 1.0, "given", 0, 0.5)


def test_symmetrize_symmetric_input():
    N = 50
    g, M = matrix_map(N, [[3, 1], [1, 2]], Fraction(1, 25))
    sym = symmetrize(M)
    assert sym.max_delta == 0
    for x in sym.form.domain.members:
        for z in sym.form.domain.members:
            assert sym.form(x, z) == pairing(M(x), z, g).value


def test_symmetrize_small_asymmetry():
    N = 128
    g, M = matrix_map(N, [[0, 1], [0, 0]], Fraction(3, 128))  # |x_i| <= 2
    sym = symmetrize(M)
    assert sym.max_delta == Fraction(8, 2 * N)
    for x in sym.form.domain.members:
        for z in sym.form.domain.members:
            cx, cz = ([v - N if 2 * v > N else v for v in p] for p in (x, z))
            half = Fraction(cx[1] * cz[0] + cz[1] * cx[0], 2 * N)
            assert sym.form(x, z) == half % 1
            assert sym.form(x, z) == sym.form(z, x)


def test_symmetrize_quarter_asymmetry_raises():
    g, M = matrix_map(128, [[0, 1], [0, 0]], Fraction(5, 128))  # |x_i| <= 4
    with pytest.raises(AsymmetryError) as info:
        symmetrize(M)
    assert info.value.asymmetry == Fraction(1, 4)
    x, z = (tuple(v - 128 if v > 64 else v for v in p) for p in info.value.pair)
    assert abs(x[1] * z[0] - z[1] * x[0]) == 32


# -- extract_phase ---------------------------------------------------------------


def test_extract_planted_z16(planted16):
    g, ph, f, rep = planted16
    assert rep.correlation >= 0.99
    assert not rep.below_threshold
    diff = {h: (rep.phi[h] - ph[h[0]]) % 1 for h in rep.window}
    assert verify_local_quadratic(rep.phi, rep.window, g)[0]
    assert verify_local_linear(diff, rep.window, g)[0]


@pytest.mark.parametrize("N,a", [(8, 3), (9, 2), (25, 7), (27, 5)])
def test_extract_planted_other_sizes(N, a):
    g, ph, f = planted_function(N, a)
    rep = extract_phase(f, 0.9)
    assert rep.correlation >= 0.99
    diff = {h: (rep.phi[h] - ph[h[0]]) % 1 for h in rep.window}
    assert verify_local_linear(diff, rep.window, g)[0]


def test_extract_noisy_z27():
    hits = 0
    for seed in range(10):
        g, f = noisy_planted(27, 5, seed)
        rep = extract_phase(f, 0.3)
        hits += rep.correlation >= 0.45 * 0.5
    assert hits >= 8


def test_extract_gate_rejects_noise():
    g = GroupSpec((32,))
    f = random_function(g, np.random.default_rng(0), unimodular=True)
    assert gowers_norm(f, 3) < 0.9
    with pytest.raises(PreconditionError):
        extract_phase(f, 0.9)


def test_extract_bad_eta():
    g, ph, f = planted_function(8, 1)
    with pytest.raises(ValueError):
        extract_phase(f, 0)


def test_extract_self_certifying(planted16):
    g, ph, f, rep = planted16
    again = recompute_correlation(f, rep.window, rep.phi, rep.xi)
    assert abs(again - rep.correlation) <= 1e-10
    assert 0 <= rep.correlation <= 1 + 1e-12


def test_extract_noisy_self_certifying():
    g, f = noisy_planted(27, 5, 11)
    rep = extract_phase(f, 0.3)
    assert abs(recompute_correlation(f, rep.window, rep.phi, rep.xi) - rep.correlation) <= 1e-10
    for x, z in enumerate(rep.xi):
        if rep.inner[x] > 1e-12:
            assert z is not None


def test_extract_gauge_invariance(planted16):
    g, ph, f, rep = planted16
    zeta = 5
    twisted = DenseFunction(g, f.values * e(zeta * np.arange(16) / 16), bounded=True)
    rep2 = extract_phase(twisted, 0.9)
    assert abs(rep2.correlation - rep.correlation) <= 1e-9
    assert rep2.window == rep.window
    for z1, z2 in zip(rep.xi, rep2.xi):
        assert z2 == ((z1[0] + zeta) % 16,)


def test_extract_midpoint_symmetric(planted16):
    form = planted16[3].symmetrization.form
    assert np.array_equal(form.num, form.num.T)


def test_extract_report_json(planted16):
    js = planted16[3].to_json()
    assert js["stage"] == "quadratic"
    assert "timings" not in js["diagnostics"]
    assert js["diagnostics"]["thresholds"]["agreement_floor"] == 0.5
    assert all(isinstance(v, str) for _, v in js["phi"])


def test_extract_explicit_frequency_sets():
    g, ph, f = planted_function(27, 5)
    rep = extract_phase(f, 0.9, InverseConfig(frequency_sets=(((1,),),)))
    assert rep.S.freqs == ((1,),)
    assert rep.correlation >= 0.99


# -- encoding ----------------------------------------------------------------------


def test_encode_planted(planted16, encoded16):
    enc = encoded16
    assert abs(enc.correlation * 16 / len(planted16[3].window) - enc.normalized) < 1e-12
    assert abs(enc.normalized - enc.window_correlation) <= 1e-6 + enc.smoothing_loss
    assert enc.identity_error <= 1e-9
    assert enc.polynomial.ok
    assert enc.smoothing_loss >= 0
    assert enc.spec.N == 0


def test_encode_nonempty_S():
    g, ph, f = planted_function(27, 5)
    rep = extract_phase(f, 0.9, InverseConfig(frequency_sets=(((1,),),)))
    enc = encode_nilmanifold(rep)
    assert enc.spec.N == 1
    assert enc.identity_error <= 1e-9
    assert enc.polynomial.ok
    assert enc.normalized >= enc.window_correlation - enc.smoothing_loss - 1e-9
    assert abs(correlate(f, enc.spec)) == pytest.approx(enc.correlation, abs=1e-9)


def test_encode_requires_lift():
    g = GroupSpec((16,))
    # a linear phase: every candidate collapses, or the pipeline falls back
    f = DenseFunction(g, e(3 * np.arange(16) / 16), bounded=True)
    rep = extract_phase(f, 0.9)
    if rep.lift is None:
        with pytest.raises(PreconditionError):
            encode_nilmanifold(rep)
    else:
        assert encode_nilmanifold(rep).identity_error <= 1e-9


# -- correlate -------------------------------------------------------------------


def test_correlate_matches_encoding(planted16, encoded16):
    f = planted16[2]
    assert abs(abs(correlate(f, encoded16.spec)) - encoded16.correlation) <= 1e-9


def test_correlate_noise_small():
    g, ph, f = planted_function(25, 7)
    spec = encode_nilmanifold(extract_phase(f, 0.9)).spec
    for seed in range(20):
        noise = random_function(g, np.random.default_rng(100 + seed), unimodular=True)
        assert abs(correlate(noise, spec, checked=False)) <= 5 / np.sqrt(25)


def test_correlate_self_is_real(encoded16, planted16):
    g = planted16[0]
    spec = encoded16.spec
    Fg = np.array([nilseq_eval(spec, g.element(i)) for i in range(16)])
    c = correlate(DenseFunction(g, Fg), spec, x0=(0,))
    assert abs(c.imag) < 1e-12 and c.real >= 0
    assert c.real == pytest.approx(np.mean(np.abs(Fg) ** 2), abs=1e-12)


def test_correlate_wrong_group(encoded16):
    with pytest.raises(ValueError):
        correlate(DenseFunction(GroupSpec((8,)), np.ones(8)), encoded16.spec)

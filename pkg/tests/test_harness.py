import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpcnmf.harness import (CSV_HEADER, INSTRUMENTS, MixtureSpec, SweepSpec, SyntheticSuite,
                            generate_mixture, mean_sdr, read_sweep_csv, run_sweep,
                            synthetic_clips)
from lpcnmf.lpc import train_true_envelope
from lpcnmf.separation import SeparationConfig
from lpcnmf.spectrogram import AudioSignal

SR = 22050


def sig(x, sr=10):
    return AudioSignal(np.asarray(x, dtype=float), sr)


@pytest.fixture(scope="module")
def tiny_suite():
    return SyntheticSuite(pairs=[("low", "high")], n_mixtures=2, duration=2.0,
                          notes_per_instrument=3, clips_per_instrument=3, seed=5).build()


TINY = SeparationConfig(sample_rate=SR, frame_size=1024, hop_size=256, iterations=15,
                        bases_per_instrument=4)


# --------------------------------------------------------------------------
# mixtures

def test_single_note_is_the_placed_track():
    clip = sig([1.0, -2.0, 3.0])
    mix, (truth,) = generate_mixture(MixtureSpec([[clip]], duration=1.0, notes_per_instrument=1,
                                                 seed=4))
    np.testing.assert_array_equal(mix.samples, truth.samples)
    (nz,) = np.nonzero(mix.samples)
    assert len(nz) == 3
    np.testing.assert_array_equal(mix.samples[nz[0]:nz[0] + 3], clip.samples)


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
@settings(max_examples=30, deadline=None)
def test_equal_energy_and_additivity(seed, gain):
    rng = np.random.default_rng(seed)
    a = [sig(rng.standard_normal(5)), sig(rng.standard_normal(3))]
    b = [sig(gain * rng.standard_normal(4))]
    mix, truth = generate_mixture(MixtureSpec([a, b], duration=2.0, notes_per_instrument=3,
                                              seed=seed))
    e1, e2 = (np.sum(t.samples ** 2) for t in truth)
    assert e1 / e2 == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_array_equal(truth[0].samples + truth[1].samples, mix.samples)
    assert len(mix) == 20


def test_mixture_determinism():
    clips = [synthetic_clips(INSTRUMENTS["mid"], 2, SR, 1, 0.3)]
    spec = MixtureSpec(clips, duration=1.0, notes_per_instrument=4, seed=9)
    a, _ = generate_mixture(spec)
    b, _ = generate_mixture(spec)
    assert a.samples.tobytes() == b.samples.tobytes()


def test_repeat_clip_uses_one_clip():
    clips = [sig([1.0, 2.0]), sig([0.0, 5.0, -1.0])]
    _, (track,) = generate_mixture(MixtureSpec([clips], duration=3.0, notes_per_instrument=6,
                                               seed=1, repeat_clip=[True]))
    # oracle: one clip drawn once, then six uniform onsets
    rng = np.random.default_rng(1)
    clip = clips[int(rng.integers(2))].samples
    expected = np.zeros(30)
    for _ in range(6):
        onset = int(rng.integers(0, 30 - len(clip) + 1))
        expected[onset:onset + len(clip)] += clip
    np.testing.assert_allclose(track.samples, expected)


def test_mixture_errors():
    with pytest.raises(ValueError):
        generate_mixture(MixtureSpec([[sig(np.ones(30))]], duration=2.0))
    with pytest.raises(ValueError):
        generate_mixture(MixtureSpec([[sig([1.0])], []], duration=1.0))
    with pytest.raises(ValueError):
        generate_mixture(MixtureSpec([[sig([1.0])], [sig([0.0])]], duration=1.0))


def test_suite_tracks_sum_to_mixture(tiny_suite):
    for mix, truth, train in tiny_suite:
        np.testing.assert_allclose(sum(t.samples for t in truth), mix.samples, atol=1e-12)
        assert len(train) == 2 and len(mix) == 2 * SR


# --------------------------------------------------------------------------
# sweeps

def test_empty_mixture_list_gives_header_only():
    text = run_sweep(SweepSpec("p", [1, 2]), TINY, [])
    assert text == ",".join(CSV_HEADER) + "\n"


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("lpc", [1])
    with pytest.raises(ValueError):
        SweepSpec("p", [])
    with pytest.raises(ValueError):
        SweepSpec("p", [1], repetitions=0)


def test_p_sweep_emits_curve(tiny_suite):
    values = list(range(9))
    text = run_sweep(SweepSpec("p", values), TINY, tiny_suite[:1])
    rows = read_sweep_csv(text)
    means = [r for r in rows if r["mixture"] == "mean"]
    assert [float(r["value"]) for r in means] == values
    assert all(np.isfinite(float(r["SDR"])) for r in means)
    per_source = [r for r in rows if r["mixture"] != "mean"]
    assert len(per_source) == 2 * len(values)
    assert [int(r["row"]) for r in rows] == list(range(len(rows)))


def test_sweep_rows_and_repetition_seeds(tiny_suite):
    text = run_sweep(SweepSpec("bases", [2, 3], repetitions=2, mode="informed"),
                     TINY.replace(seed=7), tiny_suite)
    rows = [r for r in read_sweep_csv(text) if r["mixture"] != "mean"]
    assert len(rows) == 2 * 2 * 2 * 2
    assert {r["seed"] for r in rows} == {"7", "8"}
    # the mean row is the average of the per-source rows for that value
    for value in ("2", "3"):
        sel = [float(r["SDR"]) for r in rows if r["value"] == value]
        (mean,) = [r for r in read_sweep_csv(text) if r["mixture"] == "mean" and r["value"] == value]
        assert float(mean["SDR"]) == pytest.approx(np.mean(sel), abs=1e-5)


def test_failed_cell_is_recorded_and_sweep_continues(tiny_suite):
    mix, truth, train = tiny_suite[0]
    silent = [train[0], AudioSignal(np.zeros(SR), SR)]
    with pytest.raises(ValueError):
        train_true_envelope(silent[1])
    mixtures = [(mix, truth, silent), tiny_suite[1]]
    rows = read_sweep_csv(run_sweep(SweepSpec("p", [5], mode="informed"), TINY, mixtures))
    assert rows[0]["mixture"] == "0" and rows[0]["error"].startswith("ValueError")
    good = [r for r in rows if r["mixture"] == "1"]
    assert len(good) == 2 and all(r["error"] == "" for r in good)
    assert rows[-1]["mixture"] == "mean"


def test_sweep_csv_is_deterministic_with_workers(tiny_suite):
    sweep = SweepSpec("init_mode", ["normal", "sparse"])
    a = run_sweep(sweep, TINY, tiny_suite)
    b = run_sweep(SweepSpec("init_mode", ["normal", "sparse"], workers=2), TINY, tiny_suite)
    assert a == b


@pytest.mark.slow
def test_blind_more_bases_not_worse():
    """Blind SDR with 100 bases per instrument should not fall below 20 bases.

    Measured on 10 synthetic mixtures with seeds 0..9; currently fails on the
    synthetic suite (see the project notes).
    """
    suite = SyntheticSuite(n_mixtures=10).build()
    cfg = SeparationConfig(sample_rate=SR)
    seeds = list(range(10))
    low = mean_sdr("blind", cfg.replace(bases_per_instrument=20), suite, seeds)
    high = mean_sdr("blind", cfg.replace(bases_per_instrument=100), suite, seeds)
    print(f"blind mean SDR: 20 bases {low:.2f} dB, 100 bases {high:.2f} dB")
    assert high >= low

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepbench.audio import AudioClip, power, read_wav, write_wav
from sepbench.errors import (DegenerateSignalError, InsufficientPoolError, InvalidOperatorError,
                             SepbenchError)
from sepbench.scene import (PRESETS, DatasetPreset, EventPool, MixtureScene, PoolEntry, Stem, build_scene,
                            get_preset, perturb_input, read_manifest, render_mixture, render_stems,
                            render_target, scene_from_record, scene_rng, scene_to_record,
                            simulate_dataset, snr_gain)

SR = 44100


def _measured_snrs(stems):
    p0 = power(stems[0])
    return [10 * math.log10(p0 / power(s)) for s in stems]


def test_snr_gain_examples():
    assert snr_gain(0.3, 0.3, 0.0) == 1.0
    assert math.isclose(snr_gain(1.0, 1.0, 10.0), 10 ** -0.5, rel_tol=1e-15)
    with pytest.raises(DegenerateSignalError):
        snr_gain(1.0, 0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 10), st.floats(1e-6, 10), st.floats(-30, 30))
def test_snr_gain_realises_snr(pt, pi, snr):
    g = snr_gain(pt, pi, snr)
    assert math.isclose(10 * math.log10(pt / (pi * g * g)), snr, abs_tol=1e-9)


def test_preset_values():
    assert PRESETS["train"].n_events == (2, 5) and PRESETS["train"].snr_db == (-3.0, 10.0)
    assert PRESETS["audiocaps"].n_events == (2, 2) and PRESETS["audiocaps"].snr_db == (-15.0, 15.0)
    assert PRESETS["esc50"].n_events == (2, 2) and PRESETS["esc50"].snr_db == (0.0, 0.0)
    assert PRESETS["fsd_mix"].n_events == (3, 5) and PRESETS["fsd_mix"].snr_db == (-10.0, 10.0)
    assert PRESETS["asfx"].n_events == (2, 5) and PRESETS["asfx"].snr_db == (-10.0, 10.0)
    assert PRESETS["imitation_mix"].n_events == (2, 4) and PRESETS["imitation_mix"].snr_db == (-3.0, 10.0)
    assert PRESETS["train"].duration_s == 10.0
    with pytest.raises(SepbenchError):
        get_preset("nope")
    with pytest.raises(SepbenchError):
        DatasetPreset("bad", (0, 2), (0, 1))
    with pytest.raises(SepbenchError):
        DatasetPreset("bad", (2, 3), (5, 1))


def test_build_scene_deterministic(pool):
    a = build_scene(pool, PRESETS["train"], np.random.default_rng(7))
    b = build_scene(pool, PRESETS["train"], np.random.default_rng(7))
    assert a == b


def test_train_preset_coverage(pool):
    counts, snrs, ops = set(), [], set()
    for i in range(10_000):
        scene = build_scene(pool, PRESETS["train"], scene_rng(11, i), duration_s=0.25)
        counts.add(len(scene.stems))
        snrs.extend(scene.snr_db_per_stem[1:])
        ops.add(scene.operator)
        assert len({s.category for s in scene.stems}) == len(scene.stems)
        if scene.operator == "remove":
            assert len(scene.target_indices) < len(scene.stems)
    assert counts == {2, 3, 4, 5}
    assert min(snrs) >= -3.0 and max(snrs) <= 10.0
    assert ops == {"extract", "remove"}


def test_esc50_preset(pool):
    for i in range(20):
        scene = build_scene(pool, PRESETS["esc50"], scene_rng(0, i))
        assert len(scene.stems) == 2 and scene.snr_db_per_stem == (0.0, 0.0)
        m = _measured_snrs(render_stems(scene))
        assert abs(m[1]) < 0.1


def test_insufficient_pool(pool):
    small = EventPool([e for e in pool.entries if e.category in ("dog", "rain")], SR)
    with pytest.raises(InsufficientPoolError):
        build_scene(small, PRESETS["asfx"], np.random.default_rng(0))


def test_snr_fidelity(pool):
    checked = 0
    for i in range(200):
        scene = build_scene(pool, PRESETS["asfx"], scene_rng(3, i), duration_s=2.0)
        stems = render_stems(scene)
        for want, got in zip(scene.snr_db_per_stem, _measured_snrs(stems)):
            assert abs(want - got) <= 0.1
        checked += 1
    assert checked == 200


def _single_stem_scene(entry, gain_db=0.0, copies=1):
    audio = EventPool([entry], SR).audio(entry)
    dur = audio.size / SR
    stems = tuple(Stem(entry.path, "c", f"cat{k}", gain_db, 0.0, dur) for k in range(copies))
    return MixtureScene("s", dur, SR, stems, (0,), "extract", (0.0,) * copies, 0), audio


def test_render_single_stem_identity(pool):
    scene, audio = _single_stem_scene(pool.entries[0])
    mix = render_mixture(scene).data
    assert np.max(np.abs(mix - audio)) <= 2.0 ** -25


def test_render_two_identical_stems(pool):
    scene, audio = _single_stem_scene(pool.entries[0], copies=2)
    mix = render_mixture(scene).data
    assert np.max(np.abs(audio)) * 2 <= 1.0  # the pool is written at peak 0.5, no normalisation
    assert np.max(np.abs(mix - 2 * audio)) <= 2.0 ** -24


def test_superposition_and_complement(pool):
    for i in range(30):
        scene = build_scene(pool, PRESETS["train"], scene_rng(5, i))
        stems = render_stems(scene)
        mix = render_mixture(scene, stems).data
        assert np.array_equal(mix, stems.sum(axis=0))
        ext = render_target(scene, "extract", stems).data
        if scene.complement_indices:
            rem = render_target(scene, "remove", stems).data
            assert np.array_equal(ext + rem, mix)
            assert np.array_equal(rem, mix - ext)
        else:
            assert np.array_equal(ext, mix)
            with pytest.raises(InvalidOperatorError):
                render_target(scene, "remove", stems)
        assert np.max(np.abs(mix)) <= 1.0


def test_full_subset_extract_equals_mixture(pool):
    scene = build_scene(pool, PRESETS["asfx"], np.random.default_rng(1))
    full = MixtureScene(scene.id, scene.duration_s, scene.sample_rate, scene.stems,
                        tuple(range(len(scene.stems))), "extract", scene.snr_db_per_stem, 0)
    assert np.array_equal(render_target(full, "extract").data, render_mixture(full).data)
    with pytest.raises(InvalidOperatorError):
        render_target(full, "remove")
    empty = MixtureScene(scene.id, scene.duration_s, scene.sample_rate, scene.stems, (), "extract",
                         scene.snr_db_per_stem, 0)
    with pytest.raises(SepbenchError):
        render_target(empty, "extract")


def test_peak_normalisation_shared(pool):
    scene, audio = _single_stem_scene(pool.entries[0], gain_db=12.0, copies=2)
    stems = render_stems(scene)
    assert np.max(np.abs(stems.sum(axis=0))) <= 1.0
    assert np.array_equal(render_target(scene, "extract", stems).data, stems[0])


def test_perturb_input(rng):
    clip = AudioClip.mono(np.sin(np.arange(20000) * 0.03), SR)
    assert perturb_input(clip, math.inf, rng) is clip
    assert perturb_input(clip, None, rng) is clip
    for _ in range(100):
        out = perturb_input(clip, 40.0, rng)
        noise = out.data - clip.data
        assert abs(10 * math.log10(power(clip.data) / power(noise)) - 40.0) <= 0.1
        assert not np.array_equal(out.data, clip.data)
    with pytest.raises(DegenerateSignalError):
        perturb_input(AudioClip.mono(np.zeros(10), SR), 40.0, rng)


def test_simulate_empty(pool, tmp_path):
    path = simulate_dataset(pool, PRESETS["train"], 0, 0, tmp_path / "o")
    assert path.read_text() == ""
    assert not list((tmp_path / "o").rglob("*.wav"))


def test_simulate_deterministic_and_complete(pool, tmp_path):
    a = simulate_dataset(pool, PRESETS["train"], 4, 9, tmp_path / "a", duration_s=2.0)
    b = simulate_dataset(pool, PRESETS["train"], 4, 9, tmp_path / "b", duration_s=2.0, threads=3)
    assert a.read_bytes() == b.read_bytes()
    for rec in read_manifest(a):
        mix = read_wav(rec["mixture"]).data
        ext = read_wav(rec["target_extract"]).data
        if rec["target_remove"]:
            assert np.array_equal(ext + read_wav(rec["target_remove"]).data, mix)
        twin = rec["mixture"].replace(str(tmp_path / "a"), str(tmp_path / "b"))
        assert open(rec["mixture"], "rb").read() == open(twin, "rb").read()
    raw = json.loads(a.read_text().splitlines()[0])
    for key in ("id", "mixture", "target_extract", "target_remove", "stems", "target_indices", "operator",
                "prompt", "snr_db_per_stem", "normalization", "seed"):
        assert key in raw
    assert set(raw["stems"][0]) >= {"path", "caption", "category", "gain_db", "offset_s"}


def test_manifest_record_roundtrip(pool):
    scene = build_scene(pool, PRESETS["fsd_mix"], np.random.default_rng(4))
    assert scene_from_record(json.loads(json.dumps(scene_to_record(scene)))) == scene


def test_imitation_mix_structure(pool, tmp_path):
    path = simulate_dataset(pool, PRESETS["imitation_mix"], 12, 2, tmp_path / "im", duration_s=1.0)
    for rec in read_manifest(path):
        assert len(rec["target_indices"]) == 1
        assert 1 <= len(rec["stems"]) - 1 <= 3


def test_simulate_failure_leaves_nothing(pool, tmp_path):
    silent = tmp_path / "mute__0.wav"
    write_wav(AudioClip.mono(np.zeros(SR), SR), silent)
    entries = [e for e in pool.entries if e.category in ("dog", "rain", "bell")]
    bad = EventPool(entries + [PoolEntry(str(silent), ("nothing",), "mute")], SR)
    out = tmp_path / "fail"
    with pytest.raises(DegenerateSignalError):
        simulate_dataset(bad, DatasetPreset("p", (2, 2), (0, 0), 1.0), 40, 0, out)
    assert not [p for p in out.rglob("*") if p.is_file()]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(PRESETS)), st.integers(0, 10 ** 6))
def test_scene_invariants(pool, name, seed):
    preset = PRESETS[name]
    scene = build_scene(pool, preset, np.random.default_rng(seed), duration_s=0.5)
    n = len(scene.stems)
    assert preset.n_events[0] <= n <= preset.n_events[1]
    assert len({s.category for s in scene.stems}) == n
    assert scene.target_indices and set(scene.target_indices) <= set(range(n))
    if scene.operator == "remove":
        assert len(scene.target_indices) < n
    for s in scene.stems:
        assert s.offset_s >= 0 and s.offset_s + s.duration_s <= scene.duration_s + 1e-9
        assert math.isfinite(s.gain_db)
    lo, hi = preset.snr_db
    assert all(lo <= v <= hi for v in scene.snr_db_per_stem[1:])

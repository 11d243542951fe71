import numpy as np
import pytest

from spane_kit.corpus import load_manifest, read_fmat, read_wav
from spane_kit.prosody import energy_track, f0_track, jitter_stats, segment_pauses, summarize
from spane_kit.synth import (GROUP_PRESETS, EnergyGain, F0Smooth, FrameModel, GroupDistribution,
                             JitterRemove, PausePreserve, SynthError, TranscriptResynth,
                             UtteranceSpec, degrade, parse_policy, read_spec_file, synth_cohort,
                             synth_utterance, write_cohort, write_spec_file, write_targets)


def test_plain_150hz():
    w = synth_utterance(UtteranceSpec(f0_base=150, duration_s=1.5), 0)
    tr = f0_track(w)
    assert abs(np.median(tr.f0[tr.voiced]) - 150) <= 2
    j_avg, j_std, _ = jitter_stats(tr)
    assert j_avg < 1e-3 and j_std < 1e-3


def test_pauses_found():
    spec = UtteranceSpec(f0_base=150, duration_s=2.5, pauses=((0.5, 0.3), (1.2, 0.5)))
    w = synth_utterance(spec, 0)
    seg = segment_pauses(energy_track(w), f0_track(w).voiced)
    assert len(seg.pauses) == 2
    for (a, b), (onset, dur) in zip(seg.pauses, spec.pauses):
        assert abs(a - onset) <= 0.02 and abs(b - a - dur) <= 0.02


@pytest.mark.parametrize("seed", range(3))
def test_jitter_calibration(seed):
    w = synth_utterance(UtteranceSpec(f0_base=130, duration_s=2.0, jitter_pct=2.0), seed)
    assert abs(jitter_stats(f0_track(w))[0] - 0.02) <= 0.005


def test_spec_validation():
    with pytest.raises(SynthError):
        UtteranceSpec(f0_base=40, duration_s=1)
    with pytest.raises(SynthError):
        UtteranceSpec(f0_base=150, duration_s=1, pauses=((0.5, 0.3), (0.6, 0.1)))
    with pytest.raises(SynthError):
        UtteranceSpec(f0_base=150, duration_s=1, pauses=((0.8, 0.5),))


def test_spec_dict_roundtrip():
    spec = UtteranceSpec(f0_base=150, duration_s=2.0, jitter_pct=1.2, pauses=((0.5, 0.25),))
    assert UtteranceSpec.from_dict(spec.to_dict()) == spec


def test_cohort_jitter_separates_groups():
    groups = {"HC": GroupDistribution(jitter_pct=(0.0, 1.0)),
              "PD": GroupDistribution(jitter_pct=(3.0, 5.0))}
    c = synth_cohort(5, 5, groups, seed=2, utterances_per_speaker=1)
    jit = {r.id: summarize(synth_utterance(c.specs[r.id], c.seeds[r.id])).jitter_avg
           for r in c.records}
    hc = [jit[r.id] for r in c.records if r.group == "HC"]
    pd = [jit[r.id] for r in c.records if r.group == "PD"]
    assert max(hc) < min(pd)


def test_cohort_too_small():
    with pytest.raises(SynthError):
        synth_cohort(1, 1)


def test_cohort_deterministic():
    a, b = synth_cohort(2, 2, seed=5), synth_cohort(2, 2, seed=5)
    assert a.specs == b.specs and a.records == b.records
    uid = a.records[0].id
    wa = synth_utterance(a.specs[uid], a.seeds[uid])
    wb = synth_utterance(b.specs[uid], b.seeds[uid])
    assert wa.samples.tobytes() == wb.samples.tobytes()


def test_cohort_genders_and_presets():
    c = synth_cohort(3, 3, GROUP_PRESETS["marker"], genders="M")
    assert {r.gender for r in c.records} == {"M"}
    with pytest.raises(SynthError):
        synth_cohort(2, 2, genders="X")


JITTERED = UtteranceSpec(f0_base=140, duration_s=2.4, f0_var=20, jitter_pct=1.5, tremor_depth=6,
                         pauses=((0.6, 0.3), (1.4, 0.5)))


@pytest.fixture(scope="module")
def base():
    return summarize(synth_utterance(JITTERED, 3))


def test_f0_smooth_reduces_derivative(base):
    s = summarize(degrade(JITTERED, [F0Smooth(0.2)], 3))
    assert s.f0_deriv_avg * 5 < base.f0_deriv_avg


def test_energy_gain(base):
    s = summarize(degrade(JITTERED, [EnergyGain(6.0)], 3))
    assert abs(s.energy_avg - base.energy_avg - 6.0) <= 0.3
    assert abs(s.pause_dur_avg - base.pause_dur_avg) <= 0.02
    assert s.pause_count == base.pause_count


def test_energy_gain_spread_is_seeded():
    a = degrade(JITTERED, [EnergyGain(0.0, 4.0)], 1).samples
    b = degrade(JITTERED, [EnergyGain(0.0, 4.0)], 2).samples
    assert np.array_equal(a, degrade(JITTERED, [EnergyGain(0.0, 4.0)], 1).samples)
    assert not np.isclose(np.abs(a).max(), np.abs(b).max())
    with pytest.raises(SynthError):
        EnergyGain(6.0, -1.0)


def test_jitter_remove_and_pause_preserve():
    flat = UtteranceSpec(f0_base=140, duration_s=2.4, jitter_pct=1.5, pauses=((0.6, 0.3),))
    before = summarize(synth_utterance(flat, 3))
    s = summarize(degrade(flat, [JitterRemove(), PausePreserve()], 3))
    assert before.jitter_avg > 0.01 and s.jitter_avg < 1e-3
    assert abs(s.pause_dur_avg - before.pause_dur_avg) <= 0.02


def test_transcript_resynth():
    pol = TranscriptResynth(target_f0=120.0)
    s = summarize(degrade(JITTERED, [pol], 3))
    assert s.jitter_avg < 2e-3
    assert s.pause_dur_std < 0.01
    assert abs(s.f0_avg - 120) <= 2


def test_parse_policy():
    assert parse_policy("jitter_remove") == JitterRemove()
    assert parse_policy({"name": "energy_gain", "db": 3}) == EnergyGain(3.0)
    with pytest.raises(SynthError):
        parse_policy("reverb")
    with pytest.raises(SynthError):
        parse_policy({"name": "f0_smooth", "width": 3})


def test_frame_model_scramble_changes_identity():
    fm = FrameModel(seed=1)
    a = fm.utterance("u1", "S1", "M", 50)
    b = fm.randomize_offset("u1", a, "S1", "M")
    shift = (b.frames - a.frames).mean(axis=0)
    assert a.frames.shape == b.frames.shape
    assert np.allclose(b.frames - a.frames, shift, atol=1e-5)
    assert np.linalg.norm(shift) > 0.5


def test_write_cohort_and_targets(tmp_path):
    c = synth_cohort(2, 2, seed=0, utterances_per_speaker=1)
    fm = FrameModel()
    recs = write_cohort(c, tmp_path, frame_model=fm)
    assert load_manifest(tmp_path / "manifest.jsonl") == recs
    r = recs[0]
    assert read_wav(tmp_path / r.audio_path).sample_rate == 16000
    assert read_fmat(tmp_path / r.feature_path).frames.shape[1] == fm.dim
    deg = write_cohort(c, tmp_path, [JitterRemove()], fm, name="anon", scramble=True)
    assert (tmp_path / "manifest_anon.jsonl").exists() and deg[0].id == r.id
    tg = write_targets(fm, tmp_path, n_speakers=2, utterances=2, n_frames=10)
    assert len(tg) == 4 and (tmp_path / "manifest_targets.jsonl").exists()
    write_spec_file(c, tmp_path / "specs.jsonl")
    specs, seeds = read_spec_file(tmp_path / "specs.jsonl")
    assert specs == c.specs and seeds == c.seeds

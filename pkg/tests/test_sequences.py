import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from dressedspin.sequences import (CouplingVector, FrameSchedule, Pulse, PulseSequence,
                                   SequenceError, Wait, auto_modulation, average_hamiltonian,
                                   balanced_su2, builtin_sequence, cxy8, effective_field,
                                   field_ratio, format_sequence, parse_sequence_file,
                                   parse_sequence_text, toggling_frames, write_sequence_file, xy8)

ONAXIS = CouplingVector([1.0, 1.0, -1.0])


def test_pulse_axis_validation():
    with pytest.raises(SequenceError):
        Pulse("z", np.pi)
    with pytest.raises(SequenceError):
        Wait(-1.0)


def test_pi_half_about_y_active():
    R = Pulse("y", np.pi / 2).rotation()
    np.testing.assert_allclose(R @ [0, 0, 1], [1, 0, 0], atol=1e-15)


@pytest.mark.parametrize("name,n_pulses", [("xy8", 8), ("cxy8", 72), ("balanced_su2", 4)])
def test_builtins_cyclic(name, n_pulses):
    seq = builtin_sequence(name)
    assert len(seq.pulses) == n_pulses
    assert seq.is_cyclic()


def test_unknown_builtin():
    with pytest.raises(SequenceError):
        builtin_sequence("xy16")


@pytest.mark.parametrize("seq", [xy8(), cxy8()])
def test_pi_trains_preserve_xxz_and_cancel_static_field(seq):
    frames = toggling_frames(seq)
    avg = average_hamiltonian(CouplingVector([1.0, 1.0, -1.0], [0, 0, 0.7]), frames)
    np.testing.assert_allclose(avg.g, [1, 1, -1], atol=1e-12)
    np.testing.assert_allclose(avg.f, 0.0, atol=1e-12)
    assert field_ratio(frames) == pytest.approx(1.0, abs=1e-12)


def test_balanced_schedule_is_heisenberg():
    frames = toggling_frames(balanced_su2())
    avg = average_hamiltonian(ONAXIS, frames, require_xxz=True)
    np.testing.assert_allclose(avg.g, [1 / 3] * 3, atol=1e-12)
    np.testing.assert_allclose(frames.weights, [1 / 6, 1 / 6, 1 / 3, 1 / 6, 1 / 6])
    assert field_ratio(frames) == pytest.approx(1 / np.sqrt(3), abs=1e-12)


def test_period_independent_average():
    a = average_hamiltonian(ONAXIS, toggling_frames(balanced_su2(0.1)))
    b = average_hamiltonian(ONAXIS, toggling_frames(balanced_su2(7.0)))
    np.testing.assert_allclose(a.g, b.g, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
def test_trace_preserved_random_schedules(seed, k):
    rng = np.random.default_rng(seed)
    rots = Rotation.random(k, random_state=seed).as_matrix()
    frames = FrameSchedule.from_weights(rots, rng.random(k) + 0.01)
    native = CouplingVector(rng.standard_normal(3))
    assert average_hamiltonian(native, frames).trace == pytest.approx(native.trace, abs=1e-12)


def test_require_xxz_raises_on_offdiagonal():
    R = Rotation.from_rotvec([0.3, 0.2, 0.1]).as_matrix()
    frames = FrameSchedule.from_weights([R], [1.0])
    with pytest.raises(SequenceError):
        average_hamiltonian(CouplingVector([1, 2, 3]), frames, require_xxz=True)


def test_frame_schedule_rejects_non_orthogonal():
    with pytest.raises(SequenceError):
        FrameSchedule(np.array([np.diag([1, 1, 2.0])]), [1.0])


def test_empty_and_pulse_only_sequences():
    with pytest.raises(SequenceError):
        toggling_frames(PulseSequence([]))
    with pytest.raises(SequenceError):
        toggling_frames(PulseSequence([Pulse("x", np.pi)]))


def test_auto_modulation_xy8_alternates():
    mod = auto_modulation(toggling_frames(xy8()))
    np.testing.assert_array_equal(mod, [1, -1, 1, -1, 1, -1, 1, -1, 1])


def test_effective_field_modulation_length():
    frames = toggling_frames(xy8())
    with pytest.raises(SequenceError):
        effective_field(1.0, frames, [1, -1])


def test_unmodulated_field_cancels_under_xy8():
    np.testing.assert_allclose(effective_field(1.0, toggling_frames(xy8())), 0.0, atol=1e-12)


def test_scaled_keeps_structure():
    s = cxy8().scaled(7.2)
    assert s.period == pytest.approx(7.2)
    assert len(s.pulses) == 72


def test_text_round_trip(tmp_path):
    seq = balanced_su2(0.25)
    path = tmp_path / "bal.seq"
    write_sequence_file(seq, path)
    assert parse_sequence_file(path) == seq
    assert parse_sequence_text(format_sequence(seq)) == seq


def test_parse_error_cites_line():
    with pytest.raises(SequenceError, match="seq.txt:3"):
        parse_sequence_text("WAIT 1\nPULSE x 90\nPULSE z 90\n", source="seq.txt")
    with pytest.raises(SequenceError):
        parse_sequence_text("# only a comment\n")

import math
import struct
import zlib

import pytest

import spq


def test_geometry_and_force():
    g = spq.ScissorGeometry()
    assert spq.transformed_segment_count(g) == 5.0
    assert spq.extension_from_span(0.048, g) == pytest.approx(0.18, abs=1e-12)
    strong = spq.SpineConfig.preset("strong")
    assert strong.ks == 2352.0
    assert spq.spine_force(0.18, strong) == pytest.approx(42.336, abs=1e-9)
    lin, nonlin = spq.force_decomposition(0.18, strong)
    assert lin == pytest.approx(169.344)
    assert nonlin == pytest.approx(-127.008)


def test_peak_matches_grid():
    strong = spq.SpineConfig.preset("strong")
    h_peak, f_peak = spq.peak_extension(strong)
    grid = [0.08 + i * 1e-5 for i in range(12001)]
    best = max(grid, key=lambda h: spq.spine_force(h, strong))
    assert abs(h_peak - best) < 1e-4
    assert f_peak == pytest.approx(43.7634, abs=1e-3)


def test_errors_map_to_python_exceptions():
    with pytest.raises(spq.DomainError):
        spq.extension_from_span(0.07, spq.ScissorGeometry())
    with pytest.raises(ValueError):
        spq.SpineConfig.preset("unknown")


def test_cusum_alarm_on_third_sample():
    g, alarms = 0.0, []
    for _ in range(3):
        g, alarm = spq.cusum_update(0.12, g, 0.115)
        alarms.append(alarm)
    assert alarms == [False, False, True]


def test_cmd_frame_bytes():
    frame = spq.encode_cmd(2, 1, 0)
    body = b"SPQ1" + bytes([1, 2]) + struct.pack("<IQH", 1, 0, 4) + bytes([2, 0, 0, 0])
    assert frame == body + struct.pack("<I", zlib.crc32(body))
    assert spq.decode_frame(frame) == {"seq": 1, "t_us": 0, "type": "cmd", "cmd": 2}
    assert spq.decode_frame(b"") == {"error": "truncated"}
    flipped = bytearray(frame)
    flipped[20] ^= 0x01
    assert spq.decode_frame(bytes(flipped)) == {"error": "bad_crc"}


def test_lock_scenarios():
    expected = {"a": ("locked", 0, 0), "b": ("unlocked", 0, 0), "c": ("locked", 1, 0), "d": ("unlocked", 0, 1)}
    for name, (state, engage, retract) in expected.items():
        result = spq.locktest(name)
        assert result["schema_version"] == 1
        assert (result["final_state"], result["engage_count"], result["retract_count"]) == (state, engage, retract)


def test_characterize_offsets():
    run = spq.characterize(trials=1, friction_f0=3.0, noise_sigma=0.0)
    for s in run["samples"]:
        sign = 1.0 if s["direction"] == "compression" else -1.0
        assert s["force_n"] - s["model_n"] == pytest.approx(sign * 3.0, abs=1e-9)


def test_jump_trial_runs():
    batch = spq.jump_experiment("compliant", "nominal", trials=1, seed=3)
    metrics = batch["trials"][0]["metrics"]
    assert batch["fault_count"] == 0
    assert metrics["success"]
    assert 0.0 < metrics["max_height_m"] < 1.0
    assert math.isfinite(metrics["peak_landing_decel_mps2"])

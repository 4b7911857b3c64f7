import numpy as np
import pytest

from bccpolar.codec import (
    ChainConfig, bob_decode, encode_session, eve_decode, message_errors, random_messages,
    read_bits, read_transcript, write_bits, write_transcript,
)
from bccpolar.experiments import noiseless_roundtrip
from bccpolar.sets import IndexSetFamily, build_sets, delta_n, estimate_profiles
from bccpolar.source import PRESETS
from bccpolar.transform import transform

from conftest import exact_config, exact_sets


def explicit_family():
    """Hand-made N = 8 family where every chaining path is active."""
    return IndexSetFamily(
        8, 0.25, delta_n(8), h_u=range(1, 8), v_u=range(2, 8), h_uy=[1, 2, 3], h_uz=[6, 7],
        v_vu=range(1, 8), v_vuz=[4, 5, 6, 7], h_vuy=[0, 1, 5], v_vuy=[5], v_xv=[3, 6, 7], v_xvz=[7],
    )


def test_explicit_family_exercises_chaining():
    sets = explicit_family()
    assert sets.a_uyz.size > 0 and sets.i_uy_only.size > 0
    assert sets.b_vuy.size > 0 and sets.phi_vu.size > 0
    assert sets.psi_u1.size > 0 and sets.phi_u.size > 0


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_rules_partition_and_copy_targets(k):
    cfg = ChainConfig(PRESETS["bec-bsc"](), explicit_family(), k)
    for (vec, i), rule in cfg.rules.items():
        part = rule.partition()  # raises on overlap
        assert part.shape == (8,)
        for a in rule.copies():
            src_vec, j = a.label
            assert src_vec == vec and 1 <= j < i


def test_prefix_randomness_is_reused():
    cfg = ChainConfig(PRESETS["bec-bsc"](), explicit_family(), 3)
    tr = encode_session(cfg, random_messages(cfg, 50, 0), 1)
    vx = cfg.sets.v_xvz
    for i in range(1, 3):
        np.testing.assert_array_equal(tr.t[i][:, vx], tr.t[0][:, vx])
    np.testing.assert_array_equal(tr.b[1][:, cfg.sets.b_vuy], tr.b[0][:, cfg.sets.psi_vu])


def test_seed_and_public_sizes():
    cfg = ChainConfig(PRESETS["bec-bsc"](), explicit_family(), 3)
    tr = encode_session(cfg, random_messages(cfg, 4, 0), 1)
    assert tr.seed_bits() == cfg.seed_size() == cfg.sets.psi_vu.size + 3 * cfg.sets.phi_vu.size
    assert tr.public_bits() == cfg.public_size()


def test_raw_vectors_are_transforms():
    cfg = exact_config("bec-bsc", 8, 2)
    tr = encode_session(cfg, random_messages(cfg, 20, 0), 2)
    np.testing.assert_array_equal(tr.u, transform(tr.a))
    np.testing.assert_array_equal(tr.x, transform(tr.t))
    assert tr.ok.all()


def test_messages_are_embedded():
    cfg = exact_config("bec-bsc", 8, 2)
    msgs = random_messages(cfg, 30, 5)
    tr = encode_session(cfg, msgs, 6)
    for i in (1, 2):
        pos = cfg.rules["b", i].message(("S", i))
        np.testing.assert_array_equal(tr.b[i - 1][:, pos], msgs["S", i])


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_noiseless_roundtrip_explicit_family(k):
    cfg = ChainConfig(PRESETS["bec-bsc"](), explicit_family(), k)
    errs = noiseless_roundtrip(cfg, 300, k)
    assert errs == {"common_bob": 0, "common_eve": 0, "secret_private": 0, "encoder_dead": 0}


@pytest.mark.parametrize("preset", ["bsc-pair", "noiseless-bob", "bec-bsc"])
def test_noiseless_roundtrip_presets(preset):
    for N in (4, 8):
        cfg = exact_config(preset, N, 2)
        errs = noiseless_roundtrip(cfg, 200, N)
        assert sum(errs.values()) == 0, (N, errs)


def test_noiseless_bob_decodes_secret():
    src = PRESETS["noiseless-bob"]()
    sets = build_sets(estimate_profiles(src, 64, samples=2000, rng=0))
    cfg = ChainConfig(src, sets, 2)
    msgs = random_messages(cfg, 200, 1)
    tr = encode_session(cfg, msgs, 2)
    dec = bob_decode(cfg, tr.x, tr.public, tr.seed)
    assert not message_errors(cfg, msgs, dec.messages, "OSM").any()


def test_eve_with_noiseless_common_layer():
    src = PRESETS["noiseless-common"]()
    _, sets = exact_sets("noiseless-common", 8)
    cfg = ChainConfig(src, sets, 2)
    msgs = random_messages(cfg, 100, 1)
    tr = encode_session(cfg, msgs, 2)
    dec = eve_decode(cfg, tr.x, tr.public)
    assert cfg.message_length("O", 1) > 0
    assert not message_errors(cfg, msgs, dec.messages, "O").any()


def test_transcript_roundtrip(tmp_path):
    cfg = exact_config("bec-bsc", 8, 2)
    tr = encode_session(cfg, random_messages(cfg, 9, 0), 1)
    tr.y, tr.z = tr.x.copy(), tr.x.copy()
    path = tmp_path / "t.bin"
    write_transcript(path, tr, cfg.sets.digest())
    head, sec = read_transcript(path)
    assert head == {"N": 8, "k": 2, "batch": 9, "sets_sha256": cfg.sets.digest().hex()}
    for name in ("a", "b", "t", "x", "y", "z", "psi_u1", "phi_u", "ok"):
        np.testing.assert_array_equal(sec[name], np.asarray(getattr(tr, name), dtype=np.uint8))
    np.testing.assert_array_equal(sec["S/2"], tr.messages["S", 2])
    data = path.read_bytes()
    path.write_bytes(data[:-3])
    with pytest.raises(ValueError, match="truncated"):
        read_transcript(path)
    path.write_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(ValueError, match="not a transcript"):
        read_transcript(path)


def test_bits_file(tmp_path):
    bits = np.array([1, 0, 0, 1, 1], dtype=np.uint8)
    write_bits(tmp_path / "m.txt", bits)
    np.testing.assert_array_equal(read_bits(tmp_path / "m.txt"), bits)
    (tmp_path / "bad.txt").write_text("0102")
    with pytest.raises(ValueError):
        read_bits(tmp_path / "bad.txt")


def test_message_errors_counts_any_block():
    cfg = exact_config("bec-bsc", 8, 2)
    msgs = random_messages(cfg, 5, 0)
    dec = {key: val.copy() for key, val in msgs.items()}
    assert not message_errors(cfg, msgs, dec, "OSM").any()
    if dec["S", 2].shape[1]:
        dec["S", 2][3, 0] ^= 1
        assert message_errors(cfg, msgs, dec, "S").tolist() == [False, False, False, True, False]

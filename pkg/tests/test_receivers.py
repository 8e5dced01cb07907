import numpy as np
import pytest

from rsma_linklab import bicm, fec
from rsma_linklab.errors import DomainError
from rsma_linklab.receivers import (
    DELAY_NONE,
    DELAY_SIC,
    ChannelState,
    ReceiverKind,
    StreamCodec,
    complexity_report,
    complexity_table,
    receive,
    receive_many,
)

RSMA_KINDS = [k for k in ReceiverKind if k.is_rsma]
SIC_KINDS = [k for k in ReceiverKind if k.is_sic]


def transmission(seed, snr_db, n_blocks=4, n_symbols=128, common="QPSK", private="QPSK",
                 rates=(0.5, 0.3), gc=1.0 + 0.2j, gp=0.5 - 0.1j):
    gen = np.random.default_rng(seed)
    cc = StreamCodec.build(n_symbols, rates[0], common, interleaver_seed=5)
    pc = StreamCodec.build(n_symbols, rates[1], private, interleaver_seed=9)
    bc = gen.integers(0, 2, size=(n_blocks, cc.info_length), dtype=np.uint8)
    bp = gen.integers(0, 2, size=(n_blocks, pc.info_length), dtype=np.uint8)
    xc, xp = cc.modulate(bc), pc.modulate(bp)
    shape = (n_blocks, n_symbols)
    state = ChannelState(private_gain=np.full(shape, gp), common_gain=np.full(shape, gc))
    nv = 10 ** (-snr_db / 10)
    noise = np.sqrt(nv / 2) * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape))
    y = gc * xc + gp * xp + noise
    idx = bicm.symbol_indices(cc.coded_bits(bc), cc.constellation)
    return dict(y=y, state=state, cc=cc, pc=pc, bc=bc, bp=bp, nv=nv, xc=xc, idx=idx)


class TestKinds:
    def test_parse(self):
        assert ReceiverKind.parse("Soft_CWIC1") is ReceiverKind.SOFT_CWIC1
        assert ReceiverKind.parse(ReceiverKind.SOFT_SLIC) is ReceiverKind.SOFT_SLIC
        with pytest.raises(DomainError):
            ReceiverKind.parse("turbo")

    def test_classification(self):
        assert {k.value for k in SIC_KINDS} == {"hard-cwic", "soft-cwic1", "soft-cwic2"}
        assert not ReceiverKind.SDMA_JOINT.is_rsma


class TestCodec:
    def test_lengths(self):
        c = StreamCodec.build(512, 0.345, "16QAM", 3)
        assert c.code.transmit_length == 2048 and c.n_symbols == 512
        assert c.info_length == round(0.345 * 2048)

    def test_modulate_decode_round_trip(self, rng):
        c = StreamCodec.build(64, 0.5, "16QAM", 3)
        bits = rng.integers(0, 2, size=(2, c.info_length), dtype=np.uint8)
        x = c.modulate(bits)
        llr = bicm.demap_marginal(x, 1.0, 1e-3, c.constellation)
        res = c.decode(llr)
        np.testing.assert_array_equal(res.hard_info, bits)
        np.testing.assert_array_equal(c.posterior_llrs(res) < 0, c.coded_bits(bits).astype(bool))


class TestReceive:
    @pytest.mark.parametrize("kind", RSMA_KINDS)
    def test_noiseless(self, kind):
        t = transmission(1, 40.0)
        out = receive(kind, t["y"], t["state"], t["pc"], t["cc"], noise_var=t["nv"])
        np.testing.assert_array_equal(out.common_bits, t["bc"])
        np.testing.assert_array_equal(out.private_bits, t["bp"])
        assert out.kind is kind

    @pytest.mark.parametrize("common", ["QPSK", "16QAM"])
    def test_genie_is_perfect_sic(self, common):
        t = transmission(2, 3.0, common=common)
        clean = t["y"] - t["state"].common_gain * t["xc"]
        llr = bicm.demap_marginal(clean, t["state"].private_gain, np.full(clean.shape, t["nv"]), t["pc"].constellation)
        ref = t["pc"].decode(llr)
        outs = receive_many(SIC_KINDS, t["y"], t["state"], t["pc"], t["cc"], noise_var=t["nv"], genie_common=t["idx"])
        for kind in SIC_KINDS:
            np.testing.assert_array_equal(outs[kind].private_bits, ref.hard_info)
            np.testing.assert_allclose(outs[kind].private_llrs, ref.info_llrs, atol=1e-9)

    def test_sdma_single_user_is_bicm_chain(self):
        t = transmission(3, 2.0)
        interf = [(np.full(t["y"].shape, 0.3 + 0.3j), "QPSK")]
        state = ChannelState(private_gain=t["state"].private_gain, interference=tuple(interf))
        out = receive("sdma-single-user", t["y"], state, t["pc"], noise_var=t["nv"])
        llr = bicm.demap_marginal(t["y"], t["state"].private_gain, t["nv"] + 0.18, "QPSK")
        ref = fec.bp_decode(t["pc"].code, bicm.deinterleave(llr, t["pc"].interleaver_seed))
        np.testing.assert_array_equal(out.private_bits, ref.hard_info)
        np.testing.assert_array_equal(out.private_llrs, ref.info_llrs)
        assert out.common_bits is None

    def test_sdma_joint_uses_interference_alphabet(self):
        gen = np.random.default_rng(4)
        pc = StreamCodec.build(128, 0.5, "QPSK", 9)
        bits = gen.integers(0, 2, size=(3, pc.info_length), dtype=np.uint8)
        other = bicm.map_bits(gen.integers(0, 2, size=(3, 256)), "QPSK")
        gi = 0.9
        y = 0.6 * pc.modulate(bits) + gi * other + 0.05 * (gen.standard_normal((3, 128)) + 1j * gen.standard_normal((3, 128)))
        state = ChannelState(private_gain=np.full((3, 128), 0.6), interference=((np.full((3, 128), gi), "QPSK"),))
        joint = receive("sdma-joint", y, state, pc, noise_var=0.005)
        np.testing.assert_array_equal(joint.private_bits, bits)

    def test_wrong_common_codeword_breaks_hard_cancellation(self):
        t = transmission(8, 10.0, n_blocks=20, rates=(0.6, 0.3))
        wrong = np.random.default_rng(0).integers(0, 4, size=t["idx"].shape)
        hard = receive("hard-cwic", t["y"], t["state"], t["pc"], t["cc"], noise_var=t["nv"], genie_common=wrong)
        soft = receive("soft-cwic1", t["y"], t["state"], t["pc"], t["cc"], noise_var=t["nv"])
        assert np.mean(hard.private_bits != t["bp"]) >= 0.1
        assert np.mean(soft.private_bits != t["bp"]) <= 1e-2

    def test_receive_many_matches_single(self):
        t = transmission(5, 6.0)
        many = receive_many(RSMA_KINDS, t["y"], t["state"], t["pc"], t["cc"], noise_var=t["nv"])
        for kind in RSMA_KINDS:
            one = receive(kind, t["y"], t["state"], t["pc"], t["cc"], noise_var=t["nv"])
            np.testing.assert_array_equal(many[kind].private_llrs, one.private_llrs)
            np.testing.assert_array_equal(many[kind].common_bits, one.common_bits)

    def test_decoder_options_forwarded(self):
        t = transmission(6, 0.0)
        out = receive("hard-cwic", t["y"], t["state"], t["pc"], t["cc"], noise_var=t["nv"],
                      max_iters=3, early_exit=False)
        assert np.all(out.diagnostics["private_iterations"] == 3)
        assert np.all(out.diagnostics["common_iterations"] == 3)

    def test_shape_errors(self):
        t = transmission(7, 10.0)
        with pytest.raises(DomainError):
            receive("hard-cwic", t["y"][0], t["state"], t["pc"], t["cc"])
        with pytest.raises(DomainError):
            receive("hard-cwic", t["y"], t["state"], t["pc"], None)
        with pytest.raises(DomainError):
            receive("hard-cwic", t["y"][:, :64], t["state"], t["pc"], t["cc"])


class TestComplexity:
    @pytest.mark.parametrize("xc,xp", [("QPSK", "QPSK"), ("16QAM", "QPSK")])
    def test_table(self, xc, xp):
        f, b = 8, 512
        mc, mp = bicm.constellation(xc).order, bicm.constellation(xp).order
        lc = bicm.constellation(xc).bits_per_symbol
        expected = {
            ReceiverKind.HARD_CWIC: (mc + mp, b * lc, DELAY_SIC),
            ReceiverKind.SOFT_CWIC1: (mc * mp, f * b * lc, DELAY_SIC),
            ReceiverKind.SOFT_CWIC2: (mc + mp, f * b * lc, DELAY_SIC),
            ReceiverKind.JOINT_DEMAPPER: (mc * mp, 0, DELAY_NONE),
            ReceiverKind.SOFT_SLIC: (mc + mp, 0, DELAY_NONE),
        }
        rows = complexity_table(xc, xp, f, b)
        assert [r.kind for r in rows] == list(expected)
        for r in rows:
            assert (r.distance_evals_per_symbol, r.extra_buffer_bits, r.extra_delay) == expected[r.kind]

    def test_qpsk_cells(self):
        assert complexity_report("hard-cwic", "QPSK", "QPSK", 8, 100).distance_evals_per_symbol == 8
        assert complexity_report("joint-demapper", "QPSK", "QPSK", 8, 100).distance_evals_per_symbol == 16

    def test_sdma(self):
        assert complexity_report("sdma-single-user", "QPSK", "QPSK", 8, 10).distance_evals_per_symbol == 4
        assert complexity_report("sdma-joint", "QPSK", "QPSK", 8, 10).distance_evals_per_symbol == 16

    def test_invalid(self):
        with pytest.raises(DomainError):
            complexity_report("hard-cwic", "QPSK", "QPSK", 0, 10)

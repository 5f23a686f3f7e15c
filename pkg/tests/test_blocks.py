import numpy as np
import pytest

from tpmamba.blocks import FFN, MGSS, MWSS, GatedSsm, TpmGroup, TwoDSS, TwsmBlock, make_layer
from tpmamba.config import ModelConfig
from tpmamba.rng import SplitMix64
from tpmamba.tensor import ShapeError, Tensor

SMALL = ModelConfig(groups=1, blocks_per_group=1, width=8, heads=2, window_attn=4, wif=4, wff=8, n_state=4)


def skip_only(scan):
    """Zero the C projection of every SSM so each scan returns D * x."""
    for ssm in getattr(scan, "ssms", None) or [scan.ssm_i, scan.ssm_f]:
        ssm.x_proj.data[:, ssm.rank + ssm.n_state:] = 0.0
    return scan


def image(shape, seed=0, scale=1.0):
    return np.random.default_rng(seed).normal(size=shape) * scale


@pytest.mark.parametrize("make", [
    lambda r: MWSS(r, 8, 4, 8, 4, 0),
    lambda r: MGSS(r, 8, 4),
    lambda r: TwoDSS(r, 8, 4),
])
def test_scans_preserve_shape(make):
    x = image((2, 8, 8, 16))
    assert make(SplitMix64(0))(Tensor(x)).shape == x.shape


def test_skip_only_scans_are_identity():
    x = image((1, 8, 8, 8), 1)
    assert np.allclose(skip_only(MWSS(SplitMix64(0), 8, 4, 8, 4, 1))(Tensor(x)).data, x, atol=1e-15)
    assert np.allclose(skip_only(MGSS(SplitMix64(0), 8, 4))(Tensor(x)).data, x, atol=1e-15)
    assert np.allclose(skip_only(TwoDSS(SplitMix64(0), 8, 4))(Tensor(x)).data, 4 * x, atol=1e-14)


def test_channel_constraints():
    with pytest.raises(ShapeError):
        MWSS(SplitMix64(0), 6 + 1, 4, 8, 4, 0)
    with pytest.raises(ShapeError):
        MGSS(SplitMix64(0), 6, 4)
    with pytest.raises(ShapeError):
        MWSS(SplitMix64(0), 8, 4, 8, 4, 0)(Tensor(np.zeros((1, 8, 12, 8))))


def _jacobian_blocks(module, c, groups, seed=2):
    """|d out[:, group a] / d in[:, group b]| summed, as a groups x groups matrix."""
    x = Tensor(image((1, c, 8, 8), seed), requires_grad=True)
    out = module(x)
    k = c // groups
    m = np.zeros((groups, groups))
    for a in range(groups):
        x.grad = None
        seed_g = np.zeros(out.shape)
        seed_g[:, a * k:(a + 1) * k] = 1.0
        out.backward(seed_g, retain_graph=True)
        g = np.abs(x.grad[0]).sum(axis=(1, 2))
        m[a] = [g[b * k:(b + 1) * k].sum() for b in range(groups)]
    return m


def test_channel_groups_do_not_mix():
    for module, groups in ((MGSS(SplitMix64(3), 8, 4), 4), (MWSS(SplitMix64(3), 8, 4, 8, 4, 0), 2)):
        m = _jacobian_blocks(module, 8, groups)
        assert np.all(np.diag(m) > 0)
        assert np.all(m[~np.eye(groups, dtype=bool)] == 0)


def test_mgss_quarter_causality():
    """Quarter 0 scans from the top-left: the first pixel only depends on itself."""
    m = MGSS(SplitMix64(4), 8, 4)
    x = Tensor(image((1, 8, 8, 8), 5), requires_grad=True)
    y = m(x)
    seed = np.zeros(y.shape)
    seed[0, 0, 0, 0] = 1.0
    y.backward(seed)
    g = np.abs(x.grad[0, :2]).sum(0)
    assert g[0, 0] > 0 and np.count_nonzero(g) == 1


def test_zero_out_projection_makes_layer_identity():
    x = image((1, 8, 8, 8), 6)
    for tag in ("TL", "WSML", "GSML"):
        layer = make_layer(SplitMix64(7), tag, SMALL, 0, with_ffn=True)
        out_lin = layer.mixer.attn.proj if tag == "TL" else layer.mixer.out_proj
        for lin in (out_lin, layer.ffn.fc2):
            lin.weight.data[:] = 0.0
            lin.bias.data[:] = 0.0
        assert np.array_equal(layer(Tensor(x)).data, x)


def test_gated_mixer_zero_projection_gives_zero():
    g = GatedSsm(SplitMix64(8), 8, MGSS(SplitMix64(9), 8, 4))
    g.out_proj.weight.data[:] = 0.0
    assert np.array_equal(g(Tensor(image((1, 8, 8, 8)))).data, np.zeros((1, 8, 8, 8)))


def test_shared_ffn_only_on_last_layer():
    blk = TwsmBlock(SplitMix64(0), SMALL, 0)
    assert [l.ffn is not None for l in blk.layers] == [False, True]
    blk2 = TwsmBlock(SplitMix64(0), SMALL.with_(shared_ffn=False), 0)
    assert [l.ffn is not None for l in blk2.layers] == [True, True]


def test_stage_order_changes_output():
    x = Tensor(image((1, 8, 8, 8), 10))
    a = TpmGroup(SplitMix64(11), SMALL, 0)(x).data
    b = TpmGroup(SplitMix64(11), SMALL.with_(stage_order=("GSML", "TL", "WSML")), 0)(x).data
    assert a.shape == b.shape and not np.allclose(a, b)


def test_group_stops_at_stage():
    grp = TpmGroup(SplitMix64(12), SMALL, 0)
    x = Tensor(image((1, 8, 8, 8), 13))
    tl = grp(x, stop="TL").data
    ref = grp.blocks[0].layers[0](x).data
    assert np.array_equal(tl, ref)
    assert np.array_equal(grp(x, stop="GSML").data, grp.trunk(x).data)


def test_group_finite_for_large_inputs():
    grp = TpmGroup(SplitMix64(14), SMALL, 0)
    x = np.random.default_rng(15).uniform(-10, 10, size=(1, 8, 16, 16))
    assert np.all(np.isfinite(grp(Tensor(x)).data))


def test_twoDss_window_variant_in_config():
    cfg = SMALL.with_(window_scan="2DSS", global_scan="2DSS")
    grp = TpmGroup(SplitMix64(16), cfg, 0)
    assert isinstance(grp.blocks[0].layers[1].mixer.scan, TwoDSS)
    assert isinstance(grp.gsml.mixer.scan, TwoDSS)
    assert grp(Tensor(image((1, 8, 8, 8)))).shape == (1, 8, 8, 8)


def test_ffn_is_residual():
    f = FFN(SplitMix64(17), 8, 2)
    f.fc2.weight.data[:] = 0.0
    x = image((1, 8, 4, 4))
    assert np.array_equal(f(Tensor(x)).data, x)

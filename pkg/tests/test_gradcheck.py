"""Finite-difference checks of every composite block against its analytic backward."""

import numpy as np
import pytest

from tpmamba import tensor as T
from tpmamba.blocks import FFN, MGSS, MWSS, GatedSsm, TpmGroup, TwoDSS, TwsmBlock, WindowMixer, make_layer
from tpmamba.config import ModelConfig
from tpmamba.freq import AHFRM, HFCA, MSGM
from tpmamba.gradcheck import max_rel_error, module_rel_error
from tpmamba.model import TPMambaSR, UpsampleHead
from tpmamba.rng import SplitMix64
from tpmamba.ssm import SsmParams

TOL = 1e-4
SMALL = ModelConfig(groups=1, blocks_per_group=1, width=8, heads=2, window_attn=4, wif=4, wff=8, n_state=4, scale=2)


def x_img(c=8, h=8, w=8, b=1, seed=0):
    return np.random.default_rng(seed).normal(size=(b, c, h, w))


CASES = {
    "ssm": (lambda r: SsmParams(r, 4, 4), lambda m: m, (2, 6, 4)),
    "mwss": (lambda r: MWSS(r, 8, 4, 8, 4, 1), lambda m: m, (1, 8, 8, 8)),
    "mgss": (lambda r: MGSS(r, 8, 4), lambda m: m, (1, 8, 8, 8)),
    "2dss": (lambda r: TwoDSS(r, 4, 4), lambda m: m, (1, 4, 4, 8)),
    "wissm": (lambda r: GatedSsm(r, 8, MWSS(r, 8, 4, 8, 4, 0)), lambda m: m, (1, 8, 8, 8)),
    "mgssm": (lambda r: GatedSsm(r, 8, MGSS(r, 8, 4)), lambda m: m, (1, 8, 8, 8)),
    "window_mixer": (lambda r: WindowMixer(r, 8, 4, 2, True), lambda m: m, (2, 8, 8, 8)),
    "ffn": (lambda r: FFN(r, 8, 2), lambda m: m, (1, 8, 4, 4)),
    "tl_layer": (lambda r: make_layer(r, "TL", SMALL, 0, True), lambda m: m, (1, 8, 8, 8)),
    "twsm_block": (lambda r: TwsmBlock(r, SMALL, 0), lambda m: m, (1, 8, 8, 8)),
    "msgm": (lambda r: MSGM(r, 8), lambda m: m, (1, 8, 8, 8)),
    "hfca": (lambda r: HFCA(r, 8), lambda m: m, (2, 8, 4, 4)),
    "ahfrm": (lambda r: AHFRM(r, 8), lambda m: (lambda x: m(x, T.sigmoid(x))), (1, 8, 8, 8)),
    "tpm_group": (lambda r: TpmGroup(r, SMALL, 0), lambda m: m, (1, 8, 8, 8)),
    "head": (lambda r: UpsampleHead(r, 8, 2), lambda m: m, (1, 8, 4, 4)),
}


@pytest.mark.parametrize("name", list(CASES))
def test_block_gradients(name):
    make, call, shape = CASES[name]
    mod = make(SplitMix64(1))
    x = np.random.default_rng(2).normal(size=shape)
    err = module_rel_error(mod, call(mod), x, max_points=12)
    assert err < TOL, f"{name}: {err:.2e}"


def test_full_network_input_gradient():
    model = TPMambaSR(SMALL, seed=3)
    err = max_rel_error(lambda x: model(x), [x_img(3, 8, 8, seed=4)], max_points=16)
    assert err < TOL


def test_rel_error_detects_wrong_gradient():
    def wrong(x):
        out = T.mul(x, x)
        out._backward = lambda g: (g, g)  # claims d(x^2)/dx = 2 instead of 2x
        return out

    assert max_rel_error(wrong, [np.full((2, 2), 3.0)], max_points=None) > 0.5

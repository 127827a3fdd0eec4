"""Finite-difference cases covering every registered tensor operation.

Each case maps a seed to (fn, point) for ``grad_check``: ``fn`` takes the
tensor under test and returns a scalar by projecting the op's output onto
a fixed random direction. Points for kinked ops (relu, clamp_min, top-k
selection) are kept away from their decision boundaries so the central
difference sees a smooth function.
"""

import numpy as np

from sdcl import autodiff as ad
from sdcl.autodiff import Tensor


def _proj(out: Tensor, g: np.ndarray) -> Tensor:
    return ad.sum_all(out * Tensor(g))


def _away_from(rng, size, kink: float, margin: float = 0.08) -> np.ndarray:
    """Random values at least ``margin`` away from the kink point."""
    signs = rng.choice([-1.0, 1.0], size=size)
    return kink + signs * rng.uniform(margin, 1.0, size=size)


def _gapped_rows(rng, rows: int, n: int) -> np.ndarray:
    """Rows with pairwise-distinct entries so top-k selection is stable."""
    base = np.arange(n) * 0.5
    out = np.empty((rows, n))
    for r in range(rows):
        rng.shuffle(base)
        out[r] = base + rng.uniform(-0.1, 0.1, size=n)
    return out


def _case_add(rng):
    b = Tensor(rng.standard_normal((3, 4)))
    g = rng.standard_normal((3, 4))
    return lambda x: _proj(ad.add(x, b), g), rng.standard_normal((3, 4))


def _case_add_scalar(rng):
    x0 = rng.standard_normal((3, 4))
    g = rng.standard_normal((3, 4))
    return lambda s: _proj(ad.add(Tensor(x0), s), g), rng.standard_normal(())


def _case_neg(rng):
    g = rng.standard_normal((2, 5))
    return lambda x: _proj(ad.neg(x), g), rng.standard_normal((2, 5))


def _case_mul(rng):
    b = Tensor(rng.standard_normal((3, 4)))
    g = rng.standard_normal((3, 4))
    return lambda x: _proj(ad.mul(x, b), g), rng.standard_normal((3, 4))


def _case_div_num(rng):
    b = Tensor(0.5 + np.abs(rng.standard_normal((3, 4))))
    g = rng.standard_normal((3, 4))
    return lambda x: _proj(ad.div(x, b), g), rng.standard_normal((3, 4))


def _case_div_den(rng):
    a = Tensor(rng.standard_normal((3, 4)))
    g = rng.standard_normal((3, 4))
    point = 0.5 + np.abs(rng.standard_normal((3, 4)))
    return lambda x: _proj(ad.div(a, x), g), point


def _case_relu(rng):
    g = rng.standard_normal((3, 4))
    return lambda x: _proj(ad.relu(x), g), _away_from(rng, (3, 4), 0.0)


def _case_clamp_min(rng):
    g = rng.standard_normal((3, 4))
    return lambda x: _proj(ad.clamp_min(x, 0.3), g), _away_from(rng, (3, 4), 0.3)


def _case_linear_x(rng):
    w = Tensor(rng.standard_normal((3, 4)))
    b = Tensor(rng.standard_normal(3))
    g = rng.standard_normal((2, 3))
    return lambda x: _proj(ad.linear(x, w, b), g), rng.standard_normal((2, 4))


def _case_linear_w(rng):
    x = Tensor(rng.standard_normal((2, 4)))
    b = Tensor(rng.standard_normal(3))
    g = rng.standard_normal((2, 3))
    return lambda w: _proj(ad.linear(x, w, b), g), rng.standard_normal((3, 4))


def _case_linear_b(rng):
    x = Tensor(rng.standard_normal((2, 4)))
    w = Tensor(rng.standard_normal((3, 4)))
    g = rng.standard_normal((2, 3))
    return lambda b: _proj(ad.linear(x, w, b), g), rng.standard_normal(3)


def _case_conv3x3_x(rng):
    w = Tensor(rng.standard_normal((2, 2, 3, 3)))
    b = Tensor(rng.standard_normal(2))
    g = rng.standard_normal((2, 2, 4, 4))
    return lambda x: _proj(ad.conv3x3(x, w, b), g), rng.standard_normal((2, 2, 4, 4))


def _case_conv3x3_w(rng):
    x = Tensor(rng.standard_normal((2, 2, 4, 4)))
    b = Tensor(rng.standard_normal(2))
    g = rng.standard_normal((2, 2, 4, 4))
    return lambda w: _proj(ad.conv3x3(x, w, b), g), rng.standard_normal((2, 2, 3, 3))


def _case_conv3x3_b(rng):
    x = Tensor(rng.standard_normal((2, 2, 4, 4)))
    w = Tensor(rng.standard_normal((2, 2, 3, 3)))
    g = rng.standard_normal((2, 2, 4, 4))
    return lambda b: _proj(ad.conv3x3(x, w, b), g), rng.standard_normal(2)


def _mixture_parts(rng, require: str):
    n, bsz, ch = 3, 2, 2
    x0 = rng.standard_normal((bsz, ch, 4, 4))
    gates0 = np.abs(rng.standard_normal((bsz, n))) + 0.1
    gates0 /= gates0.sum(axis=1, keepdims=True)
    ws = [Tensor(rng.standard_normal((ch, ch, 3, 3))) for _ in range(n)]
    bs = [Tensor(rng.standard_normal(ch)) for _ in range(n)]
    g = rng.standard_normal((bsz, ch, 4, 4))

    if require == "x":
        fn = lambda x: _proj(
            ad.residual_mixture_conv3x3(x, Tensor(gates0), ws, bs), g
        )
        return fn, x0
    if require == "gates":
        fn = lambda gt: _proj(
            ad.residual_mixture_conv3x3(Tensor(x0), gt, ws, bs), g
        )
        return fn, gates0
    if require == "w":
        fn = lambda w: _proj(
            ad.residual_mixture_conv3x3(Tensor(x0), Tensor(gates0), [w] + ws[1:], bs), g
        )
        return fn, rng.standard_normal((ch, ch, 3, 3))
    fn = lambda b: _proj(
        ad.residual_mixture_conv3x3(Tensor(x0), Tensor(gates0), ws, [b] + bs[1:]), g
    )
    return fn, rng.standard_normal(ch)


def _case_mixture_x(rng):
    return _mixture_parts(rng, "x")


def _case_mixture_gates(rng):
    return _mixture_parts(rng, "gates")


def _case_mixture_w(rng):
    return _mixture_parts(rng, "w")


def _case_mixture_b(rng):
    return _mixture_parts(rng, "b")


def _case_avgpool2(rng):
    g = rng.standard_normal((2, 2, 2, 2))
    return lambda x: _proj(ad.avgpool2(x), g), rng.standard_normal((2, 2, 4, 4))


def _case_spatial_mean(rng):
    g = rng.standard_normal((2, 3))
    return lambda x: _proj(ad.spatial_mean(x), g), rng.standard_normal((2, 3, 4, 4))


def _case_channel_std(rng):
    g = rng.standard_normal((2, 3))
    return lambda x: _proj(ad.channel_std(x), g), rng.standard_normal((2, 3, 4, 4))


def _case_broadcast_spatial(rng):
    g = rng.standard_normal((2, 3, 2, 2))
    return (
        lambda v: _proj(ad.broadcast_spatial(v, (2, 3, 2, 2)), g),
        rng.standard_normal((2, 3)),
    )


def _case_softmax(rng):
    g = rng.standard_normal((3, 5))
    return lambda x: _proj(ad.softmax(x), g), rng.standard_normal((3, 5))


def _case_topk_softmax(rng):
    g = rng.standard_normal((3, 5))
    return lambda x: _proj(ad.topk_softmax(x, 3), g), _gapped_rows(rng, 3, 5)


def _case_cross_entropy(rng):
    labels = rng.integers(0, 4, size=3)
    return lambda x: ad.cross_entropy(x, labels), rng.standard_normal((3, 4))


def _case_sum_axis0(rng):
    g = rng.standard_normal(4)
    return lambda x: _proj(ad.sum_axis0(x), g), rng.standard_normal((3, 4))


def _case_mean_all(rng):
    return lambda x: ad.mean_all(x), rng.standard_normal((3, 4))


def _case_sum_all(rng):
    return lambda x: ad.sum_all(x), rng.standard_normal((3, 4))


def _case_scale_rows_x(rng):
    s = Tensor(rng.standard_normal(3))
    g = rng.standard_normal((3, 2, 2, 2))
    return lambda x: _proj(ad.scale_rows(x, s), g), rng.standard_normal((3, 2, 2, 2))


def _case_scale_rows_s(rng):
    x = Tensor(rng.standard_normal((3, 2, 2, 2)))
    g = rng.standard_normal((3, 2, 2, 2))
    return lambda s: _proj(ad.scale_rows(x, s), g), rng.standard_normal(3)


def _case_take_col(rng):
    g = rng.standard_normal(3)
    return lambda x: _proj(ad.take_col(x, 1), g), rng.standard_normal((3, 4))


def _case_concat_cols(rng):
    b = Tensor(rng.standard_normal((3, 2)))
    g = rng.standard_normal((3, 6))
    return lambda a: _proj(ad.concat_cols(a, b), g), rng.standard_normal((3, 4))


ALL_CASES = [
    ("add", _case_add),
    ("add_scalar", _case_add_scalar),
    ("neg", _case_neg),
    ("mul", _case_mul),
    ("div_numerator", _case_div_num),
    ("div_denominator", _case_div_den),
    ("relu", _case_relu),
    ("clamp_min", _case_clamp_min),
    ("linear_x", _case_linear_x),
    ("linear_w", _case_linear_w),
    ("linear_b", _case_linear_b),
    ("conv3x3_x", _case_conv3x3_x),
    ("conv3x3_w", _case_conv3x3_w),
    ("conv3x3_b", _case_conv3x3_b),
    ("mixture_x", _case_mixture_x),
    ("mixture_gates", _case_mixture_gates),
    ("mixture_w", _case_mixture_w),
    ("mixture_b", _case_mixture_b),
    ("avgpool2", _case_avgpool2),
    ("spatial_mean", _case_spatial_mean),
    ("channel_std", _case_channel_std),
    ("broadcast_spatial", _case_broadcast_spatial),
    ("softmax", _case_softmax),
    ("topk_softmax", _case_topk_softmax),
    ("cross_entropy", _case_cross_entropy),
    ("sum_axis0", _case_sum_axis0),
    ("mean_all", _case_mean_all),
    ("sum_all", _case_sum_all),
    ("scale_rows_x", _case_scale_rows_x),
    ("scale_rows_s", _case_scale_rows_s),
    ("take_col", _case_take_col),
    ("concat_cols", _case_concat_cols),
]


def run_case(name: str, seed: int) -> float:
    """Max relative FD error for one case at one seed."""
    builder = dict(ALL_CASES)[name]
    fn, point = builder(np.random.default_rng(seed))
    report = ad.grad_check(fn, point, name=name)
    return report.max_rel_error

import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hlsrank import surrogate as sg
from hlsrank.encoder import EncoderConfig
from hlsrank.errors import ContractError, NumericalError, SchemaError
from hlsrank.model import CompareModel
from hlsrank.numerics import ParameterStore, backward, constant, hadamard, sub, sum_all
from hlsrank.trainer import (
    AdamW,
    Checkpoint,
    TrainConfig,
    batch_loss,
    batches,
    cosine_lr,
    fit,
    sample_pairs,
    train_epoch,
    write_loss_curve,
)

SMALL_ENC = EncoderConfig(layers=1, hidden_dim=8, pragma_mlp_dims=(8,))


def quick(**kw):
    base = dict(epochs=3, batch_size=8, pairs_per_kernel_per_epoch=16, val_pairs_per_kernel=8)
    base.update(kw)
    return TrainConfig(**base)


def test_defaults_desk_and_full_scale():
    c = TrainConfig()
    assert (c.epochs, c.lr, c.alpha, c.schedule, c.pairs_per_kernel_per_epoch) == (200, 1e-3, 1.0, "cosine", 64)
    assert (c.betas, c.eps, c.weight_decay) == ((0.9, 0.999), 1e-8, 0.01)
    p = TrainConfig.full_scale()
    assert (p.epochs, p.batch_size, p.lr, p.alpha) == (1600, 128, 1e-3, 1.0)


def test_cosine_lr_examples():
    assert cosine_lr(0, 100, 0.01) == 0.01
    assert cosine_lr(100, 100, 0.01) == pytest.approx(0.0, abs=1e-18)
    assert cosine_lr(50, 100, 0.01) == pytest.approx(0.005, rel=1e-15)
    with pytest.raises(ContractError):
        cosine_lr(101, 100, 0.01)


@given(st.integers(1, 1000), st.data())
def test_cosine_lr_monotone(total, data):
    s = data.draw(st.integers(0, total - 1))
    assert cosine_lr(s + 1, total, 1.0) <= cosine_lr(s, total, 1.0)


def test_sample_pairs_same_kernel_distinct(tiny_dataset):
    pairs = sample_pairs(tiny_dataset, "train", 20, seed=1)
    assert pairs
    assert all(a.kernel_id == b.kernel_id and a is not b for a, b in pairs)
    keys = [frozenset((id(a), id(b))) for a, b in pairs]
    assert len(set(keys)) == len(keys)
    assert [(id(a), id(b)) for a, b in pairs] == [(id(a), id(b)) for a, b in sample_pairs(tiny_dataset, "train", 20, 1)]


def test_sample_pairs_two_records_and_skip():
    t1, t2 = sg.gen_kernel(1), sg.gen_kernel(2)
    ds = sg.build_dataset([t1], 2, (1.0, 0.0, 0.0))
    ds2 = sg.build_dataset([t2], 1, (1.0, 0.0, 0.0))
    merged = sg.Dataset(ds.records + ds2.records, {**ds.templates, **ds2.templates})
    with pytest.warns(UserWarning, match="fewer than 2"):
        pairs = sample_pairs(merged, "train", 10)
    assert len(pairs) == 1
    assert {id(r) for r in pairs[0]} == {id(r) for r in ds.records}
    with pytest.raises(ContractError):
        sample_pairs(merged, "train", 0)


def test_adamw_decreases_convex_quadratic():
    store = ParameterStore()
    store.add("x", np.array([[3.0, -2.0, 1.0]]))
    target = constant([[0.5, 0.5, 0.5]])
    opt = AdamW(store, weight_decay=0.0)

    def loss():
        d = sub(store["x"], target)
        return sum_all(hadamard(d, d))

    prev = loss().item()
    for _ in range(50):
        store.zero_grad()
        backward(loss())
        opt.step(0.01)
        cur = loss().item()
        assert cur < prev
        prev = cur


def test_lr_zero_leaves_parameters(tiny_dataset):
    m = CompareModel.create(SMALL_ENC, seed=0)
    before = m.params.state()
    opt = AdamW(m.params)
    train_epoch(m, batches(sample_pairs(tiny_dataset, "train", 16), 8), opt, 1.0, lambda s: 0.0)
    after = m.params.state()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_frozen_parameters_not_updated(tiny_dataset):
    m = CompareModel.create(SMALL_ENC, seed=0)
    m.params.set_trainable("pair", False)
    before = m.params.state()
    train_epoch(m, batches(sample_pairs(tiny_dataset, "train", 16), 8), AdamW(m.params), 1.0, lambda s: 1e-2)
    after = m.params.state()
    for k in before:
        same = np.array_equal(before[k], after[k])
        assert same == k.startswith("pair."), k


def test_hybrid_loss_linear_in_alpha(tiny_dataset):
    m = CompareModel.create(SMALL_ENC, seed=4)
    pairs = sample_pairs(tiny_dataset, "train", 10, seed=2)
    val = {a: batch_loss(m, pairs, a).total.item() for a in (0.0, 1.0, 2.0)}
    assert abs((val[2.0] - val[0.0]) - 2 * (val[1.0] - val[0.0])) <= 1e-9


def test_alpha_zero_frozen_pair_head_matches_pointwise(tiny_dataset):
    hyb = fit(tiny_dataset, quick(alpha=0.0), SMALL_ENC, freeze=("pair", "nda"))
    pw = fit(tiny_dataset, quick(mode="pointwise"), SMALL_ENC)
    for a, b in zip(hyb.history, pw.history):
        assert a.total == pytest.approx(b.total, rel=1e-12, abs=1e-15)
        assert a.total == pytest.approx(a.point, rel=1e-12, abs=1e-15)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts(tiny_dataset):
    m = CompareModel.create(SMALL_ENC, seed=0)
    m.params["point.2.b"].data[:] = 1e200
    with pytest.raises(NumericalError, match="batch 0"):
        train_epoch(m, batches(sample_pairs(tiny_dataset, "train", 4), 4), AdamW(m.params), 1.0, lambda s: 1e-3)


def test_fit_requires_train_and_val():
    ds = sg.build_dataset([sg.gen_kernel(1)], 10, (1.0, 0.0, 0.0))
    with pytest.raises(ContractError):
        fit(ds, quick())


def test_fit_one_epoch_and_selection(tiny_dataset):
    one = fit(tiny_dataset, quick(epochs=1), SMALL_ENC)
    assert one.epoch == 1 and len(one.history) == 1
    ck = fit(tiny_dataset, quick(epochs=4), SMALL_ENC)
    vals = [h.val for h in ck.history]
    assert ck.epoch == 1 + int(np.argmin(vals))
    assert ck.best_val_loss == min(vals)


def test_fit_deterministic(tiny_dataset):
    a = fit(tiny_dataset, quick(), SMALL_ENC)
    b = fit(tiny_dataset, quick(), SMALL_ENC)
    assert a.digest() == b.digest()
    assert [h.total for h in a.history] == [h.total for h in b.history]


def test_checkpoint_roundtrip(tiny_dataset, tmp_path):
    ck = fit(tiny_dataset, quick(epochs=2), SMALL_ENC)
    path = ck.save(tmp_path / "ck.json")
    back = Checkpoint.load(path)
    assert all(np.array_equal(ck.params[k], back.params[k]) for k in ck.params)
    assert back.train_cfg == ck.train_cfg and back.encoder_cfg == ck.encoder_cfg
    probe = [r.graph for r in tiny_dataset.records[:6]]
    np.testing.assert_allclose(ck.model().predict(probe), back.model().predict(probe), atol=1e-12, rtol=0)
    assert back.digest() == ck.digest()


def test_checkpoint_schema_mismatch(tiny_dataset):
    ck = fit(tiny_dataset, quick(epochs=1), SMALL_ENC)
    d = ck.to_json()
    d["schema_version"] = 2
    with pytest.raises(SchemaError):
        Checkpoint.from_json(d)


def test_loss_curve_file(tiny_dataset, tmp_path):
    ck = fit(tiny_dataset, quick(epochs=3), SMALL_ENC)
    path = write_loss_curve(ck.history, tmp_path / "loss.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["epoch", "total", "point", "pair"]
    assert [int(r[0]) for r in rows[1:]] == [1, 2, 3]
    assert all(math.isfinite(float(x)) for r in rows[1:] for x in r)

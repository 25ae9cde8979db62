"""
Tests for retention/model/heads.py: losses, masks and the cascade.
"""
import math

import numpy as np
import pytest

from retention.core.errors import ContractError, DimensionError
from retention.data.schema import TaskLabels
from retention.engine.gradcheck import check_gradients
from retention.engine.tensor import Tensor
from retention.model.heads import (
    HEAD_OUTPUTS,
    TASKS,
    CascadeParams,
    batch_total_loss,
    cascade_forward,
    cross_entropy,
    derive_mask,
    euclidean_loss,
    label_vector,
    task_losses,
    total_loss,
)

Z_DIM, WIDTH = 10, 6

NO_DROPOUT = TaskLabels(y1=0)
PERMANENT = TaskLabels(y1=1, y2=0, y3=0, y4=5.0, y5=3)
TEMPORARY_NEXT = TaskLabels(y1=1, y2=1, y3=1, y4=4.0, y5=8)
TEMPORARY_LATER = TaskLabels(y1=1, y2=1, y3=0, y4=6.0, y5=0)


@pytest.fixture
def heads(rng):
    return CascadeParams.init(Z_DIM, WIDTH, rng)


def _head_grads(heads):
    return {
        task: [t.grad.copy() for layer in (head.hidden, head.output) for t in layer.tensors()]
        for task, head in heads.heads.items()
    }


class TestLosses:
    def test_cross_entropy_values(self):
        assert cross_entropy(np.array([0.25, 0.75]), 1).item() == pytest.approx(-math.log(0.75))
        assert cross_entropy(np.array([0.5, 0.5]), 0).item() == pytest.approx(math.log(2.0))

    def test_cross_entropy_clamps_zero(self):
        loss = cross_entropy(np.array([1.0, 0.0]), 1).item()
        assert loss == pytest.approx(-math.log(1e-12))

    def test_cross_entropy_batched(self):
        p = np.array([[0.9, 0.1], [0.2, 0.8]])
        np.testing.assert_allclose(cross_entropy(p, [0, 0]).data, -np.log([0.9, 0.2]))

    def test_cross_entropy_label_range(self):
        with pytest.raises(ContractError):
            cross_entropy(np.array([0.5, 0.5]), 2)

    def test_euclidean(self):
        assert euclidean_loss(3.5, 5.0).item() == pytest.approx(2.25)


class TestMasks:
    @pytest.mark.parametrize(
        "labels, rule_3, expected",
        [
            (NO_DROPOUT, False, [1, 0, 0, 0, 0]),
            (PERMANENT, False, [1, 1, 0, 0, 0]),
            (TEMPORARY_LATER, False, [1, 1, 1, 1, 1]),
            (TEMPORARY_NEXT, False, [1, 1, 1, 1, 1]),
            (TEMPORARY_NEXT, True, [1, 1, 1, 0, 0]),
            (TEMPORARY_LATER, True, [1, 1, 1, 1, 1]),
        ],
    )
    def test_mask_rules(self, labels, rule_3, expected):
        np.testing.assert_array_equal(derive_mask(labels, rule_3), expected)

    def test_unmasked_undefined_label(self):
        labels = TaskLabels.model_construct(y1=1, y2=1, y3=0, y4=None, y5=2)
        with pytest.raises(ContractError, match="DD"):
            derive_mask(labels)

    def test_label_vector_placeholders(self):
        np.testing.assert_array_equal(label_vector(NO_DROPOUT), [0, 0, 0, 0, 0])
        np.testing.assert_array_equal(label_vector(TEMPORARY_NEXT), [1, 1, 1, 4, 8])


class TestCascade:
    def test_output_shapes(self, heads, rng):
        out = cascade_forward(Tensor(rng.normal(size=(3, Z_DIM))), heads)
        assert out.p1.shape == out.p2.shape == out.p3.shape == (3, 2)
        assert out.y4_hat.shape == (3,)
        assert out.p5.shape == (3, HEAD_OUTPUTS["cd"])
        for p in out.probabilities():
            np.testing.assert_allclose(p.data.sum(axis=-1), 1.0)

    def test_head_inputs_chain(self, heads):
        for k, task in enumerate(TASKS):
            d_in = heads.heads[task].hidden.weights["weight"].shape[1]
            assert d_in == (Z_DIM if k == 0 else Z_DIM + WIDTH)

    def test_information_flows_downstream_only(self, heads, rng):
        z = Tensor(rng.normal(size=Z_DIM))
        before = cascade_forward(z, heads)
        heads.heads["td"].hidden.weights["bias"].data += 1.0
        after = cascade_forward(z, heads)
        np.testing.assert_array_equal(before.p1.data, after.p1.data)
        assert not np.allclose(before.p5.data, after.p5.data)

    def test_wrong_z_width(self, heads):
        with pytest.raises(DimensionError):
            cascade_forward(Tensor(np.zeros(Z_DIM + 1)), heads)


class TestTotalLoss:
    @pytest.mark.parametrize("labels", [NO_DROPOUT, PERMANENT, TEMPORARY_NEXT, TEMPORARY_LATER])
    def test_decomposes_into_masked_terms(self, heads, rng, labels):
        outputs = cascade_forward(Tensor(rng.normal(size=Z_DIM)), heads)
        mask = derive_mask(labels)
        terms = task_losses(outputs, label_vector(labels))
        expected = sum(m * t.item() for m, t in zip(mask, terms))
        assert total_loss(outputs, labels).item() == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize(
        "labels, rule_3, silent",
        [
            (NO_DROPOUT, False, {"td", "nd", "dd", "cd"}),
            (PERMANENT, False, {"nd", "dd", "cd"}),
            (TEMPORARY_NEXT, True, {"dd", "cd"}),
            (TEMPORARY_LATER, False, set()),
        ],
        ids=["no-dropout", "permanent", "temporary-next-semester", "temporary-later"],
    )
    def test_masked_heads_get_exactly_zero_gradient(self, heads, rng, labels, rule_3, silent):
        outputs = cascade_forward(Tensor(rng.normal(size=Z_DIM)), heads)
        total_loss(outputs, labels, mask_rule_3=rule_3).backward()
        grads = _head_grads(heads)
        for task in TASKS:
            if task in silent:
                assert all(np.all(g == 0.0) for g in grads[task]), task
            else:
                assert any(np.any(g != 0.0) for g in grads[task]), task

    def test_batch_loss_is_weighted_mean(self, heads, rng):
        all_labels = [NO_DROPOUT, PERMANENT, TEMPORARY_LATER]
        outputs = cascade_forward(Tensor(rng.normal(size=(3, Z_DIM))), heads)
        labels = np.stack([label_vector(y) for y in all_labels])
        mask = np.stack([derive_mask(y) for y in all_labels])
        weights = np.array([1.0, 2.0, 3.0])
        per_student = []
        for i in range(len(all_labels)):
            terms = [t.data[i] for t in task_losses(outputs, labels)]
            per_student.append(sum(m * t for m, t in zip(mask[i], terms)))
        expected = np.dot(weights, per_student) / weights.sum()
        got = batch_total_loss(outputs, labels, mask, weights).item()
        assert got == pytest.approx(expected, abs=1e-10)

    def test_regularizer_is_added(self, heads, rng):
        outputs = cascade_forward(Tensor(rng.normal(size=(2, Z_DIM))), heads)
        labels = np.stack([label_vector(NO_DROPOUT)] * 2)
        mask = np.stack([derive_mask(NO_DROPOUT)] * 2)
        plain = batch_total_loss(outputs, labels, mask).item()
        regularised = batch_total_loss(outputs, labels, mask, regularizer=Tensor(0.25)).item()
        assert regularised == pytest.approx(plain + 0.25)


class TestHeadGradients:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_cascade_and_total_loss(self, seed):
        rng = np.random.default_rng(seed)
        heads = CascadeParams.init(Z_DIM, WIDTH, rng)
        for layer in heads.named_layers().values():
            layer.weights["bias"].data[...] = rng.normal(scale=0.1, size=layer.weights["bias"].shape)
        z = Tensor(rng.normal(size=(4, Z_DIM)), requires_grad=True)
        all_labels = [NO_DROPOUT, PERMANENT, TEMPORARY_NEXT, TEMPORARY_LATER]
        labels = np.stack([label_vector(y) for y in all_labels])
        mask = np.stack([derive_mask(y) for y in all_labels])
        params = {
            f"{name}.{key}": tensor
            for name, layer in heads.named_layers().items()
            for key, tensor in layer.weights.items()
        }
        params["z"] = z

        loss = lambda: batch_total_loss(cascade_forward(z, heads), labels, mask)
        result = check_gradients(loss, params, seed=seed, skip_kinks=True)
        assert result.passed(1e-3), result.per_param

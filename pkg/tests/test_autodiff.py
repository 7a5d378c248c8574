import numpy as np
import pytest

from wiretap_jscc.autodiff import (
    CheckpointError,
    LayerSpec,
    Network,
    NumericError,
    ParamStore,
    ShapeError,
    adam_step,
    grad_check,
    load_checkpoint,
    quadratic_loss,
    save_checkpoint,
)


def make_net(layers, in_width, seed=0, zero_last=False):
    store = ParamStore()
    rng = np.random.default_rng(seed)
    return Network("net", in_width, layers, store, rng, zero_last=zero_last), store


def test_identity_layer_with_identity_weights_passes_input_through():
    net, _ = make_net([LayerSpec(3, "identity")], 3)
    net._params[0][0].value[...] = np.eye(3)
    net._params[0][1].value[...] = 0.0
    v = np.array([0.3, -1.2, 4.0])
    np.testing.assert_array_equal(net.forward(v), v)


def test_softmax_symmetry():
    net, _ = make_net([LayerSpec(3, "softmax")], 3)
    net._params[0][0].value[...] = np.eye(3)
    net._params[0][1].value[...] = 0.0
    out = net.forward(np.zeros(3))
    np.testing.assert_allclose(out, np.ones(3) / 3, atol=1e-15)


def test_two_layer_forward_matches_hand_computation():
    # L1 identity: W=[[1,2],[0,1]], b=[0.5,-0.5]; L2 identity: W=[[1],[-1]], b=[0.25]
    net, _ = make_net([LayerSpec(2, "identity"), LayerSpec(1, "identity")], 2)
    net._params[0][0].value[...] = [[1.0, 2.0], [0.0, 1.0]]
    net._params[0][1].value[...] = [0.5, -0.5]
    net._params[1][0].value[...] = [[1.0], [-1.0]]
    net._params[1][1].value[...] = [0.25]
    # x=[1,2] -> h=[1.5, 3.5] -> out = 1.5 - 3.5 + 0.25 = -1.75
    np.testing.assert_allclose(net.forward(np.array([1.0, 2.0])), [-1.75], atol=1e-15)


def test_backward_zero_output_grad_gives_zero_param_grads():
    net, store = make_net([LayerSpec(4, "tanh"), LayerSpec(2, "sigmoid")], 3, seed=1)
    net.forward(np.random.default_rng(0).random((5, 3)), record=True)
    net.backward(np.zeros((5, 2)))
    for _, e in store.items():
        assert np.all(e.grad == 0.0)


def test_backward_linear_loss_grad_equals_input():
    net, store = make_net([LayerSpec(1, "identity")], 4, seed=2)
    x = np.array([1.0, -2.0, 3.0, 0.5])
    net.forward(x, record=True)
    net.backward(np.array([1.0]))
    np.testing.assert_allclose(store["net.0.W"].grad[:, 0], x, atol=1e-15)


def test_backward_without_recorded_forward_rejected():
    net, _ = make_net([LayerSpec(2, "relu")], 2)
    with pytest.raises(RuntimeError, match="recorded forward"):
        net.backward(np.zeros((1, 2)))


def test_forward_shape_mismatch_names_layer():
    net, _ = make_net([LayerSpec(2, "relu")], 3)
    with pytest.raises(ShapeError, match="layer 0"):
        net.forward(np.zeros((4, 5)))


@pytest.mark.parametrize("act", ["identity", "relu", "sigmoid", "tanh", "softmax"])
def test_gradients_match_finite_differences(act):
    net, _ = make_net([LayerSpec(6, "tanh"), LayerSpec(4, act)], 5, seed=3)
    rng = np.random.default_rng(4)
    report = grad_check(net, rng.standard_normal((3, 5)), quadratic_loss(rng.random((3, 4))))
    assert report.passed, report.entry_errors
    assert report.max_rel_error < 1e-4


def test_grad_check_negative_control_flags_corruption():
    net, _ = make_net([LayerSpec(4, "sigmoid")], 3, seed=5)
    rng = np.random.default_rng(6)
    report = grad_check(net, rng.standard_normal((2, 3)), quadratic_loss(rng.random((2, 4))),
                        corrupt_scale=1.01)
    assert not report.passed


def test_linear_net_quadratic_loss_tight_error():
    net, _ = make_net([LayerSpec(3, "identity")], 4, seed=7)
    rng = np.random.default_rng(8)
    report = grad_check(net, rng.standard_normal((2, 4)), quadratic_loss(rng.random((2, 3))),
                        step=1e-6)
    assert report.max_rel_error < 1e-7


def test_adam_zero_grads_leave_weights_unchanged():
    store = ParamStore()
    store.add("w", np.array([1.0, -2.0, 3.0]))
    before = store["w"].value.copy()
    adam_step(store, lr=0.1)
    np.testing.assert_array_equal(store["w"].value, before)


def test_adam_first_step_is_signed_lr():
    store = ParamStore()
    store.add("w", np.array([0.0, 0.0]))
    store["w"].grad[...] = [2.5, -0.3]
    adam_step(store, lr=1e-3)
    np.testing.assert_allclose(store["w"].value, [-1e-3, 1e-3], rtol=1e-6)
    assert np.all(store["w"].grad == 0.0)


def test_adam_constant_grad_step_approaches_lr():
    store = ParamStore()
    store.add("w", np.array([0.0]))
    prev = 0.0
    for _ in range(300):
        store["w"].grad[...] = 0.7
        before = float(store["w"].value[0])
        adam_step(store, lr=1e-3)
        prev = before - float(store["w"].value[0])
    assert abs(prev - 1e-3) < 1e-5


def test_adam_rejects_non_finite_grads():
    store = ParamStore()
    store.add("w", np.zeros(2))
    store["w"].grad[...] = [np.nan, 0.0]
    with pytest.raises(NumericError, match="w"):
        adam_step(store)


def test_determinism_same_seed_bit_identical():
    outs, grads = [], []
    for _ in range(2):
        net, store = make_net([LayerSpec(8, "relu"), LayerSpec(3, "softmax")], 6, seed=11)
        x = np.random.default_rng(12).random((4, 6))
        out = net.forward(x, record=True)
        net.backward(np.ones((4, 3)))
        outs.append(out)
        grads.append({k: e.grad.copy() for k, e in store.items()})
    np.testing.assert_array_equal(outs[0], outs[1])
    for k in grads[0]:
        np.testing.assert_array_equal(grads[0][k], grads[1][k])


def test_softmax_rows_sum_to_one_and_sigmoid_in_open_interval():
    net, _ = make_net([LayerSpec(5, "softmax")], 4, seed=13)
    out = net.forward(np.random.default_rng(14).standard_normal((20, 4)) * 5)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
    net2, _ = make_net([LayerSpec(5, "sigmoid")], 4, seed=15)
    out2 = net2.forward(np.random.default_rng(16).standard_normal((20, 4)))
    assert np.all(out2 > 0.0) and np.all(out2 < 1.0)


def test_forward_backward_leave_weights_unchanged():
    net, store = make_net([LayerSpec(4, "tanh"), LayerSpec(2, "identity")], 3, seed=17)
    before = store.snapshot()
    x = np.random.default_rng(18).random((6, 3))
    net.forward(x, record=True)
    net.backward(np.ones((6, 2)))
    for k, v in before.items():
        np.testing.assert_array_equal(store[k].value, v)


def test_duplicate_param_names_rejected():
    store = ParamStore()
    store.add("w", np.zeros(1))
    with pytest.raises(ValueError, match="duplicate"):
        store.add("w", np.zeros(1))


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(19)
    arrays = {"a.0.W": rng.standard_normal((7, 3)), "b.bias": rng.standard_normal(5)}
    path = tmp_path / "model.wjck"
    save_checkpoint(path, arrays, {"note": "x"})
    loaded, meta = load_checkpoint(path)
    assert meta["note"] == "x"
    for k, v in arrays.items():
        np.testing.assert_array_equal(loaded[k], v)
    save_checkpoint(tmp_path / "again.wjck", arrays, {"note": "x"})
    assert (tmp_path / "model.wjck").read_bytes() == (tmp_path / "again.wjck").read_bytes()


def test_checkpoint_version_mismatch_rejected(tmp_path):
    path = tmp_path / "model.wjck"
    save_checkpoint(path, {"w": np.zeros(2)}, {})
    blob = bytearray(path.read_bytes())
    blob[4] = 99  # version field
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_checkpoint_truncation_rejected(tmp_path):
    path = tmp_path / "model.wjck"
    save_checkpoint(path, {"w": np.arange(4.0)}, {})
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_store_load_arrays_shape_mismatch_rejected():
    store = ParamStore()
    store.add("w", np.zeros((2, 2)))
    with pytest.raises(CheckpointError, match="shape mismatch"):
        store.load_arrays({"w": np.zeros(3)})

import numpy as np
import pytest

from denoiser import (
    ConditionedUNet,
    Denoiser,
    OptState,
    ParameterSet,
    ShapeMismatchError,
    WeightFileError,
    adam_update,
    backward_and_grads,
    build_descriptor,
    count_parameters,
    load_weights,
    lr_for_epoch,
    masked_mse,
    save_weights,
    unet_forward,
)
from denoiser.layers import (
    GELU,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    GlobalAvgPool,
    Linear,
    MaxPool2d,
    ReLU,
)
from denoiser.unet import ResBlock

STEPS = (1e-5, 1e-6, 1e-7)


def _rel_err(a, b):
    return abs(a - b) / max(abs(a) + abs(b), 1e-4)


def _agrees(analytic, objective, array, idx):
    """Central differences with shrinking steps; any step within 1e-4 passes.

    Smaller steps keep the check valid when a ReLU or max-pool switch lies
    within the larger step.
    """
    old = array[idx]
    errors = []
    for h in STEPS:
        array[idx] = old + h
        plus = objective()
        array[idx] = old - h
        minus = objective()
        array[idx] = old
        errors.append(_rel_err(analytic, (plus - minus) / (2 * h)))
    return min(errors) < 1e-4


def _sample_indices(shape, rng, limit):
    total = int(np.prod(shape))
    flat = rng.choice(total, size=min(limit, total), replace=False)
    return [np.unravel_index(i, shape) for i in flat]


def _check_layer(layer, ps, x, rng, train=True, limit=40):
    """Compare analytic input/parameter gradients against central differences."""
    out = layer.forward(x, train)
    probe = rng.normal(size=out.shape)
    ps.zero_grad()
    layer.forward(x, train)
    dx = layer.backward(probe)

    def objective():
        return float(np.sum(layer.forward(x, train) * probe))

    for idx in _sample_indices(x.shape, rng, limit):
        assert _agrees(dx[idx], objective, x, idx)

    for name, param in ps.params.items():
        grad = ps.grads[name]
        for idx in _sample_indices(param.shape, rng, limit):
            assert _agrees(grad[idx], objective, param, idx), name


@pytest.fixture
def ps64():
    return ParameterSet(dtype=np.float64, rng=np.random.default_rng(0))


# ============================================
# Per-layer gradient checks
# ============================================

def test_conv3x3_gradients(ps64, rng):
    _check_layer(Conv2d(ps64, "c", 2, 3, 3), ps64, rng.normal(size=(2, 2, 6, 6)), rng)


def test_conv1x1_gradients(ps64, rng):
    _check_layer(Conv2d(ps64, "c", 3, 2, 1), ps64, rng.normal(size=(2, 3, 4, 4)), rng)


def test_conv_transpose_gradients(ps64, rng):
    _check_layer(ConvTranspose2d(ps64, "t", 3, 2, 2), ps64, rng.normal(size=(2, 3, 4, 4)), rng)


def test_maxpool_gradients(ps64, rng):
    _check_layer(MaxPool2d(), ps64, rng.normal(size=(2, 2, 4, 4)), rng)


def test_batchnorm_train_gradients(ps64, rng):
    _check_layer(BatchNorm2d(ps64, "bn", 3), ps64, rng.normal(size=(3, 3, 4, 4)), rng, train=True)


def test_batchnorm_eval_gradients(ps64, rng):
    bn = BatchNorm2d(ps64, "bn", 3)
    ps64.buffers["bn.running_mean"][:] = [0.1, -0.2, 0.3]
    ps64.buffers["bn.running_var"][:] = [0.5, 1.5, 2.0]
    _check_layer(bn, ps64, rng.normal(size=(2, 3, 4, 4)), rng, train=False)


def test_gelu_gradients(ps64, rng):
    _check_layer(GELU(), ps64, rng.normal(size=(2, 3, 4, 4)), rng)


def test_relu_gradients(ps64, rng):
    x = rng.normal(size=(2, 3, 4, 4))
    x[np.abs(x) < 1e-3] = 0.5
    _check_layer(ReLU(), ps64, x, rng)


def test_linear_gradients(ps64, rng):
    _check_layer(Linear(ps64, "fc", 5, 4), ps64, rng.normal(size=(3, 5)), rng)


def test_global_avg_pool_gradients(ps64, rng):
    _check_layer(GlobalAvgPool(), ps64, rng.normal(size=(2, 3, 4, 4)), rng)


def test_residual_block_gradients(ps64, rng):
    _check_layer(ResBlock(ps64, "res", 2, 2), ps64, rng.normal(size=(2, 2, 4, 4)), rng, limit=15)


def test_residual_block_with_projection_gradients(ps64, rng):
    _check_layer(ResBlock(ps64, "res", 2, 3), ps64, rng.normal(size=(2, 2, 4, 4)), rng, limit=15)


def test_batchnorm_train_equals_eval_with_matching_stats(ps64, rng):
    bn = BatchNorm2d(ps64, "bn", 3)
    x = rng.normal(size=(4, 3, 5, 5))
    train_out = bn.forward(x, train=True)
    ps64.buffers["bn.running_mean"] = x.mean(axis=(0, 2, 3))
    ps64.buffers["bn.running_var"] = x.var(axis=(0, 2, 3))
    assert np.allclose(bn.forward(x, train=False), train_out, atol=1e-12)


def test_batchnorm_running_stats_momentum(ps64, rng):
    bn = BatchNorm2d(ps64, "bn", 2)
    x = rng.normal(size=(4, 2, 3, 3)) + 5.0
    bn.forward(x, train=True)
    assert np.allclose(ps64.buffers["bn.running_mean"], 0.1 * x.mean(axis=(0, 2, 3)))


# ============================================
# Whole network
# ============================================

def _inputs(rng, batch=2):
    frame = rng.normal(size=(batch, 3, 32, 32))
    t_norm = rng.uniform(0.01, 1.0, size=(batch, 1))
    context = np.zeros((batch, 29))
    context[:, 0] = 1.0
    return frame, t_norm, context


def _expected_parameter_count(w: int) -> int:
    def conv(c_in, c_out, k):
        return c_in * c_out * k * k + c_out

    def bn(c):
        return 2 * c

    def res(c_in, c_out):
        skip = conv(c_in, c_out, 1) if c_in != c_out else 0
        return conv(c_in, c_out, 3) + bn(c_out) + conv(c_out, c_out, 3) + bn(c_out) + skip

    def fc(n_in, n_out):
        return n_in * n_out + n_out

    def emb(n_in, n_out):
        return fc(n_in, n_out) + fc(n_out, n_out)

    total = res(3, w)
    total += res(w, 2 * w) + res(2 * w, 2 * w)
    total += 2 * res(2 * w, 2 * w)
    total += conv(2 * w, 2 * w, 8) + bn(2 * w)
    total += emb(1, 2 * w) + emb(1, w) + emb(29, 2 * w) + emb(29, w)
    total += conv(4 * w, w, 2) + 2 * res(w, w)
    total += conv(3 * w, w, 2) + 2 * res(w, w)
    total += conv(2 * w, w, 3) + bn(w) + conv(w, 3, 3)
    return total


def test_parameter_count_width_64():
    descriptor = build_descriptor(64)
    assert count_parameters(descriptor) == _expected_parameter_count(64) == 2_739_907


def test_forward_shape(rng):
    net = ConditionedUNet(width=4, dtype=np.float64, seed=1)
    out = unet_forward(net, *_inputs(rng))
    assert out.shape == (2, 3, 32, 32)


def test_shape_mismatch(rng):
    net = ConditionedUNet(width=4, dtype=np.float64)
    frame, t_norm, context = _inputs(rng)
    with pytest.raises(ShapeMismatchError):
        unet_forward(net, frame[:, :, :16, :16], t_norm, context)
    with pytest.raises(ShapeMismatchError):
        unet_forward(net, frame, t_norm, context[:, :28])


def test_context_bit_changes_output(rng):
    frame, t_norm, context = _inputs(rng, batch=1)
    flipped = context.copy()
    flipped[0, 4] = 1.0
    for seed in range(16):
        net = ConditionedUNet(width=4, dtype=np.float64, seed=seed)
        delta = unet_forward(net, frame, t_norm, flipped) - unet_forward(net, frame, t_norm, context)
        assert np.linalg.norm(delta) > 0


def test_forward_deterministic(rng):
    inputs = _inputs(rng)
    a = unet_forward(ConditionedUNet(width=4, seed=3), *inputs)
    b = unet_forward(ConditionedUNet(width=4, seed=3), *inputs)
    assert np.array_equal(a, b)


def test_end_to_end_masked_mse_gradients(rng):
    net = ConditionedUNet(width=2, dtype=np.float64, seed=4)
    frame, t_norm, context = _inputs(rng)
    target = rng.normal(size=frame.shape)
    mask = np.zeros(frame.shape, dtype=bool)
    mask.reshape(2, 3, -1)[:, :, :600] = True
    grads, _ = backward_and_grads(net, frame, t_norm, context, target, mask)

    def objective():
        return masked_mse(net.forward(frame, t_norm, context, train=True), target, mask)[0]

    for name, param in net.ps.params.items():
        for idx in _sample_indices(param.shape, rng, 3):
            assert _agrees(grads[name][idx], objective, param, idx), name


def test_zero_output_zero_target_gives_zero_gradients(rng):
    net = ConditionedUNet(width=2, dtype=np.float64, seed=5)
    net.ps.params["out.conv2.weight"][:] = 0.0
    net.ps.params["out.conv2.bias"][:] = 0.0
    frame, t_norm, context = _inputs(rng)
    grads, loss = backward_and_grads(net, frame, t_norm, context, np.zeros(frame.shape))
    assert loss == 0.0
    assert np.all(grads["out.conv2.bias"] == 0.0)
    assert all(np.all(g == 0.0) for g in grads.values())


def test_gradients_ignore_masked_target_slots(rng):
    net = ConditionedUNet(width=2, dtype=np.float64, seed=6)
    frame, t_norm, context = _inputs(rng)
    target = rng.normal(size=frame.shape)
    mask = np.zeros(frame.shape, dtype=bool)
    mask.reshape(2, 3, -1)[:, :, :512] = True
    grads_a, loss_a = backward_and_grads(net, frame, t_norm, context, target, mask)
    scrambled = np.where(mask, target, 1e3 * rng.normal(size=frame.shape))
    grads_b, loss_b = backward_and_grads(net, frame, t_norm, context, scrambled, mask)
    assert loss_a == loss_b
    for name in grads_a:
        assert np.array_equal(grads_a[name], grads_b[name])


# ============================================
# Optimizer
# ============================================

def test_adam_zero_gradient_leaves_params():
    params = {"w": np.array([1.0, -2.0])}
    new, opt = adam_update(params, {"w": np.zeros(2)}, OptState.zeros_like(params), 1e-3)
    assert np.array_equal(new["w"], params["w"])
    assert opt.step == 1


def test_adam_constant_gradient_step_tends_to_lr():
    params = {"w": np.zeros(3)}
    opt = OptState.zeros_like(params)
    grads = {"w": np.array([0.5, -2.0, 3.0])}
    lr = 1e-3
    for _ in range(2000):
        before = params["w"].copy()
        params, opt = adam_update(params, grads, opt, lr)
    assert np.allclose(np.abs(params["w"] - before), lr, rtol=1e-4)


def test_adam_deterministic():
    rng = np.random.default_rng(0)
    grads = [{"w": rng.normal(size=4)} for _ in range(5)]

    def run():
        params = {"w": np.ones(4)}
        opt = OptState.zeros_like(params)
        for g in grads:
            params, opt = adam_update(params, g, opt, 1e-2)
        return params["w"]

    assert np.array_equal(run(), run())


def test_lr_for_epoch():
    assert lr_for_epoch(1e-3, 1, 400) == pytest.approx(9.975e-4, rel=1e-12)
    assert lr_for_epoch(1e-3, 400, 400) == 0.0
    lr, rates = 1e-3, []
    for k in range(1, 400):
        lr = lr_for_epoch(lr, k, 400)
        rates.append(lr)
    assert all(a > b for a, b in zip(rates, rates[1:]))
    with pytest.raises(ValueError):
        lr_for_epoch(1e-3, 0, 400)


def test_denoiser_training_protocol(rng):
    model = Denoiser.create(width=2, seed=0, dtype=np.float64, learning_rate=1e-4)
    frame, t_norm, context = _inputs(rng)
    target = rng.normal(size=frame.shape)
    before = model(frame, t_norm, context)
    loss_1, grads = model.loss_and_gradients(frame, t_norm, context, target)
    model.apply_gradients(grads)
    loss_2, _ = model.loss_and_gradients(frame, t_norm, context, target)
    assert loss_1 > 0.0
    assert loss_2 < loss_1
    assert model.opt.step == 1
    assert not np.array_equal(before, model(frame, t_norm, context))


# ============================================
# Weight files
# ============================================

@pytest.fixture
def trained_model(rng):
    model = Denoiser.create(width=2, seed=0)
    frame, t_norm, context = _inputs(rng)
    loss, grads = model.loss_and_gradients(frame, t_norm, context, rng.normal(size=frame.shape))
    model.apply_gradients(grads)
    return model


def test_weights_round_trip_bitwise(tmp_path, trained_model):
    path = save_weights(trained_model.net, str(tmp_path / "w.dpcw"), trained_model.opt)
    net, opt = load_weights(path)
    for name, param in trained_model.net.ps.params.items():
        assert np.array_equal(net.ps.params[name], param)
        assert np.array_equal(opt.m[name], trained_model.opt.m[name])
    for name, buf in trained_model.net.ps.buffers.items():
        assert np.array_equal(net.ps.buffers[name], buf)
    assert opt.step == trained_model.opt.step
    assert build_descriptor(net) == build_descriptor(trained_model.net)


def test_weights_without_optimizer(tmp_path, trained_model):
    path = trained_model.save(str(tmp_path / "w.dpcw"), include_optimizer=False)
    loaded = Denoiser.load(path)
    assert loaded.opt.step == 0


def test_weights_bad_magic(tmp_path, trained_model):
    path = trained_model.save(str(tmp_path / "w.dpcw"))
    data = bytearray(open(path, "rb").read())
    data[:4] = b"NOPE"
    open(path, "wb").write(bytes(data))
    with pytest.raises(WeightFileError, match="bad magic"):
        load_weights(path)


def test_weights_version_mismatch(tmp_path, trained_model):
    path = trained_model.save(str(tmp_path / "w.dpcw"))
    data = bytearray(open(path, "rb").read())
    data[4:8] = (99).to_bytes(4, "little")
    open(path, "wb").write(bytes(data))
    with pytest.raises(WeightFileError, match="version"):
        load_weights(path)


def test_weights_truncated(tmp_path, trained_model):
    path = trained_model.save(str(tmp_path / "w.dpcw"))
    data = open(path, "rb").read()
    open(path, "wb").write(data[:-100])
    with pytest.raises(WeightFileError, match="length|CRC"):
        load_weights(path)


def test_weights_crc_failure(tmp_path, trained_model):
    path = trained_model.save(str(tmp_path / "w.dpcw"))
    data = bytearray(open(path, "rb").read())
    data[-20] ^= 0xFF
    open(path, "wb").write(bytes(data))
    with pytest.raises(WeightFileError, match="CRC"):
        load_weights(path)

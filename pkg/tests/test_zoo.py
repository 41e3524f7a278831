import numpy as np
import pytest
import torch

from malcnn import (
    CheckpointError,
    ConfigurationError,
    MODEL_NAMES,
    ShapeMismatchError,
    build_densenet,
    build_lenet5,
    build_model,
    build_network,
    build_resnet,
    count_params,
    load_checkpoint,
    save_checkpoint,
)
from malcnn.zoo import (
    Checkpoint,
    GraphBuilder,
    GraphNet,
    add_bottleneck_block,
)


def standalone_block_net(info):
    """A one-block network matching a ResidualBlockInfo's geometry."""
    gb = GraphBuilder("block", (info.in_channels, *info.in_hw))
    add_bottleneck_block(gb, info.prefix, info.mid_channels, info.out_channels, info.stride)
    return build_network(gb.build(), seed=7)


def zero_residual_branch(net, prefix):
    """Zero every branch parameter so the block reduces to its shortcut."""
    with torch.no_grad():
        for name, mod in net.ops.items():
            if name.startswith(prefix) and "_proj_" not in name:
                for p in mod.parameters():
                    p.zero_()


def shortcut_output(net, info, x):
    if not info.projection:
        return torch.relu(x)
    proj = net.ops[f"{info.prefix}_proj_bn"](net.ops[f"{info.prefix}_proj_conv"](x))
    return torch.relu(proj)


class TestLenet5:
    def test_shape_trace_matches_published_architecture(self):
        spec = build_lenet5()
        shapes = {l.name: l.out_shape for l in spec.layers}
        assert spec.input_shape == (1, 120, 45)
        assert shapes["conv1"] == (32, 120, 45)
        assert shapes["pool1"] == (32, 60, 23)
        assert shapes["conv2"] == (64, 60, 23)
        assert shapes["pool2"] == (64, 30, 12)
        assert spec.layer("fc1").in_features == 23040
        assert shapes["fc1"] == (1024,)
        assert shapes["fc2"] == (512,)
        assert shapes["fc3"] == (2,)

    def test_parameter_count_closed_form(self):
        spec = build_lenet5()
        assert count_params(spec) == 24_171_906
        by_layer = {l.name: l.param_count for l in spec.layers}
        assert by_layer["conv1"] == 832
        assert by_layer["conv2"] == 51_264
        assert by_layer["fc1"] == 23_593_984
        assert by_layer["fc2"] == 524_800
        assert by_layer["fc3"] == 1_026

    def test_relu_after_every_weighted_layer_except_last(self):
        spec = build_lenet5()
        kinds = [l.kind for l in spec.layers]
        assert kinds.count("activation") == 4
        assert spec.layers[-1].kind == "fully-connected"


class TestResnets:
    @pytest.mark.parametrize("depth,blocks", [(50, 16), (101, 33), (152, 50)])
    def test_block_counts(self, depth, blocks):
        spec = build_resnet(depth)
        assert len(spec.residual_blocks) == blocks

    def test_unsupported_depth_rejected(self):
        with pytest.raises(ConfigurationError):
            build_resnet(18)

    def test_input_shape_and_head(self):
        spec = build_resnet(50)
        assert spec.input_shape == (3, 120, 45)
        assert spec.layer(spec.output).out_shape == (2,)

    def test_residual_identity_sample_of_blocks(self):
        # the full per-block sweep runs in the acceptance suite
        spec = build_resnet(50)
        for info in (spec.residual_blocks[0], spec.residual_blocks[4], spec.residual_blocks[-1]):
            net = standalone_block_net(info)
            net.eval()
            zero_residual_branch(net, info.prefix)
            x = torch.randn(2, info.in_channels, *info.in_hw)
            with torch.no_grad():
                got = net(x)
                want = shortcut_output(net, info, x)
            assert torch.allclose(got, want, atol=1e-6)

    def test_projection_only_on_geometry_changes(self):
        for info in build_resnet(50).residual_blocks:
            assert info.projection == (info.stride != 1 or info.in_channels != info.out_channels)


class TestDensenets:
    @pytest.mark.parametrize("depth,layers", [(121, 58), (169, 82), (201, 98)])
    def test_dense_layer_tally(self, depth, layers):
        spec = build_densenet(depth)
        assert sum(b.n_layers for b in spec.dense_blocks) == layers

    def test_densenet121_block_sizes(self):
        spec = build_densenet(121)
        assert [b.n_layers for b in spec.dense_blocks] == [6, 12, 24, 16]

    def test_channel_arithmetic(self):
        for depth in (121, 169, 201):
            for block in build_densenet(depth).dense_blocks:
                for i, cin in enumerate(block.layer_in_channels):
                    assert cin == block.entry_channels + i * block.growth

    def test_concat_grows_by_growth_rate(self):
        spec = build_densenet(121)
        block = spec.dense_blocks[0]
        # second layer of the first block: entry 64 + growth 32 = 96 in
        assert block.layer_in_channels[1] == 96

    def test_unsupported_depth_rejected(self):
        with pytest.raises(ConfigurationError):
            build_densenet(161)


class TestGraphNet:
    def test_zero_weight_model_gives_uniform_softmax(self):
        net = build_network("lenet5", seed=0)
        with torch.no_grad():
            for p in net.parameters():
                p.zero_()
        x = torch.randn(3, 1, 120, 45)
        with torch.no_grad():
            logits = net(x)
        assert torch.all(logits == 0.0)
        probs = torch.softmax(logits, dim=1)
        assert torch.allclose(probs, torch.full((3, 2), 0.5))

    def test_duplicated_sample_scores_identically(self):
        net = build_network("lenet5", seed=1)
        net.eval()
        x = torch.randn(1, 1, 120, 45)
        batch = torch.cat([x, x], dim=0)
        with torch.no_grad():
            out = net(batch)
        assert torch.equal(out[0], out[1])

    def test_single_conv_identity_kernel(self):
        # one 1x1 conv layer whose kernel scales its input by a constant
        gb = GraphBuilder("scale", (1, 4, 3))
        gb.conv("conv", 1, kernel=1, bias=True)
        net = GraphNet(gb.build())
        with torch.no_grad():
            net.ops["conv"].weight.fill_(2.5)
            net.ops["conv"].bias.zero_()
        x = torch.randn(2, 1, 4, 3)
        with torch.no_grad():
            assert torch.allclose(net(x), 2.5 * x)

    def test_forward_deterministic(self):
        net = build_network("resnet50", seed=3)
        net.eval()
        x = torch.randn(2, 3, 120, 45)
        with torch.no_grad():
            a, b = net(x), net(x)
        assert torch.equal(a, b)

    def test_shape_mismatch_names_layer(self):
        net = build_network("lenet5", seed=0)
        with pytest.raises(ShapeMismatchError, match="conv1"):
            net(torch.randn(1, 3, 120, 45))

    def test_init_seed_reproducible(self):
        a = build_network("lenet5", seed=11)
        b = build_network("lenet5", seed=11)
        for (ka, pa), (kb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert ka == kb and torch.equal(pa, pb)
        c = build_network("lenet5", seed=12)
        assert not torch.equal(
            dict(a.named_parameters())["ops.conv1.weight"],
            dict(c.named_parameters())["ops.conv1.weight"],
        )


def replay_with_shape_check(net, x):
    """Re-execute the layer graph step by step, asserting every layer's
    runtime output shape against its symbolic out_shape."""
    import torch.nn.functional as F

    cache = {"input": x}
    for layer in net.spec.layers:
        ins = [cache[s] for s in layer.inputs]
        if layer.kind == "activation":
            out = F.relu(ins[0])
        elif layer.kind == "add-junction":
            out = ins[0] + ins[1]
        elif layer.kind == "concat-junction":
            out = torch.cat(ins, dim=1)
        elif layer.kind == "global-average-pool":
            out = ins[0].mean(dim=(2, 3))
        elif layer.kind == "fully-connected":
            out = net.ops[layer.name](ins[0].flatten(1))
        else:
            out = net.ops[layer.name](ins[0])
        assert tuple(out.shape[1:]) == layer.out_shape, (
            f"{net.spec.name}/{layer.name}: torch produced {tuple(out.shape[1:])}, "
            f"graph declares {layer.out_shape}"
        )
        cache[layer.name] = out
    return cache[net.spec.output]


class TestModelRegistry:
    def test_all_seven_models_known(self):
        assert len(MODEL_NAMES) == 7
        for name in MODEL_NAMES:
            spec = build_model(name)
            assert spec.layer(spec.output).out_shape == (2,)

    def test_symbolic_shapes_match_torch_everywhere(self):
        # every layer of every model: symbolic propagation == runtime shape
        for name in MODEL_NAMES:
            net = build_network(name, seed=0)
            net.eval()
            x = torch.randn(2, *net.spec.input_shape)
            with torch.no_grad():
                replayed = replay_with_shape_check(net, x)
                direct = net(x)
            assert torch.allclose(replayed, direct, atol=1e-6)

    def test_unknown_model_rejected(self):
        with pytest.raises(ConfigurationError, match="resnet18"):
            build_model("resnet18")

    def test_count_params_compositional(self):
        spec = build_lenet5()
        fc_only = sum(l.param_count for l in spec.layers if l.kind == "fully-connected")
        conv_only = sum(l.param_count for l in spec.layers if l.kind == "convolution")
        assert fc_only + conv_only == count_params(spec)
        assert fc_only == 23_593_984 + 524_800 + 1_026


class TestCheckpoints:
    def test_roundtrip_exact(self, tmp_path):
        net = build_network("lenet5", seed=5)
        ckpt = Checkpoint.from_network(net, epoch=3)
        path = save_checkpoint(ckpt, tmp_path / "model.ckpt")
        loaded = load_checkpoint(path)
        assert loaded.model_name == "lenet5"
        assert loaded.epoch == 3 and loaded.init_seed == 5
        assert set(loaded.tensors) == set(ckpt.tensors)
        for k in ckpt.tensors:
            assert np.array_equal(loaded.tensors[k], ckpt.tensors[k])

    def test_restored_network_matches(self, tmp_path):
        net = build_network("lenet5", seed=5)
        ckpt = Checkpoint.from_network(net)
        from malcnn.zoo import network_from_checkpoint

        restored = network_from_checkpoint(ckpt)
        x = torch.randn(2, 1, 120, 45)
        net.eval(), restored.eval()
        with torch.no_grad():
            assert torch.equal(net(x), restored(x))

    def test_save_is_byte_deterministic(self, tmp_path):
        net = build_network("lenet5", seed=5)
        ckpt = Checkpoint.from_network(net)
        a = save_checkpoint(ckpt, tmp_path / "a.ckpt")
        b = save_checkpoint(ckpt, tmp_path / "b.ckpt")
        assert a.read_bytes() == b.read_bytes()

    def test_model_mismatch_rejected(self):
        ckpt = Checkpoint.from_network(build_network("lenet5", seed=0))
        with pytest.raises(CheckpointError, match="lenet5"):
            ckpt.apply_to(build_network("resnet50", seed=0))

    def test_corrupt_file_rejected(self, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)

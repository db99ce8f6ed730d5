"""Subspace pooling, gradients, orthogonalization, training, stacking."""

import numpy as np
import pytest

from helpers import (
    learned_group_bases,
    max_principal_angle_deg,
    max_principal_angle_sin,
    planted_subspace_data,
)
from isarec.blocks import BlockGeometry, Patch, contrast_normalize_rows
from isarec.errors import DegenerateFilterError, GeometryError
from isarec.isa import (
    IsaLayer,
    IsaNetwork,
    IsaTrainConfig,
    LayerSpec,
    StackGeometry,
    activations,
    extract_layer1,
    extract_stacked,
    gradient,
    objective,
    pretrain_network,
    project_orthonormal,
    train_layer,
)
from isarec.synthetic import moving_bar_clip
from isarec.video import DEPTH, GRAY, VideoClip
from isarec.whitening import apply_whitening, fit_pca_whitening


class TestActivations:
    def test_euclidean_norm_single_group(self):
        layer = IsaLayer(np.eye(2), group_size=2, eps=0.0)
        np.testing.assert_allclose(activations(layer, np.array([3.0, 4.0])), [5.0])

    def test_zero_input_gives_sqrt_eps(self):
        layer = IsaLayer(np.eye(4), group_size=2, eps=1e-4)
        np.testing.assert_allclose(activations(layer, np.zeros(4)), [1e-2, 1e-2])

    def test_sign_invariance(self, rng):
        W = project_orthonormal(rng.standard_normal((6, 9)))
        layer = IsaLayer(W, group_size=3, eps=1e-4)
        x = rng.standard_normal(9)
        np.testing.assert_allclose(
            activations(layer, x), activations(layer, -x), atol=1e-12
        )

    def test_dimension_mismatch(self):
        layer = IsaLayer(np.eye(2), group_size=2, eps=1e-4)
        with pytest.raises(ValueError, match="dimension"):
            activations(layer, np.zeros(3))


class TestObjective:
    def test_single_patch_is_sum_of_pools(self, rng):
        W = project_orthonormal(rng.standard_normal((4, 6)))
        layer = IsaLayer(W, group_size=2, eps=1e-4)
        x = rng.standard_normal(6)
        assert objective(layer, x[None, :]) == pytest.approx(
            activations(layer, x).sum()
        )

    def test_duplicated_batch_same_value(self, rng):
        W = project_orthonormal(rng.standard_normal((4, 6)))
        layer = IsaLayer(W, group_size=2, eps=1e-4)
        x = rng.standard_normal(6)
        assert objective(layer, np.stack([x, x])) == pytest.approx(
            objective(layer, x[None, :])
        )

    def test_analytic_two_sample(self):
        layer = IsaLayer(np.eye(2), group_size=2, eps=0.0)
        X = np.array([[3.0, 4.0], [0.0, 0.0]])
        assert objective(layer, X) == pytest.approx(2.5)

    def test_empty_batch_rejected(self):
        layer = IsaLayer(np.eye(2), group_size=2, eps=1e-4)
        with pytest.raises(ValueError, match="non-empty"):
            objective(layer, np.zeros((0, 2)))


class TestGradient:
    def test_zero_batch_gives_zero_gradient(self, rng):
        W = project_orthonormal(rng.standard_normal((4, 8)))
        layer = IsaLayer(W, group_size=2, eps=1e-4)
        np.testing.assert_array_equal(gradient(layer, np.zeros((3, 8))), 0.0)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(77)
        W = project_orthonormal(rng.standard_normal((6, 10)))
        layer = IsaLayer(W, group_size=2, eps=1e-4)
        X = rng.standard_normal((20, 10))
        analytic = gradient(layer, X)
        h = 1e-5
        worst = 0.0
        for _ in range(40):  # spot-check random entries
            i, j = rng.integers(6), rng.integers(10)
            Wp, Wm = W.copy(), W.copy()
            Wp[i, j] += h
            Wm[i, j] -= h
            fd = (
                objective(IsaLayer(Wp, 2, 1e-4), X)
                - objective(IsaLayer(Wm, 2, 1e-4), X)
            ) / (2 * h)
            worst = max(worst, abs(analytic[i, j] - fd) / max(abs(fd), 1e-12))
        assert worst <= 1e-5

    def test_scaling_patches_scales_gradient(self):
        rng = np.random.default_rng(78)
        W = project_orthonormal(rng.standard_normal((4, 6)))
        layer = IsaLayer(W, group_size=2, eps=1e-12)
        X = rng.standard_normal((15, 6))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        g1 = gradient(layer, X)
        g2 = gradient(layer, 2.0 * X)
        np.testing.assert_allclose(g2, 2.0 * g1, rtol=1e-6)


class TestProjection:
    def test_identity_fixed_point(self):
        np.testing.assert_allclose(project_orthonormal(np.eye(3)), np.eye(3), atol=1e-12)

    def test_diagonal_rescaling(self):
        W = np.diag([2.0, 3.0])
        np.testing.assert_allclose(project_orthonormal(W), np.eye(2), atol=1e-12)

    def test_random_rectangular(self, rng):
        W = rng.standard_normal((4, 8))
        R = project_orthonormal(W)
        np.testing.assert_allclose(R @ R.T, np.eye(4), atol=1e-10)
        # same row space: principal angles between spans vanish
        assert max_principal_angle_sin(W.T, R.T) <= 1e-8

    def test_degenerate_rows_rejected(self):
        W = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        with pytest.raises(DegenerateFilterError):
            project_orthonormal(W)

    def test_k_greater_than_n_rejected(self):
        with pytest.raises(ValueError, match="k <= n"):
            project_orthonormal(np.zeros((3, 2)))


class TestTrainLayer:
    def test_bit_identical_for_same_seed(self, rng):
        X = rng.standard_normal((50, 8))
        cfg = IsaTrainConfig(step_size=0.3, max_iters=30, seed=5)
        l1, t1 = train_layer(X, 4, 2, cfg)
        l2, t2 = train_layer(X, 4, 2, cfg)
        np.testing.assert_array_equal(l1.W, l2.W)
        np.testing.assert_array_equal(t1, t2)

    def test_trace_non_increasing(self, rng):
        X = rng.laplace(size=(200, 10))
        _, trace = train_layer(X, 6, 2, IsaTrainConfig(step_size=0.5, max_iters=80, seed=2))
        assert np.all(np.diff(trace) <= 0)

    def test_planted_subspaces_recovered(self):
        X, A, B = planted_subspace_data(seed=11)
        cfg = IsaTrainConfig(step_size=0.5, step_decay=1.0, max_iters=500, rel_tol=0.0, seed=2)
        layer, trace = train_layer(X, 4, 2, cfg)
        assert trace[-1] <= 0.8 * trace[0]
        g1, g2 = learned_group_bases(layer)
        angle1 = min(max_principal_angle_deg(g1, A), max_principal_angle_deg(g1, B))
        angle2 = min(max_principal_angle_deg(g2, A), max_principal_angle_deg(g2, B))
        assert max(angle1, angle2) <= 5.0

    def test_orthonormality_after_training(self, rng):
        X = rng.standard_normal((60, 12))
        layer, _ = train_layer(X, 6, 3, IsaTrainConfig(max_iters=50, seed=1))
        assert np.abs(layer.W @ layer.W.T - np.eye(6)).max() <= 1e-6

    def test_too_few_samples(self, rng):
        with pytest.raises(ValueError, match="samples"):
            train_layer(rng.standard_normal((3, 8)), 4, 2, IsaTrainConfig(seed=0))

    def test_k_not_divisible(self, rng):
        with pytest.raises(ValueError, match="divisible"):
            train_layer(rng.standard_normal((20, 8)), 5, 2, IsaTrainConfig(seed=0))


def tiny_network(rng):
    """Small consistent two-layer network with untrained random filters."""
    geometry = StackGeometry(
        layer1=BlockGeometry(3, 3, 2, 1, 1, 1),
        layer2=BlockGeometry(4, 4, 3, 2, 2, 2),
    )
    # placements: x,y in {0,1}, t in {0,1} -> 8
    w1 = fit_pca_whitening(rng.standard_normal((60, 18)), 6, eps=0.1)
    l1 = IsaLayer(project_orthonormal(rng.standard_normal((6, 6))), 2, 1e-4)
    w2 = fit_pca_whitening(rng.standard_normal((60, 8 * 3)), 5, eps=0.1)
    l2 = IsaLayer(project_orthonormal(rng.standard_normal((4, 5))), 2, 1e-4)
    return IsaNetwork(layer1=l1, layer2=l2, whiten1=w1, whiten2=w2, geometry=geometry)


class TestExtraction:
    def test_layer1_composition_of_stated_maps(self, rng):
        net = tiny_network(rng)
        patch = Patch(rng.uniform(size=18), (0, 0, 0), "c")
        got = extract_layer1(net, patch)
        manual = activations(
            net.layer1,
            apply_whitening(net.whiten1, contrast_normalize_rows(patch.values)),
        )
        np.testing.assert_array_equal(got, manual)
        assert got.shape == (3,)

    def test_layer1_zero_patch(self, rng):
        net = tiny_network(rng)
        got = extract_layer1(net, Patch(np.zeros(18), (0, 0, 0), "c"))
        manual = activations(net.layer1, apply_whitening(net.whiten1, np.zeros(18)))
        np.testing.assert_allclose(got, manual, atol=1e-12)

    def test_layer1_determinism(self, rng):
        net = tiny_network(rng)
        patch = Patch(rng.uniform(size=18), (0, 0, 0), "c")
        np.testing.assert_array_equal(extract_layer1(net, patch), extract_layer1(net, patch))

    def test_layer1_geometry_mismatch(self, rng):
        net = tiny_network(rng)
        with pytest.raises(GeometryError):
            extract_layer1(net, Patch(np.zeros(10), (0, 0, 0), "c"))

    def test_stacked_shape_and_determinism(self, rng):
        net = tiny_network(rng)
        patch = Patch(rng.uniform(size=48), (0, 0, 0), "c")
        f1 = extract_stacked(net, patch)
        f2 = extract_stacked(net, patch)
        assert f1.shape == (2,)
        np.testing.assert_array_equal(f1, f2)

    def test_frame_permutation_changes_feature(self, rng):
        for _ in range(5):
            net = tiny_network(rng)
            block = rng.uniform(size=(3, 4, 4))
            patch = Patch(block.reshape(-1), (0, 0, 0), "c")
            swapped = block[[1, 0, 2]]
            patch_swapped = Patch(swapped.reshape(-1), (0, 0, 0), "c")
            a = extract_stacked(net, patch)
            b = extract_stacked(net, patch_swapped)
            assert np.linalg.norm(a - b) > 0

    def test_stacked_geometry_mismatch(self, rng):
        net = tiny_network(rng)
        with pytest.raises(GeometryError):
            extract_stacked(net, Patch(np.zeros(18), (0, 0, 0), "c"))


def bar_clips(modality, n_clips, seed):
    return [
        moving_bar_clip(
            f"c{i}", modality, width=24, height=18, n_frames=10,
            direction=1 if i % 2 == 0 else -1, speed=1.5,
            bar_half_width=2.0, contrast=0.5, background=0.2,
            noise=0.02, seed=seed + i,
        )
        for i in range(n_clips)
    ]


def small_specs():
    geometry = StackGeometry(
        layer1=BlockGeometry(4, 4, 3, 2, 2, 2),
        layer2=BlockGeometry(6, 6, 5, 3, 3, 2),
    )
    spec1 = LayerSpec(
        whiten_dim=12, whiten_eps=0.1, n_filters=12, group_size=2,
        n_patches=500, sample_seed=31,
        train=IsaTrainConfig(step_size=0.5, max_iters=25, seed=32),
    )
    spec2 = LayerSpec(
        whiten_dim=10, whiten_eps=0.1, n_filters=10, group_size=2,
        n_patches=300, sample_seed=33,
        train=IsaTrainConfig(step_size=0.5, max_iters=25, seed=34),
    )
    return geometry, spec1, spec2


class TestPretrain:
    def test_deterministic_given_seeds(self):
        geometry, spec1, spec2 = small_specs()
        clips = bar_clips(GRAY, 4, seed=100)
        net_a, _ = pretrain_network(clips, geometry, spec1, spec2)
        net_b, _ = pretrain_network(clips, geometry, spec1, spec2)
        np.testing.assert_array_equal(net_a.layer1.W, net_b.layer1.W)
        np.testing.assert_array_equal(net_a.layer2.W, net_b.layer2.W)
        np.testing.assert_array_equal(net_a.whiten1.basis, net_b.whiten1.basis)
        np.testing.assert_array_equal(net_a.whiten2.basis, net_b.whiten2.basis)

    def test_modality_never_branches(self):
        # identical frames tagged gray vs depth must give identical networks
        geometry, spec1, spec2 = small_specs()
        gray = bar_clips(GRAY, 4, seed=200)
        depth = [VideoClip(c.clip_id, DEPTH, c.frames.copy()) for c in gray]
        net_g, _ = pretrain_network(gray, geometry, spec1, spec2)
        net_d, _ = pretrain_network(depth, geometry, spec1, spec2)
        np.testing.assert_array_equal(net_g.layer1.W, net_d.layer1.W)
        np.testing.assert_array_equal(net_g.layer2.W, net_d.layer2.W)

    def test_objective_improves_over_initialization(self):
        geometry, spec1, spec2 = small_specs()
        clips = bar_clips(GRAY, 6, seed=300)
        _, info = pretrain_network(clips, geometry, spec1, spec2)
        trace = info["layer1_trace"]
        assert trace[-1] < trace[0]

    def test_clip_too_small_rejected(self):
        geometry, spec1, spec2 = small_specs()
        clip = moving_bar_clip(
            "tiny", GRAY, width=5, height=5, n_frames=3, direction=1,
            speed=1.0, bar_half_width=1.0, contrast=0.5, background=0.2,
            noise=0.0, seed=1,
        )
        with pytest.raises(GeometryError, match="too small"):
            pretrain_network([clip], geometry, spec1, spec2)

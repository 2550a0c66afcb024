import itertools

import numpy as np
import pytest
import torch
from scipy.optimize import linprog

from hspn.common.errors import SizeLimitError
from hspn.geometry import distances


def random_cloud(n, seed, dtype=torch.float64):
    generator = torch.Generator().manual_seed(seed)
    return torch.rand(n, 3, generator=generator, dtype=dtype) * 2 - 1


def brute_force_chamfer(a, b):
    a, b = a.numpy(), b.numpy()
    total = 0.0
    for y_prime in b:
        total += min(float(np.sum((y_prime - y) ** 2)) for y in a)
    for y in a:
        total += min(float(np.sum((y - y_prime) ** 2)) for y_prime in b)
    return total


def brute_force_emd(a, b):
    a, b = a.numpy(), b.numpy()
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    perms = np.array(list(itertools.permutations(range(len(a)))))
    return cost[np.arange(len(a)), perms].sum(axis=1).min()


def lp_emd(a, b):
    a, b = a.numpy(), b.numpy()
    n = len(a)
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1).ravel()
    rows = np.kron(np.eye(n), np.ones((1, n)))
    cols = np.kron(np.ones((1, n)), np.eye(n))
    res = linprog(cost, A_eq=np.vstack([rows, cols]), b_eq=np.ones(2 * n), bounds=(0, None), method='highs')
    return res.fun


def test_chamfer_base_cases():
    a = torch.tensor([[0.0, 0.0, 0.0]])
    b = torch.tensor([[1.0, 0.0, 0.0]])
    assert distances.chamfer(a, b).item() == 2.0
    cloud = random_cloud(100, 0)
    assert distances.chamfer(cloud, cloud).item() == 0.0


def test_chamfer_matches_brute_force():
    a = random_cloud(128, 1)
    b = random_cloud(128, 2)
    assert abs(distances.chamfer(a, b).item() - brute_force_chamfer(a, b)) < 1e-9


def test_chamfer_metric_axioms():
    rng = np.random.default_rng(3)
    for i in range(1000):
        n, m = rng.integers(16, 257, size=2)
        a = torch.from_numpy(rng.normal(size=(n, 3)))
        b = torch.from_numpy(rng.normal(size=(m, 3)))
        ab = distances.chamfer(a, b).item()
        assert ab == distances.chamfer(b, a).item()
        assert ab >= 0
        assert distances.chamfer(a, a).item() == 0


def test_chamfer_batched_matches_single():
    a = torch.stack([random_cloud(32, s) for s in range(4)])
    b = torch.stack([random_cloud(40, s + 10) for s in range(4)])
    batched = distances.chamfer(a, b)
    assert batched.shape == (4,)
    for i in range(4):
        assert batched[i].item() == pytest.approx(distances.chamfer(a[i], b[i]).item(), abs=1e-12)


def test_empty_cloud_is_rejected():
    with pytest.raises(ValueError):
        distances.chamfer(torch.zeros(0, 3), torch.zeros(4, 3))
    with pytest.raises(ValueError):
        distances.pc_to_pc_error(torch.zeros(4, 3), torch.zeros(0, 3))


def test_non_finite_cloud_is_rejected():
    cloud = random_cloud(8, 0)
    cloud[3, 1] = float('nan')
    with pytest.raises(ValueError):
        distances.chamfer(cloud, random_cloud(8, 1))


def test_emd_exact_two_point_instance():
    a = torch.tensor([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], dtype=torch.float64)
    b = torch.tensor([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]], dtype=torch.float64)
    assignment = distances.emd_exact(a, b)
    assert assignment.cost == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(assignment.mapping, [0, 1])


def test_emd_exact_permutation_has_zero_cost():
    a = random_cloud(50, 4)
    perm = torch.randperm(50, generator=torch.Generator().manual_seed(0))
    assignment = distances.emd_exact(a, a[perm])
    assert assignment.cost < 1e-9
    # The bijection undoes the permutation
    np.testing.assert_array_equal(perm.numpy()[assignment.mapping], np.arange(50))
    assert distances.emd_exact(a, random_cloud(50, 5)).cost > 1e-9


@pytest.mark.parametrize("seed", range(20))
def test_emd_exact_matches_exhaustive_oracle(seed):
    n = 2 + seed % 7
    a, b = random_cloud(n, seed), random_cloud(n, seed + 100)
    assignment = distances.emd_exact(a, b)
    assert sorted(assignment.mapping.tolist()) == list(range(n))
    assert abs(assignment.cost - brute_force_emd(a, b)) < 1e-6


def test_emd_exact_matches_lp_oracle():
    a, b = random_cloud(64, 6), random_cloud(64, 7)
    assignment = distances.emd_exact(a, b)
    assert abs(assignment.cost - lp_emd(a, b)) < 1e-6
    direct = np.linalg.norm(a.numpy() - b.numpy()[assignment.mapping], axis=-1).sum()
    assert abs(assignment.cost - direct) < 1e-9


def test_emd_exact_errors():
    with pytest.raises(ValueError):
        distances.emd_exact(random_cloud(4, 0), random_cloud(5, 1))
    with pytest.raises(SizeLimitError):
        distances.emd_exact(random_cloud(513, 0), random_cloud(513, 1))


def test_emd_approx_identity_and_two_points():
    cloud = random_cloud(64, 8)
    assert distances.emd_approx(cloud, cloud).item() <= 1e-3
    a = torch.tensor([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], dtype=torch.float64)
    b = torch.tensor([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]], dtype=torch.float64)
    assert distances.emd_approx(a, b).item() == pytest.approx(1.0, rel=0.02)


def test_emd_approx_within_two_percent_of_exact():
    a = torch.stack([random_cloud(64, 1000 + s) for s in range(100)])
    b = torch.stack([random_cloud(64, 2000 + s) for s in range(100)])
    approx = distances.emd_approx(a, b)
    for i in range(100):
        exact = distances.emd_exact(a[i], b[i]).cost
        assert abs(approx[i].item() - exact) <= 0.02 * exact


def test_emd_approx_approaches_exact_as_epsilon_decreases():
    a, b = random_cloud(16, 9), random_cloud(16, 10)
    exact = distances.emd_exact(a, b).cost
    values = [distances.emd_approx(a, b, epsilon=eps).item() for eps in (0.3, 0.1, 0.03, 0.01)]
    gaps = [v - exact for v in values]
    assert all(g >= -1e-6 for g in gaps)
    assert all(later <= earlier + 1e-9 for earlier, later in zip(gaps, gaps[1:]))


def test_emd_approx_size_mismatch():
    with pytest.raises(ValueError):
        distances.emd_approx(random_cloud(4, 0), random_cloud(5, 1))


def test_emd_debiased_vanishes_under_permutation():
    cloud = random_cloud(256, 21)
    perm = torch.randperm(256, generator=torch.Generator().manual_seed(22))
    assert distances.emd_debiased(cloud, cloud[perm]).item() == pytest.approx(0.0, abs=1e-9)


def test_emd_debiased_tracks_exact():
    a, b = random_cloud(64, 23), random_cloud(64, 24)
    exact = distances.emd_exact(a, b).cost
    assert distances.emd_debiased(a, b).item() == pytest.approx(exact, rel=0.02)
    assert distances.emd_debiased(a, b).item() == pytest.approx(distances.emd_debiased(b, a).item(), rel=1e-3)


@pytest.mark.parametrize("seed", range(20))
def test_chamfer_gradient(seed):
    a = random_cloud(8, seed).requires_grad_()
    b = random_cloud(6, seed + 50).requires_grad_()
    assert torch.autograd.gradcheck(distances.chamfer, (a, b), eps=1e-5, atol=1e-6, rtol=1e-4)


@pytest.mark.parametrize("seed", range(20))
def test_emd_approx_gradient(seed):
    a = random_cloud(6, seed).requires_grad_()
    b = random_cloud(6, seed + 50).requires_grad_()

    def fn(x, y):
        return distances.emd_approx(x, y, epsilon=0.05, iterations=10)

    assert torch.autograd.gradcheck(fn, (a, b), eps=1e-5, atol=1e-6, rtol=1e-4)


def test_pc_to_pc_error():
    gt = random_cloud(64, 11)
    np.testing.assert_array_equal(distances.pc_to_pc_error(gt[:20], gt).numpy(), np.zeros(20))
    errors = distances.pc_to_pc_error(torch.tensor([[1.0, 0.0, 0.0]]), torch.tensor([[0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(errors.numpy(), [1.0])

    pred = random_cloud(30, 12)
    expected = [min(float(((p - y) ** 2).sum()) for y in gt) for p in pred]
    np.testing.assert_allclose(distances.pc_to_pc_error(pred, gt).numpy(), expected, rtol=0, atol=1e-9)


def test_metrics_are_permutation_invariant():
    a, b = random_cloud(40, 13), random_cloud(40, 14)
    generator = torch.Generator().manual_seed(1)
    pa, pb = a[torch.randperm(40, generator=generator)], b[torch.randperm(40, generator=generator)]
    assert distances.chamfer(pa, pb).item() == pytest.approx(distances.chamfer(a, b).item(), abs=1e-12)
    assert distances.emd_exact(pa, pb).cost == pytest.approx(distances.emd_exact(a, b).cost, abs=1e-9)
    np.testing.assert_allclose(np.sort(distances.pc_to_pc_error(pa, pb).numpy()),
                               np.sort(distances.pc_to_pc_error(a, b).numpy()), atol=1e-12)


def test_normalize():
    rng = np.random.default_rng(0)
    sphere = rng.normal(size=(500, 3))
    sphere /= np.linalg.norm(sphere, axis=1, keepdims=True)
    sphere -= sphere.mean(axis=0)
    sphere /= np.linalg.norm(sphere, axis=1).max()
    sphere = torch.from_numpy(sphere)
    np.testing.assert_allclose(distances.normalize(sphere).points.numpy(), sphere.numpy(), atol=1e-6)

    cloud = random_cloud(100, 15)
    result = distances.normalize(cloud)
    assert result.points.mean(dim=0).abs().max().item() < 1e-6
    assert abs(result.points.norm(dim=1).max().item() - 1) < 1e-6
    assert not bool(result.degenerate)

    shifted = distances.normalize(cloud + 5)
    np.testing.assert_allclose(shifted.points.numpy(), result.points.numpy(), atol=1e-6)

    twice = distances.normalize(result.points)
    np.testing.assert_allclose(twice.points.numpy(), result.points.numpy(), atol=1e-6)


def test_normalize_degenerate_cloud():
    result = distances.normalize(torch.full((10, 3), 2.5, dtype=torch.float64))
    assert bool(result.degenerate)
    assert result.scale.item() == 1.0
    np.testing.assert_array_equal(result.points.numpy(), np.zeros((10, 3)))

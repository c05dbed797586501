"""Splitting-step drivers, the energy-decrease correction, and the run loop."""

import numpy as np
import pytest

from optpart import (
    DegeneratePart,
    DomainMask,
    GridSpec,
    PartitionState,
    SchemeConfig,
    SecantConfig,
    SecantFailed,
    SecantStall,
    apply_sigma,
    dirichlet_energy,
    energy_decrease_wrap,
    max_support_overlap,
    partition_norms,
    residual_F,
    run,
    secant_update,
    step_four,
    step_three_geometric,
    step_three_linear,
    stopping_check,
    voronoi_init,
)

STEPS = {
    "four_step": step_four,
    "three_step_linear": step_three_linear,
    "three_step_geometric": step_three_geometric,
}


def flat_partition(grid: GridSpec, k: int, seed: int = 0) -> PartitionState:
    return voronoi_init(grid, k, rng_seed=seed)


# ---------------------------------------------------------------------------
# configuration


def test_scheme_config_validation():
    SchemeConfig(k=2)
    with pytest.raises(ValueError):
        SchemeConfig(k=0)
    with pytest.raises(ValueError):
        SchemeConfig(k=2, variant="five_step")
    with pytest.raises(ValueError):
        SchemeConfig(k=2, bc="neumann")
    with pytest.raises(ValueError):
        SchemeConfig(k=2, n_max=0)
    with pytest.raises(ValueError):
        SchemeConfig(k=2, tau=0.0)
    with pytest.raises(ValueError):
        SchemeConfig(k=2, tau=(0.1, -0.1))
    with pytest.raises(ValueError):
        SecantConfig(max_iters=0)
    with pytest.raises(ValueError):
        SecantConfig(residual_tol=0.0)


def test_tau_schedule_warmup_then_steady():
    cfg = SchemeConfig(k=2, tau=(0.5, 0.2, 0.05))
    assert cfg.tau_at(0) == 0.5
    assert cfg.tau_at(1) == 0.2
    assert cfg.tau_at(2) == 0.05
    assert cfg.tau_at(100) == 0.05
    single = SchemeConfig(k=2, tau=0.3)
    assert single.tau_at(0) == single.tau_at(50) == 0.3
    as_list = SchemeConfig(k=2, tau=[0.5, 0.2])
    assert as_list.tau == (0.5, 0.2)


def test_energy_decreasing_flag():
    assert not SchemeConfig(k=2, variant="three_step_linear").energy_decreasing
    assert SchemeConfig(k=2, variant="three_step_linear_ed").energy_decreasing


# ---------------------------------------------------------------------------
# single steps


@pytest.mark.parametrize("name", sorted(STEPS))
def test_one_step_preserves_all_constraints(name):
    grid = GridSpec(dim=2, n=16)
    state = flat_partition(grid, 3, seed=7)
    cfg = SchemeConfig(k=3, variant=name, tau=0.1)
    out = STEPS[name](state, cfg)
    assert out.values.min() >= 0.0
    assert max_support_overlap(out) == 0.0
    assert np.abs(partition_norms(out) - 1.0).max() <= 1e-12
    twice = STEPS[name](out, cfg)
    assert twice.values.min() >= 0.0
    assert max_support_overlap(twice) == 0.0


def test_step_four_single_part():
    grid = GridSpec(dim=2, n=16)
    vals = np.zeros((1,) + grid.shape)
    vals[0, 4:12, 4:12] = 1.0
    state = PartitionState(grid, vals / np.sqrt(grid.cell_volume * 64))
    out = step_four(state, SchemeConfig(k=1, tau=0.2))
    assert abs(partition_norms(out)[0] - 1.0) <= 1e-12
    assert out.values.min() >= 0.0


def test_identical_parts_degenerate_with_iteration_index():
    grid = GridSpec(dim=2, n=8)
    half = np.zeros(grid.shape)
    half[:4, :] = 1.0
    part = half / np.sqrt(grid.cell_volume * half.sum())
    state = PartitionState(grid, np.stack([part, part]))
    with pytest.raises(DegeneratePart) as err:
        run(SchemeConfig(k=2, variant="four_step", tau=0.1), state)
    assert err.value.iteration == 1
    assert err.value.part_index == 0


# ---------------------------------------------------------------------------
# residual and secant pieces


def test_residual_vanishes_for_identical_states():
    grid = GridSpec(dim=2, n=16)
    s = flat_partition(grid, 2)
    assert residual_F(s, s, 0.1) == 0.0


def test_residual_is_positive_for_equal_energy_movement():
    grid = GridSpec(dim=2, n=16)
    s = flat_partition(grid, 2)
    swapped = s.with_values(s.values[[1, 0]])
    assert residual_F(swapped, s, 0.1) > 0.0


def test_residual_reduces_to_energy_difference_for_huge_tau():
    grid = GridSpec(dim=2, n=16)
    a = flat_partition(grid, 2, seed=1)
    b = flat_partition(grid, 2, seed=2)
    de = dirichlet_energy(a) - dirichlet_energy(b)
    assert residual_F(a, b, 1e12) == pytest.approx(de, abs=1e-10)


def test_secant_update_hand_value():
    assert secant_update(0.0, -0.01, 2.0, 1.0) == -0.02


def test_secant_update_is_exact_on_affine_residuals():
    f = lambda s: 3.0 * s - 6.0
    root = secant_update(1.0, 0.0, f(1.0), f(0.0))
    assert root == 2.0
    assert f(root) == 0.0


def test_secant_update_stalls_on_flat_residual():
    with pytest.raises(SecantStall):
        secant_update(0.1, 0.2, 1.0, 1.0)


# ---------------------------------------------------------------------------
# support shift


def two_node_state(grid: GridSpec, small: float) -> PartitionState:
    h2 = grid.cell_volume
    big = np.sqrt(1.0 / h2 - small * small)
    vals = np.zeros((2,) + grid.shape)
    vals[0, 0, 0] = small
    vals[0, 1, 1] = big
    vals[1, 3, 3] = 1.0 / np.sqrt(h2)
    return PartitionState(grid, vals)


def test_apply_sigma_zero_is_identity():
    grid = GridSpec(dim=2, n=4)
    s = two_node_state(grid, 0.01)
    assert apply_sigma(s, 0.0) is s


def test_apply_sigma_drops_nodes_pushed_nonpositive():
    grid = GridSpec(dim=2, n=4)
    s = two_node_state(grid, 0.01)
    out = apply_sigma(s, -0.02)
    assert out.values[0, 0, 0] == 0.0
    assert out.values[0, 1, 1] > 0.0
    assert np.abs(partition_norms(out) - 1.0).max() <= 1e-12
    support_in = s.values > 0.0
    support_out = out.values > 0.0
    assert np.all(support_out <= support_in)
    assert max_support_overlap(out) == 0.0


def test_apply_sigma_never_revives_zero_nodes():
    grid = GridSpec(dim=2, n=4)
    s = two_node_state(grid, 0.01)
    out = apply_sigma(s, 5.0)
    assert np.array_equal(out.values > 0.0, s.values > 0.0)


def test_apply_sigma_degenerates_when_shift_swallows_a_part():
    grid = GridSpec(dim=2, n=4)
    s = two_node_state(grid, 0.01)
    with pytest.raises(DegeneratePart):
        apply_sigma(s, -10.0)


# ---------------------------------------------------------------------------
# energy-decrease correction


def test_wrap_passes_through_nonincreasing_candidates():
    grid = GridSpec(dim=2, n=16)
    prev = flat_partition(grid, 2)
    cfg = SchemeConfig(k=2, variant="three_step_linear_ed", tau=0.1)
    candidate = step_three_linear(prev, cfg)
    assert dirichlet_energy(candidate) < dirichlet_energy(prev)
    out, sigma, iters = energy_decrease_wrap(candidate, prev, cfg)
    assert out is candidate
    assert sigma is None
    assert iters == 0


def test_wrap_fails_fast_on_identical_secant_seeds():
    grid = GridSpec(dim=2, n=16)
    smooth = flat_partition(grid, 2)
    cfg0 = SchemeConfig(k=2, variant="three_step_linear_ed", tau=0.1)
    smooth = step_three_linear(smooth, cfg0)
    rough = flat_partition(grid, 2)
    assert dirichlet_energy(rough) > dirichlet_energy(smooth)
    cfg = SchemeConfig(
        k=2,
        variant="three_step_linear_ed",
        tau=0.1,
        secant=SecantConfig(sigma0=0.0, sigma1=0.0),
    )
    with pytest.raises(SecantFailed):
        energy_decrease_wrap(rough, smooth, cfg)


def test_wrap_gives_up_on_uncorrectable_flat_candidates():
    # flat per-part plateaus renormalize back to themselves under any feasible
    # shift, so no sigma can lower the energy and the search must fail
    grid = GridSpec(dim=2, n=16)
    smooth = flat_partition(grid, 2)
    cfg0 = SchemeConfig(k=2, variant="three_step_linear_ed", tau=0.1)
    for _ in range(5):
        smooth = step_three_linear(smooth, cfg0)
    rough = flat_partition(grid, 2)
    assert dirichlet_energy(rough) > dirichlet_energy(smooth)
    with pytest.raises(SecantFailed) as err:
        energy_decrease_wrap(rough, smooth, cfg0)
    assert err.value.iterations <= cfg0.secant.max_iters


def test_wrap_corrections_keep_energy_monotone():
    grid = GridSpec(dim=2, n=64)
    init = flat_partition(grid, 2)
    cfg = SchemeConfig(k=2, variant="three_step_geometric_ed", tau=0.1, n_max=200)
    final, trace = run(cfg, init)
    energies = [r.energy for r in trace]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert any(r.sigma is not None for r in trace)
    plain = SchemeConfig(k=2, variant="three_step_geometric", tau=0.1, n_max=200)
    _, plain_trace = run(plain, init)
    plain_e = [r.energy for r in plain_trace]
    assert any(b > a for a, b in zip(plain_e, plain_e[1:]))


# ---------------------------------------------------------------------------
# run loop


def test_stopping_check_compares_label_maps():
    grid = GridSpec(dim=2, n=8)
    s = flat_partition(grid, 2)
    assert stopping_check(s, s)
    assert stopping_check(s, s.with_values(2.0 * s.values))
    assert not stopping_check(s, s.with_values(s.values[[1, 0]]))


def test_run_trace_shape_and_budget():
    grid = GridSpec(dim=2, n=16)
    init = flat_partition(grid, 2)
    cfg = SchemeConfig(k=2, variant="four_step", tau=0.1, n_max=3)
    final, trace = run(cfg, init)
    assert 2 <= len(trace) <= 4
    assert trace[0].iteration == 0
    assert trace[0].energy == pytest.approx(dirichlet_energy(init), rel=1e-15)
    assert trace[-1].stopped or len(trace) == 4


def test_run_stops_when_labels_settle():
    grid = GridSpec(dim=2, n=16)
    init = flat_partition(grid, 2)
    cfg = SchemeConfig(k=2, variant="four_step", tau=0.1, n_max=500)
    final, trace = run(cfg, init)
    assert trace[-1].stopped
    assert len(trace) - 1 < 500
    assert all(not r.stopped for r in trace[:-1])


def test_run_is_deterministic():
    grid = GridSpec(dim=2, n=16)
    cfg = SchemeConfig(k=3, variant="three_step_linear", tau=0.1, n_max=50)
    a, ta = run(cfg, flat_partition(grid, 3, seed=5))
    b, tb = run(cfg, flat_partition(grid, 3, seed=5))
    assert np.array_equal(a.values, b.values)
    assert ta == tb


def test_run_invokes_callback_per_trace_row():
    grid = GridSpec(dim=2, n=16)
    seen = []
    cfg = SchemeConfig(k=2, variant="four_step", tau=0.1, n_max=5)
    _, trace = run(cfg, flat_partition(grid, 2), on_iteration=lambda s, r: seen.append(r.iteration))
    assert seen == [r.iteration for r in trace]


def test_run_rejects_mismatched_inputs():
    grid = GridSpec(dim=2, n=16)
    init = flat_partition(grid, 2)
    with pytest.raises(ValueError):
        run(SchemeConfig(k=3, tau=0.1), init)
    other = DomainMask.full(GridSpec(dim=2, n=8))
    with pytest.raises(ValueError):
        run(SchemeConfig(k=2, tau=0.1, bc="dirichlet", mask=other), init)


def test_run_with_carried_secant_seeds():
    grid = GridSpec(dim=2, n=32)
    init = flat_partition(grid, 2)
    cfg = SchemeConfig(
        k=2,
        variant="three_step_geometric_ed",
        tau=0.1,
        n_max=100,
        secant=SecantConfig(reset_each_iteration=False),
    )
    final, trace = run(cfg, init)
    energies = [r.energy for r in trace]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert final.values.min() >= 0.0
    assert max_support_overlap(final) == 0.0


def test_run_tau_schedule_reaches_stop():
    grid = GridSpec(dim=2, n=16)
    init = flat_partition(grid, 2)
    cfg = SchemeConfig(k=2, variant="three_step_linear", tau=(0.01, 0.05, 0.1), n_max=300)
    final, trace = run(cfg, init)
    assert trace[-1].stopped
    assert np.abs(partition_norms(final) - 1.0).max() <= 1e-12

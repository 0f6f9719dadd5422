import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tendbench.observation import (
    ObservationBuilder,
    ObservationConfig,
    normalize_absolute,
    normalize_relative,
    observation_dim,
)
from tendbench.scenario import TendingScenario, default_layout

LAYOUT = default_layout()


def rollout_state(steps=40, batch=4, seed=2):
    scen = TendingScenario(LAYOUT, batch_size=batch)
    state = scen.reset()
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        state, _ = scen.step(state, rng.integers(0, 5, size=(batch, 3)))
    return state


class TestNormalizeMaps:
    def test_world_center_maps_to_half(self):
        assert np.allclose(normalize_absolute(np.zeros(2), 3.0, 3.0), [0.5, 0.5])

    def test_zero_offset_maps_to_half(self):
        assert np.allclose(normalize_relative(np.zeros(2), 3.0, 3.0), [0.5, 0.5])

    def test_range_endpoints(self):
        out = normalize_relative(np.array([3.0, -3.0]), 3.0, 3.0)
        assert np.allclose(out, [1.0, 0.0])

    @given(x=st.floats(-3, 3), y=st.floats(-3, 3))
    @settings(max_examples=100, deadline=None)
    def test_relative_in_unit_square(self, x, y):
        out = normalize_relative(np.array([x, y]), 3.0, 3.0)
        assert (out >= 0).all() and (out <= 1).all()


class TestDimensions:
    def test_default_config_length_25(self):
        # 2+1 self, 2*(2+1) machines, 2 storage, 2*(2+1) others, 4*2 walls
        cfg = ObservationConfig()
        assert observation_dim(cfg, n_agents=3, n_machines=2, n_blockers=2) == 25
        builder = ObservationBuilder(LAYOUT, cfg)
        assert builder.dim == 25

    @pytest.mark.parametrize(
        "vel,tsr,rep,blockers,walls",
        list(itertools.product([False, True], [False, True],
                               ["center", "two_corners"], [False, True], [False, True])),
    )
    def test_formula_matches_built_length(self, vel, tsr, rep, blockers, walls):
        cfg = ObservationConfig(
            include_velocities=vel,
            include_time_since_ready=tsr,
            entity_representation=rep,
            include_blockers=blockers,
            include_walls=walls,
        )
        builder = ObservationBuilder(LAYOUT, cfg)
        obs = builder.build(rollout_state(steps=5))
        assert obs.shape[2] == builder.dim
        assert builder.dim == observation_dim(cfg, 3, 2, 2)
        assert sum(w for _, w in builder.field_layout()) == builder.dim

    def test_length_constant_over_episode(self):
        builder = ObservationBuilder(LAYOUT, ObservationConfig())
        scen = TendingScenario(LAYOUT, batch_size=2)
        state = scen.reset()
        rng = np.random.default_rng(0)
        dims = set()
        for _ in range(30):
            dims.add(builder.build(state).shape[2])
            state, _ = scen.step(state, rng.integers(0, 5, size=(2, 3)))
        assert dims == {builder.dim}


class TestContents:
    def test_has_part_entry(self):
        builder = ObservationBuilder(LAYOUT, ObservationConfig())
        scen = TendingScenario(LAYOUT)
        state = scen.reset()
        state = dataclasses.replace(
            state, has_part=np.array([[False, True, False]])
        )
        obs = builder.build(state)
        assert obs[0, 1, 2] == 1.0
        assert obs[0, 0, 2] == 0.0

    def test_normalized_entries_in_unit_interval(self):
        builder = ObservationBuilder(LAYOUT, ObservationConfig(
            include_velocities=True, include_time_since_ready=True,
            include_blockers=True, entity_representation="two_corners",
        ))
        obs = builder.build(rollout_state(steps=60))
        assert (obs >= 0.0).all() and (obs <= 1.0).all()
        assert builder.clamped_entries == 0

    def test_unnormalized_raw_world_units(self):
        builder = ObservationBuilder(LAYOUT, ObservationConfig(normalize=False))
        state = rollout_state(steps=10)
        obs = builder.build(state)
        assert np.array_equal(obs[:, :, 0:2], state.pos)
        # machine 0 relative position = machine center - agent center
        expect = np.array(LAYOUT.machines[0].center) - state.pos
        assert np.allclose(obs[:, :, 3:5], expect)

    def test_relative_antisymmetry(self):
        builder = ObservationBuilder(LAYOUT, ObservationConfig(normalize=False))
        obs = builder.build(rollout_state())
        # other-agent block starts after self(3) + machines(6) + storage(2) = 11
        # agent 0's first other is agent 1; agent 1's first other is agent 0
        assert np.allclose(obs[:, 0, 11:13], -obs[:, 1, 11:13])

    def test_time_since_ready_only_touches_machine_block(self):
        state = rollout_state(steps=50)
        base = ObservationBuilder(LAYOUT, ObservationConfig()).build(state)
        with_tsr = ObservationBuilder(
            LAYOUT, ObservationConfig(include_time_since_ready=True)
        ).build(state)
        # delete the two tsr entries (indices 6 and 10) and compare bitwise
        stripped = np.delete(with_tsr, [6, 10], axis=2)
        assert np.array_equal(stripped, base)

    def test_two_corner_values(self):
        builder = ObservationBuilder(
            LAYOUT, ObservationConfig(normalize=False, entity_representation="two_corners")
        )
        scen = TendingScenario(LAYOUT)
        state = scen.reset()
        obs = builder.build(state)
        m = LAYOUT.machines[0]
        lo = np.array(m.center) - np.array(m.half_extents) - state.pos[0, 0]
        hi = np.array(m.center) + np.array(m.half_extents) - state.pos[0, 0]
        assert np.allclose(obs[0, 0, 3:7], np.concatenate([lo, hi]))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_loss, random_wall_scene
from radiomap.dpm import (DominantPath, SimConfig, compute_noise_floor, compute_thresholds, denormalize,
                          dominant_path, min_loss_search, normalize_pathloss, obstruction_mask, pathloss_along_path,
                          simulate_pathloss_3d, simulate_radio_map_3d)
from radiomap.geometry import (Environment, FurnitureItem, GenConfig, GridSpec, Transmitter, WallSegment,
                               generate_random_environment, scene_grid)
from radiomap.tensor import RandomStream

CFG = SimConfig()
FREE_SPACE_BOUND_DB = 20.0 * math.log10(math.sqrt(4 - 2 * math.sqrt(2)))  # octile / euclid at 22.5 deg


def _straight(length_m, interactions=(), walls=()):
    return DominantPath([(0, 0), (0, 1)], length_m, list(interactions), list(walls))


def _empty_env(n=32, px=0.25, tx=(8, 8), tx_h=2.0, walls=(), furniture=()):
    grid = GridSpec(n, px)
    x, y = grid.center_of(*tx)
    return Environment(walls=list(walls), furniture=list(furniture), transmitters=[Transmitter(x, y, tx_h)], grid=grid)


def _search(env, rx_h=1.0, cfg=CFG):
    g = scene_grid(env)
    tx = env.transmitters[0]
    b = obstruction_mask(g, tx.height, rx_h)
    return min_loss_search(b, g.loss_db, g.turn_scale, g.obj_id, env.grid.cell_of(tx.x, tx.y), env.grid.pixel_m,
                           cfg.fspl_1m_db, cfg.pathloss_exponent, cfg.turn_cap_db, cfg.waveguiding_db)


class TestPathlossFormula:
    def test_one_metre_free_space(self):
        assert pathloss_along_path(_straight(1.0), CFG) == pytest.approx(47.87, abs=1e-2)

    def test_wavelength(self):
        assert CFG.wavelength_m == pytest.approx(0.05081, abs=1e-5)

    def test_brick_wall_adds_exactly(self):
        base = pathloss_along_path(_straight(1.0), CFG)
        assert pathloss_along_path(_straight(1.0, walls=[("brick", 10.0)]), CFG) == base + 10.0

    def test_doubling_length(self):
        d = pathloss_along_path(_straight(2.0), CFG) - pathloss_along_path(_straight(1.0), CFG)
        assert d == pytest.approx(20 * math.log10(2), abs=1e-12)
        assert d == pytest.approx(6.02, abs=5e-3)

    def test_exponent_scales_distance_term(self):
        cfg = SimConfig(pathloss_exponent=3.0)
        d = pathloss_along_path(_straight(10.0), cfg) - pathloss_along_path(_straight(1.0), cfg)
        assert d == pytest.approx(30.0)

    def test_turn_penalty_linear_in_angle(self):
        base = pathloss_along_path(_straight(1.0), CFG)
        one = pathloss_along_path(_straight(1.0, [(math.pi / 4, 15.0, "brick")]), CFG)
        assert one - base == pytest.approx(15.0 * math.pi / 4)

    def test_turn_cap(self):
        base = pathloss_along_path(_straight(1.0), CFG)
        many = pathloss_along_path(_straight(1.0, [(math.pi / 2, 15.0, "brick")] * 5), CFG)
        assert many - base == pytest.approx(CFG.turn_cap_db)

    def test_waveguiding_subtracts(self):
        a = pathloss_along_path(_straight(3.0), CFG)
        b = pathloss_along_path(_straight(3.0), SimConfig(waveguiding_db=2.5))
        assert a - b == pytest.approx(2.5)

    def test_rejects_zero_length(self):
        with pytest.raises(ValueError):
            pathloss_along_path(_straight(0.0), CFG)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"frequency_hz": 0}, {"bandwidth_hz": -1}, {"pathloss_exponent": 0.5}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SimConfig(**kw)

    def test_dict_round_trip(self):
        cfg = SimConfig(m1_db=-40.0, rx_heights=(0.5, 1.0))
        assert SimConfig.from_dict(cfg.to_dict()) == cfg


class TestThresholds:
    def test_noise_floor_default(self):
        assert compute_noise_floor(CFG) == -104.0

    def test_noise_floor_bandwidth_doubling(self):
        assert compute_noise_floor(SimConfig(bandwidth_hz=2e7)) - compute_noise_floor(CFG) == pytest.approx(3.0103, abs=1e-4)

    def test_noise_figure_shift(self):
        assert compute_noise_floor(SimConfig(noise_figure_db=3.0)) == -101.0

    def test_l_thr_default(self):
        assert compute_thresholds(CFG, m1_db=-40.0)[0] == -127.0

    def test_l_trnc_example(self):
        assert compute_thresholds(CFG, m1_db=-47.0) == (-127.0, -147.0)

    def test_fixed_point(self):
        assert compute_thresholds(CFG, m1_db=-127.0)[1] == -127.0

    def test_needs_m1(self):
        with pytest.raises(ValueError):
            compute_thresholds(CFG)


class TestNormalization:
    M1 = -47.0

    def test_endpoints(self):
        l_trnc = compute_thresholds(CFG, self.M1)[1]
        assert normalize_pathloss(l_trnc, CFG, self.M1) == 0.0
        assert normalize_pathloss(self.M1, CFG, self.M1) == 1.0
        assert normalize_pathloss(0.5 * (l_trnc + self.M1), CFG, self.M1) == pytest.approx(0.5, abs=1e-15)

    def test_clamps_below_truncation(self):
        assert normalize_pathloss(-500.0, CFG, self.M1) == 0.0

    def test_array_input(self):
        v = normalize_pathloss(np.array([-147.0, -97.0, -47.0]), CFG, self.M1)
        np.testing.assert_allclose(v, [0.0, 0.5, 1.0])

    def test_uses_config_m1(self):
        assert normalize_pathloss(-47.0, SimConfig(m1_db=-47.0)) == 1.0

    def test_rejects_m1_at_truncation(self):
        with pytest.raises(ValueError):
            normalize_pathloss(-127.0, CFG, -127.0)

    @given(st.floats(-146.999, -47.0))
    def test_round_trip(self, L):
        assert denormalize(normalize_pathloss(L, CFG, self.M1), CFG, self.M1) == pytest.approx(L, abs=1e-6)


class TestFreeSpace:
    def test_matches_octile_law_exactly(self):
        env = _empty_env()
        res = _search(env)
        rr, cc = np.mgrid[0:32, 0:32]
        a, b = np.abs(rr - 8), np.abs(cc - 8)
        octile = np.maximum(np.maximum(a, b) - np.minimum(a, b) + math.sqrt(2) * np.minimum(a, b), 1.0)
        expected = CFG.fspl_1m_db + 20 * np.log10(octile * 0.25)
        np.testing.assert_allclose(res.loss_db, expected, rtol=0, atol=1e-9)

    def test_within_discretization_bound_of_direct_ray(self):
        env = _empty_env()
        res = _search(env)
        rr, cc = np.mgrid[0:32, 0:32]
        euclid = np.maximum(np.hypot(rr - 8, cc - 8), 1.0) * 0.25
        direct = CFG.fspl_1m_db + 20 * np.log10(euclid)
        excess = res.loss_db - direct
        assert excess.min() >= -1e-9
        assert excess.max() <= FREE_SPACE_BOUND_DB + 1e-9
        assert FREE_SPACE_BOUND_DB == pytest.approx(0.69, abs=5e-3)

    def test_transmitter_cell_clamped_to_one_pixel(self):
        res = _search(_empty_env())
        assert res.loss_db[8, 8] == pytest.approx(CFG.fspl_1m_db + 20 * math.log10(0.25))
        assert res.loss_db[8, 8] == res.loss_db.min()

    @pytest.mark.parametrize("direction", [(0, 1), (1, 0), (1, 1), (-1, 1), (0, -1), (-1, -1)])
    def test_monotone_along_rays(self, direction):
        res = _search(_empty_env(tx=(15, 15)))
        dr, dc = direction
        vals = [res.loss_db[15 + k * dr, 15 + k * dc] for k in range(16) if 0 <= 15 + k * dr < 32 and 0 <= 15 + k * dc < 32]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestWalls:
    def _divided(self, material="brick", height=3.0):
        # full-length vertical wall at column 16 separates the transmitter side
        wall = WallSegment((16.5 * 0.25, 0.0), (16.5 * 0.25, 8.0), height=height, material=material)
        return _empty_env(tx=(16, 4), walls=[wall])

    def test_shadow_shift_is_transmission_loss(self):
        free = _search(_empty_env(tx=(16, 4))).loss_db
        walled = _search(self._divided()).loss_db
        # cells whose diagonal-first octile path bends well before the wall keep their topology
        checked = 0
        for r in range(32):
            for c in range(18, 32):
                if abs(r - 16) <= c - 4 and 4 + abs(r - 16) <= 14:
                    assert walled[r, c] - free[r, c] == pytest.approx(10.0, abs=1e-9)
                    checked += 1
        assert checked > 100

    def test_every_far_cell_pays_at_least_once(self):
        free = _search(_empty_env(tx=(16, 4))).loss_db
        walled = _search(self._divided()).loss_db
        assert (walled[:, 17:] - free[:, 17:] >= 10.0 - 1e-9).all()
        np.testing.assert_array_equal(walled[:, :16] >= free[:, :16], True)

    def test_material_loss_used(self):
        free = _search(_empty_env(tx=(16, 4))).loss_db
        walled = _search(self._divided(material="fir_wood")).loss_db
        assert walled[16, 30] - free[16, 30] == pytest.approx(4.0, abs=1e-9)

    def test_dominant_path_reports_crossing(self):
        env = self._divided()
        path = dominant_path(env, 0, (16, 30), 1.0, CFG)
        assert [w[0] for w in path.walls] == ["brick"]
        assert path.interactions == []
        assert path.cells[0] == (16, 4) and path.cells[-1] == (16, 30)
        assert path.length_m == pytest.approx(26 * 0.25)

    def test_vertical_clearance(self):
        # 1.5 m obstacle across the scene, transmitter at 2.0 m
        grid = GridSpec(32, 0.25)
        bar = FurnitureItem([(16 * 0.25, 0.0), (17 * 0.25, 0.0), (17 * 0.25, 8.0), (16 * 0.25, 8.0)], 1.5, "fir_wood")
        env = _empty_env(tx=(16, 4), furniture=[bar])
        free = _search(_empty_env(tx=(16, 4)), rx_h=1.8).loss_db
        high = dominant_path(env, 0, (16, 30), 1.8, CFG)
        low = dominant_path(env, 0, (16, 30), 0.5, CFG)
        assert high.walls == []
        assert [w[0] for w in low.walls] == ["fir_wood"]
        assert pathloss_along_path(high, CFG) == pytest.approx(free[16, 30])
        assert pathloss_along_path(low, CFG) - pathloss_along_path(high, CFG) == pytest.approx(4.0)
        assert grid == env.grid

    def test_same_object_charged_once(self):
        # a thick block: travelling along its interior costs one crossing
        block = FurnitureItem([(2.0, 3.0), (6.0, 3.0), (6.0, 5.0), (2.0, 5.0)], 2.0, "fir_wood")
        env = _empty_env(tx=(16, 4), furniture=[block])
        path = dominant_path(env, 0, (16, 20), 0.5, CFG)
        assert len(path.walls) <= 1

    def test_receiver_out_of_grid(self):
        with pytest.raises(ValueError):
            dominant_path(_empty_env(), 0, (40, 0), 1.0, CFG)


class TestBruteForce:
    @pytest.mark.parametrize("shape", [(3, 3), (3, 4)])
    @pytest.mark.parametrize("seed", range(6))
    def test_unpruned_enumeration(self, shape, seed):
        rng = np.random.default_rng(seed)
        b = rng.random(shape) < 0.35
        b[0, 0] = False
        loss = np.where(b, rng.choice([4.0, 10.0], shape), 0.0)
        ts = np.where(b, rng.choice([8.0, 15.0], shape), 0.0)
        oid = np.where(b, rng.integers(0, 2, shape), -1)
        res = min_loss_search(b, loss, ts, oid, (0, 0), 0.5, CFG.fspl_1m_db, 2, 35)
        for r in range(shape[0]):
            for c in range(shape[1]):
                v, found = brute_force_loss(b, loss, ts, oid, (0, 0), (r, c), 0.5, CFG.fspl_1m_db, 2, 35, prune=False)
                assert found and v == res.loss_db[r, c]

    def test_pruning_keeps_minimum(self):
        rng = np.random.default_rng(3)
        b = rng.random((4, 4)) < 0.3
        b[0, 0] = False
        loss = np.where(b, 10.0, 0.0)
        ts = np.where(b, 15.0, 0.0)
        oid = np.where(b, np.arange(16).reshape(4, 4), -1)
        for r in range(4):
            for c in range(4):
                full = brute_force_loss(b, loss, ts, oid, (0, 0), (r, c), 0.5, CFG.fspl_1m_db, 2, 35, prune=False)
                pruned = brute_force_loss(b, loss, ts, oid, (0, 0), (r, c), 0.5, CFG.fspl_1m_db, 2, 35)
                assert full == pruned

    def test_eight_by_eight_one_wall(self):
        grid = GridSpec(8, 0.5)
        wall = WallSegment((0.3, 2.25), (2.9, 2.25))
        x, y = grid.center_of(0, 1)
        env = Environment(walls=[wall], furniture=[], transmitters=[Transmitter(x, y, 2.0)], grid=grid)
        g = scene_grid(env)
        b = obstruction_mask(g, 2.0, 1.0)
        res = _search(env)
        assert b.sum() >= 5
        for r in range(8):
            for c in range(8):
                v, found = brute_force_loss(b, g.loss_db, g.turn_scale, g.obj_id, (0, 1), (r, c), 0.5,
                                            CFG.fspl_1m_db, 2, 35, upper=res.loss_db[r, c] + 1e-6)
                assert found and v == res.loss_db[r, c]

    @pytest.mark.parametrize("seed", range(100, 106))
    def test_random_scenes(self, seed):
        env = random_wall_scene(seed)
        g = scene_grid(env)
        tx = env.transmitters[0]
        cell = env.grid.cell_of(tx.x, tx.y)
        b = obstruction_mask(g, tx.height, 0.5)
        res = _search(env, rx_h=0.5)
        for r in range(10):
            for c in range(10):
                v, found = brute_force_loss(b, g.loss_db, g.turn_scale, g.obj_id, cell, (r, c), 0.5,
                                            CFG.fspl_1m_db, 2, 35, upper=res.loss_db[r, c] + 1e-6)
                assert found and v == res.loss_db[r, c]


@pytest.fixture(scope="module")
def generated():
    return generate_random_environment(RandomStream(11), GenConfig(grid=GridSpec(64, 0.32)))


class TestPathReconstruction:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 63), st.integers(0, 63), st.sampled_from([0.5, 1.2, 2.0]))
    def test_path_reproduces_map_value(self, generated, r, c, h):
        env = generated
        path = dominant_path(env, 0, (r, c), h, CFG)
        cells = path.cells
        tx = env.transmitters[0]
        assert cells[0] == env.grid.cell_of(tx.x, tx.y) and cells[-1] == (r, c)
        for (r0, c0), (r1, c1) in zip(cells, cells[1:]):
            assert max(abs(r1 - r0), abs(c1 - c0)) == 1
        euclid = math.hypot(r - cells[0][0], c - cells[0][1]) * env.grid.pixel_m
        assert path.length_m >= euclid - 1e-12
        loss = simulate_pathloss_3d(env, SimConfig(rx_heights=(h,)))[0, r, c]
        assert pathloss_along_path(path, CFG) == pytest.approx(loss, abs=1e-9)


class TestRadioMap3D:
    def test_shape_and_range(self, generated):
        rm = simulate_radio_map_3d(generated, CFG)
        assert rm.values.shape == (16, 64, 64)
        assert rm.heights == CFG.rx_heights
        assert rm.values.min() >= 0.0 and rm.values.max() <= 1.0

    def test_transmitter_cell_is_maximum(self, generated):
        rm = simulate_radio_map_3d(generated, CFG)
        r, c = generated.grid.cell_of(generated.transmitters[0].x, generated.transmitters[0].y)
        for plane in rm.values:
            assert plane[r, c] == plane.max()

    def test_planes_identical_when_furniture_low(self):
        walls = [WallSegment((4.1, 0.0), (4.1, 5.0)), WallSegment((0.0, 6.1), (8.0, 6.1))]
        low = [FurnitureItem([(1.0, 1.0), (2.0, 1.0), (2.0, 2.0), (1.0, 2.0)], 0.5)]
        env = _empty_env(tx=(10, 10), tx_h=2.0, walls=walls, furniture=low)
        pl = simulate_pathloss_3d(env, CFG)
        assert all(np.array_equal(pl[0], p) for p in pl[1:])

    def test_planes_differ_with_tall_furniture(self):
        bar = FurnitureItem([(4.0, 0.0), (4.25, 0.0), (4.25, 8.0), (4.0, 8.0)], 1.5)
        env = _empty_env(tx=(16, 4), tx_h=2.0, furniture=[bar])
        pl = simulate_pathloss_3d(env, CFG)
        assert not np.array_equal(pl[0], pl[-1])
        assert (pl[0] >= pl[-1]).all()

    def test_deterministic(self, generated):
        a = simulate_radio_map_3d(generated, CFG)
        b = simulate_radio_map_3d(generated, CFG)
        assert a.values.tobytes() == b.values.tobytes()

    def test_dataset_m1(self, generated):
        rm = simulate_radio_map_3d(generated, CFG, m1_db=-30.0)
        assert rm.values.max() < 1.0
        own = simulate_radio_map_3d(generated, CFG)
        assert own.values.max() == 1.0

    @pytest.mark.parametrize("axis", [0, 1])
    def test_mirror_symmetry(self, generated, axis):
        g = scene_grid(generated)
        tx = generated.transmitters[0]
        r, c = generated.grid.cell_of(tx.x, tx.y)
        b = obstruction_mask(g, tx.height, 1.0)
        n = generated.grid.size
        res = min_loss_search(b, g.loss_db, g.turn_scale, g.obj_id, (r, c), 0.32, CFG.fspl_1m_db, 2, 35)
        m = g.mirrored(axis)
        mb = obstruction_mask(m, tx.height, 1.0)
        mcell = (n - 1 - r, c) if axis == 0 else (r, n - 1 - c)
        mres = min_loss_search(mb, m.loss_db, m.turn_scale, m.obj_id, mcell, 0.32, CFG.fspl_1m_db, 2, 35)
        assert np.flip(mres.loss_db, axis=axis).tobytes() == res.loss_db.tobytes()

    def test_transpose_symmetry(self, generated):
        g = scene_grid(generated)
        tx = generated.transmitters[0]
        r, c = generated.grid.cell_of(tx.x, tx.y)
        b = obstruction_mask(g, tx.height, 1.0)
        res = min_loss_search(b, g.loss_db, g.turn_scale, g.obj_id, (r, c), 0.32, CFG.fspl_1m_db, 2, 35)
        t = lambda a: np.ascontiguousarray(a.T)
        tres = min_loss_search(t(b), t(g.loss_db), t(g.turn_scale), t(g.obj_id), (c, r), 0.32, CFG.fspl_1m_db, 2, 35)
        assert t(tres.loss_db).tobytes() == res.loss_db.tobytes()

"""Guided denoising loop, guidance combination, and inpainting clamps."""

import numpy as np
import pytest

import instmask.maskgen
from instmask.attention import AttentionStack, TokenSequence
from instmask.editor import (EditConfig, GuidedState, OracleBackend,
                             blend_latents, edit, eps_cfg, guided_step,
                             inpaint_finalize)
from instmask.maskgen import BinaryMask
from instmask.schedule import add_noise, build_schedule, encode_image
from instmask.synthetic import SyntheticBackend, generate_corpus
from instmask import fileio

LATENT = (3, 16, 16)


class ScriptedBackend:
    """Constant noise fields: one value with conditioning, another without."""

    def __init__(self, cond_value, uncond_value, n_tokens=3):
        self.cond_value = cond_value
        self.uncond_value = uncond_value
        self._maps = np.full((n_tokens, 16, 16), 1.0 / n_tokens)

    def predict(self, x_t, t, cond):
        v = self.uncond_value if cond is None else self.cond_value
        return np.full(np.shape(x_t), float(v)), AttentionStack(
            maps=self._maps, timestep=t)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest = generate_corpus(6, seed=11, out_dir=root)
    return root, manifest


def load_sample(root, manifest, i):
    sample = manifest["samples"][i]
    image = fileio.load_rgb_png(root / sample["image"])
    gt = fileio.load_mask_png(root / sample["mask"])
    return sample, image, gt


class TestEpsCfg:
    def test_zero_scale_gives_unconditional(self):
        b = ScriptedBackend(cond_value=1.0, uncond_value=0.0)
        out = eps_cfg(b, np.zeros(LATENT), 0, "cond", 0.0)
        np.testing.assert_array_equal(out, 0.0)

    def test_unit_scale_gives_conditional(self):
        b = ScriptedBackend(cond_value=1.0, uncond_value=0.0)
        out = eps_cfg(b, np.zeros(LATENT), 0, "cond", 1.0)
        np.testing.assert_array_equal(out, 1.0)

    def test_linear_extrapolation(self):
        b = ScriptedBackend(cond_value=1.0, uncond_value=0.0)
        out = eps_cfg(b, np.zeros(LATENT), 0, "cond", 7.5)
        np.testing.assert_allclose(out, 7.5, atol=1e-12)

    def test_negative_scale_rejected(self):
        b = ScriptedBackend(1.0, 0.0)
        with pytest.raises(ValueError):
            eps_cfg(b, np.zeros(LATENT), 0, None, -1.0)


class TestBlendLatents:
    def test_all_ones_takes_prediction(self, rng):
        a = rng.normal(size=LATENT)
        b = rng.normal(size=LATENT)
        m = BinaryMask(np.ones((16, 16), np.uint8), 0.2)
        np.testing.assert_array_equal(blend_latents(a, b, m), a)

    def test_all_zeros_takes_anchor(self, rng):
        a = rng.normal(size=LATENT)
        b = rng.normal(size=LATENT)
        m = BinaryMask(np.zeros((16, 16), np.uint8), 0.2)
        np.testing.assert_array_equal(blend_latents(a, b, m), b)

    def test_half_mask_cellwise(self, rng):
        a = rng.normal(size=LATENT)
        b = rng.normal(size=LATENT)
        grid = np.zeros((16, 16), np.uint8)
        grid[:, :8] = 1
        out = blend_latents(a, b, BinaryMask(grid, 0.2))
        np.testing.assert_array_equal(out[:, :, :8], a[:, :, :8])
        np.testing.assert_array_equal(out[:, :, 8:], b[:, :, 8:])

    def test_shape_mismatch_rejected(self, rng):
        m = BinaryMask(np.ones((16, 16), np.uint8), 0.2)
        with pytest.raises(ValueError):
            blend_latents(np.ones(LATENT), np.ones((3, 16, 15)), m)
        with pytest.raises(ValueError):
            blend_latents(np.ones((3, 8, 8)), np.ones((3, 8, 8)), m)


def make_state(rng, schedule, t, cond=None, rounds=2, seed=77):
    x_orig = rng.normal(size=LATENT)
    latents = [add_noise(x_orig, t, rng.normal(size=LATENT), schedule)
               for _ in range(rounds)]
    return GuidedState(
        latents=latents, x_orig=x_orig, cond=cond,
        rng_y=np.random.default_rng(seed),
        rng_z=[np.random.default_rng(seed + 1 + k) for k in range(rounds)])


class TestGuidedStep:
    def test_zero_mask_freezes_to_noised_original(self, rng):
        s = build_schedule()
        t = 500
        backend = OracleBackend(rng.normal(size=LATENT), s)
        state = make_state(rng, s, t, seed=123)
        x_orig = state.x_orig.copy()
        zero = BinaryMask(np.zeros((16, 16), np.uint8), 0.2)
        guided_step(state, t, backend, s, EditConfig(), mask_override=zero)
        # reproduce the fresh noised original with a twin stream
        twin = np.random.default_rng(123)
        y = add_noise(x_orig, s.prev_timestep(t), twin.standard_normal(LATENT), s)
        for latent in state.latents:
            np.testing.assert_array_equal(latent, y)

    def test_full_mask_is_plain_reverse_step(self, rng):
        from instmask.schedule import reverse_step

        s = build_schedule()
        t = 500
        target = rng.normal(size=LATENT)
        backend = OracleBackend(target, s)
        state = make_state(rng, s, t, rounds=1, seed=9)
        x_before = state.latents[0].copy()
        ones = BinaryMask(np.ones((16, 16), np.uint8), 0.2)
        guided_step(state, t, backend, s, EditConfig(rounds=1),
                    mask_override=ones)
        twin_z = np.random.default_rng(10)  # mirrors rng_z[0]
        eps, _ = backend.predict(x_before, t, None)
        expected = reverse_step(x_before, eps, t, twin_z.standard_normal(LATENT), s)
        np.testing.assert_allclose(state.latents[0], expected, atol=1e-12)

    def test_trace_records_mask(self, rng):
        s = build_schedule()
        backend = OracleBackend(rng.normal(size=LATENT), s)
        state = make_state(rng, s, 500)
        guided_step(state, 500, backend, s, EditConfig())
        assert len(state.trace) == 1
        assert state.trace[0].timestep == 500
        assert state.p is not None

    def test_edit_changes_region_much_more_than_background(self, corpus):
        root, manifest = corpus
        sample, image, gt = load_sample(root, manifest, 0)
        s = build_schedule()
        backend = SyntheticBackend.from_files(root / sample["image"], s)
        tokens = TokenSequence.from_text(sample["edit_text"])
        session = edit(image, tokens, EditConfig(seed=5), backend, s)
        diff = (session.output_image.astype(np.float64)
                - image.astype(np.float64))
        inside = np.sqrt(np.mean(diff[gt.astype(bool)] ** 2))
        outside = np.sqrt(np.mean(diff[~gt.astype(bool)] ** 2))
        assert inside >= 10 * outside


class TestInpaintFinalize:
    def test_zero_mask_returns_original(self, rng):
        s = build_schedule()
        x_orig = rng.normal(size=LATENT)
        backend = OracleBackend(rng.normal(size=LATENT), s)
        zero = BinaryMask(np.zeros((16, 16), np.uint8), 0.2)
        out = inpaint_finalize(x_orig, zero, None, backend, s, EditConfig())
        np.testing.assert_allclose(out, x_orig, atol=1e-6)

    def test_full_mask_converges_to_target(self, rng):
        s = build_schedule()
        target = rng.normal(size=LATENT)
        backend = OracleBackend(target, s)
        ones = BinaryMask(np.ones((16, 16), np.uint8), 0.2)
        out = inpaint_finalize(rng.normal(size=LATENT), ones, None, backend,
                               s, EditConfig())
        assert np.sqrt(np.mean((out - target) ** 2)) <= 1e-3

    def test_half_mask_splits_exactly(self, rng):
        s = build_schedule()
        x_orig = rng.normal(size=LATENT)
        target = rng.normal(size=LATENT)
        backend = OracleBackend(target, s)
        grid = np.zeros((16, 16), np.uint8)
        grid[:8] = 1
        out = inpaint_finalize(x_orig, BinaryMask(grid, 0.2), None, backend,
                               s, EditConfig())
        np.testing.assert_array_equal(out[:, 8:, :], x_orig[:, 8:, :])
        np.testing.assert_allclose(out[:, :8, :], target[:, :8, :], atol=1e-6)

    def test_unmasked_cells_exact_for_any_mask(self, rng):
        s = build_schedule()
        x_orig = rng.normal(size=LATENT)
        backend = OracleBackend(rng.normal(size=LATENT), s)
        grid = (rng.random((16, 16)) > 0.5).astype(np.uint8)
        out = inpaint_finalize(x_orig, BinaryMask(grid, 0.2), None, backend,
                               s, EditConfig())
        off = ~grid.astype(bool)
        np.testing.assert_array_equal(out[:, off], x_orig[:, off])


class TestEdit:
    def test_zero_strength_rejected(self, corpus):
        root, manifest = corpus
        sample, image, _ = load_sample(root, manifest, 0)
        s = build_schedule()
        backend = SyntheticBackend.from_files(root / sample["image"], s)
        tokens = TokenSequence.from_text(sample["edit_text"])
        with pytest.raises(ValueError, match="strength too low"):
            edit(image, tokens, EditConfig(strength=0.0), backend, s)

    def test_session_is_deterministic(self, corpus):
        root, manifest = corpus
        sample, image, _ = load_sample(root, manifest, 1)
        s = build_schedule()
        backend = SyntheticBackend.from_files(root / sample["image"], s)
        tokens = TokenSequence.from_text(sample["edit_text"])
        a = edit(image, tokens, EditConfig(seed=21), backend, s)
        b = edit(image, tokens, EditConfig(seed=21), backend, s)
        np.testing.assert_array_equal(a.output_image, b.output_image)
        np.testing.assert_array_equal(a.output_latent, b.output_latent)
        assert a.to_json_dict() == b.to_json_dict()
        for ra, rb in zip(a.trace, b.trace):
            np.testing.assert_array_equal(ra.latent, rb.latent)
            np.testing.assert_array_equal(ra.mask.grid, rb.mask.grid)

    def test_shape_swap_mask_quality(self, corpus):
        from instmask.evalkit import change_rates, iou
        from instmask.numerics import resize_nearest

        root, manifest = corpus
        sample, image, gt = load_sample(root, manifest, 0)
        s = build_schedule()
        backend = SyntheticBackend.from_files(root / sample["image"], s)
        tokens = TokenSequence.from_text(sample["edit_text"])
        session = edit(image, tokens, EditConfig(seed=0), backend, s)
        gen = resize_nearest(session.final_mask.grid, *gt.shape)
        assert iou(gen, gt) >= 0.9
        _, c_non = change_rates(image, session.output_image, gt)
        assert c_non <= 0.01

    def test_trace_covers_strided_timesteps_below_tau(self, corpus):
        root, manifest = corpus
        sample, image, _ = load_sample(root, manifest, 2)
        s = build_schedule()
        backend = SyntheticBackend.from_files(root / sample["image"], s)
        tokens = TokenSequence.from_text(sample["edit_text"])
        session = edit(image, tokens, EditConfig(seed=2), backend, s)
        assert session.tau == 500
        expected = [int(t) for t in s.timesteps[s.timesteps <= 500]][::-1]
        assert [r.timestep for r in session.trace] == expected
        assert session.final_mask is session.trace[-1].mask

    def test_weights_computed_once_per_session(self, corpus, monkeypatch):
        root, manifest = corpus
        sample, image, _ = load_sample(root, manifest, 0)
        s = build_schedule()
        backend = SyntheticBackend.from_files(root / sample["image"], s)
        tokens = TokenSequence.from_text(sample["edit_text"])

        calls = []
        original = instmask.maskgen.position_vector

        def probe(sv, cfg, computed_at=0):
            calls.append(computed_at)
            return original(sv, cfg, computed_at)

        monkeypatch.setattr(instmask.maskgen, "position_vector", probe)
        session = edit(image, tokens, EditConfig(seed=1), backend, s)
        assert calls == [session.tau]
        assert session.p.computed_at == session.tau

    def test_seed_changes_streams_but_not_weights(self, corpus):
        root, manifest = corpus
        sample, image, _ = load_sample(root, manifest, 1)
        s = build_schedule()
        backend = SyntheticBackend.from_files(root / sample["image"], s)
        tokens = TokenSequence.from_text(sample["edit_text"])
        a = edit(image, tokens, EditConfig(seed=1), backend, s)
        b = edit(image, tokens, EditConfig(seed=2), backend, s)
        np.testing.assert_array_equal(a.p.values, b.p.values)
        assert any(not np.array_equal(ra.latent, rb.latent)
                   for ra, rb in zip(a.trace, b.trace))

    def test_parallel_rounds_share_masks(self, corpus):
        root, manifest = corpus
        sample, image, _ = load_sample(root, manifest, 0)
        s = build_schedule()
        backend = SyntheticBackend.from_files(root / sample["image"], s)
        tokens = TokenSequence.from_text(sample["edit_text"])
        one = edit(image, tokens, EditConfig(seed=3, rounds=1), backend, s)
        three = edit(image, tokens, EditConfig(seed=3, rounds=3), backend, s)
        np.testing.assert_array_equal(one.final_mask.grid,
                                      three.final_mask.grid)

    def test_oracle_backend_roundtrip_is_identity(self, rng):
        cells = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        image = np.repeat(np.repeat(cells, 2, axis=0), 2, axis=1)
        s = build_schedule()
        backend = OracleBackend(encode_image(image), s)
        tokens = TokenSequence.from_text("keep it all the same")
        session = edit(image, tokens, EditConfig(seed=4), backend, s)
        np.testing.assert_array_equal(session.output_image, image)

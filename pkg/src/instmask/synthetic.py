"""Synthetic editing corpus: scripted scenes with known edit regions.

Each sample is a block-aligned 32x32 scene (every 2x2 pixel block is
constant, so the toy latent codec round-trips exactly) plus a ground-truth
edit mask, prompt strings, and a scenario file describing the scripted
attention layout. ``SyntheticBackend`` turns a scenario into a denoiser:
noise predictions point analytically at the recolored target image and the
reported attention concentrates each noun's map on its scene region, with
a seeded per-step jitter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .attention import ATTN_RES, AttentionStack
from .editor import DenoiserBackend
from .schedule import NoiseSchedule, encode_image
from .util import seeded_rng

CATEGORIES = ("main-object", "secondary-object", "background")

OBJECT_COLORS = {
    "crimson": (185, 35, 60),
    "teal": (20, 135, 135),
    "gold": (220, 170, 40),
    "violet": (130, 60, 180),
    "ember": (230, 110, 30),
    "moss": (90, 140, 50),
    "cobalt": (40, 80, 190),
    "rose": (225, 120, 160),
}
BACKGROUND_COLORS = {
    "slate": (95, 105, 115),
    "sand": (205, 190, 160),
    "charcoal": (55, 55, 60),
    "ivory": (235, 230, 215),
}

# scripted per-cell token weights (normalized per cell before use)
_W_START_IN, _W_START_OUT = 0.35, 0.04
_W_OBJECT_IN, _W_OBJECT_OUT = 0.55, 0.02
_W_SUPPORT_IN, _W_SUPPORT_OUT = 0.50, 0.02
_W_FILLER = 0.10
_JITTER = 0.05

_SCENE_SALT, _STACK_SALT = 0x5EED, 0xA77E


def _grid_to_rows(grid: np.ndarray) -> list[str]:
    return ["".join("1" if v else "0" for v in row) for row in grid]


def _rows_to_grid(rows: list[str]) -> np.ndarray:
    return np.array([[c == "1" for c in row] for row in rows], dtype=bool)


@dataclass(frozen=True)
class SyntheticScenario:
    """Scripted layout: which token localizes where, and how the edit recolors."""

    sample_id: str
    words: tuple[str, ...]              # content tokens of the edit prompt
    object_index: int                   # stack index of the edited noun
    region: np.ndarray                  # (16,16) bool ground-truth edit region
    supports: dict[int, np.ndarray]     # stack index -> (16,16) bool home region
    edit_color: tuple[int, int, int]
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "id": self.sample_id,
            "words": list(self.words),
            "object_index": self.object_index,
            "region": _grid_to_rows(self.region),
            "supports": {str(k): _grid_to_rows(v)
                         for k, v in self.supports.items()},
            "edit_color": list(self.edit_color),
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SyntheticScenario":
        return cls(sample_id=d["id"], words=tuple(d["words"]),
                   object_index=int(d["object_index"]),
                   region=_rows_to_grid(d["region"]),
                   supports={int(k): _rows_to_grid(v)
                             for k, v in d["supports"].items()},
                   edit_color=tuple(d["edit_color"]), seed=int(d["seed"]))

    def save(self, path: str | Path) -> None:
        fileio.write_json(path, self.to_json_dict())

    @classmethod
    def load(cls, path: str | Path) -> "SyntheticScenario":
        return cls.from_json_dict(fileio.read_json(path))


def scenario_path_for(image_path: str | Path) -> Path:
    return Path(image_path).with_suffix(".scenario.json")


def recolor(image_u8: np.ndarray, region16: np.ndarray,
            color: tuple[int, int, int]) -> np.ndarray:
    """Recolor the pixels under a 16x16 cell region of a 32x32 image."""
    out = np.asarray(image_u8, dtype=np.uint8).copy()
    px = np.repeat(np.repeat(region16, 2, axis=0), 2, axis=1)
    out[px] = color
    return out


class SyntheticBackend(DenoiserBackend):
    """Analytic denoiser over a scripted scene.

    Noise predictions steer toward the recolored target; attention is a pure
    function of (timestep, scenario seed), so mask generation is independent
    of the session seed and of phi.
    """

    def __init__(self, image_u8: np.ndarray, scenario: SyntheticScenario,
                 schedule: NoiseSchedule):
        self.scenario = scenario
        self.schedule = schedule
        self.x_orig = encode_image(image_u8)
        self.target = encode_image(
            recolor(image_u8, scenario.region, scenario.edit_color))
        self._base = self._base_weights()
        self._cache: dict[int, AttentionStack] = {}

    @classmethod
    def from_files(cls, image_path: str | Path, schedule: NoiseSchedule,
                   scenario_path: str | Path | None = None) -> "SyntheticBackend":
        spath = Path(scenario_path) if scenario_path else scenario_path_for(image_path)
        if not spath.exists():
            raise FileNotFoundError(
                f"synthetic backend needs a scenario file at {spath}")
        return cls(fileio.load_rgb_png(image_path),
                   SyntheticScenario.load(spath), schedule)

    def _base_weights(self) -> np.ndarray:
        sc = self.scenario
        n = len(sc.words) + 1
        w = np.full((n, ATTN_RES, ATTN_RES), _W_FILLER)
        w[0] = np.where(sc.region, _W_START_IN, _W_START_OUT)
        w[sc.object_index] = np.where(sc.region, _W_OBJECT_IN, _W_OBJECT_OUT)
        for idx, home in sc.supports.items():
            w[idx] = np.where(home, _W_SUPPORT_IN, _W_SUPPORT_OUT)
        return w

    def _stack(self, t: int) -> AttentionStack:
        cached = self._cache.get(t)
        if cached is None:
            rng = seeded_rng(self.scenario.seed, _STACK_SALT, t)
            jit = 1.0 + _JITTER * rng.uniform(-1.0, 1.0, self._base.shape)
            w = self._base * jit
            w /= w.sum(axis=0, keepdims=True)
            cached = AttentionStack(maps=w, timestep=t).validate()
            self._cache[t] = cached
        return cached

    def predict(self, x_t, t, cond):
        ab = self.schedule.alpha_bar[t]
        eps = (np.asarray(x_t, dtype=np.float64)
               - np.sqrt(ab) * self.target) / np.sqrt(1.0 - ab)
        return eps, self._stack(t)


@dataclass
class _Scene:
    cells: np.ndarray                   # (16,16,3) uint8 cell colors
    region: np.ndarray                  # (16,16) bool edit region
    words: tuple[str, ...]
    object_index: int
    supports: dict[int, np.ndarray] = field(default_factory=dict)
    input_text: str = ""
    edit_text: str = ""
    edit_color: tuple[int, int, int] = (0, 0, 0)


def _draw_shape(rng: np.random.Generator, occupied: np.ndarray,
                kind: str, size_lo: int, size_hi: int) -> np.ndarray:
    """Place a shape's cell set, disjoint from (and not touching) occupied."""
    for _ in range(200):
        mask = np.zeros((ATTN_RES, ATTN_RES), dtype=bool)
        if kind == "square":
            side = int(rng.integers(size_lo, size_hi + 1))
            r0 = int(rng.integers(1, ATTN_RES - side))
            c0 = int(rng.integers(1, ATTN_RES - side))
            mask[r0:r0 + side, c0:c0 + side] = True
        else:
            rad = int(rng.integers(max(2, size_lo // 2), max(3, size_hi // 2) + 1))
            cr = int(rng.integers(1 + rad, ATTN_RES - 1 - rad))
            cc = int(rng.integers(1 + rad, ATTN_RES - 1 - rad))
            rr, cc_idx = np.mgrid[0:ATTN_RES, 0:ATTN_RES]
            if kind == "diamond":
                mask = (np.abs(rr - cr) + np.abs(cc_idx - cc)) <= rad
            else:  # disc
                mask = (rr - cr) ** 2 + (cc_idx - cc) ** 2 <= rad * rad
        # one-cell gap so masks never touch
        pad = np.pad(mask, 1)
        near = (pad[:-2, 1:-1] | pad[2:, 1:-1] | pad[1:-1, :-2]
                | pad[1:-1, 2:] | mask)
        if not (near & occupied).any():
            return mask
    raise RuntimeError("could not place a disjoint shape after 200 tries")


def _pick(rng: np.random.Generator, names: list[str],
          exclude: set[str]) -> str:
    pool = [n for n in names if n not in exclude]
    return pool[int(rng.integers(0, len(pool)))]


def _build_scene(rng: np.random.Generator, category: str) -> _Scene:
    obj_names = sorted(OBJECT_COLORS)
    bg_names = sorted(BACKGROUND_COLORS)
    bg_name = _pick(rng, bg_names, set())
    main_name = _pick(rng, obj_names, set())
    edit_name = _pick(rng, obj_names, {main_name})
    shape_kind = ("square", "diamond", "disc")[int(rng.integers(0, 3))]

    cells = np.zeros((ATTN_RES, ATTN_RES, 3), dtype=np.uint8)
    cells[:] = BACKGROUND_COLORS[bg_name]
    occupied = np.zeros((ATTN_RES, ATTN_RES), dtype=bool)
    # keep room for the secondary shape when one will be placed
    main_hi = 7 if category == "secondary-object" else 9
    main = _draw_shape(rng, occupied, shape_kind, 5, main_hi)
    cells[main] = OBJECT_COLORS[main_name]
    occupied |= main

    if category == "main-object":
        words = (edit_name, shape_kind, "on", bg_name, "background")
        return _Scene(
            cells=cells, region=main, words=words, object_index=2,
            supports={5: ~main},
            input_text=f"a {main_name} {shape_kind} on a {bg_name} background",
            edit_text=f"a {edit_name} {shape_kind} on a {bg_name} background",
            edit_color=OBJECT_COLORS[edit_name])

    if category == "secondary-object":
        sec_name = _pick(rng, obj_names, {main_name, edit_name})
        sec = _draw_shape(rng, occupied, "square", 3, 4)
        cells[sec] = OBJECT_COLORS[sec_name]
        words = (edit_name, "square", "beside", shape_kind, bg_name)
        return _Scene(
            cells=cells, region=sec, words=words, object_index=2,
            supports={4: main, 5: ~(main | sec)},
            input_text=(f"a {sec_name} square beside a {main_name} "
                        f"{shape_kind} on a {bg_name} background"),
            edit_text=(f"a {edit_name} square beside a {main_name} "
                       f"{shape_kind} on a {bg_name} background"),
            edit_color=OBJECT_COLORS[edit_name])

    if category == "background":
        new_bg = _pick(rng, bg_names, {bg_name})
        words = (new_bg, "background", "behind", shape_kind)
        return _Scene(
            cells=cells, region=~main, words=words, object_index=2,
            supports={4: main},
            input_text=f"a {main_name} {shape_kind} on a {bg_name} background",
            edit_text=f"a {main_name} {shape_kind} on a {new_bg} background",
            edit_color=BACKGROUND_COLORS[new_bg])

    raise ValueError(f"unknown category {category!r}")


def generate_corpus(count: int, seed: int, out_dir: str | Path) -> dict:
    """Write `count` samples plus manifest.json; returns the manifest dict."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = []
    for i in range(count):
        rng = seeded_rng(seed, _SCENE_SALT, i)
        category = CATEGORIES[i % len(CATEGORIES)]
        scene = _build_scene(rng, category)
        sample_id = f"sample{i:04d}"

        image = np.repeat(np.repeat(scene.cells, 2, axis=0), 2, axis=1)
        mask_png = np.repeat(np.repeat(
            scene.region.astype(np.uint8) * 255, 2, axis=0), 2, axis=1)
        scenario = SyntheticScenario(
            sample_id=sample_id, words=scene.words,
            object_index=scene.object_index, region=scene.region,
            supports=scene.supports, edit_color=scene.edit_color,
            seed=int(rng.integers(0, 2 ** 31)))

        fileio.save_rgb_png(out / f"{sample_id}.png", image)
        fileio.save_gray_png(out / f"{sample_id}_mask.png", mask_png)
        scenario.save(out / f"{sample_id}.scenario.json")
        samples.append({
            "id": sample_id,
            "image": f"{sample_id}.png",
            "mask": f"{sample_id}_mask.png",
            "input_text": scene.input_text,
            "edit_text": scene.edit_text,
            "category": category,
        })

    manifest = {"version": 1, "samples": samples}
    fileio.write_json(out / "manifest.json", manifest)
    return manifest

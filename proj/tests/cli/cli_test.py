"""End-to-end checks of the prt command line: outputs, exit codes and reproducibility."""

import filecmp
import json
import os
import pathlib
import subprocess
import sys
import tempfile
import unittest

import numpy as np

PRT = None


def run(*args, env=None, expect=0):
    full_env = dict(os.environ)
    full_env.update(env or {})
    proc = subprocess.run([PRT, *map(str, args)], capture_output=True, text=True, env=full_env)
    if proc.returncode != expect:
        raise AssertionError(f"prt {' '.join(map(str, args))}: exit {proc.returncode}, expected {expect}\n"
                             f"{proc.stdout}\n{proc.stderr}")
    return proc


def read_pfm(path):
    with open(path, "rb") as f:
        kind = f.readline().strip()
        width, height = map(int, f.readline().split())
        scale = float(f.readline())
        data = np.fromfile(f, dtype=">f4" if scale > 0 else "<f4")
    channels = 3 if kind == b"PF" else 1
    return data.reshape(height, width, channels)[::-1]


def same_tree(a, b):
    names = sorted(p.name for p in pathlib.Path(a).iterdir())
    if names != sorted(p.name for p in pathlib.Path(b).iterdir()):
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    return not mismatch and not errors


class Cli(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory(prefix="prt_cli_")
        cls.root = pathlib.Path(cls.tmp.name)
        cls.scene_dir = cls.root / "scene"
        run("gen-scene", "--texel-grid", 8, "--dome-lights", 64, "--image-size", 48, "--seed", 4,
            "--out", cls.scene_dir)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def scene_args(self, lights=True):
        args = ["--scene", self.scene_dir / "scene.json", "--camera", self.scene_dir / "cameras.json",
                "--pose", self.scene_dir / "pose.json"]
        if lights:
            args += ["--lights", self.scene_dir / "lights.json"]
        return args

    def test_gen_scene_outputs(self):
        for name in ["scene.json", "scene.bin", "lights.json", "cameras.json", "pose.json"]:
            self.assertTrue((self.scene_dir / name).is_file(), name)
        self.assertEqual(len(json.loads((self.scene_dir / "cameras.json").read_text())["cameras"]), 3)

    def test_render_is_reproducible(self):
        a, b = self.root / "render_a", self.root / "render_b"
        run("render", *self.scene_args(), "--spp", 2, "--seed", 3, "--out", a)
        run("render", *self.scene_args(), "--spp", 2, "--seed", 3, "--out", b, env={"PRT_THREADS": "1"})
        self.assertTrue((a / "render_c000.pfm").is_file())
        self.assertTrue((a / "render_c002_normal.pfm").is_file())
        self.assertTrue((a / "irradiance.json").is_file())
        self.assertTrue(same_tree(a, b))
        shadow = read_pfm(a / "irradiance.pfm")
        self.assertGreaterEqual(shadow.min(), 0.0)
        self.assertLessEqual(shadow.max(), 1.0)

    def test_unit_shadow_matches_shadow_off(self):
        probe = self.root / "probe"
        run("irradiance", "--scene", self.scene_dir / "scene.json", "--lights", self.scene_dir / "lights.json",
            "--spp", 1, "--out", probe)
        meta = json.loads((probe / "irradiance.json").read_text())
        self.assertEqual(meta["grid"], 8)
        count = meta["grid"] ** 2 * meta["charts"]
        ones = self.root / "ones.json"
        ones.write_text(json.dumps({"format": "prt-irradiance", "version": 1, "grid": meta["grid"],
                                    "charts": meta["charts"], "samples": 0, "seed": 0, "sidecar": "ones.bin"}))
        with open(self.root / "ones.bin", "wb") as f:
            np.ones(count, dtype="<f8").tofile(f)
            np.ones(count, dtype=np.uint8).tofile(f)
        unit, off = self.root / "unit", self.root / "off"
        run("render", *self.scene_args(), "--irradiance", ones, "--out", unit)
        run("render", *self.scene_args(), "--flag", "shadow=off", "--out", off)
        for c in range(3):
            diff = np.abs(read_pfm(unit / f"render_c{c:03d}.pfm") - read_pfm(off / f"render_c{c:03d}.pfm"))
            self.assertLessEqual(diff.max(), 1e-6)

    def test_relight_all_lights_off_is_black(self):
        lights = json.loads((self.scene_dir / "lights.json").read_text())
        lights["active"] = [False] * len(lights["lights"])
        dark = self.root / "dark.json"
        dark.write_text(json.dumps(lights))
        out = self.root / "dark"
        run("relight", *self.scene_args(lights=False), "--lights", dark, "--out", out)
        frames = sorted(out.glob("*.pfm"))
        self.assertEqual(len(frames), 3)
        for f in frames:
            self.assertEqual(np.abs(read_pfm(f)).max(), 0.0)

    def test_relight_sweep_with_reference(self):
        ref, out = self.root / "sweep_ref", self.root / "sweep"
        run("relight", *self.scene_args(), "--sweep", 2, "--out", ref)
        run("relight", *self.scene_args(), "--sweep", 2, "--reference", ref, "--out", out)
        self.assertEqual(len(list(ref.glob("frame*_c*.pfm"))), 6)
        rows = (out / "psnr.csv").read_text().strip().splitlines()
        self.assertEqual(len(rows), 7)
        # References are float32, so an identical render scores high but finite.
        self.assertGreater(min(float(r.split(",")[3]) for r in rows[1:]), 100.0)

    def test_irradiance_full_enumeration(self):
        out = self.root / "irr"
        run("irradiance", "--scene", self.scene_dir / "scene.json", "--lights", self.scene_dir / "lights.json",
            "--pose", "170,10", "--out", out)
        values = read_pfm(out / "irradiance.pfm")
        self.assertGreaterEqual(values.min(), 0.0)
        self.assertLessEqual(values.max(), 1.0)
        self.assertLess(values.min(), 0.5)

    def test_fit_is_reproducible(self):
        config = self.root / "fit.json"
        config.write_text(json.dumps({
            "experiment": {"rig": {"texel_grid": 6}, "dome_lights": 64, "train_lightings": 2,
                           "heldout_lightings": 1, "min_on": 8, "max_on": 16, "image_size": 24},
            "fit": {"steps": 4, "batch": 1, "seed": 9}}))
        a, b = self.root / "fit_a", self.root / "fit_b"
        run("fit", "--config", config, "--out", a)
        run("fit", "--config", config, "--out", b, env={"PRT_THREADS": "1"})
        self.assertTrue(same_tree(a, b))
        self.assertEqual(len((a / "trace.csv").read_text().strip().splitlines()), 5)
        metrics = json.loads((a / "metrics.json").read_text())
        self.assertGreater(metrics["heldout"]["psnr"], 0.0)
        run("fit", "--config", config, "--flag", "diffuse_basis=sh", "--steps", 1, "--out", self.root / "fit_sh")

    def test_validate_exit_codes(self):
        proc = run("validate", "compositing")
        report = json.loads(proc.stdout)
        self.assertTrue(report["passed"])
        run("validate", "compositing", "--threshold-scale", 0, expect=2)
        run("validate", "nonsense", expect=3)

    def test_malformed_input(self):
        run("render", "--scene", self.root / "missing.json", "--camera", self.scene_dir / "cameras.json",
            "--lights", self.scene_dir / "lights.json", expect=3)
        run("render", *self.scene_args(), "--flag", "shadow=maybe", "--out", self.root / "bad", expect=3)
        broken = self.root / "broken.json"
        broken.write_text('{"lights": [')
        run("render", *self.scene_args(lights=False), "--lights", broken, "--out", self.root / "bad", expect=3)
        run("render", *self.scene_args(lights=False), "--out", self.root / "bad", expect=3)
        run("no-such-command", expect=3)


if __name__ == "__main__":
    PRT = sys.argv.pop(1)
    unittest.main()

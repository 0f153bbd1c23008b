import json

import numpy as np
import pytest

from tessera import UNCOND
from tessera.cli import main
from tessera.config import ConfigFieldError, ConfigParseError, parse_config, parse_job
from tessera.errors import ConfigError
from tessera.imageio import read_image, write_image
from tessera.runtime import run


def base_config(**over):
    cfg = {
        "canvas": {"height": 8, "width": 16, "channels": 1},
        "schedule": {"kind": "linear", "T": 12, "beta_start": 1e-3, "beta_end": 0.1},
        "seed": 7,
        "regions": [{"rows": [0, 8], "cols": [0, 16], "prompt": "sky"}],
        "predictor": {"kind": "analytic-gaussian", "sigma0": 0.5,
                      "prompts": {"sky": {"kind": "flat", "value": 0.4},
                                  "sea": {"kind": "gradient", "start": -0.5, "end": 0.2}}},
    }
    cfg.update(over)
    return cfg


def four_regions():
    return [{"rows": [0, 8], "cols": [4 * i, 4 * i + 8], "prompt": p, "guidance_scale": s}
            for i, (p, s) in enumerate([("sky", 1.0), ("sea", 2.0), ("sky", 0.0)])]


@pytest.fixture
def write_cfg(tmp_path):
    def write(cfg, name="job.json"):
        p = tmp_path / name
        p.write_text(json.dumps(cfg))
        return p
    return write


class TestParse:
    def test_minimal(self, write_cfg):
        job = parse_job(write_cfg(base_config()))
        assert len(job.regions) == 1 and job.schedule.T == 12 and job.seed == 7

    def test_defaults(self):
        cfg = base_config(schedule={"kind": "linear"})
        job = parse_config(cfg)
        assert job.schedule.T == 1000
        assert job.regions[0].guidance_scale == 1.0 and job.regions[0].mask_kind == "gaussian"

    def test_null_prompt_is_uncond(self):
        cfg = base_config(regions=[{"rows": [0, 8], "cols": [0, 16], "prompt": None}])
        assert parse_config(cfg).regions[0].prompt is UNCOND

    def test_region_exceeding_canvas(self):
        cfg = base_config(regions=[{"rows": [0, 8], "cols": [0, 17], "prompt": "sky"}])
        with pytest.raises(ConfigFieldError, match=r"regions\[0\]\.cols") as ei:
            parse_config(cfg)
        assert ei.value.field == "regions[0].cols"

    def test_latent_misaligned(self):
        cfg = base_config(canvas={"height": 128, "width": 128, "channels": 1}, latent={"upscale": 8},
                          regions=[{"rows": [0, 100], "cols": [0, 128], "prompt": "sky"}])
        with pytest.raises(ConfigFieldError, match="multiple") as ei:
            parse_config(cfg)
        assert ei.value.field == "regions[0].rows"

    def test_parse_error_position(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "seed": 1,\n  "canvas": }\n')
        with pytest.raises(ConfigParseError) as ei:
            parse_job(p)
        assert (ei.value.line, ei.value.column) == (3, 13)

    @pytest.mark.parametrize("where", ["root", "canvas", "region", "pattern"])
    def test_unknown_field(self, where):
        cfg = base_config()
        target = {"root": cfg, "canvas": cfg["canvas"], "region": cfg["regions"][0],
                  "pattern": cfg["predictor"]["prompts"]["sky"]}[where]
        target["colour"] = 1
        with pytest.raises(ConfigFieldError, match="unknown field"):
            parse_config(cfg)

    @pytest.mark.parametrize("mutate,field", [
        (lambda c: c["canvas"].update(channels=2), "canvas.channels"),
        (lambda c: c.update(seed=-1), "seed"),
        (lambda c: c.update(seed=2**64), "seed"),
        (lambda c: c["regions"][0].update(prompt="lava"), "regions[0].prompt"),
        (lambda c: c["regions"][0].update(weights="cosine"), "regions[0].weights"),
        (lambda c: c["regions"][0].update(guidance_scale=-1), "regions[0].guidance_scale"),
        (lambda c: c["schedule"].update(beta_end=1.5), "schedule"),
        (lambda c: c["predictor"].update(kind="unet"), "predictor.kind"),
        (lambda c: c["predictor"]["prompts"]["sky"].update(value=3), "predictor"),
        (lambda c: c.update(regions=[]), "regions"),
    ])
    def test_field_errors(self, mutate, field):
        cfg = base_config()
        mutate(cfg)
        with pytest.raises(ConfigFieldError) as ei:
            parse_config(cfg)
        assert ei.value.field == field

    def test_coverage_gap(self):
        cfg = base_config(regions=[{"rows": [0, 8], "cols": [0, 8], "prompt": "sky"}])
        with pytest.raises(ConfigFieldError, match=r"row=0, col=8"):
            parse_config(cfg)

    def test_guides(self, tmp_path, write_cfg):
        img = np.full((4, 16, 1), 0.2)
        write_image(img, tmp_path / "g.pgm")
        cfg = base_config(guides=[{"image": "g.pgm", "rows": [4, 8], "cols": [0, 16], "strength": 1.0}])
        job = parse_job(write_cfg(cfg))
        assert job.guides[0].strength == 1.0 and job.guides[0].noise_exponent == 0.5
        np.testing.assert_array_equal(job.guides[0].image, read_image(tmp_path / "g.pgm"))

    def test_guide_shape_mismatch(self, tmp_path, write_cfg):
        write_image(np.zeros((4, 8, 1)), tmp_path / "g.pgm")
        cfg = base_config(guides=[{"image": "g.pgm", "rows": [4, 8], "cols": [0, 16], "strength": 1.0}])
        with pytest.raises(ConfigFieldError) as ei:
            parse_job(write_cfg(cfg))
        assert ei.value.field == "guides[0].image"

    def test_guide_missing_file(self, write_cfg):
        cfg = base_config(guides=[{"image": "nope.pgm", "rows": [4, 8], "cols": [0, 16], "strength": 1.0}])
        with pytest.raises(ConfigFieldError, match="cannot load"):
            parse_job(write_cfg(cfg))


class TestCli:
    def test_exit_codes(self, tmp_path, write_cfg, capsys):
        good = write_cfg(base_config())
        assert main(["generate", str(good), "--out", str(tmp_path / "o.pgm")]) == 0
        bad = write_cfg(base_config(seed="x"), "bad.json")
        assert main(["generate", str(bad)]) == 2
        assert "seed" in capsys.readouterr().err
        # valid config, unwritable output
        assert main(["generate", str(good), "--out", str(tmp_path / "missing" / "o.pgm")]) == 3

    def test_default_output_name(self, tmp_path, write_cfg, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = base_config(canvas={"height": 8, "width": 16, "channels": 3})
        assert main(["generate", str(write_cfg(cfg, "scene.json"))]) == 0
        assert read_image(tmp_path / "scene.ppm").shape == (8, 16, 3)

    def test_byte_identical_reruns_and_modes(self, tmp_path, write_cfg):
        cfg = write_cfg(base_config(regions=four_regions()))
        outs = []
        for i, flag in enumerate(["--sequential", "--sequential", "--batch"]):
            p = tmp_path / f"o{i}.pgm"
            assert main(["generate", str(cfg), flag, "--out", str(p)]) == 0
            outs.append(p.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_dumps_and_report(self, tmp_path, write_cfg):
        cfg = write_cfg(base_config(regions=four_regions()))
        out = tmp_path / "img.pgm"
        rep = tmp_path / "r.json"
        argv = ["generate", str(cfg), "--out", str(out), "--dump-masks", str(tmp_path / "m"),
                "--dump-steps", "5", "--report", str(rep)]
        assert main(argv) == 0
        report = json.loads(rep.read_text())
        assert report["seed"] == 7 and report["regions"] == 3
        # s=1 needs one call, s=2 two, s=0 one
        assert report["predictions_per_step"] == 4 and report["predictions_total"] == 48
        assert report["peak_live_tensor_bytes"] > 0
        masks = [read_image(p) for p in report["mask_files"]]
        assert len(masks) == 3
        w = (np.stack(masks) + 1) / 2
        np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=3 / 255)
        assert w[0][:, :4].min() == 1.0
        steps = sorted(p.split("_")[-1] for p in report["step_files"])
        assert steps == ["00000.pgm", "00005.pgm", "00010.pgm", "00012.pgm"]

    def test_dump_steps_invalid(self, write_cfg):
        assert main(["generate", str(write_cfg(base_config())), "--dump-steps", "0"]) == 2

    def test_latent_run(self, tmp_path):
        cfg = base_config(canvas={"height": 16, "width": 32, "channels": 1}, latent={"upscale": 8},
                          regions=[{"rows": [0, 16], "cols": [0, 24], "prompt": "sky"},
                                   {"rows": [0, 16], "cols": [8, 32], "prompt": "sea"}])
        job = parse_config(cfg)
        out = tmp_path / "l.pgm"
        report = run(job, out, dump_masks=tmp_path / "m")
        img = read_image(out)
        assert img.shape == (16, 32, 1)
        assert np.all(img[:8, :8] == img[0, 0])
        assert read_image(report.mask_files[0]).shape == (16, 32, 1)


def memory_job(D):
    """D fixed 16x16 regions spread evenly over a fixed 16x32 canvas."""
    starts = [round(16 * i / (D - 1)) for i in range(D)]
    cfg = base_config(canvas={"height": 16, "width": 32, "channels": 1},
                      schedule={"kind": "linear", "T": 4},
                      regions=[{"rows": [0, 16], "cols": [c, c + 16], "prompt": "sky"} for c in starts])
    return parse_config(cfg)


class TestMemory:
    def test_sequential_below_batched(self, tmp_path):
        job = memory_job(4)
        seq = run(job, tmp_path / "a.pgm", mode="sequential").peak_live_tensor_bytes
        bat = run(job, tmp_path / "b.pgm", mode="batch").peak_live_tensor_bytes
        assert seq < bat
        assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()

    def test_doubling_regions(self, tmp_path):
        p4 = run(memory_job(4), tmp_path / "a.pgm").peak_live_tensor_bytes
        p8 = run(memory_job(8), tmp_path / "b.pgm").peak_live_tensor_bytes
        assert p4 > 0 and abs(p8 - p4) / p4 < 0.10

import hashlib

import numpy as np
import pytest

from polarfuse import io, synth
from polarfuse.errors import ConfigError
from polarfuse.polar import PolarizationMap, encode_polarization


def test_fresnel_normal_incidence_is_unpolarized():
    view = np.array([0.0, 0.0, -1.0])
    for n in (1.3, 1.5, 2.0):
        for k_s in (0.0, 0.3, 1.0):
            out = synth.polarization_from_normal(view, view, n, k_s)
            assert out.dolp == 0.0


def test_diffuse_grazing_value():
    # (n - 1/n)^2 / (2 + 2n^2 - (n + 1/n)^2) at n = 3/2 reduces to 5/13
    assert synth.diffuse_dolp(np.pi / 2, 1.5) == pytest.approx(5.0 / 13.0, abs=1e-12)
    assert synth.diffuse_dolp(np.pi / 2 - 1e-9, 1.5) == pytest.approx(0.38461, abs=1e-5)


@pytest.mark.parametrize("n", [1.3, 1.5, 2.0])
def test_brewster_identity(n):
    assert synth.specular_dolp(np.arctan(n), n) == pytest.approx(1.0, abs=1e-9)


def test_diffuse_monotone():
    theta = np.deg2rad(np.arange(0, 90))
    rho = synth.diffuse_dolp(theta, 1.5)
    assert np.all(np.diff(rho) > 0)


def test_specular_orientation_is_rotated(rng):
    normals = rng.standard_normal((500, 3))
    normals[:, 2] = -np.abs(normals[:, 2])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    view = np.broadcast_to([0.0, 0.0, -1.0], normals.shape)
    d = synth.polarization_from_normal(normals, view, 1.5, 0.0)
    s = synth.polarization_from_normal(normals, view, 1.5, 1.0)
    expected = np.mod(d.aolp + np.pi / 2, np.pi)
    expected = np.where(expected >= np.pi, 0.0, expected)
    assert np.array_equal(s.aolp, expected)


def test_dominant_branch_and_blend():
    normal = np.array([np.sin(0.6), 0.0, -np.cos(0.6)])
    view = np.array([0.0, 0.0, -1.0])
    lo = synth.polarization_from_normal(normal, view, 1.5, 0.49)
    hi = synth.polarization_from_normal(normal, view, 1.5, 0.5)
    assert lo.aolp == pytest.approx(0.0)
    assert hi.aolp == pytest.approx(np.pi / 2)
    expected = 0.5 * synth.diffuse_dolp(0.6, 1.5) + 0.5 * synth.specular_dolp(0.6, 1.5)
    assert hi.dolp == pytest.approx(expected)


def test_back_facing_normals_are_clamped_and_flagged():
    out = synth.polarization_from_normal(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0]), 1.5, 0.0)
    assert out.grazing_clamped == 1
    assert out.dolp == pytest.approx(5.0 / 13.0)


def test_plane_facing_camera():
    scene = synth.Scene(primitives=[synth.Plane(point=(0, 0, 2.0), normal=(0, 0, -1.0))])
    cam = synth.CameraIntrinsics.square(9)
    out = synth.render_scene(scene, cam)
    assert out.depth[4, 4] == pytest.approx(2.0)
    assert np.allclose(out.depth, 2.0)
    assert out.normal[:, 4, 4] == pytest.approx([0.0, 0.0, -1.0])
    assert out.mask.all()


def test_sphere_front_pole():
    scene = synth.Scene(primitives=[synth.Sphere(center=(0, 0, 4.0), radius=1.0)])
    cam = synth.CameraIntrinsics.square(16)
    out = synth.render_scene(scene, cam)
    assert out.depth[8, 8] == pytest.approx(3.0, abs=1e-12)
    assert out.normal[:, 8, 8] == pytest.approx([0.0, 0.0, -1.0])
    assert not out.mask[0, 0]
    assert out.depth[0, 0] == scene.background_depth


def test_empty_scene_is_background():
    out = synth.render_scene(synth.Scene(), synth.CameraIntrinsics.square(8))
    assert not out.mask.any()
    assert np.all(out.depth == 10.0)
    assert np.all(out.pol.dolp == 0)


def test_render_invariants():
    cfg = synth.SceneConfig(size=32, focal=32.0)
    for i in range(4):
        scene = synth.random_scene(synth.sample_rng(7, i, 0), cfg)
        out = synth.render_scene(scene, synth.CameraIntrinsics.square(32, 32.0), seed=7, pol_noise=0.02, index=i)
        m = out.mask
        assert np.all(out.depth[m] > 0)
        assert np.allclose(np.linalg.norm(out.normal, axis=0)[m], 1.0, atol=1e-6)
        assert np.all((out.pol.dolp >= 0) & (out.pol.dolp <= 1))
        assert np.all((out.pol.aolp >= 0) & (out.pol.aolp < np.pi))
        assert np.all((out.rgb >= 0) & (out.rgb <= 1))


def test_depth_normals_consistent_on_plane():
    tilt = np.deg2rad(35.0)
    nrm = (np.sin(tilt), 0.2, -np.cos(tilt))
    scene = synth.Scene(primitives=[synth.Plane(point=(0, 0, 5.0), normal=nrm)])
    cam = synth.CameraIntrinsics.square(32)
    out = synth.render_scene(scene, cam)
    dirs = cam.ray_directions()
    pts = dirs * out.depth[..., None]
    # central differences on the back-projected point cloud
    du = pts[1:-1, 2:] - pts[1:-1, :-2]
    dv = pts[2:, 1:-1] - pts[:-2, 1:-1]
    fd = np.cross(du, dv)
    fd /= np.linalg.norm(fd, axis=-1, keepdims=True)
    analytic = np.moveaxis(out.normal, 0, -1)[1:-1, 1:-1]
    fd *= np.sign(np.sum(fd * analytic, axis=-1, keepdims=True))
    angle = np.degrees(np.arccos(np.clip(np.sum(fd * analytic, axis=-1), -1, 1)))
    assert angle.max() < 3.0


def test_render_deterministic_and_seeded():
    cfg = synth.SceneConfig(size=16, focal=16.0)
    scene = synth.random_scene(synth.sample_rng(0, 0, 0), cfg)
    cam = synth.CameraIntrinsics.square(16, 16.0)
    a = synth.render_scene(scene, cam, seed=3, pol_noise=0.05)
    b = synth.render_scene(scene, cam, seed=3, pol_noise=0.05)
    c = synth.render_scene(scene, cam, seed=4, pol_noise=0.05)
    assert np.array_equal(a.pol.dolp, b.pol.dolp)
    assert not np.array_equal(a.pol.dolp, c.pol.dolp)


def test_scene_params_roundtrip():
    scene = synth.random_scene(synth.sample_rng(1, 2, 0), synth.SceneConfig())
    again = synth.Scene.from_params(scene.to_params())
    assert again == scene


def test_scene_validation():
    with pytest.raises(ConfigError):
        synth.Material(ior=1.0)
    with pytest.raises(ConfigError):
        synth.Material(ior=3.5)
    with pytest.raises(ConfigError):
        synth.CameraIntrinsics(10, 10, 0, 5, 10, 10)
    plane = synth.Plane(point=(0, 0, 1), normal=(0, 0, -3))
    assert np.linalg.norm(plane.normal) == pytest.approx(1.0, abs=1e-12)


def test_inject_noise_basics(rng):
    pol = PolarizationMap(aolp=rng.uniform(0, np.pi, (8, 8)), dolp=rng.uniform(0, 1, (8, 8)))
    enc = encode_polarization(pol)
    assert np.array_equal(synth.inject_noise(enc, 0.0, seed=5), enc)
    noisy = synth.inject_noise(enc, 1.0, seed=5)
    assert noisy.min() >= -1.0 and noisy.max() <= 1.0
    assert np.array_equal(noisy, synth.inject_noise(enc, 1.0, seed=5))
    with pytest.raises(ValueError):
        synth.inject_noise(enc, -0.1)


def test_inject_noise_clips_at_upper_bound():
    class FixedNoise:
        def standard_normal(self, shape):
            return np.full(shape, 0.7)

    out = synth.inject_noise(np.ones((3, 1, 1)), 1.0, rng=FixedNoise())
    assert np.all(out == 1.0)


# First verified run of inject_noise(beta=0.5, seed=11) on the demo tensor below.
DEMO_NOISE_SHA256 = "4c4ce33cb7da106001201f3c003ac2fc6919edd2f07ff31f069fe6c18faa26f4"


def demo_encoded():
    phi = np.linspace(0, np.pi, 64, endpoint=False).reshape(8, 8)
    rho = np.linspace(0, 1, 64).reshape(8, 8)
    return encode_polarization(PolarizationMap(aolp=phi, dolp=rho))


def test_inject_noise_golden():
    out = synth.inject_noise(demo_encoded(), 0.5, seed=11)
    assert hashlib.sha256(np.ascontiguousarray(out, dtype="<f8").tobytes()).hexdigest() == DEMO_NOISE_SHA256


def test_make_dataset_single(tmp_path):
    manifest = synth.make_dataset(synth.SceneConfig(size=16, focal=16.0), 1, tmp_path, seed=0)
    assert len(manifest["samples"]) == 1
    files = list((tmp_path / "000000").iterdir())
    assert sorted(f.name for f in files) == sorted(synth.SAMPLE_FILES.values())
    assert set(manifest) >= {"version", "seed", "samples"}
    assert set(manifest["samples"][0]) == {"id", "files", "scene_params"}


def test_make_dataset_deterministic(tmp_path):
    cfg = synth.SceneConfig(size=16, focal=16.0)
    synth.make_dataset(cfg, 3, tmp_path / "a", seed=9)
    synth.make_dataset(cfg, 3, tmp_path / "b", seed=9)
    for fa in sorted((tmp_path / "a").rglob("*")):
        if fa.is_file():
            fb = tmp_path / "b" / fa.relative_to(tmp_path / "a")
            assert fa.read_bytes() == fb.read_bytes(), fa


def test_make_dataset_rejects_zero(tmp_path):
    with pytest.raises(ConfigError):
        synth.make_dataset(synth.SceneConfig(), 0, tmp_path)


def test_dolp_only_on_foreground(tmp_path):
    cfg = synth.SceneConfig(size=32, focal=32.0, wall=False)
    manifest = synth.make_dataset(cfg, 64, tmp_path, seed=2)
    background_pixels = 0
    for s in manifest["samples"]:
        dolp = io.read_pfm(tmp_path / s["files"]["dolp"])
        mask = io.read_png(tmp_path / s["files"]["mask"]) > 0.5
        assert np.all(dolp[~mask] == 0)
        assert np.any(dolp[mask] > 0)
        background_pixels += np.count_nonzero(~mask)
    assert background_pixels > 0

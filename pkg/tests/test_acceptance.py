"""End-to-end acceptance checks for the full pipeline.

Each test exercises one numbered criterion at a fixed tolerance and prints
one PASS/FAIL line (visible with `pytest -v -s tests/test_acceptance.py`).
Criterion 5 trains two networks and dominates the suite's runtime; all
other criteria finish in seconds.
"""

import json
import time

import numpy as np

import tactile3d as t
from tactile3d import cli
from tactile3d.integration import assemble_poisson, augment_with_prior
from tactile3d.mlp import (PositionalEncodingConfig, draw_dropout_masks,
                           psnn_init, psnn_loss_grad)

from tests.test_alignment import grid_points, sample_homography
from tests.test_integration import dense_poisson, paraboloid_field


def report(number, passed, detail):
    print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"criterion {number}: {detail}"


def aligned_mae(depth_mm, truth_mm, mask):
    """MAE after granting a gauge-free solution its best constant offset."""
    shift = truth_mm[mask].mean() - depth_mm[mask].mean()
    return float(np.abs(depth_mm[mask] + shift - truth_mm[mask]).mean())


def test_criterion_01_focal_correction_exact():
    corrected = t.correct_focal_for_medium(1000, 1.5168, 1.0)
    report(1, corrected == 1516.8,
           f"correct_focal_for_medium(1000, 1.5168, 1.0) = {corrected!r}")


def test_criterion_02_sparse_assembly_matches_dense_oracle():
    rng = np.random.default_rng(2)
    started = time.perf_counter()
    checked = 0
    for _ in range(20):
        h = int(rng.integers(2, 17))
        w = int(rng.integers(2, 17))
        mask = rng.random((h, w)) < 0.65
        if not mask.any():
            mask[h // 2, w // 2] = True
        grad = t.GradientField(rng.normal(size=(h, w)),
                               rng.normal(size=(h, w)), mask)
        system = assemble_poisson(grad)
        dense_lhs, dense_rhs = dense_poisson(grad)
        assert np.array_equal(system.matrix.toarray(), dense_lhs)
        assert np.array_equal(system.rhs, dense_rhs)
        checked += 1
    elapsed = time.perf_counter() - started
    report(2, checked == 20 and elapsed < 1.0,
           f"{checked}/20 random masks equal the dense oracle "
           f"entry-for-entry in {elapsed:.2f}s (< 1s)")


def test_criterion_03_analytic_integration():
    started = time.perf_counter()
    z_true, grad = paraboloid_field(64, 64, a=0.01)
    band = t.border_band_mask(grad.mask, 10)
    prior = t.extract_boundary_prior(t.RasterGrid(z_true, grad.mask),
                                     band_width=10)
    depth = t.solve_depth(augment_with_prior(assemble_poisson(grad), prior))
    para_err = float(np.abs(depth.z[grad.mask] - z_true[grad.mask]).max())

    ii, jj = np.meshgrid(np.arange(64), np.arange(64), indexing="ij")
    z_plane = 0.3 * ii - 0.2 * jj + 5.0
    plane_grad = t.GradientField(np.full((64, 64), -0.2),
                                 np.full((64, 64), 0.3), grad.mask)
    plane_prior = t.extract_boundary_prior(t.RasterGrid(z_plane, grad.mask),
                                           band_width=10)
    plane_depth = t.solve_depth(
        augment_with_prior(assemble_poisson(plane_grad), plane_prior))
    plane_err = float(np.abs(plane_depth.z[grad.mask]
                             - z_plane[grad.mask]).max())
    elapsed = time.perf_counter() - started
    report(3, para_err < 1e-3 and plane_err < 1e-6 and elapsed < 5.0
           and band.sum() > 0,
           f"64x64 max error: paraboloid {para_err:.2e} (< 1e-3), "
           f"plane {plane_err:.2e} (< 1e-6) in {elapsed:.2f}s (< 5s)")


def test_criterion_04_prior_ablation_direction():
    started = time.perf_counter()
    surface = t.SensorSurface.build(t.SurfaceKind.SPHERE_CAP, (48, 48), 0.15,
                                    apex_height=4.0, radius=25.0)
    pitch = surface.pixel_pitch
    truth_mm = surface.height_grid
    mask = surface.valid_mask
    base = t.normals_to_gradients(t.surface_normal_grid(surface))
    prior = t.extract_boundary_prior(surface, band_width=10, weight=1.0)

    maes = {"prior": [], "noprior": [], "fp": []}
    for seed in range(10):
        rng = np.random.default_rng(seed)
        grad = t.GradientField(
            base.p + rng.normal(0.0, 0.01, base.p.shape),
            base.q + rng.normal(0.0, 0.01, base.q.shape), mask)
        system = assemble_poisson(grad)
        with_prior = t.solve_depth(augment_with_prior(system, prior))
        maes["prior"].append(float(np.abs(
            with_prior.to_mm(pitch).z[mask] - truth_mm[mask]).mean()))
        # The unpinned solves only fix shape, so they are scored after
        # removing their best constant offset; the prior solve is absolute
        # and gets no such allowance.
        maes["noprior"].append(aligned_mae(
            t.solve_depth(system).to_mm(pitch).z, truth_mm, mask))
        maes["fp"].append(aligned_mae(
            t.fast_poisson_solve(grad).to_mm(pitch).z, truth_mm, mask))
    mean = {k: float(np.mean(v)) for k, v in maes.items()}
    elapsed = time.perf_counter() - started
    ratio = mean["prior"] / mean["noprior"]
    ok = (mean["prior"] <= 0.5 * mean["noprior"]
          and mean["prior"] <= mean["fp"]
          and mean["noprior"] <= mean["fp"]
          and elapsed < 120.0)
    report(4, ok,
           f"10-seed depth MAE (mm): prior {mean['prior']:.5f}, "
           f"no-prior {mean['noprior']:.5f} (ratio {ratio:.3f} <= 0.5), "
           f"fast-Poisson {mean['fp']:.5f} in {elapsed:.1f}s (< 2min)")


def contact_total_mae(dataset, estimator):
    """Held-out total gradient MAE pooled over contact pixels."""
    abs_err = 0.0
    count = 0
    for index in dataset.indices("test"):
        sample = dataset.samples[index]
        estimated = t.estimate_normal_map(sample.frame, estimator)
        region = sample.contact_mask.as_bool()
        est = t.normals_to_gradients(estimated)
        true = t.normals_to_gradients(sample.gt_normals)
        abs_err += float(np.abs(est.p[region] - true.p[region]).sum())
        abs_err += float(np.abs(est.q[region] - true.q[region]).sum())
        count += int(region.sum())
    return abs_err / count


def test_criterion_05_estimator_ordering():
    started = time.perf_counter()
    surface = t.SensorSurface.build(t.SurfaceKind.SPHERE_CAP, (240, 320), 0.1,
                                    apex_height=4.0, radius=30.0)
    camera = t.CameraModel(fx=800.0, fy=800.0, cx=159.5, cy=119.5,
                           width=320, height=240)
    dataset = t.generate_calibration_dataset(
        surface, camera, t.RenderConfig(noise_sigma=0.01), n_samples=50,
        probe_radius=2.5, indentation_range=(0.8, 1.8), seed=0)

    table = t.lut_build(dataset, bins_per_channel=16,
                        channel_mode=t.ChannelMode.RGB_ONLY)
    lut_mae = contact_total_mae(dataset, table)

    # Raw (u, v) position features: Fourier features can memorize the
    # training press placements, which hurts held-out error.  Dropout is
    # disabled so the comparison isolates what the extra channels add
    # rather than how each mode responds to stochastic regularization.
    # Training-run variance is larger than the margin under test, so each
    # mode is scored as the mean over two training seeds.
    encoding = PositionalEncodingConfig(n_frequencies=0, include_raw=True)
    train_seeds = (0, 1)
    maes = {}
    for mode in (t.ChannelMode.RGB_ONLY, t.ChannelMode.RGB_NIR):
        runs = []
        for seed in train_seeds:
            config = t.TrainConfig(epochs=200, channel_mode=mode, seed=seed,
                                   dropout_rate=0.0, encoding=encoding)
            model, _ = t.psnn_train(dataset, config)
            runs.append(contact_total_mae(dataset, model))
        maes[mode] = runs
    elapsed = time.perf_counter() - started
    rgb = float(np.mean(maes[t.ChannelMode.RGB_ONLY]))
    rgbnir = float(np.mean(maes[t.ChannelMode.RGB_NIR]))
    ok = (rgbnir < rgb < lut_mae and rgbnir <= 0.9 * rgb
          and elapsed < 1800.0)
    per_seed = ", ".join(
        f"seed {s}: rgbnir {nir:.4f} / rgb {r:.4f}"
        for s, nir, r in zip(train_seeds, maes[t.ChannelMode.RGB_NIR],
                             maes[t.ChannelMode.RGB_ONLY]))
    report(5, ok,
           f"held-out total gradient MAE ({len(train_seeds)}-seed mean): "
           f"PSNN rgbnir {rgbnir:.4f} < PSNN rgb {rgb:.4f} < "
           f"LUT {lut_mae:.4f}, NIR gain {(1.0 - rgbnir / rgb) * 100.0:.1f}% "
           f"(>= 10%) in {elapsed / 60.0:.1f}min (< 30min); {per_seed}")


def test_criterion_06_end_to_end_sphere_reconstruction():
    started = time.perf_counter()
    surface = t.SensorSurface.build(t.SurfaceKind.SPHERE_CAP, (240, 320), 0.1,
                                    apex_height=4.0, radius=30.0)
    probe = t.SphereProbe.pressed_into(surface, 0.0, 0.0,
                                       indentation=0.5, radius=2.5)
    heights, contact, normals = t.indent_surface(surface, probe)
    prior = t.extract_boundary_prior(surface, band_width=10, weight=1.0)
    depth = t.integrate_normals(normals, prior=prior, method="direct")
    truth = t.DepthMap(heights.values, heights.mask, "mm")
    mae = t.mae_depth(depth, truth, contact.as_bool(),
                      pixel_pitch=surface.pixel_pitch)
    elapsed = time.perf_counter() - started
    report(6, mae < 0.02 * 0.5 and elapsed < 10.0,
           f"contact depth MAE {mae:.5f} mm (< 2% of 0.5 mm press = "
           f"0.01 mm) at 320x240 in {elapsed:.1f}s (< 10s)")


def test_criterion_07_gradient_check_every_parameter():
    started = time.perf_counter()
    config = t.TrainConfig(channel_mode=t.ChannelMode.RGB_ONLY,
                           hidden_widths=(6, 5, 4),
                           encoding=PositionalEncodingConfig(n_frequencies=1),
                           dropout_rate=0.1, seed=9)
    rng = np.random.default_rng(17)
    model = psnn_init(config, rng)
    x = rng.random((16, model.input_width))
    y = rng.normal(size=(16, 3))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    masks = draw_dropout_masks(model, 16, rng)

    def loss_fn():
        loss, _ = psnn_loss_grad(model, (x, y), config, dropout_masks=masks)
        return loss

    _, grads = psnn_loss_grad(model, (x, y), config, dropout_masks=masks)
    groups = {"weights": model.weights, "biases": model.biases,
              "bn_gamma": model.bn_gamma, "bn_beta": model.bn_beta}
    # The 1e-6 denominator floor covers parameters whose true gradient is
    # exactly zero (batch normalization cancels any uniform shift of a
    # layer's pre-activations, so pre-normalization biases cannot move the
    # loss); for those entries central differences return pure rounding
    # noise near 1e-10 and a bare relative error would be meaningless.
    step = 1e-5
    checked = 0
    worst = 0.0
    for name, tensors in groups.items():
        for i, tensor in enumerate(tensors):
            flat = tensor.reshape(-1)
            analytic = grads[name][i].reshape(-1)
            for k in range(flat.size):
                original = flat[k]
                flat[k] = original + step
                plus = loss_fn()
                flat[k] = original - step
                minus = loss_fn()
                flat[k] = original
                fd = (plus - minus) / (2 * step)
                rel = abs(fd - analytic[k]) / max(abs(fd), abs(analytic[k]),
                                                  1e-6)
                worst = max(worst, rel)
                assert rel < 1e-4, f"{name}[{i}][{k}]: rel error {rel:.2e}"
                checked += 1
    elapsed = time.perf_counter() - started
    report(7, worst < 1e-4 and elapsed < 10.0,
           f"{checked} parameters vs central differences, worst relative "
           f"error {worst:.2e} (< 1e-4) in {elapsed:.1f}s (< 10s)")


def test_criterion_08_ransac_homography_with_outliers():
    started = time.perf_counter()
    rng = np.random.default_rng(5)
    points_a = grid_points(7, spacing=15.0)
    truth = sample_homography()
    points_b = t.apply_transform(truth, points_a)
    n_out = int(round(0.3 * len(points_a)))
    corrupt = rng.choice(len(points_a), size=n_out, replace=False)
    points_b = points_b.copy()
    points_b[corrupt] += (rng.uniform(25.0, 60.0, size=(n_out, 2))
                          * rng.choice([-1.0, 1.0], size=(n_out, 2)))
    corr = t.CorrespondenceSet(points_a, points_b,
                               t.TransformModel.HOMOGRAPHY)

    first, _ = t.ransac_align(corr, inlier_threshold=1.0,
                              max_iterations=600, seed=3)
    second, _ = t.ransac_align(corr, inlier_threshold=1.0,
                               max_iterations=600, seed=3)
    corners = np.array([[0.0, 0.0], [90.0, 0.0], [0.0, 90.0], [90.0, 90.0]])
    err = np.sqrt(((t.apply_transform(first, corners)
                    - t.apply_transform(truth, corners)) ** 2).sum(axis=1))
    elapsed = time.perf_counter() - started
    report(8, err.max() < 0.5 and np.array_equal(first, second)
           and elapsed < 1.0,
           f"30% outliers: corner reprojection error {err.max():.4f} px "
           f"(< 0.5), repeat run identical, in {elapsed:.2f}s (< 1s)")


def test_criterion_09_determinism_suite(tmp_path):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "seed": 4,
        "camera": {"width": 64, "height": 48, "cx": 31.5, "cy": 23.5},
        "surface": {"kind": "sphere-cap", "pixel_pitch": 0.1,
                    "apex_height": 4.0, "radius": 30.0},
        "probe": {"radius": 1.5, "indentation_min": 0.3,
                  "indentation_max": 0.7, "count": 6},
        "render": {"noise_sigma": 0.01},
        "train": {"epochs": 3, "batch_size": 1024, "channel_mode": "rgbnir",
                  "hidden_widths": [8, 8, 8],
                  "encoding": {"n_frequencies": 0, "include_raw": True}},
        "integration": {"band_width": 4},
        "paths": {"dataset": str(tmp_path / "ds_a"),
                  "checkpoint": str(tmp_path / "model.psnn"),
                  "lut": str(tmp_path / "table.lut"),
                  "out": str(tmp_path / "out")},
    }))
    config = str(config_path)

    stages = []
    for out in ("ds_a", "ds_b"):
        assert cli.main(["gen-dataset", "--config", config,
                         "--out", str(tmp_path / out)]) == 0
    ds_files = sorted(p.name for p in (tmp_path / "ds_a").iterdir())
    stages.append(("gen-dataset", all(
        (tmp_path / "ds_a" / n).read_bytes()
        == (tmp_path / "ds_b" / n).read_bytes() for n in ds_files)))

    for out in ("m_a", "m_b"):
        assert cli.main(["train", "--config", config,
                         "--out", str(tmp_path / out)]) == 0
    stages.append(("train", all(
        (tmp_path / "m_a" / ("model.psnn" + ext)).read_bytes()
        == (tmp_path / "m_b" / ("model.psnn" + ext)).read_bytes()
        for ext in ("", ".json", ".history.json"))))

    sample = str(tmp_path / "ds_a" / "sample_000.tras")
    for out in ("rec_a", "rec_b"):
        assert cli.main(["reconstruct", "--config", config, sample,
                         str(tmp_path / "m_a" / "model.psnn"),
                         "--out", str(tmp_path / out)]) == 0
    rec_files = sorted(p.name for p in (tmp_path / "rec_a").iterdir())
    stages.append(("reconstruct", all(
        (tmp_path / "rec_a" / n).read_bytes()
        == (tmp_path / "rec_b" / n).read_bytes() for n in rec_files)))

    detail = ", ".join(f"{name} {'ok' if ok else 'DIFFERS'}"
                       for name, ok in stages)
    report(9, all(ok for _, ok in stages),
           f"byte-identical across same-seed reruns: {detail}")


def test_criterion_10_total_equals_component_sum():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(100):
        h = int(rng.integers(2, 12))
        w = int(rng.integers(2, 12))
        mask = rng.random((h, w)) < 0.8
        if not mask.any():
            mask[0, 0] = True
        est = t.GradientField(rng.normal(size=(h, w)) * 5,
                              rng.normal(size=(h, w)) * 5, mask)
        true = t.GradientField(rng.normal(size=(h, w)) * 5,
                               rng.normal(size=(h, w)) * 5, mask)
        gx, gy, total = t.mae_gradients(est, true, mask)
        worst = max(worst, abs(total - (gx + gy)))
    metrics = t.MethodMetrics(name="example", gx_mae=0.0072, gy_mae=0.0058,
                              total_mae=0.0130, pixel_pitch=0.1, n_pixels=10)
    report(10, worst <= 1e-12 and metrics.total_mae == 0.0130,
           f"Total == Gx + Gy on 100 random fields, worst gap {worst:.1e} "
           f"(<= 1e-12); 0.0072 + 0.0058 = 0.0130 accepted")

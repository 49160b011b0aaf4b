"""Render a single probe press on a curved sensor membrane.

Builds a spherical-cap gel surface, presses a rigid sphere into it, and
renders the six-channel tactile frame (three directional RGB LEDs plus a
top-mounted near-infrared ring replicated across three channels).  Saves
per-channel previews, the ground-truth normal map, and a point cloud of
the deformed membrane.
"""

import argparse
import os

import numpy as np

import tactile3d as t


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/render_press")
    parser.add_argument("--indentation", type=float, default=1.2,
                        help="press depth in mm")
    parser.add_argument("--radius", type=float, default=2.5,
                        help="probe radius in mm")
    parser.add_argument("--noise", type=float, default=0.0,
                        help="per-channel Gaussian sigma")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    # ------ scene: 32 x 24 mm curved membrane, 0.1 mm per pixel ------
    surface = t.SensorSurface.build(t.SurfaceKind.SPHERE_CAP, (240, 320), 0.1,
                                    apex_height=4.0, radius=30.0)
    camera = t.CameraModel(fx=800.0, fy=800.0, cx=159.5, cy=119.5,
                           width=320, height=240)
    # Metric origin sits at the raster center.
    probe = t.SphereProbe.pressed_into(surface, cx=2.0, cy=-1.5,
                                       indentation=args.indentation,
                                       radius=args.radius)

    heights, contact, normals = t.indent_surface(surface, probe)
    rng = np.random.default_rng(args.seed)
    frame = t.render_frame(heights, normals, camera,
                           t.RenderConfig(noise_sigma=args.noise),
                           surface.pixel_pitch, rng=rng)

    # ------ save previews ------
    t.write_rgb_png(os.path.join(args.out, "rgb.png"), frame.channels[:3],
                    mask=frame.mask)
    t.write_grayscale_png(os.path.join(args.out, "nir.png"),
                          frame.channels[3], mask=frame.mask)
    t.write_normals_png(os.path.join(args.out, "normals.png"), normals)
    t.write_heatmap_png(os.path.join(args.out, "height.png"), heights.values,
                        mask=heights.mask)

    points = t.depth_to_pointcloud(
        t.DepthMap(heights.values, heights.mask, units="mm"),
        surface.pixel_pitch)
    t.write_pointcloud_ply(os.path.join(args.out, "membrane.ply"), points)

    lift = (heights.values[contact.as_bool()].max()
            - t.surface_height(surface, 2.0, -1.5))
    print(f"contact pixels: {int(contact.as_bool().sum())}")
    print(f"membrane lift at apex: {lift:.3f} mm (target {args.indentation})")
    print(f"wrote previews to {args.out}/")


if __name__ == "__main__":
    main()

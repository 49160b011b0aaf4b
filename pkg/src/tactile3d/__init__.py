"""Synthetic multi-spectral tactile sensing toolkit.

Renders a CAD-described elastomer membrane under multi-LED Lambertian
lighting, learns per-pixel surface normals from the rendered channels,
and integrates the normals into metric depth with a boundary prior.
"""

from .alignment import (CorrespondenceSet, TransformModel, apply_transform,
                        fit_affine, fit_homography, ransac_align)
from .config import (PipelineConfig, camera_from_dict, camera_to_dict,
                     render_from_dict, render_to_dict, surface_from_dict,
                     surface_to_dict)
from .dataset import (CalibrationDataset, CalibrationSample, extract_contact_mask,
                      generate_calibration_dataset, halton_sequence, load_dataset,
                      probe_placements, save_dataset)
from .errors import (ConfigError, ConvergenceError, FormatError,
                     ModeMismatchError, NoConsensusError)
from .estimation import estimate_normal_map
from .fileio import (heatmap_image, read_raster, write_grayscale_png,
                     write_heatmap_png, write_normals_png, write_pointcloud_ply,
                     write_raster, write_rgb_png)
from .geometry import (CameraModel, SensorSurface, SphereProbe, SurfaceKind,
                       correct_focal_for_medium, indent_surface,
                       pixel_center_coords, project_point, surface_height,
                       surface_normal_analytic, surface_normal_grid)
from .integration import (DepthMap, DepthPrior, GradientField, PoissonSystem,
                          assemble_poisson, augment_with_prior, border_band_mask,
                          depth_to_pointcloud, extract_boundary_prior,
                          fast_poisson_solve, integrate_normals,
                          normals_to_gradients, solve_depth)
from .lookup import LookupTable, load_lut, lut_build, lut_query, save_lut
from .metrics import MethodMetrics, MetricsReport, mae_depth, mae_gradients
from .mlp import (AdamState, ChannelMode, PositionalEncodingConfig, PsnnModel,
                  TrainConfig, draw_dropout_masks, load_model, pixel_features,
                  positional_encoding, psnn_forward, psnn_forward_batch,
                  psnn_init, psnn_loss_grad, psnn_train, save_model,
                  train_config_from_dict, train_config_to_dict)
from .raster import NormalMap, RasterGrid, normalize_vectors
from .render import (ATTENUATION_UNIT_MM, CHANNEL_NAMES, N_CHANNELS, Falloff,
                     Illuminant, LedChannel, RenderConfig, TactileFrame,
                     default_illuminants, render_frame, shade_pixel)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

"""Synthetic spacecraft segmentation data: paired ray-cast renders and
pixel-exact categorical masks, plus the metrics, losses, and a linear
baseline to close the loop from generated frames to Dice scores."""

from .baseline import (BaselineError, EpochStats, LinearSegmenter,
                       PixelFeaturizer, TrainConfig, evaluate, featurize,
                       fit_normalization, load_model, predict, save_model,
                       segment, train)
from .dataset import (AugmentationPolicy, AugmentOps, DatasetError,
                      DatasetManifest, FrameRecord, GenConfig, LabeledFrame,
                      ValidationReport, apply_augmentation, augment_pair,
                      generate_dataset, load_frame, load_split, read_manifest,
                      sample_augmentation, split_manifest, validate_manifest,
                      write_manifest)
from .losses import (LossParams, LossResult, cce_loss, dice_focal_loss,
                     dice_loss, focal_loss)
from .mask_codec import (CategoricalMask, MaskCodecError, decode_mask,
                         encode_mask, mask_to_rgb, rgb_to_mask)
from .mesh_io import (AnnotatedMesh, MaterialClassMap, MeshError,
                      compute_bounding_sphere, load_annotated_mesh,
                      load_material_map, mesh_from_arrays)
from .metrics import (ConfusionTally, DiceReport, dice_scores, report_table,
                      score_pair, tally)
from .render import (CameraPose, RayHit, RenderedPair, SceneConfig,
                     default_scene, intersect, load_scene, primary_hit_mask,
                     render_pair, sample_poses, save_scene)
from .taxonomy import (ClassDef, ClassTaxonomy, TaxonomyError, color_to_index,
                       default_taxonomy, load_taxonomy, save_taxonomy)
from .toymesh import (box_geometry, cube_mesh, icosphere_geometry,
                      satellite_mesh, satellite_obj, sphere_mesh, sphere_obj,
                      write_mesh_files)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

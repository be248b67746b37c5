"""Light-field angular super-resolution by EPI blur, residual restoration and deblur."""

from .depth import DisparityMap, build_masks, depth_assisted_render, discretize_disparity
from .kernels import BlurKernel, KernelKind, blur_epi, deblur_epi, kernel_selection_error, make_kernel
from .lightfield import (
    ChannelSpace,
    LightField4D,
    LightFieldFormatError,
    Orientation,
    downsample_angular,
    extract_epi,
    insert_epi,
    load_lightfield,
    resample_angular,
    save_lightfield,
    shear_epi,
)
from .metrics import ms_ssim, psnr
from .network import Network, init_network, load_weights, save_weights
from .pipeline import PipelineConfig, reconstruct_epi, reconstruct_lightfield, reconstruct_view_sequence
from .spectrum import epi_power_spectrum, export_spectrum, highband_energy_ratio
from .synth import LineScene, LinePrimitive, make_benchmark_suite, render_layered_lightfield, render_line_epi
from .training import TrainConfig, build_training_set, train

__version__ = "0.1.0"

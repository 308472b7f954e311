"""Synthetic liquid-cell TEM video simulation, particle tracking and
trajectory/segmentation analytics."""

from .errors import (ConfigError, DataError, FitError, InputError,
                     InsufficientDataError, LptrackError, ParameterError)
from .imaging import (Disc, Ellipse, FrameStack, SceneConfig, measure_snr,
                      render_frame, render_video_frames, simulate_video)
from .metrics import (BoundaryMatch, CentroidAgreement, MetricReport, boundary_f,
                      centroid_agreement, jaccard, jf_frame, jf_video)
from .stats import (DisplacementHist, MsdCurve, VacfCurve, displacement_pdf,
                    ensemble_msd, fit_diffusion, gaussian_reference, msd,
                    pooled_displacement_pdf, vacf)
from .tracking import (Detection, LinkConfig, extract_detections,
                       identity_switch_count, link, min_cost_assignment)
from .trajgen import (DiffusionParams, Trajectory, apply_boundary, gen_brownian,
                      gen_fbm)

__version__ = "0.1.0"

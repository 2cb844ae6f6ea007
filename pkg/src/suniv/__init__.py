"""suniv: simplified U-nets for statistical inverse problems on the torus."""

from suniv.experiments import (
    ExperimentFailure,
    SelectedParams,
    StabilityConfig,
    SweepConfig,
    SweepResult,
    deconvolution_sweep_config,
    denoising_sweep_config,
    main,
    n_sweep_config,
    oracle_check,
    rate_sweep_N,
    rate_sweep_sigma,
    replay_instance,
    select_parameters,
    stability_suite,
)
from suniv.forward_model import (
    Grid,
    PriorParams,
    SingularOperatorError,
    SmoothingOperator,
    TrainingSet,
    add_white_noise,
    apply,
    custom_operator,
    grid_analysis,
    grid_synthesis,
    identity_operator,
    load_training_set,
    make_rng,
    make_training_set,
    operator_from_descriptor,
    prior_second_moment,
    quadrature_inner,
    quadrature_norm,
    sample_prior,
    save_training_set,
    sobolev_norm,
    sobolev_operator,
    vaguelette,
    vaguelette_biorthogonality_error,
)
from suniv.sunet import (
    ForwardTrace,
    Gradients,
    NetClassParams,
    SUNet,
    backward,
    calibrate_thresholds,
    check_class_membership,
    first_layer,
    forward,
    load_net,
    preset_wavelet_thresholding,
    preset_wvd,
    project_constraints,
    random_feasible_net,
    save_net,
    verify_net_distance_bound,
    verify_perturbation_bounds,
    verify_size_bounds,
)
from suniv.tensor_ops import DTensor, down_conv, l2_norm, tensor_product, up_conv
from suniv.training import (
    NumericalFailure,
    TrainConfig,
    TrainHistory,
    risk_bound_check,
    empirical_risk,
    noise_level_stds,
    reference_preset,
    test_risk,
    train_erm,
    universal_preset,
)
from suniv.wavelets import (
    FilterBank,
    WaveletCoefficients,
    daubechies_filters,
    dwt_forward,
    dwt_inverse,
    sample_father_wavelet,
    soft_threshold,
    universal_thresholds,
    wavelet_threshold_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "DTensor",
    "down_conv",
    "up_conv",
    "tensor_product",
    "l2_norm",
    "FilterBank",
    "WaveletCoefficients",
    "daubechies_filters",
    "dwt_forward",
    "dwt_inverse",
    "sample_father_wavelet",
    "soft_threshold",
    "universal_thresholds",
    "wavelet_threshold_oracle",
    "Grid",
    "PriorParams",
    "SingularOperatorError",
    "SmoothingOperator",
    "TrainingSet",
    "add_white_noise",
    "apply",
    "custom_operator",
    "grid_analysis",
    "grid_synthesis",
    "identity_operator",
    "load_training_set",
    "make_rng",
    "make_training_set",
    "operator_from_descriptor",
    "prior_second_moment",
    "quadrature_inner",
    "quadrature_norm",
    "sample_prior",
    "save_training_set",
    "sobolev_norm",
    "sobolev_operator",
    "vaguelette",
    "vaguelette_biorthogonality_error",
    "ForwardTrace",
    "Gradients",
    "NetClassParams",
    "SUNet",
    "backward",
    "calibrate_thresholds",
    "check_class_membership",
    "first_layer",
    "forward",
    "load_net",
    "preset_wavelet_thresholding",
    "preset_wvd",
    "project_constraints",
    "random_feasible_net",
    "save_net",
    "verify_net_distance_bound",
    "verify_perturbation_bounds",
    "verify_size_bounds",
    "NumericalFailure",
    "TrainConfig",
    "TrainHistory",
    "risk_bound_check",
    "empirical_risk",
    "noise_level_stds",
    "reference_preset",
    "test_risk",
    "train_erm",
    "universal_preset",
    "ExperimentFailure",
    "SelectedParams",
    "StabilityConfig",
    "SweepConfig",
    "SweepResult",
    "deconvolution_sweep_config",
    "denoising_sweep_config",
    "main",
    "n_sweep_config",
    "oracle_check",
    "rate_sweep_N",
    "rate_sweep_sigma",
    "replay_instance",
    "select_parameters",
    "stability_suite",
    "__version__",
]

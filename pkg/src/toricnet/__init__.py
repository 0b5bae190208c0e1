"""Neural decoding of the 2D toric code with a tri-layer restricted
Boltzmann machine, benchmarked against exact minimum-weight matching."""

from .lattice import (
    CLASS_NAMES,
    CLASS_ORDER,
    Chain,
    HomologyClass,
    Lattice,
    Syndrome,
    TRIVIAL,
    class_index,
    compose,
    empty_chain,
    homology_class,
    logical_representative,
    plaquette_boundary,
    syndrome_of,
)
from .noise import Dataset, ErrorModel, generate_dataset, load_dataset, sample_chain, save_dataset
from .rbm import (
    MachineState,
    RbmParams,
    effective_energy,
    energy,
    exact_log_partition,
    gibbs_sweep,
    load_model,
    prob_e_given_h,
    prob_h_given_vis,
    prob_s_given_h,
    save_model,
)
from .training import (
    GradientSet,
    Hyperparams,
    cd_k_gradient,
    default_grid,
    exact_kl_gradient,
    grid_search,
    init_params,
    sgd_step,
    train,
)
from .decoders import (
    DecodeOutcome,
    evaluate_recovery,
    ml_decode,
    mwpm_decode,
    neural_decode,
    torus_distance,
)
from .bench import (
    EvalReport,
    IdentityDecoder,
    LogicalFlipDecoder,
    MwpmDecoder,
    NeuralDecoder,
    compare_decoders,
    estimate_pfail,
    homology_histogram,
    write_report_csv,
)

__version__ = "0.1.0"

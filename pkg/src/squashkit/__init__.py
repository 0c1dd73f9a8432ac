"""squashkit: squash-operator construction, verification and QKD simulation.

The package has four layers:

* :mod:`squashkit.symfock` - exact linear algebra on the symmetric
  N-photon subspace (basis states, basis changes, lifted gates, oracle);
* :mod:`squashkit.squash` - the squash Kraus family, channel application,
  and its completeness / modulation-covariance checks;
* :mod:`squashkit.povm` - threshold-detector models, QND block splitting,
  and the detector-vs-squash POVM equivalence;
* :mod:`squashkit.protocol` - exact and Monte Carlo BB84/BBM92 against
  adversarial multi-photon sources, error rates and one-way key rates.

The ``squashkit`` console script exposes ``verify``, ``simulate`` and
``keyrate`` subcommands.
"""

from .symfock import (
    Basis,
    SymState,
    OMEGA,
    X_MODULATION,
    HADAMARD,
    sym_basis_state,
    change_basis,
    basis_change_matrix,
    lift_gate,
    lift_gate_oracle,
    projector,
)
from .squash import (
    KrausChannel,
    CompletenessReport,
    HadamardReport,
    squash_index_pairs,
    build_squash,
    apply_channel,
    apply_channel_on_bob,
    verify_completeness,
    verify_hadamard_invariance,
    random_density,
)
from .povm import (
    Outcome,
    Povm,
    BlockState,
    CompositeBlockState,
    PovmEquivalenceReport,
    actual_povm,
    virtual_povm,
    verify_povm_equivalence,
    qnd_split,
    detect_event,
)
from .protocol import (
    Depolarize,
    InterceptResend,
    CoincidenceInjection,
    FixedBlockState,
    CustomState,
    AttackSpec,
    attack_from_dict,
    attack_to_dict,
    RoundRecord,
    SimResult,
    bell_state,
    eve_state,
    binary_entropy,
    key_rate,
    exact_error_rates,
    exact_sifted_distribution,
    run_simulation,
    run_bb84_actual,
    run_bb84_virtual,
    run_bbm92,
)

__version__ = "0.1.0"

__all__ = [
    "Basis",
    "SymState",
    "OMEGA",
    "X_MODULATION",
    "HADAMARD",
    "sym_basis_state",
    "change_basis",
    "basis_change_matrix",
    "lift_gate",
    "lift_gate_oracle",
    "projector",
    "KrausChannel",
    "CompletenessReport",
    "HadamardReport",
    "squash_index_pairs",
    "build_squash",
    "apply_channel",
    "apply_channel_on_bob",
    "verify_completeness",
    "verify_hadamard_invariance",
    "random_density",
    "Outcome",
    "Povm",
    "BlockState",
    "CompositeBlockState",
    "PovmEquivalenceReport",
    "actual_povm",
    "virtual_povm",
    "verify_povm_equivalence",
    "qnd_split",
    "detect_event",
    "Depolarize",
    "InterceptResend",
    "CoincidenceInjection",
    "FixedBlockState",
    "CustomState",
    "AttackSpec",
    "attack_from_dict",
    "attack_to_dict",
    "RoundRecord",
    "SimResult",
    "bell_state",
    "eve_state",
    "binary_entropy",
    "key_rate",
    "exact_error_rates",
    "exact_sifted_distribution",
    "run_simulation",
    "run_bb84_actual",
    "run_bb84_virtual",
    "run_bbm92",
    "__version__",
]

"""Exact one-sided matching mechanisms, their pure and learned equilibria,
and welfare-ratio audits on adversarial instances."""

from .constructions import (
    ConstructionParams,
    ConstructionReport,
    derive_thm4_prime,
    gen_thm4,
    gen_thm5,
    gen_thm6_pos,
    gen_thm10_unit_range,
    verify_construction,
)
from .core import (
    AssignmentMatrix,
    CapacityError,
    ParseError,
    ShapeError,
    ValuationProfile,
    dump_instance,
    parse_instance,
    parse_strategies,
    validate_profile,
)
from .equilibrium import (
    DeviationSpace,
    EquilibriumReport,
    NoRegretLearner,
    PureNashSearch,
    best_response,
    best_response_dynamics,
    enumerate_pure_nash,
    no_regret_dynamics,
    verify_pure_nash,
)
from .mechanisms import (
    NaiveMaxWelfare,
    ProbabilisticSerial,
    RandomDictatorial,
    RandomPriority,
    SerialDictatorship,
    get_mechanism,
    naive_max_welfare,
    probabilistic_serial,
    random_dictatorial,
    random_priority,
    serial_dictatorship,
)
from .properties import (
    check_envy_free,
    check_safe_strategy,
    envy_free_implies_safe,
    ps_bounds_suite,
    sd_dominates,
    truthful_safety,
)
from .welfare import anarchy_ratios, max_weight_matching, optimal_matching, social_welfare

__version__ = "0.1.0"

from .analytics import (doubly_nested_iterations, filter_savings_mu, iterations_for_probability,
                        nested_iterations, nesting_savings_nu, predict_cost, required_iterations)
from .estimator import (attach_gradients, empirical_outlier_reduction, estimate, gdc_filter_hypothesis,
                        pair_survivors, sample_hypotheses, sample_hypothesis, warmup)
from .types import (CostModel, Correspondence, GdcTestMode, Matches, RansacConfig, RansacReport,
                    Strategy, as_matches)

__all__ = [
    "CostModel", "Correspondence", "GdcTestMode", "Matches", "RansacConfig", "RansacReport",
    "Strategy", "as_matches", "attach_gradients", "doubly_nested_iterations", "empirical_outlier_reduction",
    "estimate", "filter_savings_mu", "gdc_filter_hypothesis", "iterations_for_probability",
    "nested_iterations", "nesting_savings_nu", "pair_survivors", "predict_cost",
    "required_iterations", "sample_hypotheses", "sample_hypothesis", "warmup",
]

"""One-way ANOVA, REML random-intercept mixed models and their special functions."""
from .anova import AnovaResult, anova_oneway, group_rows
from .lmm import LabeledDataset, LmmError, LmmFit, lmm_fit, lmm_fit_arrays, reml_loglik
from .report import lmm_report, lmm_report_json
from .special import betainc, f_cdf, f_sf, normal_cdf, normal_sf, two_sided_normal_p

__all__ = [
    "AnovaResult", "anova_oneway", "group_rows",
    "LabeledDataset", "LmmError", "LmmFit", "lmm_fit", "lmm_fit_arrays", "reml_loglik",
    "lmm_report", "lmm_report_json",
    "betainc", "f_cdf", "f_sf", "normal_cdf", "normal_sf", "two_sided_normal_p",
]

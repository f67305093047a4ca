from .statistics import bootstrap_metric, independent_ttest, paired_ttest
from .report import evaluate, evaluation_split, write_metrics_csv, write_report_json
from .ablation import run_ablation

__all__ = [
    "bootstrap_metric",
    "independent_ttest",
    "paired_ttest",
    "evaluate",
    "evaluation_split",
    "write_metrics_csv",
    "write_report_json",
    "run_ablation",
]

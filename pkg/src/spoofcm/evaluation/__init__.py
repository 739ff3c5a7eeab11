from .metrics import (DetPoint, EerResult, TdcfParams, TdcfResult, asv_error_rates,
                      compute_eer, compute_min_tdcf, default_tdcf_params, det_points,
                      operating_points, probit, tdcf_curve)
from .protocol import TrialRecord, class_counts, parse_protocol, select, write_protocol
from .scores import (ScoreSet, fuse_scores, metric_report, read_asv_scores, read_scores,
                     write_det_csv, write_report, write_scores)

#pragma once

#include <map>
#include <string>
#include <vector>

namespace eegstate::metrics {

/// Mean per-class recall over the classes present in y_true.
double balanced_accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred);

/// (p_o - p_e) / (1 - p_e); 0 when chance agreement is 1.
double cohens_kappa(const std::vector<int>& y_true, const std::vector<int>& y_pred);

/// Per-class F1 averaged with weights proportional to true support.
double weighted_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred);

/// Mann-Whitney statistic with ties counted as one half. y_true is 0/1.
double auroc(const std::vector<int>& y_true, const std::vector<double>& scores);

/// Step-interpolated area under the precision-recall curve: sum over
/// distinct thresholds of (recall increase) x precision.
double auc_pr(const std::vector<int>& y_true, const std::vector<double>& scores);

/// Metrics applicable to the task. Multi-class: balanced_accuracy,
/// cohens_kappa, weighted_f1. Binary adds auroc and auc_pr computed from
/// `positive_scores` when given.
std::map<std::string, double> evaluate(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                       const std::vector<double>& positive_scores = {});

}  // namespace eegstate::metrics

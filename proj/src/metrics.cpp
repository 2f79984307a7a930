#include "eegstate/metrics.hpp"

#include "eegstate/core.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace eegstate::metrics {
namespace {

void check_pair(const std::vector<int>& a, size_t n) {
  if (a.empty()) throw ValidationError("metric on empty input");
  if (a.size() != n) throw ShapeError("metric inputs differ in length");
}

void check_binary(const std::vector<int>& y, size_t n_scores) {
  check_pair(y, n_scores);
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == 0) neg = true;
    else throw ValidationError("binary metric requires labels in {0, 1}");
  }
  if (!pos || !neg) throw ValidationError("binary metric requires both classes in y_true");
}

}  // namespace

double balanced_accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  check_pair(y_true, y_pred.size());
  std::map<int, std::pair<long, long>> per;  // class -> (hits, support)
  for (size_t i = 0; i < y_true.size(); ++i) {
    auto& [hit, sup] = per[y_true[i]];
    ++sup;
    if (y_pred[i] == y_true[i]) ++hit;
  }
  double sum = 0.0;
  for (const auto& [cls, hs] : per) sum += static_cast<double>(hs.first) / static_cast<double>(hs.second);
  return sum / static_cast<double>(per.size());
}

double cohens_kappa(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  check_pair(y_true, y_pred.size());
  const double n = static_cast<double>(y_true.size());
  std::map<int, long> nt, np;
  long agree = 0;
  for (size_t i = 0; i < y_true.size(); ++i) {
    ++nt[y_true[i]];
    ++np[y_pred[i]];
    if (y_true[i] == y_pred[i]) ++agree;
  }
  const double p_o = agree / n;
  double p_e = 0.0;
  for (const auto& [cls, c] : nt) {
    auto it = np.find(cls);
    if (it != np.end()) p_e += (c / n) * (it->second / n);
  }
  if (p_e >= 1.0) return 0.0;
  return (p_o - p_e) / (1.0 - p_e);
}

double weighted_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  check_pair(y_true, y_pred.size());
  std::map<int, long> tp, support, predicted;
  for (size_t i = 0; i < y_true.size(); ++i) {
    ++support[y_true[i]];
    ++predicted[y_pred[i]];
    if (y_true[i] == y_pred[i]) ++tp[y_true[i]];
  }
  double sum = 0.0;
  for (const auto& [cls, sup] : support) {
    const double t = static_cast<double>(tp[cls]);
    // F1 = 2 tp / (2 tp + fp + fn) = 2 tp / (predicted + support)
    const double f1 = t == 0.0 ? 0.0 : 2.0 * t / static_cast<double>(predicted[cls] + sup);
    sum += f1 * static_cast<double>(sup);
  }
  return sum / static_cast<double>(y_true.size());
}

double auroc(const std::vector<int>& y_true, const std::vector<double>& scores) {
  check_binary(y_true, scores.size());
  const size_t n = scores.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum of positives, kept integral so the statistic is exact.
  long twice_rank_sum = 0;
  long n_pos = 0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const long twice_rank = static_cast<long>(i + 1 + j);  // (i+1 + j) = 2 * mean rank
    for (size_t k = i; k < j; ++k)
      if (y_true[idx[k]] == 1) {
        twice_rank_sum += twice_rank;
        ++n_pos;
      }
    i = j;
  }
  const long n_neg = static_cast<long>(n) - n_pos;
  const long twice_u = twice_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auc_pr(const std::vector<int>& y_true, const std::vector<double>& scores) {
  check_binary(y_true, scores.size());
  const size_t n = scores.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  const double total_pos = static_cast<double>(std::count(y_true.begin(), y_true.end(), 1));
  double area = 0.0, prev_recall = 0.0;
  long tp = 0, seen = 0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    for (size_t k = i; k < j; ++k) tp += y_true[idx[k]] == 1;
    seen = static_cast<long>(j);
    const double recall = tp / total_pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

std::map<std::string, double> evaluate(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                       const std::vector<double>& positive_scores) {
  std::map<std::string, double> out;
  out["balanced_accuracy"] = balanced_accuracy(y_true, y_pred);
  out["cohens_kappa"] = cohens_kappa(y_true, y_pred);
  out["weighted_f1"] = weighted_f1(y_true, y_pred);
  if (!positive_scores.empty()) {
    std::set<int> classes(y_true.begin(), y_true.end());
    if (classes == std::set<int>{0, 1}) {
      out["auroc"] = auroc(y_true, positive_scores);
      out["auc_pr"] = auc_pr(y_true, positive_scores);
    }
  }
  return out;
}

}  // namespace eegstate::metrics

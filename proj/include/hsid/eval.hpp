#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "hsid/common.hpp"
#include "hsid/data.hpp"

namespace hsid {

// Fake is the positive class throughout.
struct RocPoint {
  double fpr, tpr, threshold;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1), both coordinates non-decreasing
};

inline void require_both_classes(const std::vector<double>& scores, const std::vector<bool>& fake) {
  if (scores.size() != fake.size()) throw EvalError("scores and labels differ in length");
  std::size_t pos = 0;
  for (bool f : fake) pos += f ? 1 : 0;
  if (pos == 0 || pos == fake.size())
    throw EvalError("both classes must be present (got " + std::to_string(pos) + " fakes of " +
                    std::to_string(fake.size()) + ")");
  for (double s : scores)
    if (!std::isfinite(s)) throw EvalError("non-finite score");
}

// Threshold sweep over descending scores with tied scores grouped, so the
// trapezoidal area equals the pairwise win/tie statistic exactly.
inline RocCurve roc_curve(const std::vector<double>& scores, const std::vector<bool>& fake) {
  require_both_classes(scores, fake);
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (bool f : fake) n_pos += f ? 1 : 0;
  const std::size_t n_neg = n - n_pos;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < n) {
    const double s = scores[order[i]];
    std::size_t j = i;
    while (j < n && scores[order[j]] == s) {
      if (fake[order[j]]) ++tp; else ++fp;
      ++j;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                            static_cast<double>(tp) / static_cast<double>(n_pos), s});
    i = j;
  }
  return curve;
}

// Trapezoidal area under the ROC; equals P(score_fake > score_real) + P(tie)/2.
inline double auc(const std::vector<double>& scores, const std::vector<bool>& fake) {
  RocCurve curve = roc_curve(scores, fake);
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint &a = curve.points[i - 1], &b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

// O(n^2) pairwise oracle kept alongside for verification.
inline double auc_pairwise(const std::vector<double>& scores, const std::vector<bool>& fake) {
  require_both_classes(scores, fake);
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!fake[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (fake[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Cross-manipulation protocol
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string train_kind;
  std::vector<std::pair<std::string, double>> aucs;  // test kind -> auc
  double avg = 0.0;
};

struct ReportTable {
  std::vector<ReportRow> rows;

  void check_invariants() const {
    for (const ReportRow& r : rows) {
      double s = 0.0;
      for (const auto& [_, a] : r.aucs) {
        if (a < 0.0 || a > 1.0) throw EvalError("AUC out of [0,1] in report row " + r.train_kind);
        s += a;
      }
      if (std::abs(r.avg - s / static_cast<double>(r.aucs.size())) > 1e-12)
        throw EvalError("row average inconsistent for " + r.train_kind);
    }
  }
};

// Scores one sample with P(fake); kept as a callback so the protocol is
// independent of the model implementation.
using SampleScorer = std::function<double(const LabeledSample&)>;

struct EvalProtocol {
  std::string train_kind;
  std::vector<ManipKind> test_kinds;
  std::vector<std::uint64_t> train_scene_seeds;  // for the overlap check
};

// One report row: AUC of the scorer on each test kind's held-out samples
// (reals plus fakes of that kind). Raises ProtocolError if any test scene
// was seen in training.
inline ReportRow cross_manipulation_eval(const SampleScorer& scorer, const Dataset& test_data,
                                         const EvalProtocol& protocol,
                                         Partition test_partition = Partition::Test) {
  const std::set<std::uint64_t> train_seeds(protocol.train_scene_seeds.begin(),
                                            protocol.train_scene_seeds.end());
  for (const std::uint64_t s : test_data.partition_scene_seeds(test_partition))
    if (train_seeds.count(s))
      throw ProtocolError("scene " + std::to_string(s) + " appears in both train and test");

  ReportRow row;
  row.train_kind = protocol.train_kind;
  double total = 0.0;
  for (ManipKind kind : protocol.test_kinds) {
    std::vector<double> scores;
    std::vector<bool> fake;
    for (const SamplePair* sp : test_data.partition_pairs(test_partition)) {
      scores.push_back(scorer(sp->real));
      fake.push_back(false);
      if (sp->fake.manip_id == static_cast<int>(kind)) {
        scores.push_back(scorer(sp->fake));
        fake.push_back(true);
      }
    }
    const double a = auc(scores, fake);
    row.aucs.emplace_back(manip_kind_name(kind), a);
    total += a;
  }
  row.avg = total / static_cast<double>(row.aucs.size());
  return row;
}

}  // namespace hsid

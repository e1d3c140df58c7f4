#include "biofuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "biofuse/errors.hpp"

namespace biofuse {

namespace {

struct Counts {
  std::size_t genuine = 0;
  std::size_t impostor = 0;
};

Counts count(std::span<const ScoredTrial> trials) {
  Counts c;
  for (const auto& t : trials) {
    if (!std::isfinite(t.score)) throw ArgumentError("trial score is not finite");
    (t.genuine ? c.genuine : c.impostor)++;
  }
  if (c.genuine == 0 || c.impostor == 0)
    throw ArgumentError("need at least one genuine and one impostor trial");
  return c;
}

// Distinct scores ascending, with the number of genuine/impostor trials at each.
struct Level {
  double score;
  std::size_t genuine;
  std::size_t impostor;
};

std::vector<Level> levels(std::span<const ScoredTrial> trials) {
  std::vector<ScoredTrial> sorted(trials.begin(), trials.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  std::vector<Level> out;
  for (const auto& t : sorted) {
    if (out.empty() || out.back().score != t.score) out.push_back({t.score, 0, 0});
    (t.genuine ? out.back().genuine : out.back().impostor)++;
  }
  return out;
}

}  // namespace

ErrorRates far_frr(std::span<const ScoredTrial> trials, double threshold) {
  const Counts c = count(trials);
  std::size_t false_accepts = 0, false_rejects = 0;
  for (const auto& t : trials) {
    if (t.genuine && t.score < threshold) ++false_rejects;
    if (!t.genuine && t.score >= threshold) ++false_accepts;
  }
  return {static_cast<double>(false_accepts) / static_cast<double>(c.impostor),
          static_cast<double>(false_rejects) / static_cast<double>(c.genuine)};
}

EqualErrorRate equal_error_rate(std::span<const ScoredTrial> trials) {
  const Counts c = count(trials);
  const auto lv = levels(trials);
  // At threshold lv[i].score: rejects are every trial strictly below it.
  std::size_t genuine_below = 0, impostor_below = 0;
  EqualErrorRate best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (const auto& level : lv) {
    const double far = static_cast<double>(c.impostor - impostor_below) / static_cast<double>(c.impostor);
    const double frr = static_cast<double>(genuine_below) / static_cast<double>(c.genuine);
    const double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best = {(far + frr) / 2.0, level.score, far, frr};
    }
    genuine_below += level.genuine;
    impostor_below += level.impostor;
  }
  return best;
}

RocCurve roc_curve(std::span<const ScoredTrial> trials) {
  const Counts c = count(trials);
  const auto lv = levels(trials);
  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (auto it = lv.rbegin(); it != lv.rend(); ++it) {
    tp += it->genuine;
    fp += it->impostor;
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(c.impostor),
                          static_cast<double>(tp) / static_cast<double>(c.genuine), it->score});
  }
  roc.points.push_back({1.0, 1.0, -std::numeric_limits<double>::infinity()});
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return roc;
}

std::string roc_to_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr,threshold\n";
  char buf[96];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.fpr, p.tpr, p.threshold);
    out += buf;
  }
  return out;
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (predictions.empty()) throw ArgumentError("accuracy: no predictions");
  if (predictions.size() != labels.size()) throw ArgumentError("accuracy: prediction and label counts differ");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace biofuse

#pragma once

// Stop-and-wait delay law and optimal traffic splitting across scored paths.
// Pure functions over immutable inputs.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "taomdv/types.hpp"

namespace taomdv {

struct PathScore {
  NodeId next_hop = 0;
  double probability = 0.0;  // composite link score in [0, 1]
  std::uint32_t hop_count = 1;
};

struct PathFraction {
  NodeId next_hop = 0;
  double fraction = 0.0;
};

struct FractionSet {
  std::vector<PathFraction> fractions;  // same order as the input scores
  bool uniform_fallback = false;        // all-zero scores degraded to 1/n
};

struct PacketAssignment {
  NodeId next_hop = 0;
  std::uint32_t count = 0;
};

struct SplitPlan {
  FractionSet fractions;
  std::vector<PacketAssignment> packet_counts;
};

/// Expected per-packet stop-and-wait delay 2t/p; +inf when the link never
/// delivers.
inline double expected_delay(double p, double t) {
  if (t <= 0.0) throw std::invalid_argument("transmission time must be positive");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("probability outside [0, 1]");
  if (p == 0.0) return std::numeric_limits<double>::infinity();
  return 2.0 * t / p;
}

/// f_i = p_i / sum(p). With every score zero the split degrades to uniform
/// fractions so traffic keeps flowing; the flag lets callers count that.
inline FractionSet optimal_fractions(std::span<const PathScore> scores) {
  if (scores.empty()) throw std::invalid_argument("cannot split across zero paths");
  FractionSet out;
  out.fractions.reserve(scores.size());
  double total = 0.0;
  for (const auto& s : scores) total += s.probability;
  if (total > 0.0) {
    for (const auto& s : scores) out.fractions.push_back({s.next_hop, s.probability / total});
  } else {
    out.uniform_fallback = true;
    const double f = 1.0 / static_cast<double>(scores.size());
    for (const auto& s : scores) out.fractions.push_back({s.next_hop, f});
  }
  return out;
}

/// Largest-remainder rounding of batch * f_i. Counts always sum to batch;
/// remainder ties go to the lower next-hop id.
inline std::vector<PacketAssignment> assign_packets(const FractionSet& fractions,
                                                    std::uint32_t batch) {
  if (batch == 0) throw std::invalid_argument("batch must be positive");
  if (fractions.fractions.empty()) throw std::invalid_argument("cannot assign packets to zero paths");

  const std::size_t n = fractions.fractions.size();
  std::vector<PacketAssignment> out(n);
  std::vector<double> remainder(n);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ideal = static_cast<double>(batch) * fractions.fractions[i].fraction;
    const auto base = static_cast<std::uint32_t>(ideal);
    out[i] = {fractions.fractions[i].next_hop, base};
    remainder[i] = ideal - static_cast<double>(base);
    assigned += base;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    return out[a].next_hop < out[b].next_hop;
  });
  for (std::size_t k = 0; assigned < batch; ++k) {
    out[order[k % n]].count += 1;
    ++assigned;
  }
  return out;
}

/// Completion time bound for a split: max_i (f_i / p_i) * 2t. Paths with a
/// zero fraction contribute nothing; a positive fraction on a dead path
/// makes completion unbounded.
inline double completion_bound(const FractionSet& fractions, std::span<const PathScore> scores,
                               double t) {
  if (t <= 0.0) throw std::invalid_argument("transmission time must be positive");
  if (fractions.fractions.size() != scores.size())
    throw std::invalid_argument("fractions and scores must align");
  double worst = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double f = fractions.fractions[i].fraction;
    if (f <= 0.0) continue;
    if (scores[i].probability <= 0.0) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, f / scores[i].probability);
  }
  return worst * 2.0 * t;
}

inline SplitPlan plan_split(std::span<const PathScore> scores, std::uint32_t batch) {
  SplitPlan plan;
  plan.fractions = optimal_fractions(scores);
  plan.packet_counts = assign_packets(plan.fractions, batch);
  return plan;
}

}  // namespace taomdv

#pragma once

// Per-link probabilistic factors and their composite score: windowed Beta
// link trust, projected battery influence, availability index, and hop-count
// adjustment. Everything here is a pure value type; callers own their state.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <stdexcept>
#include <vector>

#include "taomdv/types.hpp"

namespace taomdv {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// Bounded FIFO of ACK/timeout outcomes. The window holds the latest N
/// observations; successes inside it play the role of alpha, failures beta.
class TrustWindow {
 public:
  explicit TrustWindow(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("trust window capacity must be positive");
  }

  /// Appends one outcome, evicting the oldest when the window is full.
  void record(bool ack_received) {
    outcomes_.push_back(ack_received);
    if (ack_received) ++success_count_;
    if (outcomes_.size() > capacity_) {
      if (outcomes_.front()) --success_count_;
      outcomes_.pop_front();
    }
  }

  /// Posterior mean under a Beta(1,1) prior: (successes+1)/(observed+2).
  /// Well-defined on an empty window (0.5) and never exactly 0 or 1.
  double expectation() const {
    return (static_cast<double>(success_count_) + 1.0) /
           (static_cast<double>(outcomes_.size()) + 2.0);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return outcomes_.size(); }
  std::size_t successes() const { return success_count_; }
  std::size_t failures() const { return outcomes_.size() - success_count_; }
  const std::deque<bool>& outcomes() const { return outcomes_; }

 private:
  std::size_t capacity_;
  std::deque<bool> outcomes_;
  std::size_t success_count_ = 0;
};

struct BatterySample {
  double time = 0.0;
  double level = 1.0;  // fraction in [0, 1]
};

/// Linear battery projection from the last two samples, clamped to [0, 1].
inline double extrapolate_battery(const BatterySample& s0, const BatterySample& s1, double t2) {
  if (!(s0.time < s1.time) || !(s1.time <= t2))
    throw std::invalid_argument("battery extrapolation requires t0 < t1 <= t2");
  const double rate = (s1.level - s0.level) / (s1.time - s0.time);
  return clamp01(s1.level + rate * (t2 - s1.time));
}

struct BatteryInfluenceConfig {
  double gamma = 4.0;
};

/// Increasing battery influence f(x) = 1 - exp(-gamma x); 0 at empty.
inline double battery_influence(double level, const BatteryInfluenceConfig& cfg) {
  if (level < 0.0 || level > 1.0) throw std::invalid_argument("battery level outside [0, 1]");
  if (cfg.gamma <= 0.0) throw std::invalid_argument("gamma must be positive");
  return 1.0 - std::exp(-cfg.gamma * level);
}

/// Availability index of a neighbor: regenerates at `regen_rate` per idle
/// second, loses `degradation` per observed transmission, clamped to [0, 1].
struct AvailabilityState {
  double value = 1.0;
  double last_update = 0.0;
  double regen_rate = 0.2;
  double degradation = 0.4;

  AvailabilityState advanced(double now, bool observed_transmitting) const {
    if (now < last_update) throw std::invalid_argument("availability update must not move backwards in time");
    AvailabilityState next = *this;
    const double dt = now - last_update;
    next.value = clamp01(value + regen_rate * dt - (observed_transmitting ? degradation : 0.0));
    next.last_update = now;
    return next;
  }

  /// Regeneration-only view at `now`, without mutating state.
  double projected(double now) const {
    if (now < last_update) throw std::invalid_argument("availability projection must not move backwards in time");
    return clamp01(value + regen_rate * (now - last_update));
  }
};

inline AvailabilityState update_availability(const AvailabilityState& state, double now,
                                             bool observed_transmitting) {
  return state.advanced(now, observed_transmitting);
}

/// Scales a link score by the inverse path length.
inline double hop_adjusted_probability(double p, std::uint32_t num_hops) {
  if (num_hops == 0) throw std::invalid_argument("hop count must be at least 1");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("probability outside [0, 1]");
  return p / static_cast<double>(num_hops);
}

/// Everything one node tracks about a direct neighbor: the outcome window,
/// the last two battery beacons, and the availability index.
class NeighborAssessment {
 public:
  NeighborAssessment(NodeId neighbor, std::size_t trust_capacity, AvailabilityState availability)
      : neighbor_id_(neighbor), trust_(trust_capacity), availability_(availability) {}

  NodeId neighbor_id() const { return neighbor_id_; }
  TrustWindow& trust() { return trust_; }
  const TrustWindow& trust() const { return trust_; }
  AvailabilityState& availability() { return availability_; }
  const AvailabilityState& availability() const { return availability_; }

  /// Keeps the two most recent samples; non-increasing timestamps are ignored.
  bool observe_battery(const BatterySample& s) {
    if (s.level < 0.0 || s.level > 1.0) throw std::invalid_argument("battery level outside [0, 1]");
    if (!battery_.empty() && s.time <= battery_.back().time) return false;
    battery_.push_back(s);
    if (battery_.size() > 2) battery_.erase(battery_.begin());
    return true;
  }

  const std::vector<BatterySample>& battery_history() const { return battery_; }

  /// Projected level at `now`. Warmup: with one sample, its level; with none,
  /// a full battery, so missing data never zeroes a route.
  double battery_level_at(double now) const {
    if (battery_.empty()) return 1.0;
    if (battery_.size() == 1) return battery_.front().level;
    return extrapolate_battery(battery_[0], battery_[1], now);
  }

 private:
  NodeId neighbor_id_;
  TrustWindow trust_;
  AvailabilityState availability_;
  std::vector<BatterySample> battery_;  // at most two, strictly increasing time
};

/// Final link probability: trust mean x battery influence x availability
/// (regenerated to now) x 1/num_hops. Product of [0,1] factors, so in [0,1].
inline double composite_link_probability(const NeighborAssessment& assessment, double now,
                                         std::uint32_t num_hops, const BatteryInfluenceConfig& cfg) {
  const double trust = assessment.trust().expectation();
  const double battery = battery_influence(assessment.battery_level_at(now), cfg);
  const double availability = assessment.availability().projected(now);
  return hop_adjusted_probability(trust * battery * availability, num_hops);
}

}  // namespace taomdv

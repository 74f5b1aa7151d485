#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fedkit/core/error.hpp"
#include "fedkit/core/time.hpp"

namespace fedkit::netem {

enum class JitterKind { none, uniform, normal };

/// none; uniform(+-amplitude); normal(sigma = amplitude, truncated at 3 sigma).
struct Jitter {
  JitterKind kind{JitterKind::none};
  SimTime amplitude{0};

  static Jitter none() { return {}; }
  static Jitter uniform(SimTime a) { return {JitterKind::uniform, a}; }
  static Jitter normal(SimTime sigma) { return {JitterKind::normal, sigma}; }

  SimTime bound() const {
    switch (kind) {
      case JitterKind::none: return SimTime{0};
      case JitterKind::uniform: return amplitude;
      case JitterKind::normal: return 3 * amplitude;
    }
    return SimTime{0};
  }
};

struct LinkModel {
  SimTime base_delay{0};
  Jitter jitter;
  double loss_prob{0.0};
  std::uint64_t seed{0};
  bool non_overtaking{false};

  SimTime worst_case_delay() const { return base_delay + jitter.bound(); }
  SimTime min_delay() const { return std::max(SimTime{0}, base_delay - jitter.bound()); }

  void check() const {
    if (base_delay < SimTime{0}) fail(ErrorCode::ConfigError, "link base_delay must be >= 0");
    if (jitter.amplitude < SimTime{0}) fail(ErrorCode::ConfigError, "link jitter must be >= 0");
    if (!(loss_prob >= 0.0 && loss_prob <= 1.0))
      fail(ErrorCode::ConfigError, "link loss must lie in [0,1]");
  }
};

/// Stable 64-bit FNV-1a, used to key per-link random streams by name.
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

struct Slot {
  SimTime deliver_time{0};
  std::uint64_t draw_index{0};
};

/// Draws loss and delay for one link. One instance per directed link; the
/// stream depends only on (experiment seed, link seed, link id).
class LinkScheduler {
 public:
  LinkScheduler() : LinkScheduler(LinkModel{}, "", 0) {}
  LinkScheduler(LinkModel model, std::string link_id, std::uint64_t experiment_seed)
      : model_(model), id_(std::move(link_id)) {
    model_.check();
    const std::uint64_t key = fnv1a(id_);
    std::seed_seq seq{static_cast<std::uint32_t>(experiment_seed), static_cast<std::uint32_t>(experiment_seed >> 32),
                      static_cast<std::uint32_t>(model_.seed), static_cast<std::uint32_t>(model_.seed >> 32),
                      static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
    rng_.seed(seq);
  }

  const LinkModel& model() const { return model_; }
  const std::string& id() const { return id_; }
  std::uint64_t draws() const { return next_draw_; }

  /// Loss first, then jitter; both are drawn for every message so the stream
  /// position depends only on how many messages were offered.
  std::optional<Slot> schedule(SimTime now) {
    if (now < SimTime{0}) fail(ErrorCode::InvalidArgument, "schedule: now must be >= 0");
    const std::uint64_t index = next_draw_++;
    const bool lost = unit_(rng_) < model_.loss_prob;
    const SimTime jitter = draw_jitter();
    if (lost) return std::nullopt;

    SimTime delay = std::max(SimTime{0}, model_.base_delay + jitter);
    SimTime deliver = now + delay;
    if (model_.non_overtaking) {
      deliver = std::max(deliver, last_deliver_);
      last_deliver_ = deliver;
    }
    return Slot{deliver, index};
  }

 private:
  SimTime draw_jitter() {
    const double a = static_cast<double>(model_.jitter.amplitude.count());
    switch (model_.jitter.kind) {
      case JitterKind::none: return SimTime{0};
      case JitterKind::uniform: return SimTime{std::llround((2.0 * unit_(rng_) - 1.0) * a)};
      case JitterKind::normal: {
        if (a == 0.0) return SimTime{0};
        double x = 0;
        do {
          x = normal_(rng_);
        } while (std::abs(x) > 3.0);
        return SimTime{std::llround(x * a)};
      }
    }
    return SimTime{0};
  }

  LinkModel model_;
  std::string id_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uint64_t next_draw_{0};
  SimTime last_deliver_{0};
};

template <typename Message>
struct ScheduledDelivery {
  Message message;
  SimTime deliver_time{0};
  std::uint64_t draw_index{0};
};

/// Pending deliveries released in (deliver_time, draw_index) order.
template <typename Message>
class DeliveryQueue {
 public:
  void push(ScheduledDelivery<Message> d) { heap_.push(std::move(d)); }

  std::vector<Message> deliver_due(SimTime now) {
    std::vector<Message> out;
    for (auto& d : pop_due(now)) out.push_back(std::move(d.message));
    return out;
  }

  std::vector<ScheduledDelivery<Message>> pop_due(SimTime now) {
    std::vector<ScheduledDelivery<Message>> out;
    while (!heap_.empty() && heap_.top().deliver_time <= now) {
      out.push_back(heap_.top());
      heap_.pop();
    }
    return out;
  }

  std::optional<SimTime> next_time() const {
    if (heap_.empty()) return std::nullopt;
    return heap_.top().deliver_time;
  }

  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const ScheduledDelivery<Message>& a, const ScheduledDelivery<Message>& b) const {
      if (a.deliver_time != b.deliver_time) return a.deliver_time > b.deliver_time;
      return a.draw_index > b.draw_index;
    }
  };
  std::priority_queue<ScheduledDelivery<Message>, std::vector<ScheduledDelivery<Message>>, Later> heap_;
};

/// Scheduler plus queue: the emulated WAN link between two sites.
template <typename Message>
class Link {
 public:
  Link(LinkModel model, std::string link_id, std::uint64_t experiment_seed)
      : scheduler_(model, std::move(link_id), experiment_seed) {}

  /// Returns the delivery time, or nullopt when the message is dropped.
  std::optional<SimTime> send(Message m, SimTime now) {
    auto slot = scheduler_.schedule(now);
    if (!slot) {
      ++dropped_;
      return std::nullopt;
    }
    queue_.push({std::move(m), slot->deliver_time, slot->draw_index});
    return slot->deliver_time;
  }

  std::vector<Message> deliver_due(SimTime now) { return queue_.deliver_due(now); }
  std::vector<ScheduledDelivery<Message>> pop_due(SimTime now) { return queue_.pop_due(now); }
  std::optional<SimTime> next_time() const { return queue_.next_time(); }
  const LinkScheduler& scheduler() const { return scheduler_; }
  std::uint64_t dropped() const { return dropped_; }
  bool idle() const { return queue_.empty(); }

 private:
  LinkScheduler scheduler_;
  DeliveryQueue<Message> queue_;
  std::uint64_t dropped_{0};
};

}  // namespace fedkit::netem

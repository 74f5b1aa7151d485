#pragma once

#include <string>
#include <vector>

#include "fedkit/hub/hub.hpp"

namespace fedkit::hub {

/// Site-side SCADA log. Keeps samples in local names and units; the hub
/// learns about them only through replicate().
class SiteGateway {
 public:
  SiteGateway(const experiment::SiteDescriptor& site, const model::CanonicalModel& m) : site_(site), model_(m) {}

  const std::string& site_id() const { return site_.id; }

  void log(const SignalSample& canonical, WallTime wall) {
    log_.push_back({model::from_canonical(canonical, site_.table, model_), wall});
  }

  const std::vector<TraceRow>& local_log() const { return log_; }

  /// Sends rows logged since the last call.
  std::size_t replicate(Hub& hub, const std::string& run) {
    std::vector<TraceRow> batch(log_.begin() + static_cast<std::ptrdiff_t>(sent_), log_.end());
    const auto n = hub.replicate(run, site_.id, batch);
    sent_ = log_.size();
    return n;
  }

  /// Sends the whole log again; the store skips rows it already holds.
  std::size_t replay(Hub& hub, const std::string& run) const { return hub.replicate(run, site_.id, log_); }

 private:
  const experiment::SiteDescriptor& site_;
  const model::CanonicalModel& model_;
  std::vector<TraceRow> log_;
  std::size_t sent_{0};
};

}  // namespace fedkit::hub

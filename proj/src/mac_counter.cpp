#include "svc/nn/mac_counter.hpp"

namespace svc::nn {
namespace {
thread_local MacCounter* g_active = nullptr;
}

MacCounter* MacCounter::active() { return g_active; }

void MacCounter::add(std::uint64_t macs) {
  counts_[labels_.empty() ? std::string("other") : labels_.back()] += macs;
}

std::uint64_t MacCounter::total() const {
  std::uint64_t sum = 0;
  for (const auto& [_, v] : counts_) sum += v;
  return sum;
}

std::uint64_t MacCounter::get(const std::string& label) const {
  auto it = counts_.find(label);
  return it == counts_.end() ? 0 : it->second;
}

MacAudit::MacAudit(MacCounter& counter) : previous_(g_active) { g_active = &counter; }
MacAudit::~MacAudit() { g_active = previous_; }

MacScope::MacScope(std::string label) {
  if (g_active) {
    g_active->labels_.push_back(std::move(label));
    pushed_ = true;
  }
}

MacScope::~MacScope() {
  if (pushed_ && g_active && !g_active->labels_.empty()) g_active->labels_.pop_back();
}

}  // namespace svc::nn

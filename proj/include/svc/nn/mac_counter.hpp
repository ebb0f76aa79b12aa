#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace svc::nn {

/// Multiply-accumulate tally keyed by module label. Install one with
/// MacAudit; forward ops report into the innermost MacScope label.
class MacCounter {
 public:
  void add(std::uint64_t macs);
  std::uint64_t total() const;
  std::uint64_t get(const std::string& label) const;
  const std::map<std::string, std::uint64_t>& by_label() const { return counts_; }

  static MacCounter* active();

 private:
  friend class MacAudit;
  friend class MacScope;
  std::map<std::string, std::uint64_t> counts_;
  std::vector<std::string> labels_;
};

/// Installs a counter for the current thread for the lifetime of the audit.
class MacAudit {
 public:
  explicit MacAudit(MacCounter& counter);
  ~MacAudit();
  MacAudit(const MacAudit&) = delete;
  MacAudit& operator=(const MacAudit&) = delete;

 private:
  MacCounter* previous_;
};

class MacScope {
 public:
  explicit MacScope(std::string label);
  ~MacScope();
  MacScope(const MacScope&) = delete;
  MacScope& operator=(const MacScope&) = delete;

 private:
  bool pushed_ = false;
};

inline void count_macs(std::uint64_t macs) {
  if (auto* c = MacCounter::active()) c->add(macs);
}

}  // namespace svc::nn

#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace adamhf {

// Accumulates multiply-add counts per operation kind. A null current ledger
// means counting is off; ops check before recording.
class FlopLedger {
 public:
  void add(const std::string& kind, std::uint64_t n) { counters_[kind] += n; }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& [k, v] : counters_) t += v;
    return t;
  }
  std::uint64_t kind(const std::string& k) const {
    auto it = counters_.find(k);
    return it == counters_.end() ? 0 : it->second;
  }
  const std::map<std::string, std::uint64_t>& counters() const { return counters_; }
  void reset() { counters_.clear(); }

 private:
  std::map<std::string, std::uint64_t> counters_;
};

namespace detail {
inline FlopLedger*& current_ledger() {
  thread_local FlopLedger* ledger = nullptr;
  return ledger;
}
}  // namespace detail

inline void record_flops(const char* kind, std::uint64_t n) {
  if (auto* l = detail::current_ledger()) l->add(kind, n);
}

// Routes op flop counts into `ledger` for the scope's lifetime.
class FlopScope {
 public:
  explicit FlopScope(FlopLedger& ledger) : prev_(detail::current_ledger()) {
    detail::current_ledger() = &ledger;
  }
  ~FlopScope() { detail::current_ledger() = prev_; }
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;

 private:
  FlopLedger* prev_;
};

}  // namespace adamhf

// Allocation accounting for the training-memory benchmark. Buffers that the
// update keeps alive (forward traces, nested-derivative traces, parameter sets)
// carry a MemoryTag; the probe tracks live and peak element counts.
#ifndef SNRL_MEMORY_PROBE_HPP_
#define SNRL_MEMORY_PROBE_HPP_

#include <atomic>
#include <cstdint>

namespace snrl {

enum class MemoryKind : std::uint8_t { kTrace, kBuffer };

struct MemorySnapshot {
  std::int64_t live_traces = 0;
  std::int64_t live_elements = 0;
  std::int64_t peak_traces = 0;
  std::int64_t peak_elements = 0;
};

class MemoryProbe {
 public:
  static MemoryProbe& instance() {
    static MemoryProbe probe;
    return probe;
  }

  void add(MemoryKind kind, std::int64_t elements) {
    if (kind == MemoryKind::kTrace) {
      const auto t = live_traces_.fetch_add(1) + 1;
      raise(peak_traces_, t);
    }
    const auto e = live_elements_.fetch_add(elements) + elements;
    raise(peak_elements_, e);
  }

  void remove(MemoryKind kind, std::int64_t elements) {
    if (kind == MemoryKind::kTrace) live_traces_.fetch_sub(1);
    live_elements_.fetch_sub(elements);
  }

  /// Restart peak tracking from the current live level.
  void reset_peak() {
    peak_traces_.store(live_traces_.load());
    peak_elements_.store(live_elements_.load());
  }

  MemorySnapshot snapshot() const {
    return {live_traces_.load(), live_elements_.load(), peak_traces_.load(),
            peak_elements_.load()};
  }

 private:
  static void raise(std::atomic<std::int64_t>& peak, std::int64_t value) {
    auto cur = peak.load();
    while (value > cur && !peak.compare_exchange_weak(cur, value)) {
    }
  }

  std::atomic<std::int64_t> live_traces_{0};
  std::atomic<std::int64_t> live_elements_{0};
  std::atomic<std::int64_t> peak_traces_{0};
  std::atomic<std::int64_t> peak_elements_{0};
};

/// RAII registration of one tracked buffer. Copies register again; moves
/// transfer the registration.
class MemoryTag {
 public:
  MemoryTag() = default;
  MemoryTag(MemoryKind kind, std::int64_t elements) : kind_(kind), elements_(elements) {
    MemoryProbe::instance().add(kind_, elements_);
    active_ = true;
  }
  MemoryTag(const MemoryTag& other) : kind_(other.kind_), elements_(other.elements_) {
    if (other.active_) {
      MemoryProbe::instance().add(kind_, elements_);
      active_ = true;
    }
  }
  MemoryTag(MemoryTag&& other) noexcept
      : kind_(other.kind_), elements_(other.elements_), active_(other.active_) {
    other.active_ = false;
  }
  MemoryTag& operator=(const MemoryTag& other) {
    if (this != &other) *this = MemoryTag(other);
    return *this;
  }
  MemoryTag& operator=(MemoryTag&& other) noexcept {
    if (this != &other) {
      release();
      kind_ = other.kind_;
      elements_ = other.elements_;
      active_ = other.active_;
      other.active_ = false;
    }
    return *this;
  }
  ~MemoryTag() { release(); }

  std::int64_t elements() const { return active_ ? elements_ : 0; }

  void release() {
    if (active_) MemoryProbe::instance().remove(kind_, elements_);
    active_ = false;
  }

 private:
  MemoryKind kind_ = MemoryKind::kBuffer;
  std::int64_t elements_ = 0;
  bool active_ = false;
};

}  // namespace snrl

#endif  // SNRL_MEMORY_PROBE_HPP_

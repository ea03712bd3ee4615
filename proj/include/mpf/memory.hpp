#pragma once

#include <atomic>
#include <cstddef>
#include <new>
#include <vector>

namespace mpf {

// Process-wide accounting of every byte held by library matrices and kernel
// workspaces. Only allocations routed through TrackedAllocator are counted.
class MemoryAccountant {
 public:
  static MemoryAccountant& instance();

  // Throws std::bad_alloc when the allocation would exceed the limit.
  void on_allocate(std::size_t bytes);
  void on_deallocate(std::size_t bytes) noexcept;

  std::size_t current_bytes() const noexcept { return current_.load(std::memory_order_relaxed); }
  std::size_t peak_bytes() const noexcept { return peak_.load(std::memory_order_relaxed); }

  // Starts a new measurement window: peak is reset to the current level.
  void reset_peak() noexcept;

  // Soft cap on tracked bytes; 0 means unlimited.
  void set_limit(std::size_t bytes) noexcept { limit_.store(bytes, std::memory_order_relaxed); }
  std::size_t limit() const noexcept { return limit_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::size_t> limit_{0};
  std::atomic<std::size_t> current_{0};
  std::atomic<std::size_t> peak_{0};
};

// Installs a limit for the lifetime of the scope.
class MemoryLimitScope {
 public:
  explicit MemoryLimitScope(std::size_t bytes) noexcept : saved_(MemoryAccountant::instance().limit()) {
    MemoryAccountant::instance().set_limit(bytes);
  }
  ~MemoryLimitScope() { MemoryAccountant::instance().set_limit(saved_); }
  MemoryLimitScope(const MemoryLimitScope&) = delete;
  MemoryLimitScope& operator=(const MemoryLimitScope&) = delete;

 private:
  std::size_t saved_;
};

// RAII window measuring the transient high-water mark above the level that
// was live when the scope opened.
class PeakScope {
 public:
  PeakScope() noexcept;
  std::size_t baseline_bytes() const noexcept { return baseline_; }
  std::size_t peak_extra_bytes() const noexcept;

 private:
  std::size_t baseline_;
};

template <class T>
struct TrackedAllocator {
  using value_type = T;

  TrackedAllocator() noexcept = default;
  template <class U>
  TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    MemoryAccountant::instance().on_allocate(n * sizeof(T));
    try {
      return static_cast<T*>(::operator new(n * sizeof(T)));
    } catch (...) {
      MemoryAccountant::instance().on_deallocate(n * sizeof(T));
      throw;
    }
  }

  void deallocate(T* p, std::size_t n) noexcept {
    MemoryAccountant::instance().on_deallocate(n * sizeof(T));
    ::operator delete(p);
  }

  template <class U>
  bool operator==(const TrackedAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using Buffer = std::vector<T, TrackedAllocator<T>>;

}  // namespace mpf

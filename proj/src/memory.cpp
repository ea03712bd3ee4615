#include "mpf/memory.hpp"

namespace mpf {

MemoryAccountant& MemoryAccountant::instance() {
  static MemoryAccountant accountant;
  return accountant;
}

void MemoryAccountant::on_allocate(std::size_t bytes) {
  const std::size_t now = current_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  const std::size_t cap = limit_.load(std::memory_order_relaxed);
  if (cap != 0 && now > cap) {
    current_.fetch_sub(bytes, std::memory_order_relaxed);
    throw std::bad_alloc();
  }
  std::size_t prev = peak_.load(std::memory_order_relaxed);
  while (now > prev && !peak_.compare_exchange_weak(prev, now, std::memory_order_relaxed)) {
  }
}

void MemoryAccountant::on_deallocate(std::size_t bytes) noexcept {
  current_.fetch_sub(bytes, std::memory_order_relaxed);
}

void MemoryAccountant::reset_peak() noexcept {
  peak_.store(current_.load(std::memory_order_relaxed), std::memory_order_relaxed);
}

PeakScope::PeakScope() noexcept : baseline_(MemoryAccountant::instance().current_bytes()) {
  MemoryAccountant::instance().reset_peak();
}

std::size_t PeakScope::peak_extra_bytes() const noexcept {
  const std::size_t peak = MemoryAccountant::instance().peak_bytes();
  return peak > baseline_ ? peak - baseline_ : 0;
}

}  // namespace mpf

#pragma once

#include <cstdint>

namespace drift::num {

// Which side of a layer a counted multiply-add belongs to. Data-path work scales
// with batch and sequence length; weight-path work (materializing a merged
// weight from its factors) happens once per forward call regardless of batch.
enum class FlopCategory { kData, kWeight };

struct FlopCounts {
  std::uint64_t data = 0;
  std::uint64_t weight = 0;
};

// Thread-local counter, incremented by matmul/conv kernels while enabled.
class FlopCounter {
 public:
  static void reset();
  static FlopCounts read();
  static void add(std::uint64_t flops);
  static FlopCategory category();
  static void set_category(FlopCategory c);
};

class FlopCategoryScope {
 public:
  explicit FlopCategoryScope(FlopCategory c) : saved_(FlopCounter::category()) {
    FlopCounter::set_category(c);
  }
  ~FlopCategoryScope() { FlopCounter::set_category(saved_); }
  FlopCategoryScope(const FlopCategoryScope&) = delete;
  FlopCategoryScope& operator=(const FlopCategoryScope&) = delete;

 private:
  FlopCategory saved_;
};

}  // namespace drift::num

#include "ccml/rng.hpp"

#include <numeric>
#include <utility>

namespace ccml {

void shuffle(std::vector<int>& values, SplitRng& rng) {
  for (int i = static_cast<int>(values.size()) - 1; i > 0; --i) {
    std::swap(values[static_cast<std::size_t>(i)],
              values[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
  }
}

std::vector<int> shuffled_indices(int n, SplitRng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  shuffle(idx, rng);
  return idx;
}

}  // namespace ccml

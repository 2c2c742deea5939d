#include "devmf/observation.hpp"

#include <algorithm>
#include <string>
#include <unordered_set>

#include "devmf/error.hpp"

namespace devmf {

namespace {

std::uint64_t linear_key(const Entry& e, std::span<const std::size_t> sizes) {
  std::uint64_t key = 0;
  for (std::size_t m = 0; m < sizes.size(); ++m) key = key * sizes[m] + e.index[m];
  return key;
}

}  // namespace

void ObservationSet::validate() const {
  if (mode_sizes.size() < 2 || mode_sizes.size() > kMaxModes)
    throw ShapeError("observation set must have 2 or 3 modes, got " +
                     std::to_string(mode_sizes.size()));
  for (std::size_t s : mode_sizes)
    if (s == 0) throw ShapeError("mode sizes must be positive");

  std::unordered_set<std::uint64_t> seen;
  seen.reserve(entries.size());
  for (std::size_t n = 0; n < entries.size(); ++n) {
    const Entry& e = entries[n];
    for (std::size_t m = 0; m < mode_sizes.size(); ++m)
      if (e.index[m] >= mode_sizes[m])
        throw RangeError("entry " + std::to_string(n) + ": index " + std::to_string(e.index[m]) +
                         " out of range for mode " + std::to_string(m));
    if (!seen.insert(linear_key(e, mode_sizes)).second)
      throw DuplicateError("duplicate index tuple", n + 1);
  }
}

double ObservationSet::mean_value() const noexcept {
  if (entries.empty()) return 0.0;
  double sum = 0.0;
  for (const Entry& e : entries) sum += e.value;
  return sum / static_cast<double>(entries.size());
}

std::vector<std::vector<std::size_t>> ObservationSet::counts() const {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(mode_sizes.size());
  for (std::size_t s : mode_sizes) out.emplace_back(s, 0);
  for (const Entry& e : entries)
    for (std::size_t m = 0; m < mode_sizes.size(); ++m) ++out[m][e.index[m]];
  return out;
}

Entry make_entry(std::span<const Index> index, double value) {
  if (index.size() < 2 || index.size() > kMaxModes)
    throw ShapeError("an index tuple has 2 or 3 components");
  Entry e;
  std::copy(index.begin(), index.end(), e.index.begin());
  e.value = value;
  return e;
}

}  // namespace devmf

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace devmf {

inline constexpr std::size_t kMaxModes = 3;

using Index = std::uint32_t;
using IndexTuple = std::array<Index, kMaxModes>;

/// One observed cell. Only the first `mode_count` components of `index` are meaningful;
/// the rest stay zero.
struct Entry {
  IndexTuple index{};
  double value = 0.0;

  bool operator==(const Entry&) const = default;
};

/// Sparse set of observed cells of a matrix (2 modes) or 3-mode tensor.
struct ObservationSet {
  std::vector<std::size_t> mode_sizes;
  std::vector<Entry> entries;

  std::size_t modes() const noexcept { return mode_sizes.size(); }
  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }

  /// Throws ShapeError/RangeError/DuplicateError when the set breaks its invariants.
  void validate() const;

  /// Mean of the observed values; 0 for an empty set.
  double mean_value() const noexcept;

  /// Per mode, the number of entries touching every index.
  std::vector<std::vector<std::size_t>> counts() const;
};

/// Builds an entry from a short index list (2 or 3 components).
Entry make_entry(std::span<const Index> index, double value);
inline Entry make_entry(Index i, Index j, double value) { return Entry{{i, j, 0}, value}; }
inline Entry make_entry(Index i, Index j, Index t, double value) {
  return Entry{{i, j, t}, value};
}

}  // namespace devmf

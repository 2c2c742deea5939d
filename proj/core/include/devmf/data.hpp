#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "devmf/model.hpp"
#include "devmf/observation.hpp"

namespace devmf::data {

enum class Format {
  /// user::item::rating[::timestamp]
  movielens_dat,
  /// row,col,value with an optional header line
  csv_triplet,
  /// i,j,k,value with an optional header line
  csv_quad,
};

std::size_t mode_count(Format format) noexcept;

/// Dense 0-based IDs for one mode, assigned in first-seen order.
class IdMap {
 public:
  /// Returns the dense ID of `raw`, assigning the next free one if unseen.
  Index intern(const std::string& raw);
  std::optional<Index> find(const std::string& raw) const;
  const std::string& raw(Index dense) const { return raw_.at(dense); }
  std::size_t size() const noexcept { return raw_.size(); }

  /// Identity map over "0".."n-1", used for generated data.
  static IdMap identity(std::size_t n);

  /// CSV `raw_id,dense_id`, one line per ID in dense order.
  void write_csv(std::ostream& out) const;
  static IdMap read_csv(std::istream& in);

 private:
  std::unordered_map<std::string, Index> dense_;
  std::vector<std::string> raw_;
};

struct LoadedObservations {
  ObservationSet obs;
  std::vector<IdMap> maps;
};

/// Parses observations. With `known` maps, IDs listed there keep their dense
/// IDs and new IDs are appended after them, so entries outside the known range
/// are exactly the ones never seen when the maps were built.
/// Throws ParseError (with line number) on malformed lines and DuplicateError on
/// repeated index tuples.
LoadedObservations read_observations(std::istream& in, Format format,
                                     const std::vector<IdMap>* known = nullptr);
LoadedObservations load_observations(const std::filesystem::path& path, Format format,
                                     const std::vector<IdMap>* known = nullptr);

/// Writes entries with their raw IDs; values use the shortest round-trip form.
void write_observations(std::ostream& out, const ObservationSet& obs, Format format,
                        const std::vector<IdMap>& maps);

// ---- splits ----------------------------------------------------------------

struct SplitSpec {
  double test_fraction = 0.1;
  double val_fraction_of_train = 0.1;
  unsigned seed = 0;

  void validate() const;
};

struct Split {
  ObservationSet train;
  ObservationSet val;
  ObservationSet test;
};

/// i.i.d. split over entries. Sizes are round(test_fraction * n) for test and
/// round(val_fraction_of_train * (n - test)) for validation. Each part keeps the
/// input order. Throws ConfigError when the training part would be empty.
Split split(const ObservationSet& obs, const SplitSpec& spec);

/// Keeps round(fraction * n) entries chosen uniformly at random, in input order.
ObservationSet subsample(const ObservationSet& obs, double fraction, std::uint64_t seed);

// ---- per-sensor standard scores --------------------------------------------

struct NormalizationStats {
  std::size_t sensor_mode = 2;
  std::vector<double> mean;
  /// Population standard deviation per slice.
  std::vector<double> stddev;

  double normalize(double value, Index slice) const { return (value - mean.at(slice)) / stddev.at(slice); }
  double denormalize(double z, Index slice) const { return z * stddev.at(slice) + mean.at(slice); }
};

/// Replaces each value by its standard score within its slice along `sensor_mode`.
/// Throws DegenerateSliceError for an empty or constant slice.
std::pair<ObservationSet, NormalizationStats> normalize_per_sensor(const ObservationSet& obs,
                                                                   std::size_t sensor_mode);
ObservationSet denormalize(const ObservationSet& obs, const NormalizationStats& stats);

// ---- synthetic ground truth ------------------------------------------------

enum class NoiseKind { none, homoscedastic, lowrank_hetero };

struct SyntheticSpec {
  std::vector<std::size_t> mode_sizes{20, 20};
  std::size_t rank_mean = 2;
  std::size_t rank_dev = 2;
  double observed_fraction = 0.8;
  NoiseKind noise = NoiseKind::none;
  /// Noise variance for homoscedastic noise; variance floor for lowrank_hetero.
  double noise_level = 0.01;
  unsigned seed = 0;

  void validate() const;
};

/// Everything needed to evaluate against the ground truth. Dense fields are
/// indexed by cell_index() in row-major order over all cells.
struct SyntheticData {
  ObservationSet observed;
  std::vector<double> clean;
  std::vector<double> variance;
  MeanModel truth_mean;
  DeviationModel truth_dev;

  std::size_t cell_index(const IndexTuple& idx) const noexcept;
  /// Observation set holding every cell with its clean value.
  ObservationSet clean_cells() const;
  /// Replaces observed values of `obs` cells by the clean ones.
  ObservationSet with_clean_values(const ObservationSet& obs) const;
};

/// Mean factors are drawn so the clean signal has unit variance; for lowrank_hetero
/// the variance factors are uniform in [0, rank_dev^(-1/modes)] and the floor is
/// noise_level. Observed cells are drawn without replacement and get
/// y = clean + N(0, variance).
SyntheticData synthesize(const SyntheticSpec& spec);

// ---- cold start ------------------------------------------------------------

enum class ColdStartKind {
  /// Rating data: the conventional default rating.
  rating,
  /// Continuous data: the training mean.
  global_mean,
};

inline constexpr double kDefaultRating = 3.0;

double cold_start_default(ColdStartKind kind, double train_mean) noexcept;

}  // namespace devmf::data

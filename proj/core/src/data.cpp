#include "devmf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string_view>
#include <unordered_set>

#include "devmf/error.hpp"

namespace devmf::data {

namespace {

struct TupleHash {
  std::size_t operator()(const IndexTuple& t) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (Index x : t) {
      h ^= x;
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_on(std::string_view s, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + sep.size();
  }
  return out;
}

std::optional<double> parse_value(std::string_view tok) {
  double v = 0.0;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::size_t mode_count(Format format) noexcept { return format == Format::csv_quad ? 3 : 2; }

// ---- IdMap -----------------------------------------------------------------

Index IdMap::intern(const std::string& raw) {
  auto [it, inserted] = dense_.try_emplace(raw, static_cast<Index>(raw_.size()));
  if (inserted) raw_.push_back(raw);
  return it->second;
}

std::optional<Index> IdMap::find(const std::string& raw) const {
  auto it = dense_.find(raw);
  if (it == dense_.end()) return std::nullopt;
  return it->second;
}

IdMap IdMap::identity(std::size_t n) {
  IdMap m;
  for (std::size_t k = 0; k < n; ++k) m.intern(std::to_string(k));
  return m;
}

void IdMap::write_csv(std::ostream& out) const {
  out << "raw_id,dense_id\n";
  for (std::size_t k = 0; k < raw_.size(); ++k) out << raw_[k] << ',' << k << '\n';
}

IdMap IdMap::read_csv(std::istream& in) {
  IdMap m;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_on(view, ",");
    if (fields.size() != 2) throw ParseError("expected raw_id,dense_id", number);
    std::size_t dense = 0;
    auto [ptr, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), dense);
    if (ec != std::errc() || ptr != fields[1].data() + fields[1].size()) {
      if (number == 1 || m.size() == 0) continue;  // header
      throw ParseError("bad dense id", number);
    }
    if (dense != m.size()) throw ParseError("dense ids must be listed in order 0..n-1", number);
    m.intern(std::string(fields[0]));
    if (m.size() != dense + 1) throw ParseError("repeated raw id", number);
  }
  return m;
}

// ---- loading ---------------------------------------------------------------

LoadedObservations read_observations(std::istream& in, Format format,
                                     const std::vector<IdMap>* known) {
  const std::size_t modes = mode_count(format);
  LoadedObservations out;
  if (known != nullptr) {
    if (known->size() != modes) throw ShapeError("ID map count does not match the format's mode count");
    out.maps = *known;
  } else {
    out.maps.resize(modes);
  }

  std::unordered_set<IndexTuple, TupleHash> seen;
  std::string line;
  std::size_t number = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++number;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const bool is_first = first_content;
    first_content = false;

    std::vector<std::string_view> fields;
    if (format == Format::movielens_dat) {
      fields = split_on(view, "::");
      if (fields.size() != 3 && fields.size() != 4)
        throw ParseError("expected user::item::rating[::timestamp]", number);
    } else {
      fields = split_on(view, ",");
      if (fields.size() != modes + 1)
        throw ParseError("expected " + std::to_string(modes + 1) + " comma-separated fields", number);
    }
    const auto value = parse_value(fields[modes]);
    if (!value) {
      if (is_first && format != Format::movielens_dat) continue;  // header row
      throw ParseError("value '" + std::string(fields[modes]) + "' is not a finite number", number);
    }
    Entry e;
    for (std::size_t m = 0; m < modes; ++m) {
      if (fields[m].empty()) throw ParseError("empty id field", number);
      e.index[m] = out.maps[m].intern(std::string(fields[m]));
    }
    e.value = *value;
    if (!seen.insert(e.index).second) throw DuplicateError("duplicate index tuple", number);
    out.obs.entries.push_back(e);
  }
  for (const IdMap& m : out.maps) out.obs.mode_sizes.push_back(m.size());
  return out;
}

LoadedObservations load_observations(const std::filesystem::path& path, Format format,
                                     const std::vector<IdMap>* known) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_observations(in, format, known);
}

void write_observations(std::ostream& out, const ObservationSet& obs, Format format,
                        const std::vector<IdMap>& maps) {
  const std::size_t modes = mode_count(format);
  if (obs.modes() != modes || maps.size() != modes)
    throw ShapeError("format and observation set disagree on mode count");
  const char* sep = format == Format::movielens_dat ? "::" : ",";
  for (const Entry& e : obs.entries) {
    for (std::size_t m = 0; m < modes; ++m) out << maps[m].raw(e.index[m]) << sep;
    out << shortest(e.value) << '\n';
  }
}

// ---- splits ----------------------------------------------------------------

void SplitSpec::validate() const {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in [0, 1)");
  if (!(val_fraction_of_train >= 0.0 && val_fraction_of_train < 1.0))
    throw ConfigError("validation fraction must lie in [0, 1)");
}

Split split(const ObservationSet& obs, const SplitSpec& spec) {
  spec.validate();
  if (obs.empty()) throw ConfigError("cannot split an empty observation set");
  const std::size_t n = obs.size();
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(
      std::llround(spec.val_fraction_of_train * static_cast<double>(n - std::min(n, n_test))));
  if (n_test + n_val >= n) throw ConfigError("split leaves the training set empty");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  // 0 = train, 1 = val, 2 = test
  std::vector<unsigned char> part(n, 0);
  for (std::size_t k = 0; k < n_test; ++k) part[order[k]] = 2;
  for (std::size_t k = n_test; k < n_test + n_val; ++k) part[order[k]] = 1;

  Split s{{obs.mode_sizes, {}}, {obs.mode_sizes, {}}, {obs.mode_sizes, {}}};
  ObservationSet* dst[] = {&s.train, &s.val, &s.test};
  for (std::size_t k = 0; k < n; ++k) dst[part[k]]->entries.push_back(obs.entries[k]);
  return s;
}

ObservationSet subsample(const ObservationSet& obs, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(obs.size())));
  if (keep == 0) throw ConfigError("fraction leaves no entries");
  std::vector<std::size_t> order(obs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(keep);
  std::sort(order.begin(), order.end());
  ObservationSet out{obs.mode_sizes, {}};
  out.entries.reserve(keep);
  for (std::size_t k : order) out.entries.push_back(obs.entries[k]);
  return out;
}

// ---- normalization ---------------------------------------------------------

std::pair<ObservationSet, NormalizationStats> normalize_per_sensor(const ObservationSet& obs,
                                                                   std::size_t sensor_mode) {
  if (obs.modes() != 3) throw ShapeError("per-sensor normalization expects a 3-mode tensor");
  if (sensor_mode >= 3) throw RangeError("sensor mode must be 0, 1 or 2");
  const std::size_t slices = obs.mode_sizes[sensor_mode];

  std::vector<double> sum(slices, 0.0), lo(slices, INFINITY), hi(slices, -INFINITY);
  std::vector<std::size_t> count(slices, 0);
  for (const Entry& e : obs.entries) {
    const Index s = e.index[sensor_mode];
    if (s >= slices) throw RangeError("sensor index out of range");
    sum[s] += e.value;
    ++count[s];
    lo[s] = std::min(lo[s], e.value);
    hi[s] = std::max(hi[s], e.value);
  }

  NormalizationStats stats;
  stats.sensor_mode = sensor_mode;
  stats.mean.resize(slices);
  stats.stddev.resize(slices);
  for (std::size_t s = 0; s < slices; ++s) {
    if (count[s] == 0) throw DegenerateSliceError("sensor slice has no observations", s);
    if (!(hi[s] > lo[s])) throw DegenerateSliceError("sensor slice is constant", s);
    stats.mean[s] = sum[s] / static_cast<double>(count[s]);
  }
  std::vector<double> ss(slices, 0.0);
  for (const Entry& e : obs.entries) {
    const double d = e.value - stats.mean[e.index[sensor_mode]];
    ss[e.index[sensor_mode]] += d * d;
  }
  for (std::size_t s = 0; s < slices; ++s) {
    stats.stddev[s] = std::sqrt(ss[s] / static_cast<double>(count[s]));
    if (!(stats.stddev[s] > 0.0)) throw DegenerateSliceError("sensor slice has zero spread", s);
  }

  ObservationSet out = obs;
  for (Entry& e : out.entries) e.value = stats.normalize(e.value, e.index[sensor_mode]);
  return {std::move(out), std::move(stats)};
}

ObservationSet denormalize(const ObservationSet& obs, const NormalizationStats& stats) {
  ObservationSet out = obs;
  for (Entry& e : out.entries) e.value = stats.denormalize(e.value, e.index[stats.sensor_mode]);
  return out;
}

// ---- synthesis -------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (mode_sizes.size() < 2 || mode_sizes.size() > kMaxModes) throw ConfigError("2 or 3 modes required");
  for (std::size_t n : mode_sizes)
    if (n == 0) throw ConfigError("mode sizes must be positive");
  if (rank_mean == 0 || rank_dev == 0) throw ConfigError("ranks must be positive");
  if (!(observed_fraction > 0.0 && observed_fraction <= 1.0))
    throw ConfigError("observed fraction must lie in (0, 1]");
  if (!(noise_level >= 0.0) || std::isinf(noise_level)) throw ConfigError("noise level must be finite and >= 0");
  if (noise == NoiseKind::lowrank_hetero && !(noise_level > 0.0))
    throw ConfigError("heteroscedastic noise needs a positive variance floor");
}

std::size_t SyntheticData::cell_index(const IndexTuple& idx) const noexcept {
  std::size_t k = 0;
  for (std::size_t m = 0; m < observed.modes(); ++m) k = k * observed.mode_sizes[m] + idx[m];
  return k;
}

ObservationSet SyntheticData::clean_cells() const {
  ObservationSet out{observed.mode_sizes, {}};
  out.entries.reserve(clean.size());
  const std::size_t modes = observed.modes();
  IndexTuple idx{};
  for (std::size_t k = 0; k < clean.size(); ++k) {
    std::size_t rest = k;
    for (std::size_t m = modes; m-- > 0;) {
      idx[m] = static_cast<Index>(rest % observed.mode_sizes[m]);
      rest /= observed.mode_sizes[m];
    }
    out.entries.push_back(Entry{idx, clean[k]});
  }
  return out;
}

ObservationSet SyntheticData::with_clean_values(const ObservationSet& obs) const {
  ObservationSet out = obs;
  for (Entry& e : out.entries) e.value = clean.at(cell_index(e.index));
  return out;
}

SyntheticData synthesize(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t modes = spec.mode_sizes.size();
  std::size_t total = 1;
  for (std::size_t n : spec.mode_sizes) total *= n;
  const double want = spec.observed_fraction * static_cast<double>(total);
  if (want < 1.0) throw ConfigError("observed fraction selects no cells");
  const auto n_obs = std::min<std::size_t>(total, static_cast<std::size_t>(std::llround(want)));

  std::mt19937_64 rng(spec.seed);
  SyntheticData out;
  out.truth_mean = MeanModel(spec.mode_sizes, spec.rank_mean, 0.0);
  // Var(entry) = D^(-1/M) makes each rank-one term have variance 1/D, so the clean signal has unit variance.
  const double half = std::sqrt(3.0) *
                      std::pow(static_cast<double>(spec.rank_mean), -0.5 / static_cast<double>(modes));
  std::uniform_real_distribution<double> mean_draw(-half, half);
  for (Matrix& f : out.truth_mean.factors)
    for (double& x : f.values()) x = mean_draw(rng);

  const double floor = spec.noise_level > 0.0 ? spec.noise_level : 1.0;
  out.truth_dev = DeviationModel(spec.mode_sizes, spec.rank_dev, floor);
  if (spec.noise == NoiseKind::lowrank_hetero) {
    const double top = std::pow(static_cast<double>(spec.rank_dev), -1.0 / static_cast<double>(modes));
    std::uniform_real_distribution<double> dev_draw(0.0, top);
    for (Matrix& f : out.truth_dev.factors)
      for (double& x : f.values()) x = dev_draw(rng);
  }

  std::vector<std::size_t> cells(total);
  std::iota(cells.begin(), cells.end(), 0);
  for (std::size_t k = 0; k < n_obs; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, total - 1);
    std::swap(cells[k], cells[pick(rng)]);
  }
  cells.resize(n_obs);
  std::sort(cells.begin(), cells.end());

  out.observed.mode_sizes = spec.mode_sizes;
  out.clean.resize(total);
  out.variance.resize(total);
  IndexTuple idx{};
  for (std::size_t k = 0; k < total; ++k) {
    std::size_t rest = k;
    for (std::size_t m = modes; m-- > 0;) {
      idx[m] = static_cast<Index>(rest % spec.mode_sizes[m]);
      rest /= spec.mode_sizes[m];
    }
    const std::span<const Index> view(idx.data(), modes);
    out.clean[k] = predict_mean(out.truth_mean, view);
    switch (spec.noise) {
      case NoiseKind::none: out.variance[k] = 0.0; break;
      case NoiseKind::homoscedastic: out.variance[k] = spec.noise_level; break;
      case NoiseKind::lowrank_hetero: out.variance[k] = predict_variance(out.truth_dev, view); break;
    }
  }

  std::normal_distribution<double> unit(0.0, 1.0);
  out.observed.entries.reserve(n_obs);
  for (std::size_t k : cells) {
    std::size_t rest = k;
    for (std::size_t m = modes; m-- > 0;) {
      idx[m] = static_cast<Index>(rest % spec.mode_sizes[m]);
      rest /= spec.mode_sizes[m];
    }
    double y = out.clean[k];
    if (spec.noise != NoiseKind::none) y += std::sqrt(out.variance[k]) * unit(rng);
    out.observed.entries.push_back(Entry{idx, y});
  }
  return out;
}

double cold_start_default(ColdStartKind kind, double train_mean) noexcept {
  return kind == ColdStartKind::rating ? kDefaultRating : train_mean;
}

}  // namespace devmf::data

#include "devmf/serialize.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

#include "devmf/error.hpp"

namespace devmf {

namespace {

constexpr const char* kMagic = "devmf-model";
constexpr const char* kVersion = "v1";

constexpr const char* kMeanNames[] = {"U", "V", "W"};
constexpr const char* kBiasNames[] = {"u", "v", "w"};
constexpr const char* kDevNames[] = {"P", "Q", "S"};

void write_row(std::ostream& out, std::span<const double> row) {
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (k) out << ' ';
    out << format_exact(row[k]);
  }
  out << '\n';
}

void write_matrix(std::ostream& out, const char* name, const Matrix& m) {
  out << name << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) write_row(out, m.row(r));
}

double parse_double(std::string_view tok, std::size_t line) {
  double value = 0.0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ParseError("expected a number, got '" + std::string(tok) + "'", line);
  return value;
}

std::size_t parse_count(std::string_view tok, std::size_t line) {
  std::size_t value = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc() || ptr != end || value == 0)
    throw ParseError("expected a positive integer, got '" + std::string(tok) + "'", line);
  return value;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++number_;
      if (!split_ws(line).empty()) return true;
    }
    return false;
  }
  std::size_t number() const noexcept { return number_; }

 private:
  std::istream& in_;
  std::size_t number_ = 0;
};

void read_block_rows(LineReader& reader, std::span<double> dst, std::size_t rows,
                     std::size_t cols, const std::string& name) {
  std::string line;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!reader.next(line))
      throw ParseError("block " + name + " ends early", reader.number());
    const auto toks = split_ws(line);
    if (toks.size() != cols)
      throw ParseError("block " + name + " row has " + std::to_string(toks.size()) +
                           " values, expected " + std::to_string(cols),
                       reader.number());
    for (std::size_t k = 0; k < cols; ++k) dst[r * cols + k] = parse_double(toks[k], reader.number());
  }
}

}  // namespace

std::string format_exact(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::scientific, 16);
  return std::string(buf, ptr);
}

void write_model(std::ostream& out, const MeanModel& mean, const DeviationModel& dev) {
  if (mean.modes() != dev.modes() || mean.modes() < 2 || mean.modes() > kMaxModes)
    throw ShapeError("cannot serialize models with mismatched or unsupported mode counts");
  out << kMagic << ' ' << kVersion << ' ';
  for (std::size_t m = 0; m < mean.modes(); ++m) out << (m ? "x" : "") << mean.factors[m].rows();
  out << ' ' << mean.rank() << ' ' << dev.rank() << ' ' << format_exact(mean.mu) << ' '
      << format_exact(dev.delta_sigma2) << '\n';

  for (std::size_t m = 0; m < mean.modes(); ++m) write_matrix(out, kMeanNames[m], mean.factors[m]);
  for (std::size_t m = 0; m < mean.modes(); ++m) {
    out << kBiasNames[m] << '\n';
    for (double b : mean.biases[m]) out << format_exact(b) << '\n';
  }
  for (std::size_t m = 0; m < dev.modes(); ++m) write_matrix(out, kDevNames[m], dev.factors[m]);
}

void save_model(const std::filesystem::path& path, const MeanModel& mean,
                const DeviationModel& dev) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_model(out, mean, dev);
  if (!out) throw Error("failed writing " + path.string());
}

ModelPair read_model(std::istream& in) {
  LineReader reader(in);
  std::string line;
  if (!reader.next(line)) throw ParseError("empty model file", 0);
  const auto head = split_ws(line);
  if (head.size() != 7 || head[0] != kMagic)
    throw ParseError("not a devmf model header", reader.number());
  if (head[1] != kVersion)
    throw ParseError("unsupported model version '" + std::string(head[1]) + "'", reader.number());

  std::vector<std::size_t> sizes;
  {
    std::string_view dims = head[2];
    std::size_t start = 0;
    while (true) {
      const std::size_t x = dims.find('x', start);
      sizes.push_back(parse_count(dims.substr(start, x - start), reader.number()));
      if (x == std::string_view::npos) break;
      start = x + 1;
    }
  }
  if (sizes.size() < 2 || sizes.size() > kMaxModes)
    throw ParseError("model must have 2 or 3 modes", reader.number());
  const std::size_t rank_mean = parse_count(head[3], reader.number());
  const std::size_t rank_dev = parse_count(head[4], reader.number());
  const double mu = parse_double(head[5], reader.number());
  const double delta = parse_double(head[6], reader.number());
  if (!(delta > 0.0)) throw ParseError("delta_sigma2 must be positive", reader.number());

  ModelPair pair{MeanModel(sizes, rank_mean, mu), DeviationModel(sizes, rank_dev, delta)};
  std::map<std::string, bool> done;
  const std::size_t blocks = 3 * sizes.size();
  while (done.size() < blocks && reader.next(line)) {
    const auto toks = split_ws(line);
    if (toks.size() != 1) throw ParseError("expected a block name", reader.number());
    const std::string name(toks[0]);
    if (done.count(name)) throw ParseError("repeated block " + name, reader.number());
    bool known = false;
    for (std::size_t m = 0; m < sizes.size(); ++m) {
      if (name == kMeanNames[m]) {
        read_block_rows(reader, pair.mean.factors[m].values(), sizes[m], rank_mean, name);
        known = true;
      } else if (name == kBiasNames[m]) {
        read_block_rows(reader, pair.mean.biases[m], sizes[m], 1, name);
        known = true;
      } else if (name == kDevNames[m]) {
        read_block_rows(reader, pair.dev.factors[m].values(), sizes[m], rank_dev, name);
        known = true;
      }
    }
    if (!known) throw ParseError("unknown block " + name, reader.number());
    done[name] = true;
  }
  if (done.size() < blocks) throw ParseError("model file is missing blocks", reader.number());
  if (reader.next(line)) throw ParseError("trailing content after the last block", reader.number());
  for (const Matrix& f : pair.dev.factors)
    for (double x : f.values())
      if (x < 0.0) throw ParseError("deviation factors must be non-negative", 0);
  return pair;
}

ModelPair load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_model(in);
}

}  // namespace devmf

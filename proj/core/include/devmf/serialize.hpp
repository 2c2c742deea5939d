#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "devmf/model.hpp"

namespace devmf {

struct ModelPair {
  MeanModel mean;
  DeviationModel dev;
};

// Plain-text model format, version 1:
//
//   devmf-model v1 <N1>x<N2>[x<N3>] <rank_mean> <rank_dev> <mu> <delta_sigma2>
//   U
//   <N1 rows of rank_mean values>
//   V
//   ...
//
// Blocks U, V, [W], u, v, [w], P, Q, [S] follow the header, each introduced by a
// line holding only its name. Factor blocks hold one row per line; bias blocks one
// value per line. Values are written with 17 significant digits.

void write_model(std::ostream& out, const MeanModel& mean, const DeviationModel& dev);
void save_model(const std::filesystem::path& path, const MeanModel& mean, const DeviationModel& dev);

/// Throws ParseError on a malformed header or block.
ModelPair read_model(std::istream& in);
ModelPair load_model(const std::filesystem::path& path);

/// Fixed-width scientific literal with 17 significant digits.
std::string format_exact(double value);

}  // namespace devmf

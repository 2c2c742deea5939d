#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace devmf::cli {

/// Runs one `devmf` invocation; argv[0] is the program name. Returns the process
/// exit code: 0 on success, 1 on runtime errors, CLI11's code on usage errors.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

/// Sidecar holding the raw-to-dense ID map of `mode` for a model file.
std::string id_map_path(const std::string& model_path, std::size_t mode);

}  // namespace devmf::cli

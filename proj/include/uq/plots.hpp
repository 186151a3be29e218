#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uq/types.hpp"

namespace uq {

// Minimal line chart (markers at each point) written as a PNG. Presentational
// output only; nothing downstream reads these files.
void plot_line(const std::vector<Scalar>& xs, const std::vector<Scalar>& ys,
               const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::filesystem::path& path);

}  // namespace uq

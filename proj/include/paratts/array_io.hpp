#pragma once

// Binary array container: three text header lines followed by raw
// little-endian float64 data in row-major order.
//
//   dims <rows> <cols>
//   dtype float64le
//   level <free-form tag, e.g. "phone raw" or "frame log-mel">

#include <filesystem>
#include <string>
#include <string_view>

#include "paratts/autograd.hpp"

namespace paratts {

void save_array(const std::filesystem::path& path, const Mat& values, std::string_view level);
Mat load_array(const std::filesystem::path& path, std::string* level = nullptr);

}  // namespace paratts

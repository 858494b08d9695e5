#include "paratts/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "paratts/error.hpp"

namespace paratts {

static_assert(std::endian::native == std::endian::little, "array files are little-endian");

void save_array(const std::filesystem::path& path, const Mat& values, std::string_view level) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "dims " << values.rows() << ' ' << values.cols() << '\n'
      << "dtype float64le\n"
      << "level " << level << '\n';
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw IoError("short write to " + path.string());
}

Mat load_array(const std::filesystem::path& path, std::string* level) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string dims_line, dtype_line, level_line;
  if (!std::getline(in, dims_line) || !std::getline(in, dtype_line) || !std::getline(in, level_line))
    throw IntegrityError(path.string() + ": truncated header");
  std::istringstream ds(dims_line);
  std::string tag;
  long long rows = -1, cols = -1;
  ds >> tag >> rows >> cols;
  if (tag != "dims" || rows < 0 || cols < 0) throw IntegrityError(path.string() + ": bad dims line");
  if (dtype_line != "dtype float64le") throw IntegrityError(path.string() + ": unsupported dtype");
  if (level_line.rfind("level ", 0) != 0) throw IntegrityError(path.string() + ": bad level line");
  if (level) *level = level_line.substr(6);

  Mat values(rows, cols);
  const auto bytes = static_cast<std::streamsize>(rows * cols * static_cast<long long>(sizeof(double)));
  in.read(reinterpret_cast<char*>(values.data()), bytes);
  if (in.gcount() != bytes) throw IntegrityError(path.string() + ": truncated payload");
  if (in.peek() != std::char_traits<char>::eof())
    throw IntegrityError(path.string() + ": trailing bytes after payload");
  return values;
}

}  // namespace paratts

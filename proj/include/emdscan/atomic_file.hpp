#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

namespace emdscan {

/// Writes `path` through a sibling temp file that is renamed into place, so a crash never
/// leaves a truncated artifact behind. Parent directories are created as needed.
template <class Fn>
void atomic_write(const std::filesystem::path& path, Fn&& fill) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
      fill(out);
      out.flush();
      if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

inline void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
  atomic_write(path, [&](std::ostream& out) { out << text; });
}

}  // namespace emdscan

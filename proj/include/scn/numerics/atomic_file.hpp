#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>

namespace scn {

/// Writes through a sibling temp file and renames it into place, so readers
/// never observe a partial file.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& writer, bool binary = false);

void write_text_atomically(const std::filesystem::path& path, const std::string& text);

}  // namespace scn

#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gigassl/io/binary.hpp"

namespace gigassl {

// "slide_id,label" with a header row; labels are non-negative integers.
inline std::map<std::string, int> read_labels(const std::filesystem::path& path) {
  std::stringstream in(io::read_file(path));
  std::map<std::string, int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("slide_id", 0) == 0) continue;
    const auto comma = line.find(',');
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (comma == std::string::npos) throw FormatError(where + ": expected slide_id,label");
    const std::string id = line.substr(0, comma);
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw FormatError(where + ": bad label '" + line.substr(comma + 1) + "'");
    }
    if (label < 0) throw FormatError(where + ": labels must be >= 0");
    if (!labels.emplace(id, label).second) throw FormatError(where + ": duplicate slide id '" + id + "'");
  }
  return labels;
}

inline void write_labels(const std::filesystem::path& path, const std::vector<std::pair<std::string, int>>& rows) {
  std::string out = "slide_id,label\n";
  for (const auto& [id, label] : rows) out += id + "," + std::to_string(label) + "\n";
  io::write_text(path, out);
}

}  // namespace gigassl

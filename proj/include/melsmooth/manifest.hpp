#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace melsmooth::manifest {

struct Entry {
  std::string id;
  std::string wav_path;
};

// JSON-lines manifest: one {"id": ..., "wav_path": ...} object per line.
// Blank lines are skipped; duplicate ids are rejected.
inline std::vector<Entry> load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  std::vector<Entry> entries;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("manifest: line " + std::to_string(line_no) + ": " + e.what());
    }
    Entry e;
    e.id = j.at("id").get<std::string>();
    e.wav_path = j.at("wav_path").get<std::string>();
    if (!seen.insert(e.id).second)
      throw std::runtime_error("manifest: duplicate id '" + e.id + "' at line " +
                               std::to_string(line_no));
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace melsmooth::manifest

#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "nlogic/errors.hpp"

namespace nlogic {

inline const char* version() { return "0.1.0"; }

// FNV-1a 64 over a canonical config string, as a 16-hex-digit tag embedded in
// every output file header.
inline std::string config_hash_hex(const std::string& canonical) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline std::string header_comment(const std::string& config_hash,
                                  const std::vector<uint64_t>& seeds) {
  std::string s = "# nlogic ";
  s += version();
  s += " config=";
  s += config_hash;
  s += " seeds=";
  for (size_t i = 0; i < seeds.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(seeds[i]);
  }
  return s;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  return f;
}

}  // namespace nlogic

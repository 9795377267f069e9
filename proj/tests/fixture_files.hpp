// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fixtures {

inline std::filesystem::path root() { return TSODS_FIXTURE_DIR; }

inline std::string read(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Sorted *.json files under fixtures/<sub>.
inline std::vector<std::filesystem::path> json_files(const std::string& sub) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(root() / sub))
        if (e.path().extension() == ".json") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

/// Invalid fixtures are named "<ErrorName>__<description>.json".
inline std::string expected_error(const std::filesystem::path& p) {
    const auto stem = p.stem().string();
    return stem.substr(0, stem.find("__"));
}

} // namespace fixtures

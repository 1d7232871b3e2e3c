#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "flatd2/system.hpp"

inline std::string read_text(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline flatd2::SystemModel load_system(const std::string& name) {
    return flatd2::parse_system(read_text(std::string(FLATD2_SYSTEMS_DIR) + "/" + name + ".sys"));
}

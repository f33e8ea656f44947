#pragma once

#include <iosfwd>
#include <string>

#include "imps/engine.hpp"

namespace imps {

/// Versioned binary container: magic, format version, config, operator and
/// full engine state (little-endian doubles). Restores bit-exactly.
void save_engine(const Engine& engine, std::ostream& os);
Engine load_engine(std::istream& is);

void save_engine_file(const Engine& engine, const std::string& path);
Engine load_engine_file(const std::string& path);

} // namespace imps

#pragma once

#include "hvf/fields.hpp"

#include <string>
#include <vector>

namespace hvf {

const std::vector<std::string>& builtin_names();
// Source text of a registered system in the system-file format.
const std::string& builtin_source(const std::string& name);
SystemPtr builtin_system(const std::string& name);
// A path to a system file, or the name of a registered system.
SystemPtr resolve_system(const std::string& spec);

}  // namespace hvf

#include "hvf/registry.hpp"

#include <filesystem>
#include <map>
#include <mutex>

namespace hvf {

namespace {

const std::map<std::string, std::string>& sources() {
  static const std::map<std::string, std::string> s = {
      {"euclid2", R"(name = euclid2
dim = 2
nfields = 2
step = 2
domain = [-2,2]x[-2,2]
field 1 smooth Cinf: 1 ; 0
field 2 smooth Cinf: 0 ; 1
function u1 smooth Cinf: x1
function u2 smooth Cinf: x1*x2 + x2
function bump smooth C1,1 support 0.0625: max(0, 1 - (x1^2 + x2^2)/0.00390625)^2
)"},
      {"grushin", R"(name = grushin
dim = 2
nfields = 2
step = 2
domain = [-2,2]x[-2,2]
field 1 smooth Cinf: 1 ; 0
field 2 smooth Cinf: 0 ; x1
function u1 smooth Cinf: x1
function u2 smooth Cinf: x2
function sq smooth Cinf: x1^2
)"},
      {"grushin_c11", R"(name = grushin_c11
dim = 2
nfields = 2
step = 2
domain = [-2,2]x[-2,2]
field 1 smooth Cinf: 1 ; 0
field 2 smooth C1,1: 0 ; x1 + 0.3*x1*abs(x1)
function u1 smooth Cinf: x1
function u2 smooth Cinf: x2
)"},
      {"heisenberg", R"(name = heisenberg
dim = 3
nfields = 2
step = 2
domain = [-2,2]x[-2,2]x[-2,2]
free = true
field 1 smooth Cinf: 1 ; 0 ; -x2/2
field 2 smooth Cinf: 0 ; 1 ; x1/2
function u1 smooth Cinf: x1
function u3 smooth Cinf: x3
function mix smooth Cinf: x3 + x1*x2
function bump smooth C1,1 support 0.03125,0.03125,0.000244140625: max(0, 1 - ((x1^2 + x2^2)^2 + 16*x3^2)/9.5367431640625e-07)^2
)"},
      {"heisenberg_c11", R"(name = heisenberg_c11
dim = 3
nfields = 2
step = 2
domain = [-2,2]x[-2,2]x[-2,2]
field 1 smooth Cinf: 1 ; 0 ; -x2/2
field 2 smooth C1,1: 0 ; 1 ; x1/2 + 0.25*x1*abs(x1)
function u1 smooth Cinf: x1
function u3 smooth Cinf: x3
)"},
      {"martinet", R"(name = martinet
dim = 3
nfields = 2
step = 3
domain = [-2,2]x[-2,2]x[-2,2]
field 1 smooth Cinf: 1 ; 0 ; 0
field 2 smooth Cinf: 0 ; 1 ; x1^2
function u1 smooth Cinf: x1
function u3 smooth Cinf: x3
)"},
  };
  return s;
}

}  // namespace

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"euclid2", "grushin", "grushin_c11", "heisenberg", "heisenberg_c11", "martinet"};
  return names;
}

const std::string& builtin_source(const std::string& name) {
  auto it = sources().find(name);
  if (it == sources().end()) throw Error("unknown registered system '" + name + "'");
  return it->second;
}

SystemPtr builtin_system(const std::string& name) {
  static std::mutex mu;
  static std::map<std::string, SystemPtr> cache;
  std::lock_guard<std::mutex> lock(mu);
  if (auto it = cache.find(name); it != cache.end()) return it->second;
  SystemPtr s = parse_system(builtin_source(name), name);
  cache[name] = s;
  return s;
}

SystemPtr resolve_system(const std::string& spec) {
  if (std::filesystem::exists(spec)) return load_system_file(spec);
  if (sources().count(spec)) return builtin_system(spec);
  throw Error("no system file or registered system named '" + spec + "'");
}

}  // namespace hvf

#include "doctest.h"
#include "hvf/certify.hpp"
#include "hvf/report.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace hvf;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out;
};

// Runs the hvf binary with stderr discarded.
Run hvf_run(const std::string& args) {
  const char* bin = std::getenv("HVF_BINARY");
  REQUIRE_MESSAGE(bin != nullptr, "HVF_BINARY is not set");
  std::string cmd = std::string("'") + bin + "' " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  std::array<char, 4096> buf;
  size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
  int st = pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("hvf_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("summary serialization") {
  Summary s;
  s.system = "grushin";
  s.operation = "ball";
  s.seed = 7;
  s.parameters = {{"rho", 0.5}};
  s.estimate = {{"volume", number(std::nan(""))}};
  const std::string text = dump_summary(s);
  CHECK(text.back() == '\n');
  CHECK(text.rfind("{\n  \"schema\": 1,", 0) == 0);
  auto j = Json::parse(text);
  CHECK(j["estimate"]["volume"].is_null());
  CHECK(j["ci"].is_null());
  CHECK(j["seed"] == 7);
  CHECK(dump_summary(s) == text);
}

TEST_CASE("csv cells") {
  Table t{{"name", "value"}, {}};
  t.add({"plain", 1.5});
  t.add({"a,b", nullptr});
  t.add({"say \"hi\"", true});
  CHECK_THROWS_AS(t.add({1}), Error);
  std::ostringstream out;
  write_csv(out, t);
  CHECK(out.str() == "name,value\nplain,1.5\n\"a,b\",\n\"say \"\"hi\"\"\",true\n");
  CHECK(parse_format("both") == OutputFormat::Both);
  CHECK_THROWS_AS(parse_format("xml"), Error);
}

TEST_CASE("write_report honours the format") {
  auto dir = scratch("report");
  Summary s;
  s.operation = "x";
  Table t{{"a"}, {}};
  t.add({1});
  CHECK(write_report(dir.string(), "r", s, &t, OutputFormat::Csv).size() == 1);
  CHECK(fs::exists(dir / "r.csv"));
  CHECK_FALSE(fs::exists(dir / "r.json"));
  CHECK(write_report(dir.string(), "q", s, &t, OutputFormat::Both).size() == 2);
  // Without a table the summary is always written.
  CHECK(write_report(dir.string(), "n", s, nullptr, OutputFormat::Csv).size() == 1);
  CHECK(fs::exists(dir / "n.json"));
  fs::remove_all(dir);
}

TEST_CASE("certify on a subset") {
  CertifyOptions opt;
  opt.criteria = {1, 2, 3, 8};
  opt.systems = {"heisenberg"};
  auto rep = certify(opt);
  REQUIRE(rep.results.size() == 4);
  CHECK(rep.results[0].status == "pass");
  CHECK(rep.results[1].status == "pass");
  CHECK(rep.results[2].status == "pass");
  // The ball comparison fixture lives on grushin_c11 only.
  CHECK(rep.results[3].status == "skipped");
  CHECK(rep.passed());
  auto j = to_json(rep.summary(opt));
  CHECK(j["estimate"]["criteria"].size() == 4);
  CHECK(j["estimate"]["criteria"][0]["name"] == criterion_name(1));
  CHECK(dump_summary(rep.summary(opt)).find("seconds") == std::string::npos);
  CHECK(rep.timings().size() == 4);

  CHECK_THROWS_AS(criterion_name(0), Error);
  CHECK_THROWS_AS(criterion_name(kCriterionCount + 1), Error);
  opt.systems = {"nonexistent"};
  CHECK_THROWS_AS(certify(opt), Error);
}

TEST_CASE("cli: check and bracket") {
  auto r = hvf_run("check --system heisenberg --grid 3");
  REQUIRE(r.status == 0);
  auto j = Json::parse(r.out);
  CHECK(j["schema"] == kSchemaVersion);
  CHECK(j["operation"] == "check");
  CHECK(j["estimate"]["full_rank"] == 27);

  r = hvf_run("bracket --system martinet --index '(1,2)' --x 0.5,0,0");
  REQUIRE(r.status == 0);
  j = Json::parse(r.out);
  CHECK(j["estimate"]["values"][0]["value"][2].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("cli: dist with equal points") {
  auto r = hvf_run("dist --system heisenberg --x 0.1,0.2,0.3 --y 0.1,0.2,0.3");
  REQUIRE(r.status == 0);
  auto j = Json::parse(r.out);
  CHECK(j["estimate"]["d1_upper"]["upper"] == 0.0);
  CHECK(j["estimate"]["d1_graph"]["value"] == 0.0);
  CHECK(j["estimate"]["d_graph"]["value"] == 0.0);
}

TEST_CASE("cli: exit codes") {
  auto dir = scratch("exit");
  std::ofstream(dir / "bad.sys") << "dim = 2\nfield 1: x1 +\n";
  CHECK(hvf_run("check --system " + (dir / "bad.sys").string()).status == 2);
  CHECK(hvf_run("").status == 2);
  CHECK(hvf_run("check --system grushin --grid nope").status == 2);
  CHECK(hvf_run("dist --system grushin --x 0,0,0 --y 0,0").status == 2);
  CHECK(hvf_run("check --system no_such_system").status == 1);
  // Asking for a Sobolev exponent of a function without support fails at runtime.
  CHECK(hvf_run("sobolev --system euclid2 --function u1").status == 1);
  CHECK(hvf_run("--help").status == 0);
  fs::remove_all(dir);
}

TEST_CASE("cli: user system file") {
  auto dir = scratch("file");
  std::ofstream(dir / "g.sys") << "name = mine\ndim = 2\nnfields = 2\nstep = 2\ndomain = [-1,1]x[-1,1]\n"
                                  "field 1 smooth Cinf: 1 ; 0\nfield 2 smooth Cinf: 0 ; x1\n";
  auto r = hvf_run("expand --system " + (dir / "g.sys").string() + " --index '(1,2)' --t 0.1,0.01");
  REQUIRE(r.status == 0);
  auto j = Json::parse(r.out);
  CHECK(j["system"] == "mine");
  CHECK(j["estimate"]["(1,2)"]["residual"][0].get<double>() <= 1e-7);
  fs::remove_all(dir);
}

TEST_CASE("cli: reports are byte-identical across runs") {
  auto dir = scratch("repeat");
  const std::string args = "poincare --system grushin --function u1 --rho 0.1,0.05 --budget 4000 --format both --out ";
  REQUIRE(hvf_run(args + (dir / "a").string()).status == 0);
  REQUIRE(hvf_run(args + (dir / "b").string() + " --workers 2").status == 0);
  CHECK(slurp(dir / "a" / "poincare.json") == slurp(dir / "b" / "poincare.json"));
  CHECK(slurp(dir / "a" / "poincare.csv") == slurp(dir / "b" / "poincare.csv"));
  CHECK(slurp(dir / "a" / "poincare.csv").rfind("rho,lhs,rhs,implied_constant", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("cli: certify writes summary and timings") {
  auto dir = scratch("certify");
  auto r = hvf_run("certify --criteria 1,3 --out " + dir.string());
  REQUIRE(r.status == 0);
  auto j = Json::parse(slurp(dir / "certify.json"));
  CHECK(j["estimate"]["passed"] == true);
  CHECK(Json::parse(slurp(dir / "certify_timings.json")).contains("1"));
  CHECK(hvf_run("certify --criteria 15").status == 2);
  fs::remove_all(dir);
}

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "catsim/calib.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli() {
  const char* p = std::getenv("CATSIM_CLI");
  REQUIRE_MESSAGE(p != nullptr, "CATSIM_CLI must point at the catsim binary");
  return p;
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("catsim_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run(const std::string& args, const fs::path& log) {
  std::string cmd = cli() + " " + args + " >" + (log.string() + ".out") + " 2>" + (log.string() + ".err");
  int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::vector<double>> read_csv(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST_CASE("steady-scan crosses zero at the critical drive") {
  auto d = scratch("steady");
  REQUIRE(run("steady-scan --out " + d.string(), d / "log") == 0);
  auto rows = read_csv(d / "steady_scan.csv");
  REQUIRE(rows.size() == 61);
  double last_zero = 0.0, first_pos = 0.0;
  for (const auto& r : rows) {
    if (r[1] == 0.0) last_zero = r[0];
    if (r[1] > 0.0 && first_pos == 0.0) first_pos = r[0];
  }
  CHECK(last_zero < 2.97e6);
  CHECK(first_pos > 2.97e6);
  auto j = load(d / "steady_scan.json");
  CHECK(j["command"] == "steady-scan");
  CHECK(std::abs(j["results"]["critical_drive_Hz"].get<double>() / 2.97e6 - 1.0) < 5e-3);
  CHECK(j["config"]["kappa_b"].get<double>() == 16e6);
}

TEST_CASE("surrogate trajectory then jumps recovers the bit-flip time") {
  auto d = scratch("traj");
  REQUIRE(run("trajectory --surrogate --tbf 0.3 --nbar 28 --tm 1e-3 --dur 1000 --seed 7 --out " + d.string(),
              d / "t") == 0);
  auto side = load(d / "trajectory.json");
  CHECK(side["config"]["seed"] == 7);
  CHECK(side["T_m"].get<double>() == 1e-3);
  REQUIRE(run("jumps --in " + (d / "trajectory.csv").string() + " --out " + d.string(), d / "j") == 0);
  auto j = load(d / "jumps.json");
  double T = j["results"]["T_bf_s"].get<double>();
  CHECK(std::abs(T / 0.3 - 1.0) < 0.1);
  CHECK(fs::exists(d / "jumps_dwells.csv"));
}

TEST_CASE("extract returns the table energies") {
  auto d = scratch("extract");
  REQUIRE(run("extract --fb1 6.00e9 --fb2 6.04e9 --fbmax 8.9e9 --ec 72.6e6 --out " + d.string(), d / "log") == 0);
  auto h = load(d / "extract.json")["results"]["harmonic"];
  CHECK(std::abs(h["E_L_Hz"].get<double>() / 62.4e9 - 1.0) < 0.01);
  CHECK(std::abs(h["dE_J_Hz"].get<double>() / 0.207e9 - 1.0) < 0.01);
  CHECK(std::abs(h["E_J_Hz"].get<double>() / 37.0e9 - 1.0) < 0.01);
}

TEST_CASE("config files and sidecars") {
  auto d = scratch("config");
  {
    std::ofstream os(d / "cfg.json");
    os << R"({"fb1": 6.0e9, "fb2": 6.04e9, "fbmax": 8.9e9, "ec": 72.6e6})";
  }
  REQUIRE(run("extract --config " + (d / "cfg.json").string() + " --out " + (d / "a").string(), d / "a") == 0);
  // flags override the file
  REQUIRE(run("extract --config " + (d / "cfg.json").string() + " --fbmax 9e9 --name hi --out " + (d / "a").string(),
              d / "b") == 0);
  CHECK(load(d / "a" / "hi.json")["config"]["fbmax"].get<double>() == 9e9);
  // a sidecar reproduces its own run
  REQUIRE(run("extract --config " + (d / "a" / "extract.json").string() + " --out " + (d / "b").string(), d / "c") == 0);
  CHECK(slurp(d / "a" / "extract.json") == slurp(d / "b" / "extract.json"));

  {
    std::ofstream os(d / "bad.json");
    os << R"({"fb1": 6.0e9, "fb2": 6.04e9, "fbmax": 8.9e9, "ec": 72.6e6, "typo": 1})";
  }
  CHECK(run("extract --config " + (d / "bad.json").string() + " --out " + d.string(), d / "d") == 2);
  {
    std::ofstream os(d / "type.json");
    os << R"({"fb1": "six", "fb2": 6.04e9, "fbmax": 8.9e9, "ec": 72.6e6})";
  }
  CHECK(run("extract --config " + (d / "type.json").string() + " --out " + d.string(), d / "e") == 2);
  {
    std::ofstream os(d / "neg.json");
    os << R"({"kappa_a": -5.0})";
  }
  CHECK(run("steady-scan --config " + (d / "neg.json").string() + " --out " + d.string(), d / "f") == 2);
  CHECK(run("extract --config " + (d / "missing.json").string(), d / "g") == 2);
}

TEST_CASE("exit codes") {
  auto d = scratch("codes");
  CHECK(run("--help", d / "a") == 0);
  CHECK(run("", d / "b") == 2);
  CHECK(run("no-such-command", d / "c") == 2);
  CHECK(run("steady-scan --no-such-flag 1 --out " + d.string(), d / "d") == 2);
  CHECK(run("steady-scan --points many --out " + d.string(), d / "e") == 2);
  CHECK(run("trajectory --surrogate --out " + d.string(), d / "f") == 2);  // no seed
  CHECK(run("extract --fb1 6e9 --out " + d.string(), d / "g") == 2);  // missing inputs
  CHECK(run("jumps --in " + (d / "none.csv").string() + " --out " + d.string(), d / "h") == 2);
  CHECK(run("bitflip-scan --quantum --ratios 0 --out " + d.string(), d / "i") == 2);

  // a vacuum record has no two states to separate: solver-side failure
  REQUIRE(run("trajectory --surrogate --nbar 0 --dur 5 --seed 1 --name vac --out " + d.string(), d / "j") == 0);
  CHECK(run("jumps --in " + (d / "vac.csv").string() + " --out " + d.string(), d / "k") == 3);
}

TEST_CASE("identical config and seed give identical files") {
  auto a = scratch("det_a"), b = scratch("det_b");
  for (const auto& d : {a, b}) {
    REQUIRE(run("trajectory --surrogate --tbf 0.05 --nbar 10 --tm 1e-3 --dur 20 --seed 11 --out " + d.string(),
                d / "t") == 0);
    REQUIRE(run("diamond --na 21 --nb 21 --out " + d.string(), d / "d") == 0);
    REQUIRE(run("bitflip-scan --seed 4 --dwells 50 --nbar 11,16,20,24,28 --out " + d.string(), d / "b") == 0);
  }
  for (const char* f : {"trajectory.csv", "trajectory.json", "diamond.csv", "diamond.json", "diamond_edges.csv",
                        "bitflip_scan.csv", "bitflip_scan.json"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  REQUIRE(run("trajectory --surrogate --tbf 0.05 --nbar 10 --tm 1e-3 --dur 20 --seed 12 --name other --out " +
                  a.string(),
              a / "u") == 0);
  CHECK(slurp(a / "trajectory.csv") != slurp(a / "other.csv"));
}

TEST_CASE("diamond edge slope from the simulated map") {
  auto d = scratch("diamond");
  REQUIRE(run("diamond --out " + d.string(), d / "log") == 0);
  auto r = load(d / "diamond.json")["results"];
  double s = r["edge_slope"].get<double>();
  CHECK(std::abs(s / (-16e6 / 58e3) - 1.0) < 0.02);
  CHECK(std::abs(r["kappa_b_from_slope_Hz"].get<double>() / 16e6 - 1.0) < 0.02);
}

TEST_CASE("calibrate recovers g2 from a synthetic curve") {
  auto d = scratch("calib");
  const double r = 16.0, ka = 58e3, kb = 16e6;
  {
    std::ofstream os(d / "curve.csv");
    os.precision(17);
    os << "drive,power\n";
    for (int k = 0; k < 15; ++k) {
      double X = 0.5 + 0.25 * k;
      os << 0.37 * X << ',' << 2.2 * catsim::normalized_model(X, r) << '\n';
    }
  }
  REQUIRE(run("calibrate --in " + (d / "curve.csv").string() + " --kappa-a 58e3 --kappa-b 16e6 --out " + d.string(),
              d / "log") == 0);
  auto res = load(d / "calibrate.json")["results"];
  double want = std::sqrt(ka * kb / (4.0 * r));
  CHECK(std::abs(res["g2_Hz"].get<double>() / want - 1.0) < 0.05);
  CHECK(res["corners"].size() == 8);
}

TEST_CASE("bitflip-scan fits the surrogate scaling law") {
  auto d = scratch("bitflip");
  REQUIRE(run("bitflip-scan --seed 21 --out " + d.string(), d / "log") == 0);
  auto fit = load(d / "bitflip_scan.json")["results"]["fit"];
  CHECK(fit["factor"].get<double>() > 1.3);
  CHECK(fit["factor"].get<double>() < 1.5);

  REQUIRE(run("bitflip-scan --quantum --out " + d.string(), d / "q") == 0);
  auto scans = load(d / "bitflip_scan.json")["results"]["scans"];
  REQUIRE(scans.size() == 2);
  CHECK(scans[1]["factor"].get<double>() < scans[0]["factor"].get<double>());
}

TEST_CASE("flux-map and efficiency-rig outputs") {
  auto d = scratch("flux");
  REQUIRE(run("flux-map --n-sigma 3 --n-delta 3 --mem-dim 10 --buf-dim 10 --out " + d.string(), d / "f") == 0);
  CHECK(slurp(d / "flux_map_buffer.csv").rfind("phi_sigma", 0) == 0);
  auto fr = load(d / "flux_map.json")["results"];
  CHECK(std::abs(fr["saddle_plus"]["f_b_Hz"].get<double>() - 6.00e9) < 10e6);
  CHECK(std::abs(fr["saddle_minus"]["f_b_Hz"].get<double>() - 6.04e9) < 10e6);

  REQUIRE(run("efficiency-rig --omega-a 25e3 --delta-q-points 41 --out " + d.string(), d / "e") == 0);
  auto rows = load(d / "efficiency_rig.json")["results"]["rows"];
  auto peaks = rows[0]["peaks_Hz"].get<std::vector<double>>();
  REQUIRE(peaks.size() >= 3);
  CHECK(std::abs((peaks[2] - peaks[1]) / 1.75e6 - 1.0) < 0.05);
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "sfmlp/dataset_io.hpp"

using namespace sfmlp;

namespace {

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "sfmlp_io_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("long CSV loads grouped and time-sorted curves", "[io]") {
  auto dir = temp_dir();
  write_file(dir / "d.csv",
             "subject,feature,time,value\n"
             "a,1,0.5,10\n"
             "a,1,0.25,11\n"
             "a,2,0.75,12\n"
             "a,2,1.0,13\n");
  write_file(dir / "l.csv", "subject,label\na,3.5\n");
  auto ds = load_long_csv((dir / "d.csv").string(), (dir / "l.csv").string(),
                          TimeGrid(0, 1, 11));
  REQUIRE(ds.n_features == 2);
  REQUIRE(ds.n_subjects() == 1);
  REQUIRE(ds.curves[0][0].times == std::vector<double>{0.25, 0.5});
  REQUIRE(ds.curves[0][0].values == std::vector<double>{11.0, 10.0});
  // time == t1 accepted (closed interval)
  REQUIRE(ds.curves[0][1].times.back() == 1.0);
  REQUIRE(ds.task == Task::kRegression);
  REQUIRE(ds.responses[0] == 3.5);
}

TEST_CASE("rows outside the grid domain are rejected and counted", "[io]") {
  auto dir = temp_dir();
  write_file(dir / "d2.csv",
             "subject,feature,time,value\n"
             "a,1,0.5,1\n"
             "a,1,1.5,2\n"
             "a,1,0.7,3\n");
  write_file(dir / "l2.csv", "subject,label\na,0\n");
  LoadReport report;
  auto ds = load_long_csv((dir / "d2.csv").string(), (dir / "l2.csv").string(),
                          TimeGrid(0, 1, 11), std::nullopt, &report);
  REQUIRE(report.rejected_rows == 1);
  REQUIRE(ds.curves[0][0].size() == 2);
}

TEST_CASE("unlabeled subject is a hard error naming the subject", "[io]") {
  auto dir = temp_dir();
  write_file(dir / "d3.csv",
             "subject,feature,time,value\n"
             "a,1,0.5,1\n"
             "ghost,1,0.5,1\n");
  write_file(dir / "l3.csv", "subject,label\na,1\n");
  REQUIRE_THROWS_WITH(
      load_long_csv((dir / "d3.csv").string(), (dir / "l3.csv").string(),
                    TimeGrid(0, 1, 11)),
      Catch::Matchers::ContainsSubstring("ghost"));
}

TEST_CASE("duplicate (subject, feature, time) is a hard error", "[io]") {
  auto dir = temp_dir();
  write_file(dir / "d4.csv",
             "subject,feature,time,value\n"
             "a,1,0.5,1\n"
             "a,1,0.5,2\n");
  write_file(dir / "l4.csv", "subject,label\na,1\n");
  REQUIRE_THROWS_WITH(
      load_long_csv((dir / "d4.csv").string(), (dir / "l4.csv").string(),
                    TimeGrid(0, 1, 11)),
      Catch::Matchers::ContainsSubstring("duplicate"));
}

TEST_CASE("empty data file is a hard error", "[io]") {
  auto dir = temp_dir();
  write_file(dir / "d5.csv", "subject,feature,time,value\n");
  write_file(dir / "l5.csv", "subject,label\n");
  REQUIRE_THROWS_WITH(
      load_long_csv((dir / "d5.csv").string(), (dir / "l5.csv").string(),
                    TimeGrid(0, 1, 11)),
      Catch::Matchers::ContainsSubstring("no data rows"));
}

TEST_CASE("load-save-load round trip is bit-identical", "[io]") {
  auto dir = temp_dir();
  write_file(dir / "r.csv",
             "subject,feature,time,value\n"
             "a,1,0.1234567890123456,1.7976931348623157\n"
             "a,1,0.5,2.2250738585072014e-308\n"
             "a,2,0.9,-12345.678901234567\n"
             "b,1,0.3,0.1\n"
             "b,2,0.6,-0.30000000000000004\n");
  write_file(dir / "rl.csv", "subject,label\na,1\nb,0\n");
  auto ds1 = load_long_csv((dir / "r.csv").string(), (dir / "rl.csv").string(),
                           TimeGrid(0, 1, 11));
  save_long_csv(ds1, (dir / "r2.csv").string(), (dir / "rl2.csv").string());
  auto ds2 = load_long_csv((dir / "r2.csv").string(), (dir / "rl2.csv").string(),
                           TimeGrid(0, 1, 11));
  REQUIRE(ds1.subject_ids == ds2.subject_ids);
  REQUIRE(ds1.responses == ds2.responses);
  for (std::size_t i = 0; i < ds1.n_subjects(); ++i)
    for (int r = 0; r < ds1.n_features; ++r) {
      REQUIRE(ds1.curve(i, r).times == ds2.curve(i, r).times);
      REQUIRE(ds1.curve(i, r).values == ds2.curve(i, r).values);
    }
  // saving the reloaded dataset reproduces the file bytes
  save_long_csv(ds2, (dir / "r3.csv").string(), (dir / "rl3.csv").string());
  REQUIRE(read_file(dir / "r2.csv") == read_file(dir / "r3.csv"));
  REQUIRE(read_file(dir / "rl2.csv") == read_file(dir / "rl3.csv"));
}

TEST_CASE("binary labels infer a classification task", "[io]") {
  auto dir = temp_dir();
  write_file(dir / "c.csv",
             "subject,feature,time,value\n"
             "a,1,0.5,1\nb,1,0.5,2\n");
  write_file(dir / "cl.csv", "subject,label\na,1\nb,0\n");
  auto ds = load_long_csv((dir / "c.csv").string(), (dir / "cl.csv").string(),
                          TimeGrid(0, 1, 11));
  REQUIRE(ds.task == Task::kBinaryClassification);
  auto forced =
      load_long_csv((dir / "c.csv").string(), (dir / "cl.csv").string(),
                    TimeGrid(0, 1, 11), Task::kRegression);
  REQUIRE(forced.task == Task::kRegression);
}

namespace {

std::string make_cmapss(int n_units, const std::vector<int>& cycles) {
  std::string out;
  for (int u = 0; u < n_units; ++u)
    for (int c = 1; c <= cycles[static_cast<std::size_t>(u)]; ++c) {
      out += std::to_string(u + 1) + " " + std::to_string(c) + " 0.0 0.0 100.0";
      for (int s = 0; s < 21; ++s)
        out += " " + std::to_string(10.0 * (s + 1) + 0.01 * c);
      out += "\n";
    }
  return out;
}

}  // namespace

TEST_CASE("engine windowing produces one subject per window", "[io][cmapss]") {
  auto dir = temp_dir();
  write_file(dir / "fd.txt", make_cmapss(2, {144, 30}));
  LoadReport report;
  auto ds = load_cmapss((dir / "fd.txt").string(), TimeGrid(0, 1, 31), 31,
                        130.0, false, &report);
  // 144 cycles, window 31 -> 114 subjects; 30-cycle unit skipped
  REQUIRE(ds.n_subjects() == 114);
  REQUIRE(report.skipped_units == 1);
  REQUIRE(ds.n_features == 21);
  REQUIRE(ds.task == Task::kRegression);
  // first window ends at cycle 31 -> linear RUL 113 -> capped at 130 stays 113
  REQUIRE(ds.responses.front() == 113.0);
  // last window ends at failure -> RUL 0
  REQUIRE(ds.responses.back() == 0.0);
  // window times rescaled to [0, 1]
  REQUIRE(ds.curves[0][0].times.front() == 0.0);
  REQUIRE(ds.curves[0][0].times.back() == 1.0);
  REQUIRE(ds.curves[0][0].size() == 31);
}

TEST_CASE("a unit with exactly window_len cycles yields one subject", "[io][cmapss]") {
  auto dir = temp_dir();
  write_file(dir / "fd1.txt", make_cmapss(1, {31}));
  auto ds = load_cmapss((dir / "fd1.txt").string(), TimeGrid(0, 1, 31), 31, 130.0);
  REQUIRE(ds.n_subjects() == 1);
  REQUIRE(ds.responses[0] == 0.0);
}

TEST_CASE("RUL labels are capped and all windows present", "[io][cmapss]") {
  auto dir = temp_dir();
  write_file(dir / "fd2.txt", make_cmapss(1, {200}));
  auto ds = load_cmapss((dir / "fd2.txt").string(), TimeGrid(0, 1, 19), 19, 130.0);
  REQUIRE(ds.n_subjects() == 182);
  REQUIRE(ds.responses.front() == 130.0);  // early windows capped
  REQUIRE(ds.responses.back() == 0.0);
}

TEST_CASE("condition detrend centers per cluster without changing shape", "[io][cmapss]") {
  auto dir = temp_dir();
  // two operating-condition clusters with a level offset on every sensor
  std::string rows;
  for (int c = 1; c <= 40; ++c) {
    bool alt = c % 2 == 0;
    rows += "1 " + std::to_string(c) + (alt ? " 10.0 0.2 100.0" : " 0.0 0.0 100.0");
    for (int s = 0; s < 21; ++s)
      rows += " " + std::to_string((alt ? 500.0 : 100.0) + c * 0.1);
    rows += "\n";
  }
  write_file(dir / "fd3.txt", rows);
  auto plain = load_cmapss((dir / "fd3.txt").string(), TimeGrid(0, 1, 40), 40, 130.0);
  auto detrended =
      load_cmapss((dir / "fd3.txt").string(), TimeGrid(0, 1, 40), 40, 130.0, true);
  const auto& raw = plain.curves[0][0].values;
  const auto& adj = detrended.curves[0][0].values;
  // raw alternates by ~400 between clusters; detrended removes the offset
  double raw_jump = std::abs(raw[1] - raw[0]);
  double adj_jump = std::abs(adj[1] - adj[0]);
  REQUIRE(raw_jump > 100.0);
  REQUIRE(adj_jump < 1.0);
  REQUIRE(adj.size() == raw.size());
}

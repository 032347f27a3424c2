#include <doctest.h>

#include <complex>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "nvdr/io.hpp"

using namespace nvdr;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path path = fs::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("csv reader") {
  SUBCASE("plain numeric columns") {
    const auto path = temp_file("nvdr_io_plain.csv", "1,2\n3,4\n5,6\n");
    const auto cols = read_csv_columns(path.string());
    REQUIRE(cols.size() == 2);
    CHECK(cols[0] == std::vector<double>{1, 3, 5});
    CHECK(cols[1] == std::vector<double>{2, 4, 6});
  }
  SUBCASE("header row and comments are skipped") {
    const auto path =
        temp_file("nvdr_io_header.csv", "# comment\ntime_s,population\n0,0.5\n1,0.6\n");
    const auto cols = read_csv_columns(path.string());
    REQUIRE(cols.size() == 2);
    CHECK(cols[0].size() == 2);
  }
  SUBCASE("empty file reports no rows") {
    const auto path = temp_file("nvdr_io_empty.csv", "");
    CHECK_THROWS_WITH_AS(read_csv_columns(path.string()),
                         doctest::Contains("no rows"), std::runtime_error);
  }
  SUBCASE("ragged rows are rejected with the line number") {
    const auto path = temp_file("nvdr_io_ragged.csv", "1,2\n3\n");
    CHECK_THROWS_WITH_AS(read_csv_columns(path.string()), doctest::Contains(":2"),
                         std::runtime_error);
  }
  SUBCASE("s11 reader needs three columns") {
    const auto path = temp_file("nvdr_io_s11_bad.csv", "1,2\n3,4\n");
    std::vector<double> freqs;
    std::vector<std::complex<double>> gamma;
    CHECK_THROWS_AS(read_s11_csv(path.string(), freqs, gamma), std::runtime_error);
  }
}

TEST_CASE("trace csv round trip") {
  RabiTrace trace;
  trace.times_s = {0.0, 1e-8, 2e-8, 3e-8};
  trace.population = {0.0, 0.421351829, 0.9123, 0.0004};
  const fs::path path = fs::temp_directory_path() / "nvdr_io_trace.csv";
  write_trace_csv(path.string(), trace);

  const auto cols = read_csv_columns(path.string());
  REQUIRE(cols.size() == 2);
  REQUIRE(cols[0].size() == trace.times_s.size());
  for (std::size_t i = 0; i < trace.times_s.size(); ++i) {
    CHECK(cols[0][i] == doctest::Approx(trace.times_s[i]).epsilon(1e-11));
    CHECK(cols[1][i] == doctest::Approx(trace.population[i]).epsilon(1e-11));
  }
}

TEST_CASE("fit result serialization carries all fields") {
  FitResult fit;
  fit.names = {"a", "b"};
  fit.parameters = {1.5, -2.0};
  fit.ci95 = {0.1, std::numeric_limits<double>::infinity()};
  fit.residual_norm = 0.25;
  fit.converged = true;
  fit.iterations = 17;
  fit.flags = {"example-flag"};

  const auto j = fit_result_to_json(fit);
  CHECK(j.at("parameters").at("a").get<double>() == 1.5);
  CHECK(j.at("ci95").at("b").is_null());  // non-finite widths serialize as null
  CHECK(j.at("converged").get<bool>());
  CHECK(j.at("iterations").get<int>() == 17);
  CHECK(j.at("flags")[0].get<std::string>() == "example-flag");
}

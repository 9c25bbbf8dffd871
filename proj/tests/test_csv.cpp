#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "metauad/common.hpp"
#include "metauad/csv.hpp"

using namespace metauad;

TEST_CASE("missing tokens are recognized case-insensitively") {
  CHECK(is_missing_token(""));
  CHECK(is_missing_token("NaN"));
  CHECK(is_missing_token("nan"));
  CHECK(is_missing_token("Infinity"));
  CHECK(is_missing_token("-Infinity"));
  CHECK(is_missing_token("-INFINITY"));
  CHECK_FALSE(is_missing_token("0"));
  CHECK_FALSE(is_missing_token("inf banana"));
}

TEST_CASE("parse_cell handles numbers, missing, and garbage") {
  CHECK(parse_cell("1.5") == 1.5);
  CHECK(parse_cell("-2e3") == -2000.0);
  CHECK(std::isnan(parse_cell("")));
  CHECK(std::isnan(parse_cell("NaN")));
  CHECK_THROWS_AS((void)parse_cell("12abc"), FormatError);
  CHECK_THROWS_AS((void)parse_cell("banana"), FormatError);
}

TEST_CASE("format_real prints nine significant digits, integers bare") {
  CHECK(format_real(3.0) == "3");
  CHECK(format_real(-17.0) == "-17");
  CHECK(format_real(0.0) == "0");
  // 9 significant digits
  CHECK(format_real(1.0 / 3.0) == "0.333333333");
  CHECK(std::stod(format_real(123456.789123)) == doctest::Approx(123456.789).epsilon(1e-9));
}

TEST_CASE("csv write/read round-trips values, NaN as empty field") {
  testutil::TempDir dir("csv");
  std::vector<std::string> ids{"f1", "f2"};
  std::vector<std::vector<double>> rows{
      {1.5, std::nan("")},
      {0.25, -3.0},
  };
  std::vector<std::string> labels{"A", "B"};
  std::string path = dir.file("t.csv");
  write_csv(path, ids, rows, &labels);

  // the missing cell is an empty field in the raw text
  std::string raw = read_text_file(path);
  CHECK(raw.find("1.5,,A") != std::string::npos);

  CsvTable t = read_csv(path);
  REQUIRE(t.feature_ids == ids);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.has_labels);
  CHECK(t.labels == labels);
  CHECK(t.rows[0][0] == 1.5);
  CHECK(std::isnan(t.rows[0][1]));
  CHECK(t.rows[1][1] == -3.0);
}

TEST_CASE("csv without a label column reads as unlabeled") {
  testutil::TempDir dir("csv");
  std::string path = dir.file("u.csv");
  write_csv(path, {"a", "b"}, {{1, 2}}, nullptr);
  CsvTable t = read_csv(path);
  CHECK_FALSE(t.has_labels);
  CHECK(t.labels.empty());
  REQUIRE(t.feature_ids.size() == 2);
}

TEST_CASE("label column position does not matter") {
  testutil::TempDir dir("csv");
  std::string path = dir.file("mid.csv");
  write_text_file(path, "a,label,b\n1,X,2\n3,Y,4\n");
  CsvTable t = read_csv(path);
  CHECK(t.feature_ids == std::vector<std::string>{"a", "b"});
  CHECK(t.labels == std::vector<std::string>{"X", "Y"});
  CHECK(t.rows[0] == std::vector<double>{1, 2});
  CHECK(t.rows[1] == std::vector<double>{3, 4});
}

TEST_CASE("quoted cells may contain commas") {
  auto cells = split_csv_line("a,\"b,c\",d");
  REQUIRE(cells.size() == 3);
  CHECK(cells[1] == "b,c");
}

TEST_CASE("ragged rows and absent files are format errors") {
  testutil::TempDir dir("csv");
  std::string path = dir.file("bad.csv");
  write_text_file(path, "a,b\n1,2,3\n");
  CHECK_THROWS_AS((void)read_csv(path), FormatError);

  CHECK_THROWS_AS((void)read_csv(dir.file("nope.csv")), IoError);
}

TEST_CASE("header-only file yields zero rows") {
  testutil::TempDir dir("csv");
  std::string path = dir.file("empty.csv");
  write_csv(path, {"x", "y"}, {}, nullptr);
  CsvTable t = read_csv(path);
  CHECK(t.rows.empty());
  CHECK(t.feature_ids == std::vector<std::string>{"x", "y"});
}

TEST_CASE("doubles survive a write/read cycle within print precision") {
  testutil::TempDir dir("csv");
  std::string path = dir.file("prec.csv");
  std::vector<std::vector<double>> rows{{1.0 / 3.0, 2.0 / 7.0, 1e-7, 123456789.0}};
  write_csv(path, {"a", "b", "c", "d"}, rows, nullptr);
  CsvTable t = read_csv(path);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(t.rows[0][j] == doctest::Approx(rows[0][j]).epsilon(1e-8));
  }
}

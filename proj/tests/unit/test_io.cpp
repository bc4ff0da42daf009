// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "oracles.hpp"
#include "svrattn/errors.hpp"
#include "svrattn/io.hpp"

using namespace svrattn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / ("svrattn_io_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

Matrix parse(const std::string& s) {
  std::istringstream in(s);
  return parse_matrix(in, "m.txt");
}

}  // namespace

TEST_CASE("save then load is bitwise exact") {
  const fs::path dir = scratch_dir();
  SplitMix64 rng(91);
  for (int t = 0; t < 20; ++t) {
    Matrix m = oracle::random(rng, 3, 3, -1e3, 1e3);
    m(0, 0) = std::numeric_limits<double>::denorm_min();
    m(1, 1) = -0.0;
    m(2, 2) = 1.0 / 3;
    save_matrix(m, dir / "m.txt");
    const Matrix back = load_matrix(dir / "m.txt");
    REQUIRE(back.rows() == 3);
    CHECK(std::memcmp(back.data().data(), m.data().data(), 9 * sizeof(double)) == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("format_double is shortest round trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(1.0 / 3) == "0.3333333333333333");
  CHECK(format_double(1e300) == "1e+300");
  CHECK(format_matrix(Matrix::from_rows({{1, 2.5}})) == "1 2\n1 2.5\n");
}

TEST_CASE("parse errors carry the line") {
  try {
    (void)parse("2 2\n1 2\n3 4\n5 6\n");
    FAIL("no throw");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
    CHECK(e.file() == "m.txt");
  }
  auto line_of = [](const std::string& s) -> std::size_t {
    try {
      (void)parse(s);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 9999;
  };
  CHECK(line_of("2 2\n1 2\n3\n") == 3);
  CHECK(line_of("2 2\n1 2\n") == 3);
  CHECK(line_of("2 x\n") == 1);
  CHECK(line_of("1 2\n1 nan\n") == 2);
  CHECK(line_of("1 2\n1 2 3\n") == 2);
  CHECK(line_of("") == 1);
}

TEST_CASE("comments and blank lines are ignored") {
  const Matrix a = parse("2 2\n1 2\n3 4\n");
  CHECK(parse("# header next\n2 2\n# row one\n1 2\n\n#row two\n3 4\n# trailer\n") == a);
}

TEST_CASE("atomic write leaves no temporary files") {
  const fs::path dir = scratch_dir();
  write_file_atomic(dir / "x.txt", "one\n");
  write_file_atomic(dir / "x.txt", "two\n");
  std::ifstream in(dir / "x.txt");
  std::string s;
  std::getline(in, s);
  CHECK(s == "two");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  CHECK(files == 1);
  CHECK_THROWS_AS(write_file_atomic(dir / "missing" / "x.txt", "z"), Error);
  fs::remove_all(dir);
}

TEST_CASE("manifest and head config") {
  const fs::path dir = scratch_dir();
  save_matrix(Matrix::from_rows({{1, 0}, {0, 1}}), dir / "wq.txt");
  save_matrix(Matrix::identity(2), dir / "id.txt");
  write(dir / "heads.txt",
        "# two heads\n"
        "wq.0 = wq.txt\nwk.0 = id.txt\nwv.0 = id.txt\nwo.0 = id.txt\n"
        "wq.1 = id.txt\nwk.1 = id.txt\nwv.1 = id.txt\nwo.1 = id.txt\n"
        "scale.1 = 2\nvariant.1 = bn-recenter\nbeta = 0.5\n");
  const auto m = load_manifest(dir / "heads.txt");
  CHECK(m.get("scale.1") == "2");
  CHECK(m.lines.at("wq.0") == 2);
  const auto cfg = load_head_config(m);
  REQUIRE(cfg.heads.size() == 2);
  CHECK(cfg.heads[0].scale == 1);
  CHECK(cfg.heads[1].scale == 2);
  REQUIRE(std::holds_alternative<BnSpec>(cfg.heads[1].variant));
  CHECK(std::get<BnSpec>(cfg.heads[1].variant).beta == 0.5);
  CHECK(std::get<BnSpec>(cfg.heads[1].variant).mode == BnMode::RecenterOnly);

  auto fails_at = [&](const std::string& text) -> std::size_t {
    write(dir / "bad.txt", text);
    try {
      (void)load_head_config(load_manifest(dir / "bad.txt"));
    } catch (const ParseError& e) {
      return e.line();
    }
    return 9999;
  };
  CHECK(fails_at("wq.0 = wq.txt\nwq.0 = id.txt\n") == 2);
  CHECK(fails_at("bogus = 1\n") == 1);
  CHECK(fails_at("wq.0 wq.txt\n") == 1);
  CHECK(fails_at("wq.0 = wq.txt\nwk.0 = id.txt\nwv.0 = id.txt\nwo.0 = id.txt\nvariant.0 = nope\n") == 5);
  fs::remove_all(dir);
}

TEST_CASE("head variant names") {
  CHECK(std::holds_alternative<SoftmaxSpec>(parse_head_variant("softmax", 2, 1, 1e-5)));
  CHECK(std::get<BnSpec>(parse_head_variant("bn", 2, 1, 1e-5)).mode == BnMode::FullBN);
  CHECK(std::get<LinearSpec>(parse_head_variant("linear-exp:6", 2, 1, 1e-5)).fmap.degree() == 6);
  CHECK(std::get<LinearSpec>(parse_head_variant("linear-elu", 3, 1, 1e-5)).fmap.kind() == FeatureKind::EluPlusOne);
  CHECK_THROWS(parse_head_variant("linear-exp:x", 2, 1, 1e-5));
}

TEST_CASE("csv quoting") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
}

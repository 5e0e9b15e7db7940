#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "kdebias/densities.hpp"
#include "kdebias/io.hpp"

using namespace kdebias;
namespace fs = std::filesystem;
using io::json;

namespace {

fs::path tmp_dir() {
  fs::path p = fs::path(KDEBIAS_TEST_TMP) / "io";
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

}  // namespace

TEST(Io, FormatDoubleRoundTrips) {
  EXPECT_EQ(io::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(io::format_double(1.0), "1");
  EXPECT_EQ(io::format_double(NAN), "null");
  EXPECT_EQ(io::format_double(INFINITY), "null");
  for (double v : {M_PI, -1e-300, 6.02214076e23, 1.0 / 3.0}) EXPECT_EQ(std::stod(io::format_double(v)), v);
}

TEST(Io, DumpLayout) {
  json j = {{"a", 0.1}, {"v", {1.0, 2.5}}, {"s", "x"}, {"o", json::object()}, {"n", {{"b", true}}}};
  const std::string out = io::dump(j);
  EXPECT_NE(out.find("\"a\": 0.10000000000000001"), std::string::npos);
  EXPECT_NE(out.find("\"v\": [1, 2.5]"), std::string::npos);
  EXPECT_NE(out.find("\"o\": {}"), std::string::npos);
  EXPECT_EQ(out.back(), '\n');
  // keys keep insertion order and parse back to the same values
  const json back = json::parse(out);
  EXPECT_EQ(back.begin().key(), "a");
  EXPECT_EQ(back["a"].get<double>(), 0.1);
  EXPECT_EQ(back["n"]["b"], true);
}

TEST(Io, AtomicWriteLeavesNoTemporary) {
  const fs::path p = tmp_dir() / "atomic.json";
  io::write_atomic(p, "first\n");
  io::write_atomic(p, "second\n");
  EXPECT_EQ(io::read_text(p), "second\n");
  EXPECT_FALSE(fs::exists(fs::path(p.string() + ".tmp")));
  EXPECT_THROW(io::write_atomic(tmp_dir() / "missing_dir" / "x.json", "x"), Error);
  EXPECT_THROW(io::read_text(tmp_dir() / "does_not_exist.csv"), Error);
}

TEST(Io, SampleCsvRoundTrip) {
  const SampleSet s = sample(DensityModel::standard_gaussian(3), 50, 4);
  const fs::path p = tmp_dir() / "samples.csv";
  io::write_atomic(p, io::samples_to_csv(s));
  const SampleSet back = io::read_samples_csv(p);
  EXPECT_EQ(back.dim(), 3u);
  EXPECT_EQ(back.data(), s.data());
  EXPECT_EQ(io::points_header(2), "x1,x2");
}

TEST(Io, CsvErrors) {
  const fs::path dir = tmp_dir();
  write_file(dir / "bad_header.csv", "a,b\n1,2\n");
  EXPECT_THROW(io::read_points_csv(dir / "bad_header.csv"), Error);
  write_file(dir / "ragged.csv", "x1,x2\n1,2\n3\n");
  try {
    io::read_points_csv(dir / "ragged.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  write_file(dir / "text.csv", "x1\n1.5\nabc\n");
  EXPECT_THROW(io::read_points_csv(dir / "text.csv"), Error);
  write_file(dir / "empty_rows.csv", "x1\n");
  try {
    io::read_samples_csv(dir / "empty_rows.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySamples);
  }
  write_file(dir / "crlf.csv", "x1,x2\r\n1,2\r\n\r\n3,4\r\n");
  EXPECT_EQ(io::read_points_csv(dir / "crlf.csv").size(), 2u);
}

TEST(Io, CsvTable) {
  io::CsvTable t({"name", "value"});
  t.row().add(std::string("a")).add(0.5);
  t.row().add(std::string("b")).add(0.1);
  EXPECT_EQ(t.str(), "name,value\na,0.5\nb,0.10000000000000001\n");
}

TEST(Io, MatrixForms) {
  EXPECT_EQ(io::matrix_from_json(json(0.5), 2, "h").max_abs(), 0.5);
  const Matrix nested = io::matrix_from_json(json::parse("[[2,1],[1,2]]"), 0, "h");
  const Matrix flat = io::matrix_from_json(json::parse("[2,1,1,2]"), 0, "h");
  EXPECT_EQ(nested(0, 1), 1.0);
  EXPECT_EQ(flat(1, 1), 2.0);
  EXPECT_THROW(io::matrix_from_json(json::parse("[1,2,3]"), 0, "h"), Error);
  EXPECT_THROW(io::matrix_from_json(json::parse("[[1,2],[3]]"), 0, "h"), Error);
  EXPECT_THROW(io::matrix_from_json(json("x"), 0, "h"), Error);
  EXPECT_THROW(io::bandwidth_from_json(json::parse("[[1,2],[2,1]]")), Error);
  const auto h = io::bandwidth_from_json(json::parse("[[0.5,0.1],[0.1,0.4]]"));
  EXPECT_EQ(io::bandwidth_to_json(h), json::parse("[[0.5,0.1],[0.1,0.4]]"));
}

TEST(Io, KernelSpecRoundTrip) {
  for (const char* spec : {R"({"kind":"gaussian","dim":2})", R"({"kind":"epanechnikov","dim":3})",
                           R"({"kind":"higher_order4","dim":1})",
                           R"({"kind":"product","dim":2,"params":{"base":"higher_order4"}})"}) {
    const Kernel k = io::kernel_from_json(json::parse(spec));
    const Kernel back = io::kernel_from_json(io::kernel_to_json(k));
    EXPECT_EQ(back.kind(), k.kind());
    EXPECT_EQ(back.dim(), k.dim());
    EXPECT_EQ(back.base(), k.base());
  }
  const Kernel a = io::kernel_from_json(json::parse(R"({"kind":"adversarial","dim":1,"params":{"p":1,"ell":2,"n_max":500}})"));
  EXPECT_GT(a.adversarial_params().c, 0.0);
  const Kernel a2 = io::kernel_from_json(io::kernel_to_json(a));
  EXPECT_EQ(a2.adversarial_params().c, a.adversarial_params().c);
  EXPECT_EQ(a2.adversarial_params().n_max, 500);
  EXPECT_EQ(io::kernel_from_json(json("gaussian")).dim(), 1u);
  EXPECT_THROW(io::kernel_from_json(json::parse(R"({"kind":"triangle"})")), Error);
  EXPECT_THROW(io::kernel_from_json(json::parse(R"({"dim":1})")), Error);
  EXPECT_THROW(io::kernel_from_json(json::parse(R"({"kind":"adversarial","params":{"p":-1}})")), Error);
}

TEST(Io, DensitySpecRoundTrip) {
  const auto m = io::density_from_json(json::parse(
      R"({"kind":"gaussian_mixture","components":[{"weight":0.6,"mean":[-0.4],"cov":0.64},{"weight":0.4,"mean":[0.9],"cov":[[0.36]]}]})"));
  EXPECT_NEAR(m.pdf(std::vector<double>{0.0}),
              0.6 * std::exp(-0.5 * 0.16 / 0.64) / std::sqrt(2 * M_PI * 0.64) +
                  0.4 * std::exp(-0.5 * 0.81 / 0.36) / std::sqrt(2 * M_PI * 0.36),
              1e-15);
  const auto back = io::density_from_json(io::density_to_json(m));
  for (double x : {-1.0, 0.2, 2.0}) EXPECT_EQ(back.pdf(std::vector<double>{x}), m.pdf(std::vector<double>{x}));

  const auto f = io::density_from_json(json::parse(R"({"kind":"far_mass","direction":[0,1],"inner_mass":0.4})"));
  const auto fb = io::density_from_json(io::density_to_json(f));
  EXPECT_EQ(fb.far().far_center, f.far().far_center);
  EXPECT_EQ(fb.pdf(std::vector<double>{0.1, 0.2}), f.pdf(std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(io::density_from_json(json::parse(R"({"kind":"standard_gaussian","dim":3})")).dim(), 3u);
  EXPECT_THROW(io::density_from_json(json::parse(R"({"kind":"cauchy"})")), Error);
  EXPECT_THROW(io::density_from_json(json::parse(R"({"kind":"gaussian_mixture"})")), Error);
}

TEST(Io, ParseErrorsAreValidationErrors) {
  try {
    io::parse_json("{not json", "config");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    EXPECT_FALSE(e.numerical());
  }
}

#include "indigo/dataio.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "testutil.hpp"

using namespace indigo;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("indigo_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// The on-disk oracle: an 8-bit file stores round(clamp(v)*255), so a
// load-after-save must yield exactly that value divided by 255.
float quantize8(float v) {
  const float c = std::clamp(v, 0.f, 1.f);
  return static_cast<float>(std::lround(c * 255.f)) / 255.f;
}

std::vector<char> read_all(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(static_cast<bool>(is));
  return std::vector<char>(std::istreambuf_iterator<char>(is),
                           std::istreambuf_iterator<char>());
}

void check_roundtrip(const std::string& path, const Tensor& img) {
  save_image(path, img);
  Tensor back = load_image(path);
  REQUIRE(back.shape() == img.shape());
  const float* a = img.data();
  const float* b = back.data();
  for (int64_t i = 0; i < img.numel(); ++i) {
    if (b[i] != quantize8(a[i])) {
      CAPTURE(i);
      CHECK(b[i] == quantize8(a[i]));
      return;
    }
  }
  CHECK(true);
}

// Writes a 16-bit grayscale PNG directly through libpng; the loader must
// reject it rather than silently truncate.
void write_png16(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  REQUIRE(fp != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, fp);
  png_set_IHDR(png, info, 4, 2, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(4 * 2, 0x3c);
  for (int y = 0; y < 2; ++y) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// RGBA PNG with a constant alpha; the loader keeps color and drops alpha.
void write_png_rgba(const std::string& path, int w, int h) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  REQUIRE(fp != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
               8, PNG_COLOR_TYPE_RGB_ALPHA, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(static_cast<size_t>(w) * 4);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      row[4 * x + 0] = static_cast<unsigned char>(10 * x);
      row[4 * x + 1] = static_cast<unsigned char>(20 * y);
      row[4 * x + 2] = 200;
      row[4 * x + 3] = 128;
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

TEST_CASE("png roundtrip stores round(v*255) for rgb and gray") {
  TempDir tmp("png_roundtrip");
  Rng rng(42);
  Tensor rgb = Tensor::alloc({1, 3, 9, 13});
  for (int64_t i = 0; i < rgb.numel(); ++i)
    rgb.raw()[i] = static_cast<float>(rng.uniform(-0.2, 1.2));  // out-of-range clamps
  check_roundtrip(tmp.file("a.png"), rgb);

  Tensor gray = Tensor::alloc({1, 1, 7, 5});
  for (int64_t i = 0; i < gray.numel(); ++i)
    gray.raw()[i] = static_cast<float>(rng.uniform());
  check_roundtrip(tmp.file("g.png"), gray);
}

TEST_CASE("pgm and ppm roundtrip with the same quantization") {
  TempDir tmp("pnm_roundtrip");
  Rng rng(7);
  Tensor rgb = Tensor::alloc({1, 3, 6, 11});
  for (int64_t i = 0; i < rgb.numel(); ++i)
    rgb.raw()[i] = static_cast<float>(rng.uniform());
  check_roundtrip(tmp.file("a.ppm"), rgb);

  Tensor gray = Tensor::alloc({1, 1, 12, 4});
  for (int64_t i = 0; i < gray.numel(); ++i)
    gray.raw()[i] = static_cast<float>(rng.uniform());
  check_roundtrip(tmp.file("g.pgm"), gray);

  CHECK_THROWS(save_image(tmp.file("bad.pgm"), rgb));   // 3 channels into P5
  CHECK_THROWS(save_image(tmp.file("bad.ppm"), gray));  // 1 channel into P6
}

TEST_CASE("pnm header comments and whitespace are tolerated") {
  TempDir tmp("pnm_header");
  const std::string path = tmp.file("c.pgm");
  {
    std::ofstream os(path, std::ios::binary);
    os << "P5\n# a comment\n  3 # trailing\n2\n# another\n255\n";
    const unsigned char px[6] = {0, 51, 102, 153, 204, 255};
    os.write(reinterpret_cast<const char*>(px), 6);
  }
  Tensor img = load_image(path);
  REQUIRE(img.shape() == Shape{1, 1, 2, 3});
  CHECK(img.data()[0] == 0.f);
  CHECK(img.data()[1] == 51.f / 255.f);
  CHECK(img.data()[5] == 1.f);
}

TEST_CASE("image loader errors: 16-bit png, bad magic, missing file, maxval") {
  TempDir tmp("load_errors");
  write_png16(tmp.file("deep.png"));
  CHECK_THROWS_WITH(load_image(tmp.file("deep.png")),
                    doctest::Contains("16-bit"));

  {
    std::ofstream os(tmp.file("junk.png"), std::ios::binary);
    os << "definitely not an image";
  }
  CHECK_THROWS_WITH(load_image(tmp.file("junk.png")),
                    doctest::Contains("unrecognized"));

  CHECK_THROWS_WITH(load_image(tmp.file("absent.png")),
                    doctest::Contains("cannot open"));

  {
    std::ofstream os(tmp.file("wide.pgm"), std::ios::binary);
    os << "P5\n2 2\n65535\n";
    os.write("\0\0\0\0\0\0\0\0", 8);
  }
  CHECK_THROWS_WITH(load_image(tmp.file("wide.pgm")),
                    doctest::Contains("maxval"));

  {
    std::ofstream os(tmp.file("short.ppm"), std::ios::binary);
    os << "P6\n4 4\n255\n";
    os.write("abc", 3);  // far fewer than 48 payload bytes
  }
  CHECK_THROWS_WITH(load_image(tmp.file("short.ppm")),
                    doctest::Contains("truncated"));
}

TEST_CASE("alpha channel is stripped on load") {
  TempDir tmp("alpha");
  write_png_rgba(tmp.file("rgba.png"), 5, 3);
  Tensor img = load_image(tmp.file("rgba.png"));
  REQUIRE(img.shape() == Shape{1, 3, 3, 5});
  // (x=2, y=1): r=20, g=20, b=200 regardless of the 0.5 alpha
  const int64_t plane = 15;
  CHECK(img.data()[0 * plane + 5 + 2] == 20.f / 255.f);
  CHECK(img.data()[1 * plane + 5 + 2] == 20.f / 255.f);
  CHECK(img.data()[2 * plane + 5 + 2] == 200.f / 255.f);
}

TEST_CASE("toy images are deterministic, in range, and seed-sensitive") {
  Tensor a = toy_image(17, 24, 3);
  Tensor b = toy_image(17, 24, 3);
  Tensor c = toy_image(18, 24, 3);
  REQUIRE(a.shape() == Shape{1, 3, 24, 24});
  float lo = 1e9f, hi = -1e9f;
  double diff_ab = 0, diff_ac = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    lo = std::min(lo, a.data()[i]);
    hi = std::max(hi, a.data()[i]);
    diff_ab += std::fabs(a.data()[i] - b.data()[i]);
    diff_ac += std::fabs(a.data()[i] - c.data()[i]);
  }
  CHECK(lo >= 0.f);
  CHECK(hi <= 1.f);
  CHECK(diff_ab == 0.0);              // identical seeds reproduce exactly
  CHECK(diff_ac > 1.0);               // different seeds give different content
  CHECK(hi - lo > 0.05f);             // not a constant image
  CHECK(toy_image(3, 16, 1).shape() == Shape{1, 1, 16, 16});
  CHECK_THROWS(toy_image(1, 4, 3));   // too small
  CHECK_THROWS(toy_image(1, 16, 2));  // unsupported channel count
}

TEST_CASE("dataset index roundtrips and rejects malformed input") {
  TempDir tmp("index");
  DatasetIndex index;
  index.factor = 4;
  DatasetItem it;
  it.id = "0007";
  it.params.sigma = 5.25;
  it.params.delta = 17.5;
  it.params.quality = 65;
  it.params.factor = 4;
  it.seed = 0xdeadbeefcafef00dULL;
  index.items.push_back(it);
  it.id = "0008";
  it.params.quality = 0;
  it.seed = 12345;
  index.items.push_back(it);

  const std::string path = tmp.file("index.txt");
  save_dataset_index(path, index);
  DatasetIndex back = load_dataset_index(path);
  REQUIRE(back.items.size() == 2);
  CHECK(back.factor == 4);
  CHECK(back.items[0].id == "0007");
  CHECK(back.items[0].params.sigma == doctest::Approx(5.25).epsilon(1e-9));
  CHECK(back.items[0].params.delta == doctest::Approx(17.5).epsilon(1e-9));
  CHECK(back.items[0].params.quality == 65);
  CHECK(back.items[0].params.factor == 4);
  CHECK(back.items[0].seed == 0xdeadbeefcafef00dULL);
  CHECK(back.items[1].params.quality == 0);

  {
    std::ofstream os(tmp.file("noheader.txt"));
    os << "0001 4.0 15.0 70 99\n";
  }
  CHECK_THROWS_WITH(load_dataset_index(tmp.file("noheader.txt")),
                    doctest::Contains("not a dataset index"));

  {
    std::ofstream os(tmp.file("badrow.txt"));
    os << "# indigo-dataset v1\n# factor 4\n0001 4.0 fifteen 70 99\n";
  }
  CHECK_THROWS_WITH(load_dataset_index(tmp.file("badrow.txt")),
                    doctest::Contains("malformed row"));
}

TEST_CASE("dataset synthesis is reproducible byte for byte") {
  TempDir tmp("synth");
  SynthesisConfig cfg;
  cfg.count = 3;
  cfg.size = 16;
  cfg.channels = 3;
  cfg.seed = 99;
  cfg.randomize = true;

  const std::string da = tmp.file("a"), db = tmp.file("b");
  DatasetIndex ia = synthesize_dataset(da, cfg);
  DatasetIndex ib = synthesize_dataset(db, cfg);
  REQUIRE(ia.items.size() == 3);

  std::vector<std::string> names = {"index.txt"};
  for (const auto& item : ia.items) {
    names.push_back(item.id + "_x.png");
    names.push_back(item.id + "_y.png");
  }
  for (const auto& name : names) {
    CAPTURE(name);
    CHECK(read_all(da + "/" + name) == read_all(db + "/" + name));
  }

  // randomized parameters actually vary across items and stay in range
  bool varied = false;
  for (const auto& item : ia.items) {
    CHECK(item.params.sigma >= 3.0);
    CHECK(item.params.sigma <= 9.0);
    CHECK(item.params.quality >= 30);
    CHECK(item.params.quality <= 80);
    if (item.params.sigma != ia.items[0].params.sigma) varied = true;
  }
  CHECK(varied);

  LoadedDataset ds = load_dataset(da);
  REQUIRE(ds.clean.size() == 3);
  REQUIRE(ds.measured.size() == 3);
  CHECK(ds.clean[0].shape() == Shape{1, 3, 16, 16});
  CHECK(ds.measured[0].shape() == Shape{1, 3, 4, 4});
  CHECK(ds.index.items[1].seed == ia.items[1].seed);
}

TEST_CASE("fixed-parameter synthesis uses the configured degradation") {
  TempDir tmp("synth_fixed");
  SynthesisConfig cfg;
  cfg.count = 2;
  cfg.size = 16;
  cfg.channels = 1;
  cfg.seed = 5;
  cfg.randomize = false;
  cfg.params = degradation_preset("medium");

  DatasetIndex idx = synthesize_dataset(tmp.file("d"), cfg);
  for (const auto& item : idx.items) {
    CHECK(item.params.sigma == 6.0);
    CHECK(item.params.delta == 25.0);
    CHECK(item.params.quality == 50);
  }
  // distinct items still get distinct content
  LoadedDataset ds = load_dataset(tmp.file("d"));
  double diff = 0;
  for (int64_t i = 0; i < ds.clean[0].numel(); ++i)
    diff += std::fabs(ds.clean[0].data()[i] - ds.clean[1].data()[i]);
  CHECK(diff > 0.5);

  SynthesisConfig bad = cfg;
  bad.size = 10;  // not divisible by factor 4
  CHECK_THROWS(synthesize_dataset(tmp.file("bad"), bad));
}

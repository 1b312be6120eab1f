#include "indigo/dataio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace indigo {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

unsigned char to_byte(float v) {
  const long q = std::lround(std::clamp(v, 0.f, 1.f) * 255.f);
  return static_cast<unsigned char>(std::clamp(q, 0L, 255L));
}

Tensor from_bytes(const std::vector<unsigned char>& bytes, int c, int h, int w) {
  Tensor img = Tensor::alloc({1, c, h, w});
  float* p = img.raw();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        p[(static_cast<int64_t>(ch) * h + y) * w + x] =
            static_cast<float>(bytes[(static_cast<size_t>(y) * w + x) * c + ch]) / 255.f;
  return img;
}

std::vector<unsigned char> to_bytes(const Tensor& img) {
  const int c = img.dim(1), h = img.dim(2), w = img.dim(3);
  std::vector<unsigned char> bytes(static_cast<size_t>(c) * h * w);
  const float* p = img.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        bytes[(static_cast<size_t>(y) * w + x) * c + ch] =
            to_byte(p[(static_cast<int64_t>(ch) * h + y) * w + x]);
  return bytes;
}

Tensor load_png(const std::string& path, std::FILE* fp) {
  std::vector<unsigned char> raw;
  std::vector<png_bytep> rows;
  png_structp png = nullptr;
  png_infop info = nullptr;
  auto fail = [&](const char* msg) -> void {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error(std::string(msg) + ": " + path);
  };
  png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("png allocation failed");
  info = png_create_info_struct(png);
  if (!info) fail("png allocation failed");
  if (setjmp(png_jmpbuf(png))) fail("malformed png");
  png_init_io(png, fp);
  png_read_info(png, info);

  if (png_get_bit_depth(png, info) == 16) fail("16-bit png not supported");
  png_set_expand(png);       // palettes and low bit depths to 8-bit
  png_set_strip_alpha(png);  // alpha channels are dropped
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int c = png_get_channels(png, info);
  if (c != 1 && c != 3) fail("png must decode to grayscale or rgb");

  raw.resize(static_cast<size_t>(h) * w * c);
  rows.resize(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] = raw.data() + static_cast<size_t>(y) * w * c;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return from_bytes(raw, c, h, w);
}

void save_png(const std::string& path, const Tensor& img) {
  const int c = img.dim(1), h = img.dim(2), w = img.dim(3);
  std::vector<unsigned char> raw = to_bytes(img);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] = raw.data() + static_cast<size_t>(y) * w * c;

  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write: " + path);
  png_structp png = nullptr;
  png_infop info = nullptr;
  auto fail = [&](const char* msg) -> void {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error(std::string(msg) + ": " + path);
  };
  png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("png allocation failed");
  info = png_create_info_struct(png);
  if (!info) fail("png allocation failed");
  if (setjmp(png_jmpbuf(png))) fail("png write error");
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
               8, c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// binary PGM (P5) and PPM (P6), maxval 255
Tensor load_pnm(const std::string& path, std::FILE* fp) {
  std::fclose(fp);
  std::ifstream is(path, std::ios::binary);
  std::string magic;
  is >> magic;
  const int c = magic == "P5" ? 1 : magic == "P6" ? 3 : 0;
  require(c != 0, "unsupported pnm magic in " + path);
  auto next_int = [&]() {
    // skip whitespace and '#' comment lines
    for (;;) {
      const int ch = is.peek();
      if (ch == '#') {
        std::string line;
        std::getline(is, line);
      } else if (std::isspace(ch)) {
        is.get();
      } else {
        break;
      }
    }
    int v = -1;
    is >> v;
    require(is.good() && v >= 0, "malformed pnm header in " + path);
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  require(maxval == 255, "pnm maxval must be 255 in " + path);
  is.get();  // single whitespace before payload
  std::vector<unsigned char> raw(static_cast<size_t>(h) * w * c);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(is.gcount() == static_cast<std::streamsize>(raw.size()),
          "truncated pnm payload in " + path);
  return from_bytes(raw, c, h, w);
}

void save_pnm(const std::string& path, const Tensor& img, int want_channels) {
  require(img.dim(1) == want_channels,
          path + ": extension expects " + std::to_string(want_channels) +
              " channels, image has " + std::to_string(img.dim(1)));
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot write: " + path);
  os << (want_channels == 1 ? "P5" : "P6") << "\n"
     << img.dim(3) << " " << img.dim(2) << "\n255\n";
  const auto raw = to_bytes(img);
  os.write(reinterpret_cast<const char*>(raw.data()),
           static_cast<std::streamsize>(raw.size()));
}

bool ends_with(const std::string& s, const char* suffix) {
  const size_t n = std::strlen(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

}  // namespace

Tensor load_image(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open: " + path);
  unsigned char sig[8] = {0};
  const size_t got = std::fread(sig, 1, 8, fp);
  std::rewind(fp);
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) return load_png(path, fp);
  if (got >= 2 && sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6'))
    return load_pnm(path, fp);
  std::fclose(fp);
  throw std::runtime_error("unrecognized image format: " + path);
}

void save_image(const std::string& path, const Tensor& image) {
  require(image.rank() == 4 && image.dim(0) == 1 &&
              (image.dim(1) == 1 || image.dim(1) == 3),
          "save_image: expected [1,1|3,H,W], got " + shape_str(image.shape()));
  if (ends_with(path, ".png")) return save_png(path, image);
  if (ends_with(path, ".pgm")) return save_pnm(path, image, 1);
  if (ends_with(path, ".ppm")) return save_pnm(path, image, 3);
  throw std::runtime_error("unsupported image extension: " + path);
}

Tensor toy_image(uint64_t seed, int size, int channels) {
  require(size >= 8 && (channels == 1 || channels == 3),
          "toy_image: bad size/channels");
  Rng rng(seed);
  Tensor img = Tensor::alloc({1, channels, size, size});
  float* p = img.raw();
  const int64_t plane = static_cast<int64_t>(size) * size;

  // smooth two-color gradient background
  double c0[3], c1[3];
  for (int ch = 0; ch < channels; ++ch) c0[ch] = rng.uniform();
  for (int ch = 0; ch < channels; ++ch) c1[ch] = rng.uniform();
  const double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double t = std::clamp(
          0.5 + gx * (static_cast<double>(x) / size - 0.5) +
              gy * (static_cast<double>(y) / size - 0.5),
          0.0, 1.0);
      for (int ch = 0; ch < channels; ++ch)
        p[ch * plane + static_cast<int64_t>(y) * size + x] =
            static_cast<float>(c0[ch] + t * (c1[ch] - c0[ch]));
    }

  // a few anti-aliased shapes: circles, boxes, oriented bands
  const int shapes = rng.uniform_int(2, 5);
  for (int s = 0; s < shapes; ++s) {
    const int type = rng.uniform_int(0, 2);
    double color[3];
    for (int ch = 0; ch < channels; ++ch) color[ch] = rng.uniform();
    const double opacity = rng.uniform(0.6, 1.0);
    double a = 0, b = 0, c = 0, d = 0;
    switch (type) {
      case 0:  // circle: center, radius
        a = rng.uniform(0.15, 0.85) * size;
        b = rng.uniform(0.15, 0.85) * size;
        c = rng.uniform(0.08, 0.30) * size;
        break;
      case 1:  // box: center, half extents
        a = rng.uniform(0.2, 0.8) * size;
        b = rng.uniform(0.2, 0.8) * size;
        c = rng.uniform(0.08, 0.30) * size;
        d = rng.uniform(0.08, 0.30) * size;
        break;
      default:  // band: angle, offset, half width
        a = rng.uniform(0.0, 3.14159265358979);
        b = rng.uniform(0.2, 0.8) * size;
        c = rng.uniform(0.05, 0.15) * size;
        break;
    }
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double alpha = 0.0;
        if (type == 0) {
          const double dist = std::hypot(x + 0.5 - a, y + 0.5 - b);
          alpha = std::clamp(c - dist + 0.5, 0.0, 1.0);
        } else if (type == 1) {
          const double sx = std::clamp(c - std::fabs(x + 0.5 - a) + 0.5, 0.0, 1.0);
          const double sy = std::clamp(d - std::fabs(y + 0.5 - b) + 0.5, 0.0, 1.0);
          alpha = sx * sy;
        } else {
          const double proj = (x + 0.5 - size / 2.0) * std::cos(a) +
                              (y + 0.5 - size / 2.0) * std::sin(a);
          alpha = std::clamp(c - std::fabs(proj - (b - size / 2.0)) + 0.5, 0.0, 1.0);
        }
        if (alpha <= 0.0) continue;
        const double w = alpha * opacity;
        for (int ch = 0; ch < channels; ++ch) {
          float& px = p[ch * plane + static_cast<int64_t>(y) * size + x];
          px = static_cast<float>(px * (1.0 - w) + color[ch] * w);
        }
      }
  }
  return img;
}

std::string clean_image_path(const std::string& dir, const std::string& id) {
  return dir + "/" + id + "_x.png";
}

std::string measured_image_path(const std::string& dir, const std::string& id) {
  return dir + "/" + id + "_y.png";
}

void save_dataset_index(const std::string& path, const DatasetIndex& index) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "cannot write: " + path);
  os << "# indigo-dataset v1\n";
  os << "# factor " << index.factor << "\n";
  char line[160];
  for (const auto& item : index.items) {
    std::snprintf(line, sizeof line, "%s %.6f %.6f %d %llu\n", item.id.c_str(),
                  item.params.sigma, item.params.delta, item.params.quality,
                  static_cast<unsigned long long>(item.seed));
    os << line;
  }
}

DatasetIndex load_dataset_index(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == "# indigo-dataset v1",
          path + " is not a dataset index");
  DatasetIndex index;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      if (hs >> key && key == "factor") hs >> index.factor;
      continue;
    }
    std::istringstream ls(line);
    DatasetItem item;
    unsigned long long seed = 0;
    if (!(ls >> item.id >> item.params.sigma >> item.params.delta >>
          item.params.quality >> seed))
      throw std::runtime_error(path + ": malformed row '" + line + "'");
    item.params.factor = index.factor;
    item.seed = seed;
    index.items.push_back(std::move(item));
  }
  return index;
}

DatasetIndex synthesize_dataset(const std::string& dir,
                                const SynthesisConfig& cfg) {
  std::filesystem::create_directories(dir);
  DatasetIndex index;
  index.factor = cfg.params.factor;
  require(cfg.size % index.factor == 0,
          "synthesize_dataset: size must be divisible by the decimation factor");
  for (int i = 0; i < cfg.count; ++i) {
    DatasetItem item;
    char id[16];
    std::snprintf(id, sizeof id, "%04d", i);
    item.id = id;
    item.seed = Rng::derive(cfg.seed, static_cast<uint64_t>(i));
    if (cfg.randomize) {
      Rng prng(Rng::derive(item.seed, 1));
      item.params = sample_degradation(cfg.range, prng, index.factor);
    } else {
      item.params = cfg.params;
    }
    Tensor x = toy_image(Rng::derive(item.seed, 0), cfg.size, cfg.channels);
    Rng noise(Rng::derive(item.seed, 2));
    Tensor y = degrade(x, item.params, noise);
    save_image(clean_image_path(dir, item.id), x);
    save_image(measured_image_path(dir, item.id), y);
    index.items.push_back(std::move(item));
  }
  save_dataset_index(dir + "/index.txt", index);
  return index;
}

LoadedDataset load_dataset(const std::string& dir) {
  LoadedDataset ds;
  ds.index = load_dataset_index(dir + "/index.txt");
  ds.clean.reserve(ds.index.items.size());
  ds.measured.reserve(ds.index.items.size());
  for (const auto& item : ds.index.items) {
    ds.clean.push_back(load_image(clean_image_path(dir, item.id)));
    ds.measured.push_back(load_image(measured_image_path(dir, item.id)));
  }
  return ds;
}

}  // namespace indigo

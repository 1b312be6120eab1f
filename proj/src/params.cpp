#include "indigo/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace indigo {

namespace {

constexpr char kMagic[4] = {'I', 'N', 'D', 'G'};
constexpr uint32_t kVersion = 1;

void put_u16(std::ostream& os, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u8(std::ostream& os, uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), 1);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint8_t get_u8(std::istream& is) {
  unsigned char b;
  is.read(reinterpret_cast<char*>(&b), 1);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return b;
}

void put_f32_array(std::ostream& os, const float* p, int64_t n) {
  static_assert(sizeof(float) == 4);
  // on a little-endian host the in-memory layout is the file layout
  os.write(reinterpret_cast<const char*>(p), 4 * n);
}

void get_f32_array(std::istream& is, float* p, int64_t n) {
  is.read(reinterpret_cast<char*>(p), 4 * n);
  if (!is) throw std::runtime_error("checkpoint: truncated tensor payload");
}

}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (by_name_.count(name))
    throw std::runtime_error("ParamStore: duplicate parameter '" + name + "'");
  order_.push_back(name);
  t.set_requires_grad(true);  // parameters are trainable until frozen
  return by_name_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end())
    throw std::runtime_error("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end())
    throw std::runtime_error("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

int64_t ParamStore::total_elements() const {
  int64_t n = 0;
  for (const auto& name : order_) n += by_name_.at(name).numel();
  return n;
}

void ParamStore::set_trainable(bool b) {
  for (const auto& name : order_) by_name_.at(name).set_requires_grad(b);
}

void write_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, Tensor>>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    if (name.size() > 0xffff)
      throw std::runtime_error("checkpoint: name too long: " + name);
    put_u16(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u8(os, static_cast<uint8_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i)
      put_u32(os, static_cast<uint32_t>(t.dim(i)));
    put_f32_array(os, t.data(), t.numel());
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: '" + path + "' has wrong magic bytes");
  const uint32_t version = get_u32(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  const uint32_t count = get_u32(is);
  std::vector<std::pair<std::string, Tensor>> entries;
  entries.reserve(count);
  for (uint32_t e = 0; e < count; ++e) {
    const uint16_t name_len = get_u16(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("checkpoint: truncated name");
    const uint8_t rank = get_u8(is);
    Shape shape(rank);
    for (int i = 0; i < rank; ++i)
      shape[i] = static_cast<int>(get_u32(is));
    Tensor t = Tensor::alloc(shape);
    get_f32_array(is, t.raw(), t.numel());
    entries.emplace_back(std::move(name), std::move(t));
  }
  return entries;
}

void ParamStore::save(const std::string& path) const {
  std::vector<std::pair<std::string, Tensor>> entries;
  entries.reserve(order_.size());
  for (const auto& name : order_) entries.emplace_back(name, by_name_.at(name));
  write_checkpoint(path, entries);
}

void ParamStore::load(const std::string& path) {
  auto entries = read_checkpoint(path);
  size_t filled = 0;
  for (const auto& [name, src] : entries) {
    auto it = by_name_.find(name);
    if (it == by_name_.end())
      throw std::runtime_error("checkpoint: unexpected entry '" + name +
                               "' in '" + path + "'");
    Tensor& dst = it->second;
    if (src.shape() != dst.shape())
      throw std::runtime_error("checkpoint: '" + name + "' has shape " +
                               shape_str(src.shape()) + ", expected " +
                               shape_str(dst.shape()));
    std::memcpy(dst.raw(), src.data(), sizeof(float) * dst.numel());
    ++filled;
  }
  if (filled != order_.size())
    throw std::runtime_error("checkpoint: '" + path + "' fills " +
                             std::to_string(filled) + " of " +
                             std::to_string(order_.size()) + " parameters");
}

Adam::Adam(ParamStore& params, Config cfg) : params_(&params), cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& name : params.names()) {
    const size_t n = static_cast<size_t>(params.get(name).numel());
    m_.emplace_back(n, 0.f);
    v_.emplace_back(n, 0.f);
  }
}

void Adam::step(Tape& tape) {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  size_t idx = 0;
  for (const auto& name : params_->names()) {
    Tensor& p = params_->get(name);
    const std::vector<float>* g = tape.find_grad(p.id());
    if (!g)
      throw std::runtime_error("Adam: no gradient for parameter '" + name +
                               "' (detached graph?)");
    float* pv = p.raw();
    float* m = m_[idx].data();
    float* v = v_[idx].data();
    const float b1 = cfg_.beta1, b2 = cfg_.beta2;
    const int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) {
      const float gi = (*g)[i];
      m[i] = b1 * m[i] + (1.f - b1) * gi;
      v[i] = b2 * v[i] + (1.f - b2) * gi * gi;
      const float mhat = m[i] / static_cast<float>(bc1);
      const float vhat = v[i] / static_cast<float>(bc2);
      pv[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    ++idx;
  }
}

void sgd_step(ParamStore& params, Tape& tape, float lr) {
  for (const auto& name : params.names()) {
    Tensor& p = params.get(name);
    const std::vector<float>* g = tape.find_grad(p.id());
    if (!g)
      throw std::runtime_error("sgd_step: no gradient for parameter '" + name +
                               "' (detached graph?)");
    float* pv = p.raw();
    const int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) pv[i] -= lr * (*g)[i];
  }
}

}  // namespace indigo

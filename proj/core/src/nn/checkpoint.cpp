#include "jcl/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "jcl/error.hpp"

namespace jcl::nn {
namespace {

constexpr char kMagic[4] = {'J', 'C', 'L', '1'};
constexpr uint8_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void bytes(const void* p, size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u32(uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    bytes(b, 4);
  }
  void u64(uint64_t v) {
    u32(static_cast<uint32_t>(v));
    u32(static_cast<uint32_t>(v >> 32));
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  size_t offset() const { return offset_; }

  void bytes(void* p, size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) {
      throw FormatError("truncated checkpoint at offset " +
                        std::to_string(offset_));
    }
    offset_ += n;
  }
  uint8_t u8() {
    uint8_t v;
    bytes(&v, 1);
    return v;
  }
  uint32_t u32() {
    uint8_t b[4];
    bytes(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  }
  uint64_t u64() {
    uint64_t lo = u32();
    uint64_t hi = u32();
    return lo | (hi << 32);
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(size_t max_len = 1u << 20) {
    uint32_t n = u32();
    if (n > max_len) {
      throw FormatError("implausible string length at offset " +
                        std::to_string(offset_ - 4));
    }
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
  size_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const ParamStore& params, const MetaMap& meta,
                     std::ostream& out) {
  Writer w(out);
  w.bytes(kMagic, 4);
  w.u8(kVersion);
  w.u32(static_cast<uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    w.str(e.name);
    w.u32(static_cast<uint32_t>(e.value.shape.size()));
    for (size_t d : e.value.shape) w.u64(d);
    for (double x : e.value.data) w.f32(static_cast<float>(x));
  }
  if (!out) throw DataError("checkpoint write failed");
}

std::pair<ParamStore, MetaMap> load_checkpoint(std::istream& in) {
  Reader r(in);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad magic at offset 0");
  }
  uint8_t version = r.u8();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version) + " at offset 4");
  }
  MetaMap meta;
  uint32_t nmeta = r.u32();
  for (uint32_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    meta[k] = r.str();
  }
  ParamStore params;
  uint32_t nparams = r.u32();
  for (uint32_t i = 0; i < nparams; ++i) {
    std::string name = r.str();
    uint32_t ndims = r.u32();
    if (ndims > 8) {
      throw FormatError("implausible rank at offset " +
                        std::to_string(r.offset() - 4));
    }
    std::vector<size_t> shape(ndims);
    for (uint32_t d = 0; d < ndims; ++d) shape[d] = r.u64();
    Tensor& t = params.add(name, shape);
    for (double& x : t.data) x = static_cast<double>(r.f32());
  }
  return {std::move(params), std::move(meta)};
}

void save_checkpoint_file(const ParamStore& params, const MetaMap& meta,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  save_checkpoint(params, meta, out);
}

std::pair<ParamStore, MetaMap> load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

}  // namespace jcl::nn

#include "paln/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace paln {
namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

struct Reader {
  std::string data;
  std::size_t pos = 0;
  std::string file;

  void need(std::size_t n) const {
    PALN_CHECK(pos + n <= data.size(), "truncated checkpoint ", file,
               " at byte ", pos);
  }
  std::uint16_t u16() {
    need(2);
    const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
    pos += 2;
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
    pos += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     std::span<const NamedTensor> tensors) {
  std::string out;
  out += "PALN";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& nt : tensors) {
    PALN_CHECK(nt.name.size() <= 0xffff, "tensor name too long");
    put_u16(out, static_cast<std::uint16_t>(nt.name.size()));
    out += nt.name;
    const auto& shape = nt.tensor.shape();
    PALN_CHECK(shape.size() <= 0xff, "tensor rank too large");
    out.push_back(static_cast<char>(shape.size()));
    for (int e : shape) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : nt.tensor.values()) put_f32(out, static_cast<float>(v));
  }
  std::ofstream f(path, std::ios::binary);
  PALN_CHECK(f.good(), "cannot open checkpoint ", path.string(), " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  PALN_CHECK(f.good(), "short write to ", path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  PALN_CHECK(f.good(), "cannot open checkpoint ", path.string());
  Reader r;
  r.file = path.string();
  r.data.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  PALN_CHECK(r.bytes(4) == "PALN", "bad checkpoint magic in ", path.string());
  const std::uint32_t version = r.u32();
  PALN_CHECK(version == kCheckpointVersion, "unsupported checkpoint version ",
             version, " in ", path.string());
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor nt;
    nt.name = r.bytes(r.u16());
    const int rank = static_cast<unsigned char>(r.bytes(1)[0]);
    std::vector<int> shape;
    std::int64_t n = 1;
    for (int i = 0; i < rank; ++i) {
      shape.push_back(static_cast<int>(r.u32()));
      n *= shape.back();
    }
    std::vector<double> values(static_cast<std::size_t>(n));
    for (double& v : values) v = static_cast<double>(r.f32());
    nt.tensor = Tensor::from(std::move(shape), std::move(values));
    tensors.push_back(std::move(nt));
  }
  return tensors;
}

void restore_parameters(std::span<NamedTensor> params,
                        std::span<const NamedTensor> checkpoint) {
  for (NamedTensor& p : params) {
    const NamedTensor* found = nullptr;
    for (const NamedTensor& c : checkpoint) {
      if (c.name == p.name) {
        found = &c;
        break;
      }
    }
    PALN_CHECK(found != nullptr, "checkpoint is missing tensor ", p.name);
    PALN_CHECK(found->tensor.shape() == p.tensor.shape(),
               "checkpoint tensor ", p.name, " has shape ",
               found->tensor.shape_str(), ", expected ", p.tensor.shape_str());
    std::copy(found->tensor.values().begin(), found->tensor.values().end(),
              p.tensor.values().begin());
  }
}

}  // namespace paln

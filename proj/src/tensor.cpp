#include "gf/tensor.h"

#include <cstdio>
#include <cstring>

#include "json.hpp"

namespace gf {
namespace {

constexpr char kMagic[8] = {'G', 'F', 'T', 'E', 'N', 'S', 'O', 'R'};

struct File {
  std::FILE* f = nullptr;
  explicit File(const std::filesystem::path& p, const char* mode)
      : f(std::fopen(p.string().c_str(), mode)) {
    if (f == nullptr) throw std::runtime_error("cannot open " + p.string());
  }
  ~File() {
    if (f != nullptr) std::fclose(f);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;
};

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t,
                  const std::string& dtype) {
  if (dtype != "f32" && dtype != "f64")
    throw std::invalid_argument("unsupported dtype " + dtype);
  nlohmann::json header;
  header["dtype"] = dtype;
  header["shape"] = t.shape;
  header["order"] = "row-major";
  const std::string hs = header.dump();

  File out(path, "wb");
  std::fwrite(kMagic, 1, 8, out.f);
  const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
  unsigned char len_le[4] = {static_cast<unsigned char>(len & 0xff),
                             static_cast<unsigned char>((len >> 8) & 0xff),
                             static_cast<unsigned char>((len >> 16) & 0xff),
                             static_cast<unsigned char>((len >> 24) & 0xff)};
  std::fwrite(len_le, 1, 4, out.f);
  std::fwrite(hs.data(), 1, hs.size(), out.f);

  if (t.data.size() != t.count())
    throw std::invalid_argument("tensor shape/data mismatch");
  if (dtype == "f64") {
    std::fwrite(t.data.data(), sizeof(double), t.data.size(), out.f);
  } else {
    std::vector<float> f32(t.data.begin(), t.data.end());
    std::fwrite(f32.data(), sizeof(float), f32.size(), out.f);
  }
}

Tensor read_tensor(const std::filesystem::path& path) {
  File in(path, "rb");
  char magic[8];
  if (std::fread(magic, 1, 8, in.f) != 8 || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a GFTENSOR file: " + path.string());
  unsigned char len_le[4];
  if (std::fread(len_le, 1, 4, in.f) != 4)
    throw std::runtime_error("truncated tensor header: " + path.string());
  const std::uint32_t len = static_cast<std::uint32_t>(len_le[0]) |
                            (static_cast<std::uint32_t>(len_le[1]) << 8) |
                            (static_cast<std::uint32_t>(len_le[2]) << 16) |
                            (static_cast<std::uint32_t>(len_le[3]) << 24);
  std::string hs(len, '\0');
  if (std::fread(hs.data(), 1, len, in.f) != len)
    throw std::runtime_error("truncated tensor header: " + path.string());
  const nlohmann::json header = nlohmann::json::parse(hs);
  const std::string dtype = header.at("dtype").get<std::string>();
  if (header.at("order").get<std::string>() != "row-major")
    throw std::runtime_error("unsupported tensor order in " + path.string());

  Tensor t;
  t.shape = header.at("shape").get<std::vector<std::int64_t>>();
  const std::size_t n = t.count();
  t.data.resize(n);
  if (dtype == "f64") {
    if (std::fread(t.data.data(), sizeof(double), n, in.f) != n)
      throw std::runtime_error("truncated tensor payload: " + path.string());
  } else if (dtype == "f32") {
    std::vector<float> f32(n);
    if (std::fread(f32.data(), sizeof(float), n, in.f) != n)
      throw std::runtime_error("truncated tensor payload: " + path.string());
    for (std::size_t i = 0; i < n; ++i) t.data[i] = f32[i];
  } else {
    throw std::runtime_error("unsupported dtype " + dtype + " in " + path.string());
  }
  return t;
}

void write_tensor(const std::filesystem::path& path, const Mat& m,
                  const std::string& dtype) {
  Tensor t;
  t.shape = {m.rows, m.cols};
  t.data = m.a;
  write_tensor(path, t, dtype);
}

void write_tensor(const std::filesystem::path& path, const std::vector<double>& v,
                  const std::string& dtype) {
  Tensor t;
  t.shape = {static_cast<std::int64_t>(v.size())};
  t.data = v;
  write_tensor(path, t, dtype);
}

Mat read_tensor_mat(const std::filesystem::path& path) {
  const Tensor t = read_tensor(path);
  if (t.shape.size() != 2)
    throw std::runtime_error("expected rank-2 tensor in " + path.string());
  Mat m(static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]));
  m.a = t.data;
  return m;
}

std::vector<double> read_tensor_vec(const std::filesystem::path& path) {
  const Tensor t = read_tensor(path);
  if (t.shape.size() != 1)
    throw std::runtime_error("expected rank-1 tensor in " + path.string());
  return t.data;
}

}  // namespace gf

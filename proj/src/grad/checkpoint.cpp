#include "zett/grad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "zett/common/error.hpp"

namespace zett::grad {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace {

constexpr char kEmbMagic[8] = {'Z', 'E', 'T', 'T', 'E', 'M', 'B', '1'};
constexpr char kCkptMagic[8] = {'Z', 'E', 'T', 'T', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  require(bool(in), ErrorCode::InvalidFormat, "truncated header");
  return v;
}

void expect_magic(std::istream& in, const char (&magic)[8]) {
  char buf[8];
  in.read(buf, 8);
  require(bool(in) && std::memcmp(buf, magic, 8) == 0, ErrorCode::InvalidFormat,
          std::string("bad magic, expected ") + std::string(magic, 8));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  require(v <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::InvalidArgument, std::string(what) + " too large");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void write_matrix_block(std::ostream& out, const Tensor& t, std::uint8_t role) {
  std::size_t rows = t.shape.size() == 2 ? t.shape[0] : 1;
  std::size_t cols = t.shape.size() == 2 ? t.shape[1] : t.size();
  out.write(kEmbMagic, 8);
  put_u32(out, checked_u32(rows, "row count"));
  put_u32(out, checked_u32(cols, "column count"));
  out.put(static_cast<char>(role));
  std::vector<float> buf(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t.data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Tensor read_matrix_block(std::istream& in, std::uint8_t* role) {
  expect_magic(in, kEmbMagic);
  std::uint32_t rows = get_u32(in);
  std::uint32_t cols = get_u32(in);
  int r = in.get();
  require(r != EOF, ErrorCode::InvalidFormat, "truncated header");
  require(r <= 2, ErrorCode::InvalidFormat, "unknown role byte " + std::to_string(r));
  if (role) *role = static_cast<std::uint8_t>(r);
  std::size_t n = std::size_t(rows) * cols;
  std::vector<float> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
  require(in.gcount() == static_cast<std::streamsize>(n * sizeof(float)), ErrorCode::InvalidFormat,
          "truncated matrix data");
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < n; ++i) t.data[i] = buf[i];
  return t;
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(bool(out), ErrorCode::Io, "cannot write " + path);
  out.write(kCkptMagic, 8);
  put_u32(out, checked_u32(ckpt.metadata.size(), "metadata"));
  out.write(ckpt.metadata.data(), static_cast<std::streamsize>(ckpt.metadata.size()));
  put_u32(out, checked_u32(ckpt.tensors.size(), "tensor count"));
  for (const auto& t : ckpt.tensors) {
    put_u32(out, checked_u32(t.name.size(), "name"));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_matrix_block(out, t.value, 0);
  }
  require(bool(out), ErrorCode::Io, "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorCode::Io, "cannot read " + path);
  expect_magic(in, kCkptMagic);
  Checkpoint ckpt;
  auto read_string = [&] {
    std::uint32_t len = get_u32(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    require(in.gcount() == static_cast<std::streamsize>(len), ErrorCode::InvalidFormat, "truncated string");
    return s;
  };
  ckpt.metadata = read_string();
  std::uint32_t count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_string();
    ckpt.tensors.push_back({std::move(name), read_matrix_block(in)});
  }
  return ckpt;
}

Checkpoint make_checkpoint(const std::vector<Parameter>& params, std::string metadata) {
  Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  for (const auto& p : params) {
    if (ckpt.find(p->name)) continue;  // tied parameters appear once
    ckpt.tensors.push_back({p->name, p->value});
  }
  return ckpt;
}

void load_parameters(const Checkpoint& ckpt, const std::vector<Parameter>& params) {
  for (const auto& p : params) {
    const Tensor* t = ckpt.find(p->name);
    require(t != nullptr, ErrorCode::InvalidFormat, "checkpoint lacks tensor " + p->name);
    require(t->size() == p->value.size(), ErrorCode::ShapeMismatch,
            p->name + ": checkpoint has " + std::to_string(t->size()) + " values, model expects " +
                std::to_string(p->value.size()));
    p->value.data = t->data;
  }
}

}  // namespace zett::grad

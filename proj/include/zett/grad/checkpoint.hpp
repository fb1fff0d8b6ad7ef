#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "zett/grad/tensor.hpp"

namespace zett::grad {

// One "ZETTEMB1" block: magic, u32 rows, u32 cols, u8 role, then rows*cols
// little-endian f32. Values are rounded to float on write.
void write_matrix_block(std::ostream& out, const Tensor& t, std::uint8_t role);
Tensor read_matrix_block(std::istream& in, std::uint8_t* role = nullptr);

struct NamedTensor {
  std::string name;
  Tensor value;
};

// "ZETTCKPT" container: u32 metadata length + UTF-8 JSON metadata, u32
// tensor count, then per tensor a u32-length-prefixed name and a matrix
// block. Tensors of rank != 2 are stored as one row; readers restore the
// shape from the model they load into.
struct Checkpoint {
  std::string metadata = "{}";
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const std::vector<Parameter>& params, std::string metadata);

// Copies every parameter's values from ckpt by name (element counts must
// match; shapes are kept from the parameter).
void load_parameters(const Checkpoint& ckpt, const std::vector<Parameter>& params);

}  // namespace zett::grad

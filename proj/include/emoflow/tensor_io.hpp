#pragma once

#include <filesystem>

#include "emoflow/tensor.hpp"

namespace emoflow {

// Binary tensor file format "TNSR": magic bytes 'TNSR', u32 rank,
// rank x u64 dimensions, then the row-major payload as little-endian f64.
void write_tnsr(const std::filesystem::path& path, const Tensor& t);
Tensor read_tnsr(const std::filesystem::path& path);

// in-memory encode/decode (also used for corpus hashing)
std::vector<unsigned char> encode_tnsr(const Tensor& t);
Tensor decode_tnsr(const std::vector<unsigned char>& bytes);

} // namespace emoflow

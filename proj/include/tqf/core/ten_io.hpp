#pragma once

// `.ten` tensor files: the 8 bytes "TQFTEN01", a little-endian uint32 byte
// length, that many bytes of UTF-8 JSON {"dtype":"f32"|"f64","shape":[...]},
// then the values as little-endian IEEE floats in row-major order.

#include <filesystem>
#include <string>

#include "tqf/core/tensor.hpp"

namespace tqf::io {

enum class DType { kF32, kF64 };

template <typename T>
std::string encode_ten(const Tensor<T>& t);

// Converts to T when the stored dtype differs.
template <typename T>
Tensor<T> decode_ten(const std::string& bytes);

template <typename T>
void write_ten(const std::filesystem::path& path, const Tensor<T>& t);

template <typename T>
Tensor<T> read_ten(const std::filesystem::path& path);

DType peek_dtype(const std::string& bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace tqf::io

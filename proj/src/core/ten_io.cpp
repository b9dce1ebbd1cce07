#include "tqf/core/ten_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace tqf::io {

namespace {

constexpr char kMagic[8] = {'T', 'Q', 'F', 'T', 'E', 'N', '0', '1'};

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const std::string& in, std::size_t offset) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return value;
}

struct Header {
  DType dtype;
  Shape shape;
  std::size_t payload_offset;
};

Header parse_header(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ValidationError(".ten: bad magic");
  }
  const auto len = get_le<std::uint32_t>(bytes, 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(len)) throw ValidationError(".ten: truncated header");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.substr(12, len));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string(".ten: bad header json: ") + e.what());
  }
  Header h{};
  const std::string dtype = j.at("dtype").get<std::string>();
  if (dtype == "f32") {
    h.dtype = DType::kF32;
  } else if (dtype == "f64") {
    h.dtype = DType::kF64;
  } else {
    throw ValidationError(".ten: unknown dtype " + dtype);
  }
  h.shape = j.at("shape").get<Shape>();
  h.payload_offset = 12 + len;
  const std::size_t width = h.dtype == DType::kF32 ? 4 : 8;
  if (bytes.size() != h.payload_offset + numel(h.shape) * width) {
    throw ValidationError(".ten: payload size does not match shape " + shape_str(h.shape));
  }
  return h;
}

}  // namespace

template <typename T>
std::string encode_ten(const Tensor<T>& t) {
  nlohmann::json header;
  header["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
  header["shape"] = t.shape();
  const std::string text = header.dump();
  std::string out(kMagic, kMagic + 8);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + t.size() * sizeof(T));
  for (T v : t.data()) {
    if constexpr (sizeof(T) == 4) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    } else {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

DType peek_dtype(const std::string& bytes) { return parse_header(bytes).dtype; }

template <typename T>
Tensor<T> decode_ten(const std::string& bytes) {
  const Header h = parse_header(bytes);
  std::vector<T> values(numel(h.shape));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (h.dtype == DType::kF32) {
      values[i] = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, h.payload_offset + 4 * i)));
    } else {
      values[i] = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(bytes, h.payload_offset + 8 * i)));
    }
  }
  return Tensor<T>(h.shape, std::move(values));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed: " + path.string());
}

template <typename T>
void write_ten(const std::filesystem::path& path, const Tensor<T>& t) {
  write_file(path, encode_ten(t));
}

template <typename T>
Tensor<T> read_ten(const std::filesystem::path& path) {
  return decode_ten<T>(read_file(path));
}

template std::string encode_ten(const Tensor<float>&);
template std::string encode_ten(const Tensor<double>&);
template Tensor<float> decode_ten(const std::string&);
template Tensor<double> decode_ten(const std::string&);
template void write_ten(const std::filesystem::path&, const Tensor<float>&);
template void write_ten(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> read_ten(const std::filesystem::path&);
template Tensor<double> read_ten(const std::filesystem::path&);

}  // namespace tqf::io

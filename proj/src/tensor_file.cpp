#include "viewssl/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace viewssl::formats {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "tensor files are encoded on little-endian hosts only");

template <class T>
void append_raw(std::vector<std::uint8_t>& out, const std::vector<T>& v) {
  const auto old = out.size();
  out.resize(old + v.size() * sizeof(T));
  if (!v.empty()) std::memcpy(out.data() + old, v.data(), v.size() * sizeof(T));
}

template <class T>
std::vector<T> load_raw(std::span<const std::uint8_t> bytes, std::size_t count) {
  std::vector<T> v(count);
  if (count) std::memcpy(v.data(), bytes.data(), count * sizeof(T));
  return v;
}

}  // namespace

std::size_t element_size(DType t) {
  switch (t) {
    case DType::F32: return 4;
    case DType::U8: return 1;
    case DType::U16: return 2;
  }
  return 0;
}

std::size_t TensorData::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_tensor(const TensorData& t) {
  if (t.shape.size() > 255) throw TensorFileError(TensorFileError::Kind::ShapeMismatch, "rank exceeds 255");
  const std::size_t n = t.element_count();
  const std::size_t have = std::visit([](const auto& v) { return v.size(); }, t.values);
  if (n != have) {
    throw TensorFileError(TensorFileError::Kind::ShapeMismatch,
                          "shape holds " + std::to_string(n) + " elements but " + std::to_string(have) + " given");
  }
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  out.push_back(static_cast<std::uint8_t>(t.shape.size()));
  for (auto d : t.shape) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(d >> (8 * i)));
  }
  std::visit([&](const auto& v) { append_raw(out, v); }, t.values);
  return out;
}

TensorData decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw TensorFileError(TensorFileError::Kind::BadMagic, "not a PFT1 tensor (bad magic)");
  }
  const auto code = bytes[4];
  if (code > 2) throw TensorFileError(TensorFileError::Kind::BadMagic, "unknown dtype code " + std::to_string(code));
  const DType dtype = static_cast<DType>(code);
  const std::size_t rank = bytes[5];
  std::size_t pos = 6;
  if (bytes.size() < pos + 4 * rank) throw TensorFileError(TensorFileError::Kind::TruncatedPayload, "header truncated");
  TensorData t;
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    std::uint32_t d = 0;
    for (int b = 0; b < 4; ++b) d |= static_cast<std::uint32_t>(bytes[pos + b]) << (8 * b);
    pos += 4;
    t.shape.push_back(d);
    // guard against overflow on hostile headers
    if (d != 0 && count > (std::size_t{1} << 40) / d) {
      throw TensorFileError(TensorFileError::Kind::ShapeMismatch, "declared shape is implausibly large");
    }
    count *= d;
  }
  const std::size_t payload = count * element_size(dtype);
  const std::size_t avail = bytes.size() - pos;
  if (avail < payload) {
    throw TensorFileError(TensorFileError::Kind::TruncatedPayload,
                          "payload has " + std::to_string(avail) + " bytes, shape needs " + std::to_string(payload));
  }
  if (avail > payload) {
    throw TensorFileError(TensorFileError::Kind::ShapeMismatch,
                          std::to_string(avail - payload) + " trailing bytes after declared payload");
  }
  const auto body = bytes.subspan(pos);
  switch (dtype) {
    case DType::F32: t.values = load_raw<float>(body, count); break;
    case DType::U8: t.values = load_raw<std::uint8_t>(body, count); break;
    case DType::U16: t.values = load_raw<std::uint16_t>(body, count); break;
  }
  return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorFileError(TensorFileError::Kind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorFileError(TensorFileError::Kind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw TensorFileError(TensorFileError::Kind::Io, "write failed: " + path.string());
}

void write_tensor(const std::filesystem::path& path, const TensorData& t) { write_file_bytes(path, encode_tensor(t)); }

TensorData read_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_tensor(bytes);
  } catch (const TensorFileError& e) {
    throw TensorFileError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace viewssl::formats

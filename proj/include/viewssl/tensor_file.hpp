#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "viewssl/error.hpp"

/// Raw tensor container ("PFT1").
///
/// Layout, all little-endian:
///   4 bytes  magic "PFT1"
///   u8       dtype code (0 = f32, 1 = u8, 2 = u16)
///   u8       rank
///   rank x u32 dims
///   payload, row-major, element-size x product(dims) bytes
namespace viewssl::formats {

enum class DType : std::uint8_t { F32 = 0, U8 = 1, U16 = 2 };

std::size_t element_size(DType t);

struct TensorData {
  std::vector<std::uint32_t> shape;
  std::variant<std::vector<float>, std::vector<std::uint8_t>, std::vector<std::uint16_t>> values;

  DType dtype() const { return static_cast<DType>(values.index()); }
  std::size_t element_count() const;

  static TensorData f32(std::vector<std::uint32_t> shape, std::vector<float> v) { return {std::move(shape), std::move(v)}; }
  static TensorData u8(std::vector<std::uint32_t> shape, std::vector<std::uint8_t> v) { return {std::move(shape), std::move(v)}; }
  static TensorData u16(std::vector<std::uint32_t> shape, std::vector<std::uint16_t> v) { return {std::move(shape), std::move(v)}; }

  friend bool operator==(const TensorData&, const TensorData&) = default;
};

class TensorFileError : public Error {
 public:
  enum class Kind { BadMagic, ShapeMismatch, TruncatedPayload, Io };
  TensorFileError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> encode_tensor(const TensorData& t);
TensorData decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const TensorData& t);
TensorData read_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace viewssl::formats

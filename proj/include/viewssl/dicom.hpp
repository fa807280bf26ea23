#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viewssl/geometry.hpp"

/// Minimal DICOM PS3.10 reader/writer for the spatial attributes of an
/// image: explicit-VR little-endian only.
///
/// Extracted tags:
///   (0020,000E) SeriesInstanceUID       UI
///   (0020,0032) ImagePositionPatient    DS x3
///   (0020,0037) ImageOrientationPatient DS x6
///   (0028,0010) Rows                    US
///   (0028,0011) Columns                 US
///   (0028,0030) PixelSpacing            DS x2 (row spacing, column spacing)
///   (7FE0,0010) PixelData               OW/OB, optional
namespace viewssl::formats {

struct DicomTag {
  std::uint16_t group = 0;
  std::uint16_t element = 0;
  friend constexpr auto operator<=>(DicomTag, DicomTag) = default;
};

std::string to_string(DicomTag t);

namespace tags {
inline constexpr DicomTag TransferSyntaxUID{0x0002, 0x0010};
inline constexpr DicomTag SeriesInstanceUID{0x0020, 0x000E};
inline constexpr DicomTag ImagePositionPatient{0x0020, 0x0032};
inline constexpr DicomTag ImageOrientationPatient{0x0020, 0x0037};
inline constexpr DicomTag Rows{0x0028, 0x0010};
inline constexpr DicomTag Columns{0x0028, 0x0011};
inline constexpr DicomTag PixelSpacing{0x0028, 0x0030};
inline constexpr DicomTag PixelData{0x7FE0, 0x0010};
}  // namespace tags

inline constexpr const char* kExplicitVRLittleEndian = "1.2.840.10008.1.2.1";
inline constexpr const char* kImplicitVRLittleEndian = "1.2.840.10008.1.2";

struct DicomImage {
  geometry::ImagePlane plane;
  int rows = 0;
  int cols = 0;
  std::string series_uid;
  std::optional<std::vector<std::uint16_t>> pixel_data;
};

class DicomError : public Error {
 public:
  enum class Kind {
    MissingTag,
    ImplicitVRUnsupported,
    TruncatedStream,
    MalformedDecimalString,
    UnsupportedEncoding,
    InvalidGeometry,
  };
  DicomError(Kind kind, const std::string& what, std::size_t offset = 0)
      : Error(what), kind_(kind), offset_(offset) {}
  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

DicomImage parse_dicom_subset(std::span<const std::uint8_t> bytes);

/// Emits a stream `parse_dicom_subset` accepts. Decimal strings use the
/// shortest representation that round-trips the double exactly.
std::vector<std::uint8_t> write_dicom_subset(const DicomImage& image);

/// Parses a backslash-separated DS value. Throws MalformedDecimalString.
std::vector<double> parse_decimal_string(std::string_view text, DicomTag tag, std::size_t offset);

}  // namespace viewssl::formats

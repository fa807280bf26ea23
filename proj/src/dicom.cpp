#include "viewssl/dicom.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>

namespace viewssl::formats {

namespace {

constexpr std::size_t kPreamble = 128;

std::uint16_t u16_at(std::span<const std::uint8_t> b, std::size_t pos) {
  return static_cast<std::uint16_t>(b[pos] | (b[pos + 1] << 8));
}

std::uint32_t u32_at(std::span<const std::uint8_t> b, std::size_t pos) {
  return static_cast<std::uint32_t>(b[pos]) | (static_cast<std::uint32_t>(b[pos + 1]) << 8) |
         (static_cast<std::uint32_t>(b[pos + 2]) << 16) | (static_cast<std::uint32_t>(b[pos + 3]) << 24);
}

/// VRs with a 2-byte reserved field and a 32-bit length.
bool has_long_length(char v0, char v1) {
  static constexpr const char* kLong[] = {"OB", "OD", "OF", "OL", "OV", "OW", "SQ", "SV", "UC", "UN", "UR", "UT", "UV"};
  for (const char* vr : kLong) {
    if (vr[0] == v0 && vr[1] == v1) return true;
  }
  return false;
}

bool is_vr_char(std::uint8_t c) { return c >= 'A' && c <= 'Z'; }

struct Element {
  char vr[2];
  std::size_t value_offset;
  std::uint32_t length;
};

std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \0", 0, 2);
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \0", std::string_view::npos, 2);
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_element(std::vector<std::uint8_t>& out, DicomTag tag, const char* vr, std::span<const std::uint8_t> value) {
  put_u16(out, tag.group);
  put_u16(out, tag.element);
  out.push_back(static_cast<std::uint8_t>(vr[0]));
  out.push_back(static_cast<std::uint8_t>(vr[1]));
  if (has_long_length(vr[0], vr[1])) {
    put_u16(out, 0);
    put_u32(out, static_cast<std::uint32_t>(value.size()));
  } else {
    put_u16(out, static_cast<std::uint16_t>(value.size()));
  }
  out.insert(out.end(), value.begin(), value.end());
}

void put_text(std::vector<std::uint8_t>& out, DicomTag tag, const char* vr, std::string text, char pad) {
  if (text.size() % 2) text.push_back(pad);
  put_element(out, tag, vr, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string join_ds(std::initializer_list<double> values) {
  std::string s;
  for (double v : values) {
    if (!s.empty()) s.push_back('\\');
    s += format_double(v);
  }
  return s;
}

}  // namespace

std::string to_string(DicomTag t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "(%04X,%04X)", t.group, t.element);
  return buf;
}

std::vector<double> parse_decimal_string(std::string_view text, DicomTag tag, std::size_t offset) {
  std::vector<double> out;
  std::size_t start = 0;
  while (true) {
    const auto end = text.find('\\', start);
    const std::string item = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    const char* first = item.data();
    const char* last = item.data() + item.size();
    if (!item.empty() && *first == '+') ++first;
    double v = 0.0;
    const auto res = std::from_chars(first, last, v);
    if (item.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
      throw DicomError(DicomError::Kind::MalformedDecimalString,
                       "malformed decimal string '" + item + "' in " + to_string(tag) + " at offset " +
                           std::to_string(offset),
                       offset);
    }
    out.push_back(v);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

DicomImage parse_dicom_subset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreamble + 4) {
    throw DicomError(DicomError::Kind::TruncatedStream, "stream shorter than preamble + DICM prefix", bytes.size());
  }
  if (!std::equal(bytes.begin() + kPreamble, bytes.begin() + kPreamble + 4, "DICM")) {
    throw DicomError(DicomError::Kind::TruncatedStream, "missing DICM prefix at offset 128", kPreamble);
  }

  std::map<DicomTag, Element> found;
  std::size_t pos = kPreamble + 4;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 8) {
      throw DicomError(DicomError::Kind::TruncatedStream, "element header truncated at offset " + std::to_string(pos), pos);
    }
    const DicomTag tag{u16_at(bytes, pos), u16_at(bytes, pos + 2)};
    const std::size_t header_at = pos;
    if (!is_vr_char(bytes[pos + 4]) || !is_vr_char(bytes[pos + 5])) {
      throw DicomError(DicomError::Kind::ImplicitVRUnsupported,
                       "element " + to_string(tag) + " at offset " + std::to_string(pos) +
                           " has no explicit VR (implicit VR is not supported)",
                       pos);
    }
    Element el{{static_cast<char>(bytes[pos + 4]), static_cast<char>(bytes[pos + 5])}, 0, 0};
    if (has_long_length(el.vr[0], el.vr[1])) {
      if (bytes.size() - pos < 12) {
        throw DicomError(DicomError::Kind::TruncatedStream, "element header truncated at offset " + std::to_string(pos), pos);
      }
      el.length = u32_at(bytes, pos + 8);
      pos += 12;
    } else {
      el.length = u16_at(bytes, pos + 6);
      pos += 8;
    }
    if (el.length == 0xFFFFFFFFu) {
      throw DicomError(DicomError::Kind::UnsupportedEncoding,
                       "undefined-length element " + to_string(tag) + " at offset " + std::to_string(header_at), header_at);
    }
    if (el.length > bytes.size() - pos) {
      throw DicomError(DicomError::Kind::TruncatedStream,
                       "element " + to_string(tag) + " at offset " + std::to_string(header_at) + " declares " +
                           std::to_string(el.length) + " bytes, only " + std::to_string(bytes.size() - pos) + " remain",
                       header_at);
    }
    el.value_offset = pos;
    pos += el.length;
    found[tag] = el;
  }

  auto text_of = [&](DicomTag tag) -> std::string_view {
    const auto& e = found.at(tag);
    return {reinterpret_cast<const char*>(bytes.data() + e.value_offset), e.length};
  };

  if (auto it = found.find(tags::TransferSyntaxUID); it != found.end()) {
    const std::string ts = trim(text_of(tags::TransferSyntaxUID));
    if (ts == kImplicitVRLittleEndian) {
      throw DicomError(DicomError::Kind::ImplicitVRUnsupported, "transfer syntax " + ts + " (implicit VR) not supported",
                       it->second.value_offset);
    }
    if (ts != kExplicitVRLittleEndian) {
      throw DicomError(DicomError::Kind::UnsupportedEncoding, "transfer syntax " + ts + " not supported",
                       it->second.value_offset);
    }
  }

  std::string missing;
  for (DicomTag t : {tags::ImagePositionPatient, tags::ImageOrientationPatient, tags::Rows, tags::Columns,
                     tags::PixelSpacing, tags::SeriesInstanceUID}) {
    if (!found.contains(t)) missing += (missing.empty() ? "" : ", ") + to_string(t);
  }
  if (!missing.empty()) throw DicomError(DicomError::Kind::MissingTag, "missing required tag(s): " + missing);

  auto decimals = [&](DicomTag tag, std::size_t expected) {
    const auto& e = found.at(tag);
    auto v = parse_decimal_string(text_of(tag), tag, e.value_offset);
    if (v.size() != expected) {
      throw DicomError(DicomError::Kind::MalformedDecimalString,
                       to_string(tag) + " holds " + std::to_string(v.size()) + " values, expected " +
                           std::to_string(expected),
                       e.value_offset);
    }
    return v;
  };
  auto ushort = [&](DicomTag tag) {
    const auto& e = found.at(tag);
    if (e.length != 2) {
      throw DicomError(DicomError::Kind::TruncatedStream, to_string(tag) + " US value must be 2 bytes", e.value_offset);
    }
    return static_cast<int>(u16_at(bytes, e.value_offset));
  };

  DicomImage img;
  const auto ipp = decimals(tags::ImagePositionPatient, 3);
  const auto iop = decimals(tags::ImageOrientationPatient, 6);
  const auto spacing = decimals(tags::PixelSpacing, 2);
  img.rows = ushort(tags::Rows);
  img.cols = ushort(tags::Columns);
  img.series_uid = trim(text_of(tags::SeriesInstanceUID));

  auto& p = img.plane;
  p.origin = {ipp[0], ipp[1], ipp[2]};
  p.row_dir = {iop[0], iop[1], iop[2]};
  p.col_dir = {iop[3], iop[4], iop[5]};
  p.row_spacing = spacing[0];
  p.col_spacing = spacing[1];
  p.rows = img.rows;
  p.cols = img.cols;
  if (!geometry::is_valid(p)) {
    throw DicomError(DicomError::Kind::InvalidGeometry, "IPP/IOP/PixelSpacing/Rows/Columns do not form a valid plane");
  }

  if (auto it = found.find(tags::PixelData); it != found.end()) {
    const auto& e = it->second;
    const std::size_t n = static_cast<std::size_t>(img.rows) * img.cols;
    if (e.length < 2 * n) {
      throw DicomError(DicomError::Kind::TruncatedStream,
                       "pixel data holds " + std::to_string(e.length) + " bytes, need " + std::to_string(2 * n),
                       e.value_offset);
    }
    std::vector<std::uint16_t> px(n);
    for (std::size_t i = 0; i < n; ++i) px[i] = u16_at(bytes, e.value_offset + 2 * i);
    img.pixel_data = std::move(px);
  }
  return img;
}

std::vector<std::uint8_t> write_dicom_subset(const DicomImage& image) {
  geometry::validate(image.plane);
  const auto& p = image.plane;
  std::vector<std::uint8_t> out(kPreamble, 0);
  for (const char c : {'D', 'I', 'C', 'M'}) out.push_back(static_cast<std::uint8_t>(c));

  std::vector<std::uint8_t> meta;
  const std::uint8_t version[2] = {0x00, 0x01};
  put_element(meta, {0x0002, 0x0001}, "OB", version);
  put_text(meta, {0x0002, 0x0002}, "UI", "1.2.840.10008.5.1.4.1.1.4", '\0');
  put_text(meta, tags::TransferSyntaxUID, "UI", kExplicitVRLittleEndian, '\0');
  std::vector<std::uint8_t> group_length;
  put_u32(group_length, static_cast<std::uint32_t>(meta.size()));
  put_element(out, {0x0002, 0x0000}, "UL", group_length);
  out.insert(out.end(), meta.begin(), meta.end());

  put_text(out, tags::SeriesInstanceUID, "UI", image.series_uid.empty() ? "1.2.3" : image.series_uid, '\0');
  put_text(out, tags::ImagePositionPatient, "DS", join_ds({p.origin.x, p.origin.y, p.origin.z}), ' ');
  put_text(out, tags::ImageOrientationPatient, "DS",
           join_ds({p.row_dir.x, p.row_dir.y, p.row_dir.z, p.col_dir.x, p.col_dir.y, p.col_dir.z}), ' ');
  std::vector<std::uint8_t> us;
  put_u16(us, static_cast<std::uint16_t>(image.rows));
  put_element(out, tags::Rows, "US", us);
  us.clear();
  put_u16(us, static_cast<std::uint16_t>(image.cols));
  put_element(out, tags::Columns, "US", us);
  put_text(out, tags::PixelSpacing, "DS", join_ds({p.row_spacing, p.col_spacing}), ' ');
  if (image.pixel_data) {
    std::vector<std::uint8_t> px;
    px.reserve(image.pixel_data->size() * 2);
    for (auto v : *image.pixel_data) put_u16(px, v);
    put_element(out, tags::PixelData, "OW", px);
  }
  return out;
}

}  // namespace viewssl::formats

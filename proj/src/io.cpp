#include "mindreg/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace mindreg {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "raw volume payloads are little-endian; big-endian hosts need byte swapping");

namespace {

struct Header {
  Eigen::Vector3i dims;
  Eigen::Vector3d spacing = Eigen::Vector3d::Ones();
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  ElementType type = ElementType::Float;
  int channels = 1;
  fs::path data_file;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T, int N>
Eigen::Matrix<T, N, 1> parse_tuple(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  Eigen::Matrix<T, N, 1> out;
  for (int i = 0; i < N; ++i) {
    if (!(in >> out[i])) fail(ErrorCode::MalformedHeader, "header key " + key + " needs " + std::to_string(N) + " values");
  }
  std::string rest;
  if (in >> rest) fail(ErrorCode::MalformedHeader, "header key " + key + " has trailing values");
  return out;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::size_t element_size(ElementType t) {
  switch (t) {
    case ElementType::Float: return 4;
    case ElementType::Short: return 2;
    case ElementType::UChar: return 1;
  }
  return 0;
}

const char* element_tag(ElementType t) {
  switch (t) {
    case ElementType::Float: return "MET_FLOAT";
    case ElementType::Short: return "MET_SHORT";
    case ElementType::UChar: return "MET_UCHAR";
  }
  return "";
}

Header read_header(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open header " + path.string());

  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::MalformedHeader, "header line without '=': " + trim(line));
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  auto need = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorCode::MalformedHeader, "header is missing " + key);
    return it->second;
  };

  Header h;
  if (trim(need("NDims")) != "3") fail(ErrorCode::MalformedHeader, "only NDims = 3 is supported");
  h.dims = parse_tuple<int, 3>("DimSize", need("DimSize"));
  if ((h.dims.array() <= 0).any()) fail(ErrorCode::MalformedHeader, "DimSize must be positive");
  if (kv.count("ElementSpacing")) h.spacing = parse_tuple<double, 3>("ElementSpacing", kv["ElementSpacing"]);
  if ((h.spacing.array() <= 0.0).any()) fail(ErrorCode::MalformedHeader, "ElementSpacing must be positive");
  if (kv.count("Offset")) h.origin = parse_tuple<double, 3>("Offset", kv["Offset"]);
  if (kv.count("ElementNumberOfChannels")) {
    h.channels = parse_tuple<int, 1>("ElementNumberOfChannels", kv["ElementNumberOfChannels"])[0];
    if (h.channels != 1 && h.channels != 3)
      fail(ErrorCode::MalformedHeader, "ElementNumberOfChannels must be 1 or 3");
  }
  if (kv.count("CompressedData") && kv["CompressedData"] != "False")
    fail(ErrorCode::UnsupportedElementType, "compressed payloads are not supported");
  if (kv.count("BinaryDataByteOrderMSB") && kv["BinaryDataByteOrderMSB"] != "False")
    fail(ErrorCode::UnsupportedElementType, "big-endian payloads are not supported");

  const std::string& type = need("ElementType");
  if (type == "MET_FLOAT")
    h.type = ElementType::Float;
  else if (type == "MET_SHORT")
    h.type = ElementType::Short;
  else if (type == "MET_UCHAR")
    h.type = ElementType::UChar;
  else
    fail(ErrorCode::UnsupportedElementType, "unsupported ElementType " + type);

  const std::string& data = need("ElementDataFile");
  if (data == "LOCAL" || data == "LIST") fail(ErrorCode::MalformedHeader, "ElementDataFile must name a raw file");
  h.data_file = fs::path(data).is_absolute() ? fs::path(data) : path.parent_path() / data;
  return h;
}

// Returns the payload converted to float, channels interleaved.
std::vector<float> read_payload(const Header& h) {
  const std::size_t count = static_cast<std::size_t>(h.dims.cast<Index>().prod()) * static_cast<std::size_t>(h.channels);
  std::ifstream in(h.data_file, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open data file " + h.data_file.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t esize = element_size(h.type);
  if (bytes.size() != count * esize)
    fail(ErrorCode::ElementCountMismatch,
         "header declares " + std::to_string(count) + " elements but " + h.data_file.string() + " holds " +
             std::to_string(bytes.size() / esize) + (bytes.size() % esize ? " (plus a partial element)" : ""));

  std::vector<float> out(count);
  switch (h.type) {
    case ElementType::Float:
      std::memcpy(out.data(), bytes.data(), bytes.size());
      break;
    case ElementType::Short:
      for (std::size_t i = 0; i < count; ++i) {
        std::int16_t v;
        std::memcpy(&v, bytes.data() + 2 * i, 2);
        out[i] = static_cast<float>(v);
      }
      break;
    case ElementType::UChar:
      for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<float>(static_cast<unsigned char>(bytes[i]));
      break;
  }
  return out;
}

void write_pair(const fs::path& header, const Grid& g, ElementType type, int channels, const void* payload,
                std::size_t bytes) {
  fs::path raw = header;
  raw.replace_extension(".raw");
  {
    std::ofstream out(header, std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write header " + header.string());
    out << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "BinaryData = True\n"
        << "BinaryDataByteOrderMSB = False\n"
        << "CompressedData = False\n"
        << "DimSize = " << g.nx() << ' ' << g.ny() << ' ' << g.nz() << '\n'
        << "ElementSpacing = " << format_double(g.spacing.x()) << ' ' << format_double(g.spacing.y()) << ' '
        << format_double(g.spacing.z()) << '\n'
        << "Offset = " << format_double(g.origin.x()) << ' ' << format_double(g.origin.y()) << ' '
        << format_double(g.origin.z()) << '\n';
    if (channels != 1) out << "ElementNumberOfChannels = " << channels << '\n';
    out << "ElementType = " << element_tag(type) << '\n'
        << "ElementDataFile = " << raw.filename().string() << '\n';
    if (!out) fail(ErrorCode::Io, "failed writing header " + header.string());
  }
  std::ofstream out(raw, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write data file " + raw.string());
  out.write(static_cast<const char*>(payload), static_cast<std::streamsize>(bytes));
  if (!out) fail(ErrorCode::Io, "failed writing data file " + raw.string());
}

}  // namespace

ScalarVolume read_volume(const fs::path& header) {
  const Header h = read_header(header);
  if (h.channels != 1) fail(ErrorCode::MalformedHeader, header.string() + " is a vector image, expected scalar");
  const auto payload = read_payload(h);
  ScalarVolume vol(Grid(h.dims, h.spacing, h.origin));
  std::memcpy(vol.data().data(), payload.data(), payload.size() * sizeof(float));
  return vol;
}

void write_volume(const ScalarVolume& vol, const fs::path& header) {
  write_pair(header, vol.grid(), ElementType::Float, 1, vol.data().data(),
             static_cast<std::size_t>(vol.size()) * sizeof(float));
}

DisplacementField read_field(const fs::path& header) {
  const Header h = read_header(header);
  if (h.channels != 3) fail(ErrorCode::MalformedHeader, header.string() + " needs ElementNumberOfChannels = 3");
  const auto payload = read_payload(h);
  DisplacementField field(Grid(h.dims, h.spacing, h.origin));
  std::memcpy(field.data().data(), payload.data(), payload.size() * sizeof(float));
  return field;
}

void write_field(const DisplacementField& field, const fs::path& header) {
  write_pair(header, field.grid(), ElementType::Float, 3, field.data().data(),
             static_cast<std::size_t>(field.size()) * 3 * sizeof(float));
}

BinaryMask read_mask(const fs::path& header) {
  const ScalarVolume vol = read_volume(header);
  BinaryMask mask(vol.grid());
  for (Index i = 0; i < vol.size(); ++i) mask[i] = vol[i] != 0.0f ? 1 : 0;
  return mask;
}

void write_mask(const BinaryMask& mask, const fs::path& header) {
  write_pair(header, mask.grid(), ElementType::UChar, 1, mask.data().data(), static_cast<std::size_t>(mask.size()));
}

}  // namespace mindreg

#include "hybridreg/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace hybridreg {

namespace fs = std::filesystem;

namespace {

template <typename T>
T byteswap_value(T v) {
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  std::reverse(b.begin(), b.end());
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t off, bool swap) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return swap ? byteswap_value(v) : v;
}

template <typename T>
void put(std::vector<char>& buf, std::size_t off, T v) {
  std::memcpy(buf.data() + off, &v, sizeof(T));
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_file(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

int bytes_per_voxel(nifti::DataType t) {
  switch (t) {
    case nifti::DataType::kUInt8: return 1;
    case nifti::DataType::kInt16: return 2;
    case nifti::DataType::kFloat32: return 4;
  }
  return 0;
}

std::vector<float> decode(const char* src, std::size_t n, nifti::DataType t, bool swap) {
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (t) {
      case nifti::DataType::kUInt8:
        out[i] = static_cast<float>(static_cast<unsigned char>(src[i]));
        break;
      case nifti::DataType::kInt16: {
        std::int16_t v;
        std::memcpy(&v, src + 2 * i, 2);
        out[i] = static_cast<float>(swap ? byteswap_value(v) : v);
        break;
      }
      case nifti::DataType::kFloat32: {
        float v;
        std::memcpy(&v, src + 4 * i, 4);
        out[i] = swap ? byteswap_value(v) : v;
        break;
      }
    }
  }
  return out;
}

void encode(std::vector<char>& dst, std::size_t off, std::span<const float> data, nifti::DataType t) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    switch (t) {
      case nifti::DataType::kUInt8: {
        const float v = data[i];
        if (!(v >= 0.0f && v <= 255.0f) || v != std::floor(v))
          throw ArgumentError("value " + std::to_string(v) + " does not fit uint8");
        dst[off + i] = static_cast<char>(static_cast<unsigned char>(v));
        break;
      }
      case nifti::DataType::kInt16: {
        const float v = data[i];
        if (!(v >= -32768.0f && v <= 32767.0f) || v != std::floor(v))
          throw ArgumentError("value " + std::to_string(v) + " does not fit int16");
        put(dst, off + 2 * i, static_cast<std::int16_t>(v));
        break;
      }
      case nifti::DataType::kFloat32:
        put(dst, off + 4 * i, data[i]);
        break;
    }
  }
}

nifti::DataType parse_datatype(int code, const std::string& where) {
  switch (code) {
    case 2: return nifti::DataType::kUInt8;
    case 4: return nifti::DataType::kInt16;
    case 16: return nifti::DataType::kFloat32;
    default: throw FormatError(where + ": unsupported datatype " + std::to_string(code));
  }
}

bool is_raw_path(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".raw" || ext == ".json";
}

bool is_nifti_path(const fs::path& p) { return p.extension() == ".nii"; }

struct AnyContents {
  Grid grid;
  int components = 1;
  std::vector<float> data;
};

AnyContents read_any(const fs::path& path) {
  if (is_nifti_path(path)) {
    auto c = nifti::read(path);
    return {c.header.grid, c.header.components, std::move(c.data)};
  }
  if (is_raw_path(path)) {
    auto c = rawio::read(path);
    return {c.grid, c.components, std::move(c.data)};
  }
  throw FormatError(path.string() + ": unsupported file extension (expected .nii, .raw or .json)");
}

void write_any(const fs::path& path, const Grid& grid, nifti::DataType t, std::span<const float> data) {
  if (is_nifti_path(path)) return nifti::write(path, grid, 1, t, data);
  if (is_raw_path(path)) return rawio::write(path, grid, 1, t, data);
  throw FormatError(path.string() + ": unsupported file extension (expected .nii, .raw or .json)");
}

}  // namespace

namespace nifti {

Contents read(const fs::path& path) {
  const auto bytes = read_file(path);
  const std::string where = path.string();
  if (bytes.size() < static_cast<std::size_t>(kHeaderSize)) throw IoError(where + ": truncated header");

  Contents out;
  Header& h = out.header;
  const std::int32_t sizeof_hdr = get<std::int32_t>(bytes, 0, false);
  if (sizeof_hdr == kHeaderSize) {
    h.byte_swapped = false;
  } else if (byteswap_value(sizeof_hdr) == kHeaderSize) {
    h.byte_swapped = true;
  } else {
    throw FormatError(where + ": sizeof_hdr is not 348");
  }
  const bool sw = h.byte_swapped;

  if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0)
    throw FormatError(where + ": magic is not \"n+1\" (only single-file NIfTI-1 is supported)");

  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[static_cast<std::size_t>(i)] = get<std::int16_t>(bytes, 40 + 2 * i, sw);
  if (dim[0] < 1 || dim[0] > 7) throw FormatError(where + ": dim[0] out of range");
  for (int i = 1; i <= dim[0]; ++i)
    if (dim[static_cast<std::size_t>(i)] < 1) throw FormatError(where + ": dim[" + std::to_string(i) + "] < 1");
  for (int a = 0; a < 3; ++a) h.grid.dims[a] = a + 1 <= dim[0] ? dim[static_cast<std::size_t>(a + 1)] : 1;
  h.components = 1;
  for (int i = 4; i <= dim[0]; ++i) h.components *= dim[static_cast<std::size_t>(i)];

  h.intent_code = get<std::int16_t>(bytes, 68, sw);
  h.datatype = parse_datatype(get<std::int16_t>(bytes, 70, sw), where);

  for (int a = 0; a < 3; ++a) {
    const float p = get<float>(bytes, 80 + 4 * a, sw);
    h.grid.spacing[a] = p == 0.0f ? 1.0 : std::abs(static_cast<double>(p));
  }
  const float vox_offset = get<float>(bytes, 108, sw);
  h.scl_slope = get<float>(bytes, 112, sw);
  h.scl_inter = get<float>(bytes, 116, sw);

  const std::int16_t qform_code = get<std::int16_t>(bytes, 252, sw);
  const std::int16_t sform_code = get<std::int16_t>(bytes, 254, sw);
  if (sform_code > 0) {
    for (int a = 0; a < 3; ++a) h.grid.origin[a] = get<float>(bytes, 280 + 16 * a + 12, sw);
  } else if (qform_code > 0) {
    for (int a = 0; a < 3; ++a) h.grid.origin[a] = get<float>(bytes, 268 + 4 * a, sw);
  }
  try {
    h.grid.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(where + ": " + e.what());
  }

  const auto offset = static_cast<std::size_t>(vox_offset);
  if (vox_offset < static_cast<float>(kHeaderSize) || static_cast<float>(offset) != vox_offset)
    throw FormatError(where + ": invalid vox_offset");
  const std::size_t n = h.grid.voxel_count() * static_cast<std::size_t>(h.components);
  const std::size_t need = offset + n * static_cast<std::size_t>(bytes_per_voxel(h.datatype));
  if (bytes.size() < need)
    throw IoError(where + ": truncated voxel data (" + std::to_string(bytes.size()) + " of " + std::to_string(need) +
                  " bytes)");

  out.data = decode(bytes.data() + offset, n, h.datatype, sw);
  const bool scaled = h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
  if (scaled)
    for (auto& v : out.data) v = v * h.scl_slope + h.scl_inter;
  return out;
}

void write(const fs::path& path, const Grid& grid, int components, DataType datatype, std::span<const float> data,
           short intent_code) {
  grid.validate();
  if (components < 1) throw ArgumentError("components must be >= 1");
  const std::size_t n = grid.voxel_count() * static_cast<std::size_t>(components);
  if (data.size() != n) throw ArgumentError("data length does not match grid and components");
  for (int a = 0; a < 3; ++a)
    if (grid.dims[a] > 32767) throw ArgumentError("dims exceed NIfTI-1 limits");

  const int bpv = bytes_per_voxel(datatype);
  std::vector<char> buf(static_cast<std::size_t>(kVoxOffset) + n * static_cast<std::size_t>(bpv), 0);
  put<std::int32_t>(buf, 0, kHeaderSize);
  std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(grid.dims[0]), static_cast<std::int16_t>(grid.dims[1]),
                                  static_cast<std::int16_t>(grid.dims[2]), 1, 1, 1, 1};
  if (components > 1) {
    dim[0] = 5;
    dim[5] = static_cast<std::int16_t>(components);
  }
  for (int i = 0; i < 8; ++i) put(buf, 40 + 2 * static_cast<std::size_t>(i), dim[static_cast<std::size_t>(i)]);
  put<std::int16_t>(buf, 68, intent_code);
  put<std::int16_t>(buf, 70, static_cast<std::int16_t>(datatype));
  put<std::int16_t>(buf, 72, static_cast<std::int16_t>(8 * bpv));
  std::array<float, 8> pixdim{1.0f, static_cast<float>(grid.spacing[0]), static_cast<float>(grid.spacing[1]),
                              static_cast<float>(grid.spacing[2]), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) put(buf, 76 + 4 * static_cast<std::size_t>(i), pixdim[static_cast<std::size_t>(i)]);
  put<float>(buf, 108, static_cast<float>(kVoxOffset));
  put<float>(buf, 112, 0.0f);
  put<float>(buf, 116, 0.0f);
  buf[123] = 2;  // xyzt_units: mm
  put<std::int16_t>(buf, 252, 1);
  put<std::int16_t>(buf, 254, 1);
  for (int a = 0; a < 3; ++a) {
    put<float>(buf, 268 + 4 * static_cast<std::size_t>(a), static_cast<float>(grid.origin[a]));
    for (int c = 0; c < 3; ++c)
      put<float>(buf, 280 + 16 * static_cast<std::size_t>(a) + 4 * static_cast<std::size_t>(c),
                 a == c ? static_cast<float>(grid.spacing[a]) : 0.0f);
    put<float>(buf, 280 + 16 * static_cast<std::size_t>(a) + 12, static_cast<float>(grid.origin[a]));
  }
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  encode(buf, static_cast<std::size_t>(kVoxOffset), data, datatype);
  write_file(path, buf);
}

}  // namespace nifti

namespace rawio {

namespace {
fs::path with_ext(const fs::path& p, const char* ext) {
  fs::path out = p;
  out.replace_extension(ext);
  return out;
}

std::string dtype_name(nifti::DataType t) {
  switch (t) {
    case nifti::DataType::kUInt8: return "u8";
    case nifti::DataType::kInt16: return "i16";
    case nifti::DataType::kFloat32: return "f32";
  }
  return "f32";
}
}  // namespace

Contents read(const fs::path& path) {
  const fs::path json_path = with_ext(path, ".json");
  const fs::path raw_path = with_ext(path, ".raw");
  const auto text = read_file(json_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path.string() + ": invalid JSON sidecar: " + e.what());
  }
  Contents out;
  const std::string where = json_path.string();
  try {
    const auto dims = j.at("dims").get<std::vector<int>>();
    if (dims.size() != 3) throw FormatError(where + ": field \"dims\" must have 3 entries");
    const auto spacing = j.value("spacing", std::vector<double>{1.0, 1.0, 1.0});
    const auto origin = j.value("origin", std::vector<double>{0.0, 0.0, 0.0});
    if (spacing.size() != 3) throw FormatError(where + ": field \"spacing\" must have 3 entries");
    if (origin.size() != 3) throw FormatError(where + ": field \"origin\" must have 3 entries");
    for (int a = 0; a < 3; ++a) {
      out.grid.dims[a] = dims[static_cast<std::size_t>(a)];
      out.grid.spacing[a] = spacing[static_cast<std::size_t>(a)];
      out.grid.origin[a] = origin[static_cast<std::size_t>(a)];
    }
    out.components = j.value("components", 1);
    out.units = j.value("units", std::string{});
    const std::string dtype = j.at("dtype").get<std::string>();
    nifti::DataType t;
    if (dtype == "u8") t = nifti::DataType::kUInt8;
    else if (dtype == "i16") t = nifti::DataType::kInt16;
    else if (dtype == "f32") t = nifti::DataType::kFloat32;
    else throw FormatError(where + ": unsupported dtype \"" + dtype + "\"");

    try {
      out.grid.validate();
    } catch (const ArgumentError& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (out.components < 1) throw FormatError(where + ": field \"components\" must be >= 1");
    const auto bytes = read_file(raw_path);
    const std::size_t n = out.grid.voxel_count() * static_cast<std::size_t>(out.components);
    const std::size_t need = n * static_cast<std::size_t>(bytes_per_voxel(t));
    if (bytes.size() < need) throw IoError(raw_path.string() + ": truncated voxel data");
    static_assert(std::endian::native == std::endian::little, "raw sidecar reader assumes a little-endian host");
    out.data = decode(bytes.data(), n, t, false);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  return out;
}

void write(const fs::path& path, const Grid& grid, int components, nifti::DataType datatype,
           std::span<const float> data, const std::string& units) {
  grid.validate();
  const std::size_t n = grid.voxel_count() * static_cast<std::size_t>(components);
  if (data.size() != n) throw ArgumentError("data length does not match grid and components");
  std::vector<char> buf(n * static_cast<std::size_t>(bytes_per_voxel(datatype)));
  encode(buf, 0, data, datatype);
  write_file(with_ext(path, ".raw"), buf);

  nlohmann::ordered_json j;
  j["dims"] = {grid.dims[0], grid.dims[1], grid.dims[2]};
  j["spacing"] = {grid.spacing[0], grid.spacing[1], grid.spacing[2]};
  j["origin"] = {grid.origin[0], grid.origin[1], grid.origin[2]};
  j["dtype"] = dtype_name(datatype);
  if (components != 1) j["components"] = components;
  if (!units.empty()) j["units"] = units;
  const std::string text = j.dump(2) + "\n";
  write_file(with_ext(path, ".json"), std::vector<char>(text.begin(), text.end()));
}

}  // namespace rawio

Volume load_volume(const fs::path& path) {
  auto c = read_any(path);
  if (c.components != 1) throw FormatError(path.string() + ": expected a scalar volume");
  Volume v(c.grid, std::move(c.data));
  v.require_finite();
  return v;
}

LabelVolume load_labels(const fs::path& path) {
  auto c = read_any(path);
  if (c.components != 1) throw FormatError(path.string() + ": expected a scalar label map");
  std::vector<Label> labels(c.data.size());
  for (std::size_t i = 0; i < c.data.size(); ++i) {
    const float v = c.data[i];
    if (!(v >= 0.0f && v <= 65535.0f) || v != std::floor(v))
      throw FormatError(path.string() + ": label values must be non-negative integers");
    labels[i] = static_cast<Label>(v);
  }
  return LabelVolume(c.grid, std::move(labels));
}

void save_volume(const Volume& v, const fs::path& path) { write_any(path, v.grid(), nifti::DataType::kFloat32, v.data()); }

void save_labels(const LabelVolume& labels, const fs::path& path) {
  if (!labels.label_ids().empty() && labels.label_ids().back() > 255)
    throw ArgumentError("label id " + std::to_string(labels.label_ids().back()) + " does not fit uint8");
  std::vector<float> data(labels.data().begin(), labels.data().end());
  write_any(path, labels.grid(), nifti::DataType::kUInt8, data);
}

}  // namespace hybridreg

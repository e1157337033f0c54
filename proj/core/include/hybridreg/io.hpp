#pragma once

#include <filesystem>

#include "hybridreg/volume.hpp"

namespace hybridreg {

// Readers and writers for single-file uncompressed NIfTI-1 (`.nii`) and the
// raw + JSON sidecar pair (`<name>.raw`, `<name>.json`). The format is chosen
// from the extension: `.nii` selects NIfTI, `.raw`/`.json` select the sidecar
// pair. Supported on-disk datatypes are uint8, int16 and float32.
//
// Volumes are written as float32, label maps as uint8 (ids above 255 are
// rejected with ArgumentError).

Volume load_volume(const std::filesystem::path& path);
LabelVolume load_labels(const std::filesystem::path& path);

void save_volume(const Volume& v, const std::filesystem::path& path);
void save_labels(const LabelVolume& labels, const std::filesystem::path& path);

namespace nifti {

inline constexpr int kHeaderSize = 348;
inline constexpr int kVoxOffset = 352;

enum class DataType : short { kUInt8 = 2, kInt16 = 4, kFloat32 = 16 };

inline constexpr short kIntentVector = 1007;

// Decoded subset of a NIfTI-1 header. `components` is the product of dims
// 4..7 (1 for a scalar volume, 3 for a displacement field).
struct Header {
  Grid grid;
  int components = 1;
  DataType datatype = DataType::kFloat32;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  short intent_code = 0;
  bool byte_swapped = false;
};

// Reads the header and all voxel data, converted to float and channel-major
// (component c occupies [c*N, (c+1)*N)).
struct Contents {
  Header header;
  std::vector<float> data;
};
Contents read(const std::filesystem::path& path);

// Writes `components` channels stored channel-major in `data`.
void write(const std::filesystem::path& path, const Grid& grid, int components, DataType datatype,
           std::span<const float> data, short intent_code = 0);

}  // namespace nifti

namespace rawio {

struct Contents {
  Grid grid;
  int components = 1;
  std::vector<float> data;
  std::string units;  // empty unless the sidecar carries a "units" tag
};

Contents read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Grid& grid, int components, nifti::DataType datatype,
           std::span<const float> data, const std::string& units = {});

}  // namespace rawio

}  // namespace hybridreg

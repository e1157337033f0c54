#include <vector>

#include "hybridreg/field.hpp"
#include "hybridreg/io.hpp"

namespace hybridreg {

namespace {
std::vector<float> interleave_channels(const DisplacementField& f) {
  std::vector<float> data;
  data.reserve(3 * f.size());
  for (int c = 0; c < 3; ++c) data.insert(data.end(), f.channel(c).begin(), f.channel(c).end());
  return data;
}

DisplacementField from_channels(const Grid& g, int components, const std::vector<float>& data,
                                const std::string& where) {
  if (components != 3) throw FormatError(where + ": displacement field must have 3 components");
  const std::size_t n = g.voxel_count();
  DisplacementField f(g, std::vector<float>(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n)),
                      std::vector<float>(data.begin() + static_cast<std::ptrdiff_t>(n),
                                         data.begin() + static_cast<std::ptrdiff_t>(2 * n)),
                      std::vector<float>(data.begin() + static_cast<std::ptrdiff_t>(2 * n), data.end()));
  f.require_finite();
  return f;
}
}  // namespace

void save_field(const DisplacementField& f, const std::filesystem::path& path) {
  const auto data = interleave_channels(f);
  const auto ext = path.extension();
  if (ext == ".nii") {
    nifti::write(path, f.grid(), 3, nifti::DataType::kFloat32, data, nifti::kIntentVector);
  } else if (ext == ".raw" || ext == ".json") {
    rawio::write(path, f.grid(), 3, nifti::DataType::kFloat32, data, "voxel");
  } else {
    throw FormatError(path.string() + ": unsupported file extension for a displacement field");
  }
}

DisplacementField load_field(const std::filesystem::path& path) {
  const auto ext = path.extension();
  if (ext == ".nii") {
    auto c = nifti::read(path);
    return from_channels(c.header.grid, c.header.components, c.data, path.string());
  }
  if (ext == ".raw" || ext == ".json") {
    auto c = rawio::read(path);
    if (!c.units.empty() && c.units != "voxel")
      throw FormatError(path.string() + ": field \"units\" must be \"voxel\"");
    return from_channels(c.grid, c.components, c.data, path.string());
  }
  throw FormatError(path.string() + ": unsupported file extension for a displacement field");
}

}  // namespace hybridreg

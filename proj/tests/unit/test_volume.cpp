#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include "hybridreg/io.hpp"
#include "hybridreg/preprocess.hpp"
#include "oracles.hpp"

using namespace hybridreg;
using namespace hybridreg::testing;

namespace {

// Voxel data must match bit for bit; NIfTI keeps spacing and origin as float32,
// so geometry is compared to within 1e-6 mm.
bool bit_equal(const Volume& a, const Volume& b) {
  return same_geometry(a.grid(), b.grid()) && a.size() == b.size() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

std::set<Label> ids_of(const LabelVolume& l) { return {l.label_ids().begin(), l.label_ids().end()}; }

bool subset(const std::set<Label>& a, const std::set<Label>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(Volume(make_grid(0, 2, 2)), ArgumentError);
  CHECK_THROWS_AS(Volume(make_grid(2, 2, 2, {1.0, 0.0, 1.0})), ArgumentError);
  CHECK_THROWS_AS(Volume(make_grid(2, 2, 2), std::vector<float>(7)), ArgumentError);
  const Grid g = make_grid(3, 4, 5);
  CHECK(g.index(1, 2, 3) == 1 + 3 * (2 + 4 * 3));
  CHECK(g.coords(g.index(2, 3, 4)) == Index3{2, 3, 4});
}

TEST_CASE("label ids are sorted distinct nonzero values") {
  LabelVolume l(make_grid(3, 1, 1), {4, 0, 2});
  CHECK(l.label_ids() == std::vector<Label>{2, 4});
  CHECK(l.count(4) == 1);
  CHECK_FALSE(l.has_label(3));
}

TEST_CASE("nifti header with dims 106x92x52 loads with the declared geometry") {
  TempDir dir("vol");
  Grid g = make_grid(106, 92, 52, {1.0, 1.0, 1.0});
  save_volume(Volume(g), dir / "big.nii");
  const Volume v = load_volume(dir / "big.nii");
  CHECK(v.size() == 507104);
  CHECK(v.dims() == Index3{106, 92, 52});
  // 348-byte header, 4 bytes of extension flags, then float32 voxels.
  CHECK(std::filesystem::file_size(dir / "big.nii") == 352u + 4u * 507104u);
}

TEST_CASE("save then load is bit exact") {
  TempDir dir("vol");
  Rng rng(11);
  SUBCASE("single zero voxel") {
    const Volume v(make_grid(1, 1, 1));
    save_volume(v, dir / "one.nii");
    CHECK(bit_equal(load_volume(dir / "one.nii"), v));
  }
  SUBCASE("random 8x7x5 float volume, nifti and raw") {
    Grid g = make_grid(8, 7, 5, {0.8, 1.25, 3.0});
    g.origin = {-4.5, 2.0, 10.25};
    const Volume v = random_volume(g, rng, -1000.0, 1000.0);
    save_volume(v, dir / "r.nii");
    save_volume(v, dir / "r.raw");
    CHECK(bit_equal(load_volume(dir / "r.nii"), v));
    CHECK(bit_equal(load_volume(dir / "r.raw"), v));
    CHECK(bit_equal(load_volume(dir / "r.json"), v));
  }
  SUBCASE("label map keeps its ids") {
    const LabelVolume l(make_grid(4, 3, 2), {1, 2, 3, 4, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 0, 0, 0, 0, 1, 2, 3, 4, 0, 1});
    save_labels(l, dir / "l.nii");
    save_labels(l, dir / "l.raw");
    for (const char* name : {"l.nii", "l.raw"}) {
      const LabelVolume back = load_labels(dir / name);
      CHECK(back.label_ids() == std::vector<Label>{1, 2, 3, 4});
      CHECK(std::equal(back.data().begin(), back.data().end(), l.data().begin(), l.data().end()));
    }
  }
}

TEST_CASE("int16 and uint8 on-disk types load as values") {
  TempDir dir("vol");
  const Grid g = make_grid(3, 2, 1);
  const std::vector<float> vals{-300, 0, 7, 32767, -32768, 12};
  nifti::write(dir / "s.nii", g, 1, nifti::DataType::kInt16, vals);
  const Volume v = load_volume(dir / "s.nii");
  for (std::size_t i = 0; i < vals.size(); ++i) CHECK(v[i] == vals[i]);
  CHECK_THROWS_AS(nifti::write(dir / "u.nii", g, 1, nifti::DataType::kUInt8, vals), ArgumentError);
}

TEST_CASE("format and I/O errors") {
  TempDir dir("vol");
  save_volume(Volume(make_grid(4, 4, 4)), dir / "v.nii");
  const std::string bytes = read_file(dir / "v.nii");

  SUBCASE("unsupported datatype names the field") {
    std::string bad = bytes;
    const short float64 = 64;
    std::memcpy(bad.data() + 70, &float64, sizeof float64);
    std::ofstream(dir / "bad.nii", std::ios::binary) << bad;
    try {
      (void)load_volume(dir / "bad.nii");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("datatype") != std::string::npos);
    }
  }
  SUBCASE("truncated voxel data") {
    std::ofstream(dir / "short.nii", std::ios::binary) << bytes.substr(0, bytes.size() - 10);
    CHECK_THROWS_AS((void)load_volume(dir / "short.nii"), IoError);
  }
  SUBCASE("missing file and unknown extension") {
    CHECK_THROWS_AS((void)load_volume(dir / "absent.nii"), IoError);
    CHECK_THROWS_AS((void)load_volume(dir / "v.mha"), FormatError);
  }
}

TEST_CASE("crop") {
  Rng rng(3);
  const Grid g = make_grid(3, 3, 3, {2.0, 1.0, 0.5});
  const Volume v = random_volume(g, rng);

  SUBCASE("full extent is the identity") { CHECK(bit_equal(crop(v, {{0, 0, 0}, {3, 3, 3}}), v)); }
  SUBCASE("single centre voxel") {
    const Volume c = crop(v, {{1, 1, 1}, {2, 2, 2}});
    CHECK(c.size() == 1);
    CHECK(c[0] == v(1, 1, 1));
    CHECK(c.grid().origin == Vec3{2.0, 1.0, 0.5});
  }
  SUBCASE("bad boxes") {
    CHECK_THROWS_AS(crop(v, {{1, 1, 1}, {1, 2, 2}}), ArgumentError);
    CHECK_THROWS_AS(crop(v, {{0, 0, 0}, {4, 3, 3}}), ArgumentError);
    CHECK_THROWS_AS(crop(v, {{-1, 0, 0}, {2, 3, 3}}), ArgumentError);
  }
  SUBCASE("random label crops never add ids") {
    const LabelVolume l = random_labels(make_grid(9, 8, 7), rng, 6, 0.3);
    for (int t = 0; t < 100; ++t) {
      Box b;
      for (int a = 0; a < 3; ++a) {
        std::uniform_int_distribution<int> lo(0, l.dims()[a] - 1);
        b.lo[a] = lo(rng);
        std::uniform_int_distribution<int> hi(b.lo[a] + 1, l.dims()[a]);
        b.hi[a] = hi(rng);
      }
      CHECK(subset(ids_of(crop(l, b)), ids_of(l)));
    }
  }
  SUBCASE("crop of a crop equals the composed crop") {
    const Volume big = random_volume(make_grid(10, 9, 8), rng);
    const Box outer{{1, 2, 0}, {9, 8, 7}};
    const Box inner{{2, 1, 3}, {6, 5, 7}};
    const Box composed{{3, 3, 3}, {7, 7, 7}};
    CHECK(bit_equal(crop(crop(big, outer), inner), crop(big, composed)));
  }
}

TEST_CASE("label bounding box") {
  std::vector<Label> data(6 * 6 * 6, 0);
  const Grid g = make_grid(6, 6, 6);
  data[g.index(2, 3, 4)] = 5;
  const LabelVolume l(g, data);
  CHECK(label_bounding_box(l, 5, 0) == Box{{2, 3, 4}, {3, 4, 5}});
  CHECK(label_bounding_box(l, 5, 100) == Box{{0, 0, 0}, {6, 6, 6}});
  CHECK_THROWS_AS(label_bounding_box(l, 1, 0), NotFoundError);

  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const LabelVolume m = random_labels(make_grid(7, 6, 5), rng, 2, 0.05);
    for (Label id : m.label_ids()) {
      const int margin = t % 3;
      Index3 lo{99, 99, 99}, hi{-1, -1, -1};
      for (int z = 0; z < 5; ++z)
        for (int y = 0; y < 6; ++y)
          for (int x = 0; x < 7; ++x)
            if (m(x, y, z) == id) {
              const Index3 p{x, y, z};
              for (int a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], p[a]);
                hi[a] = std::max(hi[a], p[a] + 1);
              }
            }
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::max(0, lo[a] - margin);
        hi[a] = std::min(m.dims()[a], hi[a] + margin);
      }
      CHECK(label_bounding_box(m, id, margin) == Box{lo, hi});
    }
  }
}

TEST_CASE("resize_trilinear") {
  Rng rng(8);
  const Grid g = make_grid(6, 5, 4, {1.0, 2.0, 3.0});
  const Volume v = random_volume(g, rng, -2.0, 5.0);

  SUBCASE("identity dims reproduce the input") { CHECK(bit_equal(resize_trilinear(v, g.dims), v)); }
  SUBCASE("constant stays constant") {
    const Volume c(g, 3.25f);
    const Volume r = resize_trilinear(c, {11, 3, 7});
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i] == 3.25f);
  }
  SUBCASE("ramp downscale matches the analytic ramp") {
    const Grid rg = make_grid(16, 12, 8);
    Volume ramp(rg);
    for (int z = 0; z < 8; ++z)
      for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 16; ++x) ramp(x, y, z) = static_cast<float>(0.5 * x - 0.25 * y + 0.125 * z);
    const Volume r = resize_trilinear(ramp, {8, 6, 4});
    CHECK(r.grid().spacing == Vec3{2.0, 2.0, 2.0});
    for (int z = 0; z < 4; ++z)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x) {
          // Output voxel j samples input coordinate 2j + 0.5.
          const double expect = 0.5 * (2 * x + 0.5) - 0.25 * (2 * y + 0.5) + 0.125 * (2 * z + 0.5);
          CHECK(std::abs(r(x, y, z) - expect) <= 1e-5);
        }
  }
  SUBCASE("output stays within input bounds") {
    const auto [mn, mx] = std::minmax_element(v.data().begin(), v.data().end());
    for (const Index3 t : {Index3{3, 9, 2}, Index3{12, 2, 7}, Index3{1, 1, 1}}) {
      const Volume r = resize_trilinear(v, t);
      for (std::size_t i = 0; i < r.size(); ++i) {
        CHECK(r[i] >= *mn);
        CHECK(r[i] <= *mx);
      }
    }
  }
  CHECK_THROWS_AS(resize_trilinear(v, {0, 2, 2}), ArgumentError);
}

TEST_CASE("resize_nearest") {
  Rng rng(9);
  const LabelVolume l = random_labels(make_grid(6, 5, 4), rng, 5, 0.4);
  const LabelVolume same = resize_nearest(l, l.dims());
  CHECK(std::equal(same.data().begin(), same.data().end(), l.data().begin(), l.data().end()));

  const LabelVolume block(make_grid(4, 4, 4), std::vector<Label>(64, 3));
  const LabelVolume big = resize_nearest(block, {9, 2, 5});
  CHECK(std::all_of(big.data().begin(), big.data().end(), [](Label v) { return v == 3; }));

  std::uniform_int_distribution<int> d(1, 12);
  for (int t = 0; t < 100; ++t) {
    const LabelVolume src = random_labels(make_grid(d(rng), d(rng), d(rng)), rng, 7, 0.3);
    CHECK(subset(ids_of(resize_nearest(src, {d(rng), d(rng), d(rng)})), ids_of(src)));
  }
}

TEST_CASE("normalize_minmax maps to the unit interval") {
  Rng rng(1);
  const Volume n = normalize_minmax(random_volume(make_grid(5, 5, 5), rng, -7.0, 3.0));
  const auto [mn, mx] = std::minmax_element(n.data().begin(), n.data().end());
  CHECK(*mn == 0.0f);
  CHECK(*mx == doctest::Approx(1.0));
}

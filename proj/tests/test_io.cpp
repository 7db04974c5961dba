#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "luna/csv.hpp"
#include "luna/froc.hpp"
#include "luna/metaimage.hpp"
#include "luna/reference.hpp"
#include "support.hpp"

using namespace luna;
using testing_support::TempDir;
using testing_support::read_text;
using testing_support::write_text;

namespace {

std::string header_4x4x4(const std::string& extra = "") {
  return "ObjectType = Image\nNDims = 3\nBinaryData = True\nBinaryDataByteOrderMSB = False\n"
         "CompressedData = False\n" + extra +
         "Offset = 0 0 0\nElementSpacing = 1 1 1\nDimSize = 4 4 4\nElementType = MET_SHORT\n"
         "ElementDataFile = v.raw\n";
}

template <class T>
Image<T> ramp_image(const Geometry& g) {
  Image<T> img(g);
  for (std::size_t n = 0; n < img.size(); ++n) img[n] = static_cast<T>(n % 97);
  return img;
}

}  // namespace

TEST(Geometry, IdentityMapping) {
  const Geometry g{{8, 8, 8}, {1, 1, 1}, {0, 0, 0}};
  const VoxelCoord c = g.world_to_voxel({3, 4, 5});
  EXPECT_DOUBLE_EQ(c.i, 3);
  EXPECT_DOUBLE_EQ(c.j, 4);
  EXPECT_DOUBLE_EQ(c.k, 5);
}

TEST(Geometry, OriginMapsToZeroIndex) {
  const Geometry g{{8, 8, 8}, {0.7, 0.7, 2.5}, {-100, -100, -50}};
  const VoxelCoord c = g.world_to_voxel({-100, -100, -50});
  EXPECT_EQ(c.i, 0.0);
  EXPECT_EQ(c.j, 0.0);
  EXPECT_EQ(c.k, 0.0);
}

TEST(Geometry, InversePair) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-300, 300), s(0.3, 3.0);
  for (int t = 0; t < 1000; ++t) {
    const Geometry g{{10, 10, 10}, {s(rng), s(rng), s(rng)}, {u(rng), u(rng), u(rng)}};
    const VoxelCoord c{u(rng) / 3, u(rng) / 3, u(rng) / 3};
    const VoxelCoord back = g.world_to_voxel(g.voxel_to_world(c));
    EXPECT_NEAR(back.i, c.i, 1e-9);
    EXPECT_NEAR(back.j, c.j, 1e-9);
    EXPECT_NEAR(back.k, c.k, 1e-9);
  }
}

TEST(Geometry, NearestVoxelOutsideGrid) {
  const Geometry g{{4, 4, 4}, {1, 1, 1}, {0, 0, 0}};
  EXPECT_TRUE(g.nearest_voxel({3.4, 0, 0}).has_value());
  EXPECT_FALSE(g.nearest_voxel({3.6, 0, 0}).has_value());
  EXPECT_FALSE(g.nearest_voxel({-0.6, 0, 0}).has_value());
}

TEST(Image, RejectsWrongDataLength) {
  EXPECT_THROW(Image<float>(Geometry{{2, 2, 2}}, std::vector<float>(7)), ValidationError);
  Image<float> img(Geometry{{2, 2, 2}});
  EXPECT_THROW(img.at(2, 0, 0), ValidationError);
}

TEST(MetaImage, ZeroPayload) {
  TempDir dir;
  write_text(dir / "v.mhd", header_4x4x4());
  write_text(dir / "v.raw", std::string(128, '\0'));
  const Volume v = read_metaimage(dir / "v.mhd");
  ASSERT_EQ(kind_of(v), ElementKind::Int16);
  const auto& img = std::get<Image<std::int16_t>>(v);
  EXPECT_EQ(img.size(), 64u);
  for (std::size_t n = 0; n < img.size(); ++n) EXPECT_EQ(img[n], 0);
}

TEST(MetaImage, PayloadLengthMismatch) {
  TempDir dir;
  write_text(dir / "v.mhd", header_4x4x4());
  write_text(dir / "v.raw", std::string(64, '\0'));
  EXPECT_THROW(read_metaimage(dir / "v.mhd"), ValidationError);
}

TEST(MetaImage, MissingRawIsIoError) {
  TempDir dir;
  write_text(dir / "v.mhd", header_4x4x4());
  EXPECT_THROW(read_metaimage(dir / "v.mhd"), IoError);
}

TEST(MetaImage, RejectsUnsupportedHeaders) {
  TempDir dir;
  write_text(dir / "v.raw", std::string(128, '\0'));
  write_text(dir / "v.mhd", header_4x4x4("TransformMatrix = 0 1 0 1 0 0 0 0 1\n"));
  EXPECT_THROW(read_metaimage(dir / "v.mhd"), ValidationError);
  std::string compressed = header_4x4x4();
  compressed.replace(compressed.find("CompressedData = False"), 22, "CompressedData = True");
  write_text(dir / "v.mhd", compressed);
  EXPECT_THROW(read_metaimage(dir / "v.mhd"), ValidationError);
  std::string two_d = header_4x4x4();
  two_d.replace(two_d.find("NDims = 3"), 9, "NDims = 2");
  write_text(dir / "v.mhd", two_d);
  EXPECT_THROW(read_metaimage(dir / "v.mhd"), ValidationError);
}

TEST(MetaImage, IdentityTransformAccepted) {
  TempDir dir;
  write_text(dir / "v.raw", std::string(128, '\0'));
  write_text(dir / "v.mhd", header_4x4x4("TransformMatrix = 1 0 0 0 1 0 0 0 1\n"));
  EXPECT_NO_THROW(read_metaimage(dir / "v.mhd"));
}

TEST(MetaImage, LocalPayload) {
  TempDir dir;
  std::string h = header_4x4x4();
  h.replace(h.find("v.raw"), 5, "LOCAL");
  std::vector<std::int16_t> values(64);
  for (int n = 0; n < 64; ++n) values[n] = static_cast<std::int16_t>(n - 32);
  std::string bytes(128, '\0');
  std::memcpy(bytes.data(), values.data(), 128);
  write_text(dir / "v.mhd", h + bytes);
  const auto img = std::get<Image<std::int16_t>>(read_metaimage(dir / "v.mhd"));
  EXPECT_EQ(img.data(), values);
}

TEST(MetaImage, HeaderNamesDimsAndType) {
  TempDir dir;
  write_metaimage(Image<float>(Geometry{{2, 2, 2}}), dir / "f.mhd");
  const std::string h = read_text(dir / "f.mhd");
  EXPECT_NE(h.find("DimSize = 2 2 2"), std::string::npos);
  EXPECT_NE(h.find("ElementType = MET_FLOAT"), std::string::npos);
  EXPECT_NE(h.find("ElementDataFile = f.raw"), std::string::npos);
}

TEST(MetaImage, RoundTripEveryKind) {
  TempDir dir;
  const Geometry g{{5, 3, 4}, {0.7, 0.8, 2.5}, {-100.25, 12.5, -310.125}};
  const Volume volumes[] = {ramp_image<std::int16_t>(g), ramp_image<std::uint8_t>(g), ramp_image<float>(g)};
  for (const auto& v : volumes) {
    write_metaimage(v, dir / "r.mhd", {{"Modality", "MET_MOD_CT"}});
    const MetaImage back = read_metaimage_with_header(dir / "r.mhd");
    EXPECT_EQ(back.volume, v);
    ASSERT_EQ(back.extra_keys.size(), 1u);
    EXPECT_EQ(back.extra_keys[0].second, "MET_MOD_CT");
    const std::string first = read_text(dir / "r.mhd");
    write_metaimage(back.volume, dir / "r.mhd", back.extra_keys);
    EXPECT_EQ(read_text(dir / "r.mhd"), first);
  }
}

TEST(MetaImage, RandomRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(-1000, 1000);
  for (int t = 0; t < 5; ++t) {
    Image<float> img(Geometry{{7, 6, 5}, {0.5 + t, 1.0, 1.5}, {double(t), -2.0 * t, 0.1}});
    for (auto& v : img.data()) v = u(rng);
    write_metaimage(img, dir / "x.mhd");
    EXPECT_EQ(std::get<Image<float>>(read_metaimage(dir / "x.mhd")), img);
  }
}

TEST(Csv, PredictionRow) {
  TempDir dir;
  write_text(dir / "p.csv", "seriesuid,coordX,coordY,coordZ,probability\nscan1,1.5,-2,3,0.5\n");
  const auto marks = read_predictions_csv(dir / "p.csv");
  ASSERT_EQ(marks.size(), 1u);
  EXPECT_EQ(marks[0].scan_id, "scan1");
  EXPECT_EQ(marks[0].score, 0.5);
  EXPECT_EQ(marks[0].center, (WorldPoint{1.5, -2, 3}));
}

TEST(Csv, AnnotationRadius) {
  TempDir dir;
  write_text(dir / "a.csv", "seriesuid,coordX,coordY,coordZ,diameter_mm\nscan1,0,0,0,10\n");
  const auto ref = read_positives_csv(dir / "a.csv");
  ASSERT_EQ(ref.size(), 1u);
  EXPECT_EQ(ref[0].radius(), 5.0);
}

TEST(Csv, ProbabilityOutOfRangeNamesLine) {
  TempDir dir;
  write_text(dir / "p.csv", "seriesuid,coordX,coordY,coordZ,probability\nscan1,0,0,0,0.5\nscan1,0,0,0,1.7\n");
  try {
    read_predictions_csv(dir / "p.csv");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("p.csv:3"), std::string::npos) << e.what();
  }
}

TEST(Csv, MissingColumn) {
  TempDir dir;
  write_text(dir / "p.csv", "seriesuid,coordX,coordY,probability\nscan1,0,0,0.5\n");
  EXPECT_THROW(read_predictions_csv(dir / "p.csv"), ValidationError);
}

TEST(Csv, NonNumericCell) {
  TempDir dir;
  write_text(dir / "p.csv", "seriesuid,coordX,coordY,coordZ,probability\nscan1,abc,0,0,0.5\n");
  EXPECT_THROW(read_predictions_csv(dir / "p.csv"), ValidationError);
}

TEST(Csv, QuotedCellsAndCrLf) {
  TempDir dir;
  write_text(dir / "p.csv", "seriesuid,coordX,coordY,coordZ,probability\r\n\"1.2.3,4\",1,2,3,0.25\r\n");
  const auto marks = read_predictions_csv(dir / "p.csv");
  ASSERT_EQ(marks.size(), 1u);
  EXPECT_EQ(marks[0].scan_id, "1.2.3,4");
}

TEST(Csv, RoundTripWithinMicrometre) {
  TempDir dir;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-400, 400), p(0, 1);
  std::vector<CadMark> marks;
  for (int n = 0; n < 200; ++n) marks.push_back({"s" + std::to_string(n % 7), {u(rng), u(rng), u(rng)}, p(rng)});
  write_predictions_csv(dir / "p.csv", marks);
  const auto back = read_predictions_csv(dir / "p.csv");
  ASSERT_EQ(back.size(), marks.size());
  for (std::size_t n = 0; n < marks.size(); ++n) {
    EXPECT_EQ(back[n].scan_id, marks[n].scan_id);
    EXPECT_NEAR(back[n].center.x, marks[n].center.x, 1e-6);
    EXPECT_NEAR(back[n].center.y, marks[n].center.y, 1e-6);
    EXPECT_NEAR(back[n].center.z, marks[n].center.z, 1e-6);
    EXPECT_NEAR(back[n].score, marks[n].score, 1e-6);
  }
}

TEST(Csv, ScanListFormats) {
  TempDir dir;
  write_text(dir / "a.txt", "s1\n  s2 \n\ns3\n");
  EXPECT_EQ(read_scan_list(dir / "a.txt"), (std::vector<std::string>{"s1", "s2", "s3"}));
  write_text(dir / "b.csv", "seriesuid,subset\ns1,0\ns2,1\n");
  EXPECT_EQ(read_scan_list(dir / "b.csv"), (std::vector<std::string>{"s1", "s2"}));
}

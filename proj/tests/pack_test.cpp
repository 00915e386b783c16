#include <fstream>

#include <gtest/gtest.h>

#include "cfsl/pack.hpp"
#include "cfsl/rng.hpp"
#include "support.hpp"

using namespace cfsl;
using cfsl::testkit::TempDir;
using cfsl::testkit::tiny_pack;

namespace {

Manifest synthetic_manifest(std::uint32_t classes, std::uint32_t per_class, std::uint32_t side,
                            std::uint32_t channels) {
  Manifest m;
  m.name = "manifest-only";
  m.height = m.width = side;
  m.channels = channels;
  std::uint64_t offset = 0;
  for (std::uint32_t c = 0; c < classes; ++c) {
    ClassRecord r;
    r.id = c;
    r.name = "n" + std::to_string(c);
    r.offsets.resize(per_class);
    for (auto& o : r.offsets) {
      o = offset;
      offset += m.sample_bytes();
    }
    m.classes.push_back(std::move(r));
  }
  return m;
}

void write_source(const std::filesystem::path& root, std::uint32_t classes, std::uint32_t per_class,
                  std::uint32_t side, bool png) {
  Xoshiro256ss rng(17);
  for (std::uint32_t c = 0; c < classes; ++c) {
    const auto dir = root / ("class" + std::to_string(c));
    std::filesystem::create_directories(dir);
    for (std::uint32_t i = 0; i < per_class; ++i) {
      Image img(side, side, 3);
      for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
      const auto name = "img" + std::to_string(i) + (png ? ".png" : ".ppm");
      if (png)
        write_png(img, dir / name);
      else
        write_pnm(img, dir / name);
    }
  }
}

}  // namespace

TEST(Pack, RoundTripIsBitwise) {
  TempDir dir;
  const auto pack = tiny_pack(6, 5, 3, 8, 3);
  write_pack(pack, dir / "p");
  const auto back = read_pack(dir / "p");
  EXPECT_EQ(back, pack);
  EXPECT_TRUE(std::equal(back.blob().begin(), back.blob().end(), pack.blob().begin()));
}

TEST(Pack, RejectsTruncatedBlob) {
  TempDir dir;
  write_pack(tiny_pack(2, 2), dir / "p");
  std::filesystem::resize_file(dir / "p" / "blob.bin", 5);
  try {
    read_pack(dir / "p");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PackFormat);
  }
}

TEST(Pack, RejectsSparseClassIds) {
  auto m = synthetic_manifest(2, 1, 2, 1);
  m.classes[1].id = 5;
  EXPECT_THROW(DatasetPack(m, std::vector<std::uint8_t>(8)), Error);
}

TEST(Ingest, CountsAndResolution) {
  TempDir dir;
  write_source(dir / "src", 3, 4, 96, false);
  const auto pack = ingest(dir / "src", 64);
  EXPECT_EQ(pack.num_classes(), 3u);
  EXPECT_EQ(pack.manifest().total_samples(), 12u);
  EXPECT_EQ(pack.height(), 64u);
  EXPECT_EQ(pack.width(), 64u);
  EXPECT_EQ(pack.channels(), 3u);
  EXPECT_EQ(pack.manifest().classes[2].name, "class2");
}

TEST(Ingest, PngSourceMatchesPnmSource) {
  TempDir dir;
  write_source(dir / "a", 2, 3, 20, false);
  write_source(dir / "b", 2, 3, 20, true);
  const auto a = ingest(dir / "a", 10);
  const auto b = ingest(dir / "b", 10);
  EXPECT_TRUE(std::equal(a.blob().begin(), a.blob().end(), b.blob().begin(), b.blob().end()));
}

TEST(Ingest, CorruptFileIsNamed) {
  TempDir dir;
  write_source(dir / "src", 2, 2, 16, true);
  std::ofstream(dir / "src" / "class1" / "zz_bad.png") << "garbage";
  try {
    ingest(dir / "src", 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Ingest);
    EXPECT_NE(std::string(e.what()).find("zz_bad.png"), std::string::npos);
  }
}

TEST(Ingest, EmptySource) {
  TempDir dir;
  std::filesystem::create_directories(dir / "empty");
  try {
    ingest(dir / "empty", 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySource);
  }
}

TEST(Ingest, TooSmallSourceRefusesUpsample) {
  TempDir dir;
  write_source(dir / "src", 1, 1, 16, false);
  try {
    ingest(dir / "src", 32);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UpsampleUnsupported);
  }
}

TEST(Slim, MinRule) {
  PackBuilder b("mixed", 2, 2, 1);
  const std::vector<std::uint8_t> px(4, 9);
  const auto big = b.add_class("big");
  for (int i = 0; i < 250; ++i) b.add_sample(big, px);
  const auto small = b.add_class("small");
  for (int i = 0; i < 150; ++i) b.add_sample(small, px);
  const auto pack = std::move(b).build();
  const auto slimmed = slim(pack, 200);
  EXPECT_EQ(slimmed.class_size(0), 200u);
  EXPECT_EQ(slimmed.class_size(1), 150u);
  EXPECT_EQ(slim(pack, 1).manifest().total_samples(), 2u);
}

TEST(Slim, IdempotentAndPrefix) {
  const auto pack = tiny_pack(4, 9, 2, 4, 3);
  const auto once = slim(pack, 5);
  EXPECT_EQ(slim(once, 5), once);
  for (std::uint32_t c = 0; c < 4; ++c)
    for (std::uint32_t i = 0; i < 5; ++i) {
      const auto a = once.sample(c, i), b = pack.sample(c, i);
      EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    }
}

TEST(Split, DisjointAndComplete) {
  const auto pack = tiny_pack(20, 3);
  const auto parts = split_by_class(pack, {12, 3, 5});
  EXPECT_EQ(parts.train.num_classes(), 12u);
  EXPECT_EQ(parts.val.num_classes(), 3u);
  EXPECT_EQ(parts.test.num_classes(), 5u);
  EXPECT_EQ(parts.val.manifest().classes[0].name, pack.manifest().classes[12].name);
  EXPECT_EQ(parts.test.manifest().classes[4].name, pack.manifest().classes[19].name);
  std::set<std::string> seen;
  for (const auto* p : {&parts.train, &parts.val, &parts.test})
    for (const auto& c : p->manifest().classes) EXPECT_TRUE(seen.insert(c.name).second);
  EXPECT_EQ(seen.size(), 20u);
}

TEST(Split, OmniglotAndSlimageShapes) {
  const auto omni = tiny_pack(1622, 1, 1, 2);
  const auto o = split_by_class(omni, {1200, 211, 211});
  EXPECT_EQ(o.train.num_classes() + o.val.num_classes() + o.test.num_classes(), 1622u);
  const auto slimage = tiny_pack(1000, 1, 1, 2);
  const auto s = split_by_class(slimage, {700, 100, 200});
  EXPECT_EQ(s.train.num_classes(), 700u);
  EXPECT_EQ(s.val.num_classes(), 100u);
  EXPECT_EQ(s.test.num_classes(), 200u);
}

TEST(Split, AllTrainLeavesOthersEmpty) {
  const auto parts = split_by_class(tiny_pack(7, 2), {7, 0, 0});
  EXPECT_EQ(parts.val.num_classes(), 0u);
  EXPECT_EQ(parts.test.num_classes(), 0u);
}

TEST(Split, SumMismatch) {
  try {
    split_by_class(tiny_pack(7, 2), {3, 3, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Split);
  }
}

TEST(Stats, OneClass) {
  const auto r = stats(tiny_pack(1, 3));
  EXPECT_EQ(r.num_classes, 1u);
  EXPECT_EQ(r.total_images, 3u);
  EXPECT_TRUE(r.passes_size_criterion);
}

TEST(Stats, SlimageNetScale) {
  const auto r = stats(synthetic_manifest(1000, 200, 64, 3));
  EXPECT_EQ(r.num_classes, 1000u);
  EXPECT_EQ(r.samples_per_class_min, 200u);
  EXPECT_EQ(r.samples_per_class_max, 200u);
  EXPECT_EQ(r.blob_bytes, 200000ull * 12288);
  EXPECT_TRUE(r.passes_size_criterion);
  const double gib = static_cast<double>(r.estimated_float32_bytes) / (1ull << 30);
  EXPECT_GT(gib, 9.1);
  EXPECT_LT(gib, 9.2);
}

TEST(Stats, TooLargeForCriterion) {
  const auto r = stats(synthetic_manifest(2000, 1000, 64, 3));
  EXPECT_EQ(r.blob_bytes, 2000ull * 1000 * 12288);
  EXPECT_GT(r.estimated_in_memory_bytes, kSizeCriterionBytes);
  EXPECT_FALSE(r.passes_size_criterion);
}

TEST(Stats, CriterionBoundary) {
  auto m = synthetic_manifest(1, 1, 1, 1);
  const auto r = stats(m);
  EXPECT_EQ(r.passes_size_criterion, r.estimated_in_memory_bytes <= kSizeCriterionBytes);
}

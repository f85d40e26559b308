// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "rescap/degradation_level.hpp"
#include "rescap/errors.hpp"
#include "rescap/ids.hpp"
#include "rescap/image.hpp"
#include "rescap/jsonl.hpp"
#include "rescap/parallel.hpp"
#include "test_support.hpp"

namespace rescap {
namespace {

using testing::TempDir;

TEST(Bucketing, DocumentedRanges) {
  for (double z : {3.0, 5.0, 7.0}) {
    EXPECT_EQ(classify_degradation(z).level, DegradationLevel::light) << z;
    EXPECT_FALSE(classify_degradation(z).out_of_range);
  }
  for (double z : {8.0, 9.0, 10.0}) {
    EXPECT_EQ(classify_degradation(z).level, DegradationLevel::moderate) << z;
    EXPECT_FALSE(classify_degradation(z).out_of_range);
  }
  for (double z : {15.0, 16.0, 20.0}) {
    EXPECT_EQ(classify_degradation(z).level, DegradationLevel::heavy) << z;
    EXPECT_FALSE(classify_degradation(z).out_of_range);
  }
}

TEST(Bucketing, GapsMapToNearestAndAreFlagged) {
  const auto twelve = classify_degradation(12.0);
  EXPECT_EQ(twelve.level, DegradationLevel::moderate);
  EXPECT_TRUE(twelve.out_of_range);
  EXPECT_EQ(classify_degradation(12.5).level, DegradationLevel::heavy);  // tie goes heavier
  EXPECT_EQ(classify_degradation(7.5).level, DegradationLevel::moderate);
  EXPECT_EQ(classify_degradation(7.2).level, DegradationLevel::light);
  EXPECT_EQ(classify_degradation(2.0).level, DegradationLevel::light);
  EXPECT_TRUE(classify_degradation(2.0).out_of_range);
  EXPECT_EQ(classify_degradation(30.0).level, DegradationLevel::heavy);
  EXPECT_TRUE(classify_degradation(30.0).out_of_range);
  EXPECT_THROW(classify_degradation(0.0), InvalidInputError);
  EXPECT_THROW(classify_degradation(-4.0), InvalidInputError);
  EXPECT_THROW(parse_level("extreme"), InvalidInputError);
}

TEST(Errors, KindNames) {
  EXPECT_EQ(to_string(ErrorKind::harmful_caption_rejected), "harmful-caption-rejected");
  EXPECT_EQ(to_string(ErrorKind::stale_lease), "stale-lease");
  const StaleLeaseError e("x");
  EXPECT_EQ(e.kind(), ErrorKind::stale_lease);
  EXPECT_STREQ(e.what(), "x");
}

TEST(Ids, UuidShapeAndDeterminism) {
  const std::regex v4("^[0-9a-f]{8}-[0-9a-f]{4}-4[0-9a-f]{3}-[89ab][0-9a-f]{3}-[0-9a-f]{12}$");
  std::set<std::string> seen;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto id = uuid_v4(s);
    ASSERT_TRUE(std::regex_match(id, v4)) << id;
    ASSERT_EQ(id, uuid_v4(s));
    seen.insert(id);
  }
  EXPECT_EQ(seen.size(), 500u);
}

TEST(Ids, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_NE(combine_seed({1, 2}), combine_seed({2, 1}));
}

TEST(Ids, TimestampFormat) {
  EXPECT_TRUE(std::regex_match(utc_timestamp(), std::regex(R"(^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?Z$)")));
}

TEST(Jsonl, ReadWriteAndErrors) {
  std::stringstream s;
  write_jsonl(s, {Json{{"a", 1}}, Json{{"b", "x"}}});
  EXPECT_EQ(s.str(), "{\"a\":1}\n{\"b\":\"x\"}\n");
  std::istringstream in("{\"a\":1}\n\n  \n{\"b\":2}\n");
  EXPECT_EQ(read_jsonl(in).size(), 2u);
  std::istringstream bad("{\"a\":1}\n{oops\n");
  EXPECT_THROW(read_jsonl(bad), ParseError);
  EXPECT_THROW(read_jsonl(std::filesystem::path("/nonexistent/file.jsonl")), Error);
}

TEST(Jsonl, AtomicWriteKeepsOldFileOnCrash) {
  TempDir dir("jsonl");
  const auto path = dir / "a.jsonl";
  atomic_write_jsonl(path, {Json{{"v", 1}}});
  EXPECT_THROW(atomic_write_jsonl(path, {Json{{"v", 2}}},
                                  [](const std::filesystem::path& tmp) {
                                    ASSERT_TRUE(std::filesystem::exists(tmp));
                                    throw std::runtime_error("crash");
                                  }),
               std::runtime_error);
  EXPECT_EQ(read_text_file(path), "{\"v\":1}\n");
  atomic_write_jsonl(path, {Json{{"v", 3}}});
  EXPECT_EQ(read_text_file(path), "{\"v\":3}\n");
  atomic_write_text(dir / "nested" / "deep.txt", "hi");
  EXPECT_EQ(read_text_file(dir / "nested" / "deep.txt"), "hi");
}

TEST(Parallel, CoversEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> hits(257);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw InvalidInputError("seven");
                            }),
               InvalidInputError);
  parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(Image, PngRoundTripAndBase64) {
  TempDir dir("image");
  const auto img = synthetic_image(33, 21, 4);
  EXPECT_EQ(img.channels, 3);
  save_png(dir / "x.png", img);
  EXPECT_EQ(load_image(dir / "x.png"), img);
  EXPECT_EQ(decode_image(encode_png(img)), img);
  const std::vector<std::uint8_t> foobar{'f', 'o', 'o', 'b', 'a', 'r'};
  EXPECT_EQ(base64_encode(foobar), "Zm9vYmFy");
  EXPECT_EQ(base64_encode({'f', 'o'}), "Zm8=");
  EXPECT_EQ(base64_decode("Zm9vYmFy"), foobar);
  EXPECT_EQ(base64_decode("Zm8="), (std::vector<std::uint8_t>{'f', 'o'}));
  EXPECT_THROW(base64_decode("Zm9v!!"), Error);
  EXPECT_THROW(load_image(dir / "missing.png"), Error);
}

TEST(Image, Statistics) {
  Image flat{8, 8, 3, std::vector<std::uint8_t>(8 * 8 * 3, 120)};
  EXPECT_EQ(laplacian_variance(flat), 0.0);
  const auto img = synthetic_image(40, 30, 9);
  EXPECT_GT(laplacian_variance(img), 0.0);
  EXPECT_EQ(normalized_mse(img, img), 0.0);
  const Image flat_same{40, 30, 3, std::vector<std::uint8_t>(40 * 30 * 3, 120)};
  EXPECT_GT(normalized_mse(img, flat_same), 0.0);
  EXPECT_THROW(normalized_mse(img, flat), DimensionError);
}

TEST(Image, ThumbnailAndResize) {
  const auto img = synthetic_image(1000, 400, 2);
  const auto t = make_thumbnail(img, 512);
  EXPECT_EQ(t.width, 512);
  EXPECT_EQ(t.height, 205);
  const auto small = synthetic_image(100, 50, 2);
  EXPECT_EQ(make_thumbnail(small, 512), small);
  const auto r = resize_image(img, 10, 7);
  EXPECT_EQ(r.width, 10);
  EXPECT_EQ(r.height, 7);
  EXPECT_EQ(static_cast<int>(r.pixels.size()), 10 * 7 * 3);
}

}  // namespace
}  // namespace rescap

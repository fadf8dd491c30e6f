// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "gsvo/error.hpp"
#include "gsvo/image_io.hpp"
#include "oracles.hpp"
#include "scratch.hpp"

namespace gsvo {
namespace {

namespace fs = std::filesystem;

TEST(Png, RoundTripQuantizesToEightBits) {
  std::mt19937_64 rng(1);
  const RgbImage img = oracle::random_rgb(rng, 13, 7);
  const fs::path path = testing_support::scratch_dir() / "a.png";
  write_png(path, img);
  const RgbImage r = read_png(path);
  ASSERT_EQ(r.width(), 13);
  ASSERT_EQ(r.height(), 7);
  for (size_t i = 0; i < img.data().size(); ++i) {
    EXPECT_NEAR(r.data()[i], std::round(img.data()[i] * 255.0) / 255.0, 1e-12);
  }
  write_png(path, r);
  const RgbImage again = read_png(path);
  for (size_t i = 0; i < r.data().size(); ++i) EXPECT_EQ(again.data()[i], r.data()[i]);
}

TEST(Png, ChannelOrderAndGray) {
  const fs::path dir = testing_support::scratch_dir();
  RgbImage img(2, 1);
  img.set(0, 0, Vec3(1, 0, 0));
  img.set(1, 0, Vec3(0, 0, 1));
  write_png(dir / "c.png", img);
  const RgbImage r = read_png(dir / "c.png");
  EXPECT_EQ(r.at(0, 0), Vec3(1, 0, 0));
  EXPECT_EQ(r.at(1, 0), Vec3(0, 0, 1));

  GrayImage g(3, 2, 0.0);
  g(2, 1) = 1.0;
  write_png(dir / "g.png", g);
  const RgbImage rg = read_png(dir / "g.png");
  EXPECT_EQ(rg.at(2, 1), Vec3(1, 1, 1));
  EXPECT_EQ(rg.at(0, 0), Vec3(0, 0, 0));
}

TEST(Png, Errors) {
  const fs::path dir = testing_support::scratch_dir();
  try {
    read_png(dir / "missing.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingFile);
  }
  std::ofstream(dir / "junk.png") << "not a png";
  try {
    read_png(dir / "junk.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(Pfm, RoundTripIsExactForFloats) {
  ScalarImage img(5, 3);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 5; ++x) img(x, y) = static_cast<float>(0.1 * x + 10.0 * y + 0.3);
  }
  const fs::path path = testing_support::scratch_dir() / "d.pfm";
  write_pfm(path, img);
  const ScalarImage r = read_pfm(path);
  ASSERT_EQ(r.width, 5);
  ASSERT_EQ(r.height, 3);
  EXPECT_EQ(r.data, img.data);

  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "Pf");
  std::getline(in, header);
  EXPECT_EQ(header, "5 3");
  std::getline(in, header);
  EXPECT_LT(std::stod(header), 0.0);
  // Rows are stored bottom-up.
  float first = 0.0f;
  in.read(reinterpret_cast<char*>(&first), sizeof(first));
  EXPECT_EQ(first, static_cast<float>(img(0, 2)));
}

TEST(Pfm, Errors) {
  const fs::path dir = testing_support::scratch_dir();
  std::ofstream(dir / "bad.pfm") << "PF\n1 1\n-1\n";
  EXPECT_THROW(read_pfm(dir / "bad.pfm"), Error);
  std::ofstream(dir / "short.pfm") << "Pf\n4 4\n-1\nabc";
  EXPECT_THROW(read_pfm(dir / "short.pfm"), Error);
  EXPECT_THROW(read_pfm(dir / "missing.pfm"), Error);
}

TEST(DepthToGray, Mapping) {
  ScalarImage d(4, 1);
  d.data = {0.0, 1.0, 2.0, 5.0};
  const GrayImage g = depth_to_gray(d, 2.0);
  EXPECT_EQ(g(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(g(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(g(2, 0), 0.0);
  EXPECT_DOUBLE_EQ(g(3, 0), 0.0);
}

}  // namespace
}  // namespace gsvo

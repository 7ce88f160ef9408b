#include <gtest/gtest.h>

#include "emo/vision/transform.hpp"
#include "support/test_support.hpp"

using namespace emo;
using namespace emo::vision;
using emo::test::stock_cascade;

namespace {

io::GrayImage random_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  io::GrayImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// One stage, one stump on a two-rectangle feature in an 8x8 window.
std::string tiny_cascade(const std::string& rect2 = "0 4 8 4 2.", int stage_num = 1) {
  return R"(<?xml version="1.0"?>
<opencv_storage>
<cascade type_id="opencv-cascade-classifier">
  <stageType>BOOST</stageType>
  <featureType>HAAR</featureType>
  <height>8</height>
  <width>8</width>
  <stageNum>)" + std::to_string(stage_num) + R"(</stageNum>
  <stages>
    <_>
      <maxWeakCount>1</maxWeakCount>
      <stageThreshold>0.5</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 0 0.0</internalNodes>
          <leafValues>0.0 1.0</leafValues>
        </_>
      </weakClassifiers>
    </_>
  </stages>
  <features>
    <_>
      <rects>
        <_>0 0 8 8 -1.</_>
        <_>)" + rect2 + R"(</_>
      </rects>
    </_>
  </features>
</cascade>
</opencv_storage>
)";
}

Detection hand_box() {
  return {test::kPortraitFace[0], test::kPortraitFace[1], test::kPortraitFace[2], test::kPortraitFace[3], 0};
}

io::GrayImage shift_right(const io::GrayImage& img, int dx) {
  io::GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(std::max(0, x - dx), y);
  }
  return out;
}

io::GrayImage map_pixels(const io::GrayImage& img, const std::function<int(int)>& f) {
  io::GrayImage out = img;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(f(p));
  return out;
}

}  // namespace

// ---------------------------------------------------------------- integral image

TEST(Integral, AllOnesCorner) {
  const auto ii = integral(io::GrayImage(4, 4, 1));
  EXPECT_EQ(ii.at(4, 4), 16);
  EXPECT_EQ(ii.rect_sum(0, 0, 4, 4), 16);
}

TEST(Integral, EmptyRectangle) {
  const auto ii = integral(random_image(5, 5, 1));
  EXPECT_EQ(ii.rect_sum(2, 3, 0, 2), 0);
  EXPECT_EQ(ii.rect_sum(2, 3, 2, 0), 0);
}

TEST(Integral, ExhaustiveRectangleSumsOn8x8) {
  const auto img = random_image(8, 8, 42);
  const auto ii = integral(img);
  int count = 0;
  for (int y0 = 0; y0 < 8; ++y0) {
    for (int y1 = y0 + 1; y1 <= 8; ++y1) {
      for (int x0 = 0; x0 < 8; ++x0) {
        for (int x1 = x0 + 1; x1 <= 8; ++x1) {
          std::int64_t s = 0, sq = 0;
          for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
              s += img.at(x, y);
              sq += img.at(x, y) * img.at(x, y);
            }
          }
          ASSERT_EQ(ii.rect_sum(x0, y0, x1 - x0, y1 - y0), s);
          ASSERT_EQ(ii.rect_sq_sum(x0, y0, x1 - x0, y1 - y0), sq);
          ++count;
        }
      }
    }
  }
  EXPECT_EQ(count, 1296);
}

// ---------------------------------------------------------------- cascade parsing

TEST(Cascade, MinimalHandcrafted) {
  const auto m = parse_cascade(tiny_cascade());
  EXPECT_EQ(m.window_width, 8);
  EXPECT_EQ(m.window_height, 8);
  ASSERT_EQ(m.stages.size(), 1u);
  ASSERT_EQ(m.stages[0].classifiers.size(), 1u);
  EXPECT_EQ(m.stages[0].threshold, 0.5);
  ASSERT_EQ(m.features.size(), 1u);
  EXPECT_EQ(m.features[0].rects[1].weight, 2.0);
}

TEST(Cascade, MinimalCascadeEvaluates) {
  const auto m = parse_cascade(tiny_cascade());
  // Feature = 2 * bottom half - whole window = bottom - top. Bright bottom passes.
  io::GrayImage img(8, 8, 10);
  for (int y = 4; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) img.at(x, y) = 200;
  }
  EXPECT_TRUE(window_passes(m, integral(img), 0, 0));
  EXPECT_FALSE(window_passes(m, integral(map_pixels(img, [](int p) { return 210 - p; })), 0, 0));
}

TEST(Cascade, StockStageCountMatchesTextScan) {
  const std::string text = test::cascade_text();
  auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
  };
  const auto m = stock_cascade();
  EXPECT_EQ(m.stages.size(), count("<stageThreshold>"));
  std::size_t weak = 0;
  for (const auto& s : m.stages) weak += s.classifiers.size();
  EXPECT_EQ(weak, count("<internalNodes>"));
  EXPECT_EQ(m.window_width, 24);
  EXPECT_EQ(m.window_height, 24);
}

TEST(Cascade, RectanglesInsideWindowAndCompensated) {
  for (const auto& f : stock_cascade().features) {
    double weighted = 0.0;
    for (const auto& r : f.rects) {
      EXPECT_LE(r.x + r.w, 24);
      EXPECT_LE(r.y + r.h, 24);
      weighted += r.weight * r.w * r.h;
    }
    EXPECT_NEAR(weighted, 0.0, 1e-9);
    EXPECT_LT(f.rects[0].weight, 0.0);
  }
}

TEST(Cascade, Errors) {
  const std::string text = test::cascade_text();
  EXPECT_THROW(parse_cascade(text.substr(0, text.size() / 2)), DataError);
  EXPECT_THROW(parse_cascade(tiny_cascade("0 4 9 4 2.")), DataError);
  EXPECT_THROW(parse_cascade(tiny_cascade("0 4 8 4 x")), DataError);
  EXPECT_THROW(parse_cascade(tiny_cascade("0 4 8 4 3.")), DataError);
  EXPECT_THROW(parse_cascade(tiny_cascade("0 4 8 4 2.", 2)), DataError);
  EXPECT_THROW(parse_cascade("<opencv_storage></opencv_storage>"), DataError);
  EXPECT_THROW(parse_cascade("not xml"), DataError);
}

// ---------------------------------------------------------------- detection

TEST(Detect, BlankImageHasNoDetections) {
  EXPECT_TRUE(detect_faces(io::GrayImage(128, 128, 128), stock_cascade()).empty());
  EXPECT_TRUE(detect_faces(io::GrayImage(64, 48, 0), stock_cascade()).empty());
}

TEST(Detect, PortraitHasExactlyOneFace) {
  const auto dets = detect_faces(test::portrait(), stock_cascade());
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_GE(iou(dets[0], hand_box()), 0.5);
  EXPECT_GE(dets[0].neighbor_count, 3);
}

TEST(Detect, ImageSmallerThanWindow) {
  EXPECT_THROW(detect_faces(io::GrayImage(23, 40, 0), stock_cascade()), DataError);
}

TEST(Detect, BadOptions) {
  EXPECT_THROW(detect_faces(io::GrayImage(30, 30), stock_cascade(), {1.0, 3, 0.3}), std::invalid_argument);
  EXPECT_THROW(detect_faces(io::GrayImage(30, 30), stock_cascade(), {1.1, 0, 0.3}), std::invalid_argument);
}

TEST(Detect, BoxesWithinImageAndOrdered) {
  const auto img = test::portrait();
  const auto dets = detect_faces(img, stock_cascade(), {1.1, 1, 0.3});
  ASSERT_FALSE(dets.empty());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    EXPECT_GT(dets[i].w, 0);
    EXPECT_GE(dets[i].x, 0);
    EXPECT_LE(dets[i].x + dets[i].w, img.width);
    EXPECT_LE(dets[i].y + dets[i].h, img.height);
    if (i > 0) {
      EXPECT_LE(std::tie(dets[i - 1].y, dets[i - 1].x, dets[i - 1].w), std::tie(dets[i].y, dets[i].x, dets[i].w));
    }
  }
}

TEST(Detect, TranslationConsistent) {
  const auto img = test::portrait();
  const auto base = detect_faces(img, stock_cascade());
  const auto moved = detect_faces(shift_right(img, 8), stock_cascade());
  ASSERT_EQ(base.size(), 1u);
  ASSERT_EQ(moved.size(), 1u);
  EXPECT_NEAR(moved[0].x - base[0].x, 8, 2);
  EXPECT_NEAR(moved[0].y - base[0].y, 0, 2);
}

TEST(Detect, InvariantToAddedConstant) {
  const auto dim = map_pixels(test::portrait(), [](int p) { return p / 2; });
  const auto a = detect_faces(dim, stock_cascade());
  const auto b = detect_faces(map_pixels(dim, [](int p) { return p + 100; }), stock_cascade());
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
}

TEST(Detect, WindowDecisionsInvariantToAffineIntensity) {
  const auto base = map_pixels(test::portrait(), [](int p) { return p / 3; });
  int passes = 0;
  for (double scale = 1.0; lround(base.width / scale) >= 24; scale *= 1.1) {
    const int side = static_cast<int>(std::lround(base.width / scale));
    const auto level = resize_level(base, side, side);
    const IntegralImage ii(level);
    const IntegralImage ii2(map_pixels(level, [](int p) { return 2 * p + 30; }));
    for (int y = 0; y + 24 <= side; ++y) {
      for (int x = 0; x + 24 <= side; ++x) {
        const bool p = window_passes(stock_cascade(), ii, x, y);
        ASSERT_EQ(p, window_passes(stock_cascade(), ii2, x, y)) << side << ":" << x << "," << y;
        passes += p;
      }
    }
  }
  EXPECT_GT(passes, 0);
}

TEST(Grouping, SmallClustersDropped) {
  std::vector<Detection> hits = {{10, 10, 20, 20, 0}, {11, 10, 20, 20, 0}, {10, 11, 20, 20, 0}, {100, 100, 20, 20, 0}};
  const auto g = group_detections(hits, {1.1, 3, 0.3});
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].neighbor_count, 3);
  EXPECT_EQ(g[0].x, 10);
  EXPECT_EQ(g[0].w, 20);
}

// ---------------------------------------------------------------- crop and resize

TEST(Crop, FullBoxOn48IsIdentity) {
  const auto img = random_image(48, 48, 3);
  EXPECT_EQ(crop_and_resize(img, {0, 0, 48, 48, 0}), img);
}

TEST(Crop, ConstantStaysConstant) {
  const auto out = crop_and_resize(io::GrayImage(96, 96, 77), {0, 0, 96, 96, 0});
  EXPECT_EQ(out.width, 48);
  EXPECT_EQ(out.height, 48);
  for (auto p : out.pixels) EXPECT_EQ(p, 77);
}

TEST(Crop, CheckerboardHalvesToBlockMeans) {
  io::GrayImage img(96, 96);
  Rng rng(6);
  for (int y = 0; y < 96; ++y) {
    for (int x = 0; x < 96; ++x) img.at(x, y) = ((x + y) % 2) ? 200 : static_cast<std::uint8_t>(rng.below(60));
  }
  const auto out = crop_and_resize(img, {0, 0, 96, 96, 0});
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 48; ++x) {
      const double mean =
          (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) + img.at(2 * x, 2 * y + 1) + img.at(2 * x + 1, 2 * y + 1)) / 4.0;
      EXPECT_LE(std::abs(out.at(x, y) - mean), 1.0);
    }
  }
}

TEST(Crop, BoxOutsideImage) {
  const io::GrayImage img(50, 50);
  EXPECT_THROW(crop_and_resize(img, {10, 10, 41, 20, 0}), DataError);
  EXPECT_THROW(crop_and_resize(img, {-1, 0, 10, 10, 0}), DataError);
  EXPECT_THROW(crop_and_resize(img, {0, 0, 0, 10, 0}), DataError);
}

TEST(Crop, PortraitFaceCrop) {
  const auto face = crop_and_resize(test::portrait(), hand_box());
  EXPECT_EQ(face.width, 48);
  EXPECT_EQ(face.height, 48);
}

// ---------------------------------------------------------------- augmentation

TEST(Augment, IdentityParameters) {
  const auto img = random_image(48, 48, 9);
  EXPECT_EQ(apply_augment(img, {0.0, 1.0, false}), img);
}

TEST(Augment, FlipIsInvolution) {
  const auto img = random_image(48, 48, 10);
  EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
  EXPECT_NE(flip_horizontal(img), img);
  EXPECT_EQ(apply_augment(apply_augment(img, {0.0, 1.0, true}), {0.0, 1.0, true}), img);
}

TEST(Augment, SameSeedSameBytes) {
  const auto img = random_image(48, 48, 11);
  EXPECT_EQ(augment(img, 5), augment(img, 5));
  bool differs = false;
  for (std::uint64_t s = 6; s < 12 && !differs; ++s) differs = augment(img, s) != augment(img, 5);
  EXPECT_TRUE(differs);
}

TEST(Augment, ParameterRanges) {
  Rng rng(12);
  int flips = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto p = draw_augment_params(rng);
    EXPECT_GE(p.rotation_deg, -15.0);
    EXPECT_LE(p.rotation_deg, 15.0);
    EXPECT_GE(p.zoom, 1.0);
    EXPECT_LE(p.zoom, 1.15);
    flips += p.flip;
  }
  EXPECT_NEAR(flips / 2000.0, 0.5, 0.05);
}

TEST(Augment, OutOfBoundsTakesEdgeValues) {
  io::GrayImage img(48, 48, 50);
  for (int y = 0; y < 48; ++y) img.at(0, y) = img.at(47, y) = 50;
  const auto out = apply_augment(img, {15.0, 1.0, false});
  for (auto p : out.pixels) EXPECT_EQ(p, 50);
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "emo/io/manifest.hpp"
#include "emo/io/model_file.hpp"
#include "emo/io/pgm.hpp"
#include "emo/io/wav.hpp"
#include "emo/rng.hpp"
#include "support/test_support.hpp"

using namespace emo;
using namespace emo::io;

namespace {

// Minimal RIFF builder with an arbitrary fmt chunk.
Bytes wav_bytes(std::uint16_t tag, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits,
                const std::vector<std::int16_t>& samples) {
  Bytes data;
  for (auto s : samples) store_le16(data, static_cast<std::uint16_t>(s));
  Bytes out{'R', 'I', 'F', 'F'};
  store_le32(out, static_cast<std::uint32_t>(36 + data.size()));
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  store_le32(out, 16);
  store_le16(out, tag);
  store_le16(out, channels);
  store_le32(out, rate);
  store_le32(out, rate * channels * bits / 8);
  store_le16(out, static_cast<std::uint16_t>(channels * bits / 8));
  store_le16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  store_le32(out, static_cast<std::uint32_t>(data.size()));
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

WavErrc wav_error_code(const Bytes& b) {
  try {
    decode_wav(b);
  } catch (const WavError& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected a WavError";
  return WavErrc::empty;
}

Bytes random_bytes(Rng& rng, std::size_t n) {
  Bytes b(n);
  for (auto& v : b) v = static_cast<std::uint8_t>(rng.below(256));
  return b;
}

// Runs `decode` and accepts success or the documented exception family only.
template <typename Decode, typename Error>
void expect_no_crash(Decode decode, const Bytes& b) {
  try {
    decode(b);
  } catch (const Error&) {
  }
}

ModelFile dense4_model() {
  ModelFile m;
  m.header = {{"labels", {"angry", "happy", "neutral", "sad"}},
              {"layers", {{{"name", "dense"}, {"type", "dense"}, {"units", 4}}}}};
  Blob k{"dense/kernel", {3, 4}, std::vector<float>(12)};
  for (std::size_t i = 0; i < k.values.size(); ++i) k.values[i] = 0.25f * static_cast<float>(i) - 1.0f;
  m.blobs = {k, Blob{"dense/bias", {4}, {0.5f, -0.5f, 1e-7f, 3.0e8f}}};
  return m;
}

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / ("emo_io_" + std::to_string(::getpid()));
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

// ---------------------------------------------------------------- WAV

TEST(Wav, MaxAmplitudeSample) {
  const auto clip = decode_wav(wav_bytes(1, 1, 22050, 16, {32767}));
  ASSERT_EQ(clip.samples.size(), 1u);
  EXPECT_NEAR(clip.samples[0], 0.99997, 1e-5);
  EXPECT_EQ(clip.samples[0], 32767.0 / 32768.0);
  EXPECT_EQ(clip.sample_rate, 22050u);
  EXPECT_FALSE(clip.channels_merged);
}

TEST(Wav, StereoSymmetricFrameAveragesToZero) {
  const auto clip = decode_wav(wav_bytes(1, 2, 48000, 16, {16384, -16384}));
  ASSERT_EQ(clip.samples.size(), 1u);
  EXPECT_EQ(clip.samples[0], 0.0);
  EXPECT_TRUE(clip.channels_merged);
}

TEST(Wav, DeclaredRateIsKept) {
  const auto clip = decode_wav(encode_wav(std::vector<double>(480, 0.1), 48000));
  EXPECT_EQ(clip.sample_rate, 48000u);
  EXPECT_EQ(clip.samples.size(), 480u);
}

TEST(Wav, DistinctErrorsPerFailureKind) {
  Bytes bad = wav_bytes(1, 1, 8000, 16, {1, 2});
  bad[0] = 'X';
  EXPECT_EQ(wav_error_code(bad), WavErrc::malformed_riff);
  EXPECT_EQ(wav_error_code(wav_bytes(3, 1, 8000, 16, {1, 2})), WavErrc::unsupported_codec);
  EXPECT_EQ(wav_error_code(wav_bytes(1, 1, 8000, 8, {1, 2})), WavErrc::unsupported_bit_depth);
  EXPECT_EQ(wav_error_code(wav_bytes(1, 1, 8000, 24, {1, 2, 3})), WavErrc::unsupported_bit_depth);
  EXPECT_EQ(wav_error_code(wav_bytes(1, 3, 8000, 16, {1, 2, 3})), WavErrc::unsupported_channels);
  EXPECT_EQ(wav_error_code(wav_bytes(1, 1, 8000, 16, {})), WavErrc::empty);
  Bytes cut = wav_bytes(1, 1, 8000, 16, {1, 2, 3, 4});
  cut.resize(cut.size() - 3);
  EXPECT_EQ(wav_error_code(cut), WavErrc::truncated);
}

TEST(Wav, ErrorsAreDataErrors) {
  EXPECT_THROW(decode_wav(wav_bytes(3, 1, 8000, 16, {1})), DataError);
}

TEST(Wav, SkipsUnknownChunks) {
  Bytes b = wav_bytes(1, 1, 8000, 16, {100, -100});
  // Insert a LIST chunk (odd size, padded) between fmt and data.
  Bytes list{'L', 'I', 'S', 'T'};
  store_le32(list, 3);
  list.insert(list.end(), {'a', 'b', 'c', 0});
  b.insert(b.begin() + 36, list.begin(), list.end());
  const auto clip = decode_wav(b);
  ASSERT_EQ(clip.samples.size(), 2u);
  EXPECT_EQ(clip.samples[0], 100.0 / 32768.0);
}

TEST(Wav, MonoMergeIsLinear) {
  Rng rng(7);
  std::vector<std::int16_t> left(300), right(300), inter;
  for (std::size_t i = 0; i < left.size(); ++i) {
    left[i] = static_cast<std::int16_t>(static_cast<int>(rng.below(65536)) - 32768);
    right[i] = static_cast<std::int16_t>(static_cast<int>(rng.below(65536)) - 32768);
    inter.push_back(left[i]);
    inter.push_back(right[i]);
  }
  const auto mix = decode_wav(wav_bytes(1, 2, 16000, 16, inter));
  const auto l = decode_wav(wav_bytes(1, 1, 16000, 16, left));
  const auto r = decode_wav(wav_bytes(1, 1, 16000, 16, right));
  for (std::size_t i = 0; i < left.size(); ++i) EXPECT_EQ(mix.samples[i], (l.samples[i] + r.samples[i]) / 2.0);
}

TEST(Wav, SamplesStayInUnitRange) {
  const auto clip = decode_wav(wav_bytes(1, 2, 8000, 16, {-32768, -32768, 32767, 32767}));
  for (double s : clip.samples) {
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Wav, EncodeDecodeRoundTripIsQuantizationExact) {
  std::vector<double> x = {0.0, 0.5, -0.5, 32767.0 / 32768.0, -1.0};
  const auto clip = decode_wav(encode_wav(x, 44100));
  ASSERT_EQ(clip.samples.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(clip.samples[i], x[i]);
}

TEST(Wav, FuzzNeverCrashes) {
  Rng rng(2024);
  const Bytes valid = wav_bytes(1, 2, 8000, 16, {1, 2, 3, 4, 5, 6});
  for (int i = 0; i < 3000; ++i) {
    Bytes b;
    if (i % 3 == 0) {
      b = random_bytes(rng, rng.below(256));
    } else {
      b = valid;
      const int flips = 1 + static_cast<int>(rng.below(6));
      for (int f = 0; f < flips; ++f) b[rng.below(b.size())] = static_cast<std::uint8_t>(rng.below(256));
      if (i % 3 == 2) b.resize(rng.below(b.size() + 1));
    }
    expect_no_crash<decltype(&decode_wav), DataError>(&decode_wav, b);
  }
  expect_no_crash<decltype(&decode_wav), DataError>(&decode_wav, random_bytes(rng, 1 << 20));
}

// ---------------------------------------------------------------- PGM

TEST(Pgm, OnePixelEncoding) {
  GrayImage img(1, 1, 0);
  const Bytes b = encode_pgm(img);
  const std::string expect = std::string("P5\n1 1\n255\n") + '\0';
  EXPECT_EQ(std::string(b.begin(), b.end()), expect);
}

TEST(Pgm, RampRoundTrip) {
  GrayImage img(48, 48);
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 48; ++x) img.at(x, y) = static_cast<std::uint8_t>((x + 48 * y) % 256);
  }
  const Bytes b = encode_pgm(img);
  const GrayImage back = decode_pgm(b);
  EXPECT_EQ(back, img);
  EXPECT_EQ(back.width, 48);
  EXPECT_EQ(back.height, 48);
  EXPECT_EQ(encode_pgm(back), b);
}

TEST(Pgm, HeaderCommentsAndWhitespace) {
  const std::string text = std::string("P5 # comment\n2\t1\n# another\n255\n") + "\x01\x02";
  const auto img = decode_pgm(as_bytes(text));
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.at(1, 0), 2);
}

TEST(Pgm, Errors) {
  EXPECT_THROW(decode_pgm(as_bytes("P2\n1 1\n255\n0")), DataError);
  EXPECT_THROW(decode_pgm(as_bytes("P5\n1 1\n65535\n00")), DataError);
  EXPECT_THROW(decode_pgm(as_bytes("P5\n2 2\n255\nabc")), DataError);
  EXPECT_THROW(decode_pgm(as_bytes("P5\n0 2\n255\n")), DataError);
  EXPECT_THROW(decode_pgm(as_bytes("P5\n2")), DataError);
}

TEST(Pgm, PortraitDecodes) {
  const auto img = test::portrait();
  EXPECT_EQ(img.width, 256);
  EXPECT_EQ(img.height, 256);
  EXPECT_EQ(img.pixels.size(), 256u * 256u);
}

TEST(Pgm, FuzzNeverCrashes) {
  Rng rng(99);
  const Bytes valid = encode_pgm(GrayImage(4, 3, 17));
  for (int i = 0; i < 3000; ++i) {
    Bytes b = valid;
    if (i % 2 == 0) {
      b = random_bytes(rng, rng.below(128));
      if (i % 4 == 0 && b.size() >= 2) b[0] = 'P', b[1] = '5';
    } else {
      b[rng.below(b.size())] = static_cast<std::uint8_t>(rng.below(256));
      b.resize(rng.below(b.size() + 1));
    }
    expect_no_crash<decltype(&decode_pgm), DataError>(&decode_pgm, b);
  }
  expect_no_crash<decltype(&decode_pgm), DataError>(&decode_pgm, random_bytes(rng, 1 << 20));
}

// ---------------------------------------------------------------- Model file

TEST(ModelFile, EmptyModelRoundTripsByteIdentically) {
  ModelFile m;
  const Bytes b = write_model(m);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "EMOW");
  const ModelFile back = read_model(b);
  EXPECT_TRUE(back.blobs.empty());
  EXPECT_EQ(write_model(back), b);
}

TEST(ModelFile, DenseFourWithFourLabelsRoundTrips) {
  const ModelFile m = dense4_model();
  const Bytes b = write_model(m);
  const ModelFile back = read_model(b);
  EXPECT_EQ(back.blobs, m.blobs);
  EXPECT_EQ(back.header["labels"], m.header["labels"]);
  EXPECT_EQ(write_model(back), b);
}

TEST(ModelFile, LabelCountMustMatchFinalWidth) {
  ModelFile m = dense4_model();
  m.header["labels"] = {"a", "b", "c"};
  EXPECT_THROW(write_model(m), ModelError);
}

TEST(ModelFile, BlobValueCountMustMatchShape) {
  ModelFile m = dense4_model();
  m.blobs[1].shape = {5};
  EXPECT_THROW(write_model(m), ModelError);
}

TEST(ModelFile, TruncatedBlobRejected) {
  Bytes b = write_model(dense4_model());
  b.resize(b.size() - 2);
  try {
    read_model(b);
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST(ModelFile, BadMagicVersionAndTrailingBytes) {
  Bytes b = write_model(dense4_model());
  Bytes bad = b;
  bad[0] = 'X';
  EXPECT_THROW(read_model(bad), ModelError);
  Bytes ver = b;
  ver[4] = 2;
  EXPECT_THROW(read_model(ver), ModelError);
  Bytes extra = b;
  extra.push_back(0);
  EXPECT_THROW(read_model(extra), ModelError);
}

TEST(ModelFile, LittleEndianFloatLayout) {
  ModelFile m;
  m.blobs = {Blob{"w", {1}, {1.0f}}};
  const Bytes b = write_model(m);
  const Bytes tail(b.end() - 4, b.end());
  EXPECT_EQ(tail, (Bytes{0x00, 0x00, 0x80, 0x3f}));
}

TEST(ModelFile, FuzzNeverCrashes) {
  Rng rng(5);
  const Bytes valid = write_model(dense4_model());
  for (int i = 0; i < 2000; ++i) {
    Bytes b = valid;
    if (i % 2 == 0) {
      b.resize(rng.below(b.size() + 1));
    } else {
      for (int f = 0; f < 3; ++f) b[rng.below(b.size())] = static_cast<std::uint8_t>(rng.below(256));
    }
    try {
      read_model(b);
    } catch (const ModelError&) {
    }
  }
}

// ---------------------------------------------------------------- Manifest

TEST(Manifest, HeaderAndOneRow) {
  const auto m = parse_manifest("angry,happy,neutral,sad\ntrain\t2\timg/0001.pgm\n");
  EXPECT_EQ(m.labels, (std::vector<std::string>{"angry", "happy", "neutral", "sad"}));
  ASSERT_EQ(m.records.size(), 1u);
  EXPECT_EQ(m.records[0].label_id, 2);
  EXPECT_EQ(m.records[0].split, Split::train);
  EXPECT_EQ(m.records[0].path, "img/0001.pgm");
}

TEST(Manifest, EmptyRecordSectionIsValid) {
  const auto m = parse_manifest("angry,happy,neutral,sad\n");
  EXPECT_TRUE(m.records.empty());
  EXPECT_EQ(m.labels.size(), 4u);
}

TEST(Manifest, FileOrderAndSplitCounts) {
  std::string text = "a,b\n";
  for (int i = 0; i < 7; ++i) text += "train\t" + std::to_string(i % 2) + "\tt" + std::to_string(i) + "\n";
  for (int i = 0; i < 3; ++i) text += "val\t0\tv" + std::to_string(i) + "\n";
  for (int i = 0; i < 2; ++i) text += "test\t1\tx" + std::to_string(i) + "\n";
  const auto m = parse_manifest(text);
  EXPECT_EQ(m.count(Split::train), 7u);
  EXPECT_EQ(m.count(Split::val), 3u);
  EXPECT_EQ(m.count(Split::test), 2u);
  EXPECT_EQ(m.records[3].path, "t3");
  EXPECT_EQ(parse_manifest(format_manifest(m)).records.size(), m.records.size());
}

TEST(Manifest, Errors) {
  EXPECT_THROW(parse_manifest("a,b\ndev\t0\tx\n"), DataError);
  EXPECT_THROW(parse_manifest("a,b\ntrain\t2\tx\n"), DataError);
  EXPECT_THROW(parse_manifest("a,b\ntrain\t-1\tx\n"), DataError);
  EXPECT_THROW(parse_manifest("a,b\ntrain\tone\tx\n"), DataError);
  EXPECT_THROW(parse_manifest("a,b\ntrain\t0\n"), DataError);
  EXPECT_THROW(parse_manifest("a,b\ntrain\t0\tx\ntest\t1\tx\n"), DataError);
  EXPECT_THROW(parse_manifest("a,,b\n"), DataError);
}

TEST(Manifest, ReadResolvesRelativePaths) {
  const auto dir = temp_dir();
  {
    std::ofstream out(dir / "m.tsv");
    out << "angry,happy,neutral,sad\ntest\t3\tfaces/x.pgm\ntrain\t0\t/abs/y.pgm\n";
  }
  const auto m = read_manifest(dir / "m.tsv");
  EXPECT_EQ(m.resolve(m.records[0]), dir / "faces/x.pgm");
  EXPECT_EQ(m.resolve(m.records[1]), std::filesystem::path("/abs/y.pgm"));
  EXPECT_THROW(read_manifest(dir / "missing.tsv"), DataError);
  std::filesystem::remove_all(dir);
}

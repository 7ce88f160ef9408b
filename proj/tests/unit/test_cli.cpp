#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "emo/cli.hpp"
#include "support/test_support.hpp"

using namespace emo;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;

  json parsed() const { return json::parse(out); }
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "emo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("emo_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string write(const std::string& name, io::ByteView bytes) const {
    const auto p = dir_ / name;
    io::write_file(p, bytes);
    return p.string();
  }

  std::string write_text(const std::string& name, const std::string& text) const {
    return write(name, io::as_bytes(text));
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string cascade() { return test::data_path("haarcascade_frontalface_default.xml").string(); }
  static std::string portrait() { return test::data_path("portrait.pgm").string(); }

  // Cartoon faces: `per_class` training and one validation image per class.
  std::string fer_manifest(int per_class) const {
    io::Manifest m;
    m.labels = nn::kFerLabels;
    Rng rng(3, "cli-faces");
    for (int i = 0; i < per_class + 1; ++i) {
      for (int c = 0; c < 4; ++c) {
        const std::string name = "f" + std::to_string(i) + "_" + std::to_string(c) + ".pgm";
        write(name, io::encode_pgm(test::cartoon_face(c, rng)));
        m.records.push_back({name, c, i < per_class ? io::Split::train : io::Split::val});
      }
    }
    return write_text("fer.tsv", io::format_manifest(m));
  }

  std::filesystem::path dir_;
};

}  // namespace

TEST_F(CliTest, NoArgumentsIsUsageError) {
  const auto r = run_cli({});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(r.out.empty());
  EXPECT_NE(r.err.find("features"), std::string::npos);
}

TEST_F(CliTest, UnknownSubcommandAndMissingOption) {
  EXPECT_EQ(run_cli({"dance"}).code, 1);
  EXPECT_EQ(run_cli({"features"}).code, 1);
  EXPECT_EQ(run_cli({"train", "xyz", "--manifest", "m", "--out", "o"}).code, 1);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("classify-audio"), std::string::npos);
}

TEST_F(CliTest, Version) {
  const auto r = run_cli({"--version"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.parsed()["version"], cli::kVersion);
  EXPECT_EQ(r.parsed()["model_file"]["magic"], "EMOW");
}

TEST_F(CliTest, EvalMissingModelIsModelError) {
  const auto r = run_cli({"eval", "--model", path("nope.emow")});
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(r.out.empty());
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, CorruptModelIsModelError) {
  const auto bad = write_text("bad.emow", "EMOWgarbage");
  EXPECT_EQ(run_cli({"classify-audio", "--model", bad, "--audio", bad}).code, 3);
}

TEST_F(CliTest, FeaturesOfTone) {
  const auto wav = write("tone.wav", io::encode_wav(test::tone(440.0, 48000), 48000, 1));
  const auto r = run_cli({"features", "--audio", wav});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto v = r.parsed();
  ASSERT_TRUE(v.is_array());
  EXPECT_EQ(v.size(), 66u);
  EXPECT_NEAR(v[64].get<double>(), 440.0, 4.0);
  EXPECT_EQ(run_cli({"features", "--audio", wav}).out, r.out);
}

TEST_F(CliTest, FeaturesDataErrors) {
  EXPECT_EQ(run_cli({"features", "--audio", path("missing.wav")}).code, 2);
  EXPECT_EQ(run_cli({"features", "--audio", write_text("x.wav", "RIFFnope")}).code, 2);
}

TEST_F(CliTest, DetectPortrait) {
  const auto r = run_cli({"detect", "--image", portrait(), "--cascade", cascade()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto boxes = r.parsed();
  ASSERT_EQ(boxes.size(), 1u);
  const vision::Detection d{boxes[0]["x"], boxes[0]["y"], boxes[0]["w"], boxes[0]["h"], 0};
  EXPECT_GE(vision::iou(d, {87, 36, 52, 52, 0}), 0.5);
}

TEST_F(CliTest, DetectErrors) {
  EXPECT_EQ(run_cli({"detect", "--image", portrait(), "--cascade", write_text("c.xml", "<x/>")}).code, 3);
  const auto tiny = write("tiny.pgm", io::encode_pgm(io::GrayImage(8, 8)));
  EXPECT_EQ(run_cli({"detect", "--image", tiny, "--cascade", cascade()}).code, 2);
}

TEST_F(CliTest, PlanFromLabel) {
  const auto catalog = write_text("music.jsonl",
                                  "{\"track_id\":\"A\",\"valence\":-0.7,\"arousal\":-0.5}\n"
                                  "{\"track_id\":\"B\",\"valence\":0.0,\"arousal\":0.0}\n"
                                  "{\"track_id\":\"C\",\"valence\":0.8,\"arousal\":0.3}\n");
  const auto r = run_cli({"plan", "--label", "sad", "--catalog", catalog, "--n", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = r.parsed();
  EXPECT_EQ(j["label"], "sad");
  EXPECT_EQ(j["colors"][0]["rgb"], "#FFA500");
  EXPECT_EQ(j["colors"][1]["rgb"], "#FF4500");
  ASSERT_EQ(j["music"].size(), 3u);
  EXPECT_EQ(j["music"][0]["track_id"], "A");
  EXPECT_EQ(j["music"][1]["track_id"], "B");
  EXPECT_EQ(j["music"][2]["track_id"], "C");
  EXPECT_EQ(j["music"][0]["phase"], "discharge");
}

TEST_F(CliTest, PlanFromPosteriors) {
  std::string ser = "0,0,0.2,0,0.2,0,0,0,0.3,0,0,0,0,0.3,0,0";
  const auto r = run_cli({"plan", "--fer", "0.7,0.1,0.1,0.1", "--ser", ser, "--w-face", "0.6"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = r.parsed();
  EXPECT_EQ(j["label"], "angry");
  EXPECT_NEAR(j["fused_posterior"][0].get<double>(), 0.50, 1e-12);
  EXPECT_NEAR(j["fused_posterior"][1].get<double>(), 0.14, 1e-12);
  EXPECT_NEAR(j["fused_posterior"][2].get<double>(), 0.18, 1e-12);
  EXPECT_NEAR(j["fused_posterior"][3].get<double>(), 0.18, 1e-12);
  EXPECT_EQ(j["colors"][0]["rgb"], "#4B0082");
}

TEST_F(CliTest, PlanErrors) {
  EXPECT_EQ(run_cli({"plan"}).code, 1);
  EXPECT_EQ(run_cli({"plan", "--label", "bored"}).code, 1);
  EXPECT_EQ(run_cli({"plan", "--fer", "0.5,0.5,0.5,0.5"}).code, 1);
  EXPECT_EQ(run_cli({"plan", "--fer", "a,b"}).code, 1);
  EXPECT_EQ(run_cli({"plan", "--label", "sad", "--catalog", write_text("e.jsonl", "")}).code, 2);
}

TEST_F(CliTest, TrainEvalClassifyFer) {
  const auto manifest = fer_manifest(2);
  const auto model = path("fer.emow");
  const auto hist = path("history.json");
  const auto t = run_cli({"train", "fer", "--manifest", manifest, "--out", model, "--width", "0.0625", "--max-epochs", "1",
                      "--seed", "7", "--history", hist});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto tj = t.parsed();
  EXPECT_EQ(tj["train_samples"], 8);
  EXPECT_EQ(tj["val_samples"], 4);
  EXPECT_EQ(tj["history"]["epochs"].size(), 2u);
  EXPECT_EQ(tj["history"]["monitor"], "val_accuracy");
  EXPECT_TRUE(std::filesystem::exists(hist));

  const auto m = service::load_network(model);
  EXPECT_EQ(m.metadata["hyperparameters"]["phases"][0]["optimizer"], "rmsprop");
  EXPECT_EQ(m.metadata["hyperparameters"]["phases"][0]["epochs"], 1);

  // Same seed, same bytes.
  const auto model2 = path("fer2.emow");
  ASSERT_EQ(run_cli({"train", "fer", "--manifest", manifest, "--out", model2, "--width", "0.0625", "--max-epochs", "1",
                 "--seed", "7"})
                .code,
            0);
  EXPECT_EQ(io::read_file(model), io::read_file(model2));

  const auto e = run_cli({"eval", "--model", model, "--split", "val"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto ej = e.parsed();
  EXPECT_EQ(ej["total"], 4);
  EXPECT_EQ(ej["labels"], json(nn::kFerLabels));
  std::size_t sum = 0;
  for (const auto& row : ej["confusion"]) {
    for (const auto& v : row) sum += v.get<std::size_t>();
  }
  EXPECT_EQ(sum, 4u);
  EXPECT_EQ(run_cli({"eval", "--model", model, "--split", "test"}).code, 2);
  EXPECT_EQ(run_cli({"eval", "--model", model, "--split", "holdout"}).code, 2);

  const auto c = run_cli({"classify-image", "--model", model, "--image", portrait(), "--cascade", cascade()});
  ASSERT_EQ(c.code, 0) << c.err;
  const auto cj = c.parsed();
  EXPECT_EQ(cj["posterior"].size(), 4u);
  double total = 0.0;
  for (const auto& v : cj["posterior"]) total += v.get<double>();
  EXPECT_NEAR(total, 1.0, 1e-5);
  EXPECT_GE(vision::iou({cj["face"]["x"], cj["face"]["y"], cj["face"]["w"], cj["face"]["h"], 0}, {87, 36, 52, 52, 0}),
            0.5);
  EXPECT_EQ(run_cli({"classify-image", "--model", model, "--image", portrait(), "--no-detect"}).code, 0);
  EXPECT_EQ(run_cli({"classify-image", "--model", model, "--image", portrait()}).code, 1);
  const auto blank = write("blank.pgm", io::encode_pgm(io::GrayImage(64, 64, 100)));
  EXPECT_EQ(run_cli({"classify-image", "--model", model, "--image", blank, "--cascade", cascade()}).code, 2);
  const auto wav = write("t.wav", io::encode_wav(test::tone(220.0, 24000), 48000, 1));
  EXPECT_EQ(run_cli({"classify-audio", "--model", model, "--audio", wav}).code, 3);
}

TEST_F(CliTest, TrainRejectsWrongLabels) {
  io::Manifest m;
  m.labels = {"happy", "angry", "neutral", "sad"};
  write("a.pgm", io::encode_pgm(io::GrayImage(48, 48)));
  m.records.push_back({"a.pgm", 0, io::Split::train});
  const auto manifest = write_text("m.tsv", io::format_manifest(m));
  EXPECT_EQ(run_cli({"train", "fer", "--manifest", manifest, "--out", path("o.emow")}).code, 2);
}

TEST_F(CliTest, TrainClassifySer) {
  io::Manifest m;
  m.labels = nn::ser_labels();
  for (int i = 0; i < 16; ++i) {
    const std::string name = "a" + std::to_string(i) + ".wav";
    write(name, io::encode_wav(test::tone(150.0 + 25.0 * i, 12000), 48000, 1));
    m.records.push_back({name, i, io::Split::train});
  }
  const auto manifest = write_text("ser.tsv", io::format_manifest(m));
  const auto model = path("ser.emow");
  const auto t = run_cli({"train", "ser", "--manifest", manifest, "--out", model, "--max-epochs", "2"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(t.parsed()["history"]["monitor"], "accuracy");
  const auto net = service::load_network(model);
  EXPECT_EQ(net.metadata["preprocess"]["mean"].size(), 66u);

  const auto c = run_cli({"classify-audio", "--model", model, "--audio", path("a3.wav")});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(c.parsed()["posterior"].size(), 16u);
  EXPECT_EQ(c.parsed()["labels"][0], "male_neutral");
  EXPECT_EQ(run_cli({"eval", "--model", model, "--manifest", manifest}).code, 2);  // default split is empty
  EXPECT_EQ(run_cli({"eval", "--model", model, "--manifest", manifest, "--split", "train"}).code, 0);
}

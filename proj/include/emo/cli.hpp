#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "emo/service/http.hpp"

namespace emo::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kModelError = 3 };

namespace detail {

using nlohmann::json;

inline std::string read_text(const std::filesystem::path& p) {
  const io::Bytes b = io::read_file(p);
  return {b.begin(), b.end()};
}

inline vision::CascadeModel load_cascade(const std::filesystem::path& p) {
  try {
    return vision::parse_cascade(read_text(p));
  } catch (const DataError& e) {
    throw ModelError(e.what());
  }
}

inline std::vector<double> parse_probabilities(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument("not a number: '" + item + "'");
    }
  }
  return out;
}

inline json detection_json(const vision::Detection& d) {
  return {{"x", d.x}, {"y", d.y}, {"w", d.w}, {"h", d.h}, {"neighbors", d.neighbor_count}};
}

inline json posterior_json(const nn::Tensor<float>& q, const std::vector<std::string>& labels) {
  std::vector<double> p(q.data.begin(), q.data.end());
  const auto arg = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  return {{"label", arg < labels.size() ? labels[arg] : std::to_string(arg)}, {"posterior", p}, {"labels", labels}};
}

inline bool is_fer_model(const nn::Network<float>& net) { return net.input_shape().size() == 3; }

inline void require_labels(const io::Manifest& m, const std::vector<std::string>& expected, const char* what) {
  if (m.labels != expected) {
    std::string names;
    for (const auto& l : expected) names += (names.empty() ? "" : ",") + l;
    throw DataError(std::string(what) + " manifest labels must be: " + names);
  }
}

struct TrainArgs {
  std::string kind;
  std::string manifest;
  std::uint64_t seed = 0;
  std::string out;
  double width = 1.0;
  std::string history;
  int max_epochs = 0;
  bool no_augment = false;
};

inline json run_train(const TrainArgs& a) {
  const io::Manifest m = io::read_manifest(a.manifest);
  nn::Network<float> net;
  nn::TrainConfig<float> cfg;
  nn::Dataset<float> train_set, val_set;
  if (a.kind == "fer") {
    require_labels(m, nn::kFerLabels, "fer");
    net = nn::build_fer<float>(a.width);
    cfg = nn::fer_schedule(net, a.seed);
    cfg.augment = !a.no_augment;
    train_set = nn::load_fer_split<float>(m, io::Split::train);
    val_set = nn::load_fer_split<float>(m, io::Split::val);
  } else {
    require_labels(m, nn::ser_labels(), "ser");
    net = nn::build_ser<float>();
    cfg = nn::ser_schedule<float>(a.seed);
    const auto tr = nn::load_ser_features(m, io::Split::train);
    const auto va = nn::load_ser_features(m, io::Split::val);
    const auto st = nn::Standardizer::fit(tr.features);
    train_set = nn::make_ser_dataset<float>(tr.features, tr.labels, st);
    val_set = nn::make_ser_dataset<float>(va.features, va.labels, st);
    net.metadata["preprocess"] = st.to_json();
  }
  if (a.max_epochs > 0) {
    for (auto& p : cfg.phases) p.epochs = std::min(p.epochs, a.max_epochs);
  }
  net.initialize(a.seed);
  net.metadata["hyperparameters"] = nn::describe_schedule(cfg);
  net.metadata["manifest"] = std::filesystem::absolute(a.manifest).string();
  const nn::TrainResult result = nn::train(net, train_set, val_set, cfg);
  io::write_file(a.out, io::write_model(net.to_model_file()));
  json history = nn::to_json(result);
  if (!a.history.empty()) {
    const std::string text = history.dump(2) + "\n";
    io::write_file(a.history, io::as_bytes(text));
  }
  return {{"model", a.out}, {"kind", a.kind}, {"train_samples", train_set.size()}, {"val_samples", val_set.size()},
          {"history", std::move(history)}};
}

inline json run_eval(const std::string& model_path, std::string manifest_path, const std::string& split_name) {
  auto net = service::load_network(model_path);
  const io::Split split = io::parse_split(split_name);
  if (manifest_path.empty()) {
    if (!net.metadata.contains("manifest")) throw DataError("eval: no --manifest and none recorded in the model");
    manifest_path = net.metadata["manifest"].get<std::string>();
  }
  const io::Manifest m = io::read_manifest(manifest_path);
  nn::Dataset<float> data;
  if (is_fer_model(net)) {
    data = nn::load_fer_split<float>(m, split);
  } else {
    const auto fs = nn::load_ser_features(m, split);
    data = nn::make_ser_dataset<float>(fs.features, fs.labels,
                                       nn::Standardizer::from_json(net.metadata.value("preprocess", json())));
  }
  if (data.empty()) throw DataError("eval: split '" + split_name + "' is empty");
  for (int y : data.labels) {
    if (y >= net.output_shape().back()) throw DataError("eval: manifest label exceeds model classes");
  }
  json out = nn::to_json(nn::evaluate(net, data), net.labels());
  out["split"] = split_name;
  out["model"] = model_path;
  return out;
}

}  // namespace detail

/// Runs one CLI invocation. JSON results go to `out`; diagnostics to `err`.
inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using detail::json;
  CLI::App app{"Emotion-aware actuation toolkit: features, detection, training, evaluation, planning, serving."};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "Print tool and model-file versions as JSON");

  std::string audio, image, cascade, model, manifest, split = "test", catalog, label, fer_p, ser_p;
  double scale = 1.1, w_face = affect::kDefaultFaceWeight;
  int min_neighbors = 3, n_tracks = affect::kDefaultPlaylistLength, transition_ms = affect::kDefaultTransitionMs;

  auto* features = app.add_subcommand("features", "66-element acoustic feature vector of a WAV file");
  features->add_option("--audio", audio, "WAV file")->required();

  auto* detect = app.add_subcommand("detect", "Face boxes in a P5 image");
  detect->add_option("--image", image, "P5 PGM file")->required();
  detect->add_option("--cascade", cascade, "Haar cascade XML")->required();
  detect->add_option("--scale", scale, "Pyramid scale factor")->capture_default_str();
  detect->add_option("--min-neighbors", min_neighbors, "Minimum raw hits per face")->capture_default_str();

  detail::TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a FER or SER model from a manifest");
  train->add_option("kind", ta.kind, "fer or ser")->required()->check(CLI::IsMember({"fer", "ser"}));
  train->add_option("--manifest", ta.manifest, "Manifest TSV")->required();
  train->add_option("--seed", ta.seed, "Run seed")->capture_default_str();
  train->add_option("--out", ta.out, "Output model file")->required();
  train->add_option("--width", ta.width, "FER channel width multiplier in (0, 1]")->capture_default_str();
  train->add_option("--history", ta.history, "Also write the epoch history JSON here");
  train->add_option("--max-epochs", ta.max_epochs, "Cap on every phase's epoch count (0 = schedule)");
  train->add_flag("--no-augment", ta.no_augment, "Disable FER image augmentation");

  auto* eval = app.add_subcommand("eval", "Accuracy and confusion matrix on a manifest split");
  eval->add_option("--model", model, "Model file")->required();
  eval->add_option("--manifest", manifest, "Manifest TSV (default: the one recorded at training)");
  eval->add_option("--split", split, "train, val or test")->capture_default_str();

  bool no_detect = false;
  auto* cls_img = app.add_subcommand("classify-image", "FER posterior for the largest face in a P5 image");
  cls_img->add_option("--model", model, "FER model file")->required();
  cls_img->add_option("--image", image, "P5 PGM file")->required();
  cls_img->add_option("--cascade", cascade, "Haar cascade XML");
  cls_img->add_flag("--no-detect", no_detect, "Classify the whole image as the face");

  auto* cls_aud = app.add_subcommand("classify-audio", "SER posterior for a WAV file");
  cls_aud->add_option("--model", model, "SER model file")->required();
  cls_aud->add_option("--audio", audio, "WAV file")->required();

  auto* plan = app.add_subcommand("plan", "Color and music plan for a mood or for classifier posteriors");
  plan->add_option("--label", label, "angry, happy, neutral or sad");
  plan->add_option("--fer", fer_p, "Comma-separated 4-class FER posterior");
  plan->add_option("--ser", ser_p, "Comma-separated 16-class SER posterior");
  plan->add_option("--w-face", w_face, "Face weight in fusion")->capture_default_str();
  plan->add_option("--catalog", catalog, "Music catalog JSONL");
  plan->add_option("--n", n_tracks, "Playlist length")->capture_default_str();
  plan->add_option("--transition-ms", transition_ms, "Color step duration")->capture_default_str();

  std::string host = "127.0.0.1", fer_model, ser_model;
  int port = 8080, hysteresis = 3;
  auto* serve = app.add_subcommand("serve", "HTTP session service with device pushes");
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Listen port")->capture_default_str();
  serve->add_option("--fer", fer_model, "FER model file");
  serve->add_option("--ser", ser_model, "SER model file");
  serve->add_option("--cascade", cascade, "Haar cascade XML");
  serve->add_option("--catalog", catalog, "Music catalog JSONL");
  serve->add_option("--hysteresis", hysteresis, "Consecutive labels required to switch")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    json result;
    if (version) {
      result = {{"version", kVersion}, {"model_file", {{"magic", "EMOW"}, {"version", io::kModelFileVersion}}}};
    } else if (*features) {
      const auto fv = dsp::extract_features(io::decode_wav(io::read_file(audio)));
      result = json(std::vector<double>(fv.begin(), fv.end()));
    } else if (*detect) {
      const auto c = detail::load_cascade(cascade);
      const auto img = io::decode_pgm(io::read_file(image));
      result = json::array();
      for (const auto& d : vision::detect_faces(img, c, {scale, min_neighbors, vision::DetectOptions{}.merge_iou})) {
        result.push_back(detail::detection_json(d));
      }
    } else if (*train) {
      result = detail::run_train(ta);
    } else if (*eval) {
      result = detail::run_eval(model, manifest, split);
    } else if (*cls_img) {
      auto net = service::load_network(model);
      if (!detail::is_fer_model(net)) throw ModelError("classify-image: not a FER model");
      const auto img = io::decode_pgm(io::read_file(image));
      vision::Detection box{0, 0, img.width, img.height, 0};
      if (!no_detect) {
        if (cascade.empty()) throw std::invalid_argument("classify-image: --cascade is required unless --no-detect");
        const auto c = detail::load_cascade(cascade);
        const auto faces = vision::detect_faces(img, c);
        if (faces.empty()) throw DataError("classify-image: no face detected");
        box = *std::max_element(faces.begin(), faces.end(), [](const auto& a, const auto& b) {
          return static_cast<long>(a.w) * a.h < static_cast<long>(b.w) * b.h;
        });
      }
      result = detail::posterior_json(net.forward(nn::face_tensor(vision::crop_and_resize(img, box))), net.labels());
      result["face"] = detail::detection_json(box);
    } else if (*cls_aud) {
      auto net = service::load_network(model);
      if (detail::is_fer_model(net)) throw ModelError("classify-audio: not a SER model");
      const auto st = nn::Standardizer::from_json(net.metadata.value("preprocess", json()));
      const auto fv = dsp::extract_features(io::decode_wav(io::read_file(audio)));
      result = detail::posterior_json(net.forward(nn::feature_tensor(fv, st)), net.labels());
    } else if (*plan) {
      affect::Mood mood;
      if (!label.empty()) {
        const auto m = affect::parse_mood(label);
        if (!m) throw std::invalid_argument("plan: unknown label '" + label + "'");
        mood = *m;
      } else if (!fer_p.empty() || !ser_p.empty()) {
        std::optional<std::vector<double>> f, s;
        if (!fer_p.empty()) f = detail::parse_probabilities(fer_p);
        if (!ser_p.empty()) s = detail::parse_probabilities(ser_p);
        const auto fused = affect::fuse(f, s, w_face);
        mood = fused.label;
        result["fused_posterior"] = fused.posterior;
      } else {
        throw std::invalid_argument("plan: give --label or --fer/--ser posteriors");
      }
      const auto p = affect::mood_to_affect(mood);
      result["label"] = std::string(affect::to_string(mood));
      result["affect"] = {{"valence", p.valence}, {"arousal", p.arousal}};
      result["colors"] = service::to_json(affect::plan_color(mood, transition_ms));
      if (!catalog.empty()) {
        const auto tracks = affect::parse_catalog(detail::read_text(catalog));
        result["music"] = service::to_json(affect::plan_music(p, tracks, n_tracks));
      }
    } else if (*serve) {
      service::ServiceConfig cfg;
      if (!fer_model.empty()) cfg.fer = service::load_network(fer_model);
      if (!ser_model.empty()) {
        cfg.ser = service::load_network(ser_model);
        cfg.ser_standardizer = nn::Standardizer::from_json(cfg.ser->metadata.value("preprocess", json()));
      }
      if (!cascade.empty()) cfg.cascade = detail::load_cascade(cascade);
      if (!catalog.empty()) cfg.catalog = affect::parse_catalog(detail::read_text(catalog));
      cfg.hysteresis = hysteresis;
      if (const char* dir = std::getenv("EMO_LOG_DIR"); dir != nullptr && *dir != '\0') cfg.log_dir = dir;
      service::Service svc(std::move(cfg), std::make_shared<service::TcpDeviceSink>());
      httplib::Server srv;
      service::install_routes(srv, svc);
      err << "listening on " << host << ":" << port << "\n";
      if (!srv.listen(host, port)) throw DataError("serve: cannot listen on " + host + ":" + std::to_string(port));
      return kOk;
    } else {
      err << app.help();
      return kUsage;
    }
    out << result.dump() << "\n";
    return kOk;
  } catch (const ModelError& e) {
    err << "model error: " << e.what() << "\n";
    return kModelError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace emo::cli

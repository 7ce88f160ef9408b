#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "emo/affect/hysteresis.hpp"
#include "emo/affect/music.hpp"
#include "emo/nn/data.hpp"
#include "emo/service/device.hpp"
#include "emo/vision/transform.hpp"

namespace emo::service {

struct ServiceConfig {
  std::optional<nn::Network<float>> fer;
  std::optional<nn::Network<float>> ser;
  nn::Standardizer ser_standardizer = nn::Standardizer::from_json(nullptr);
  std::optional<vision::CascadeModel> cascade;
  std::optional<std::vector<affect::Track>> catalog;
  vision::DetectOptions detect;
  int hysteresis = 3;
  double w_face = affect::kDefaultFaceWeight;
  int transition_ms = affect::kDefaultTransitionMs;
  int playlist_length = affect::kDefaultPlaylistLength;
  /// Observation log directory; events are appended to observations.jsonl.
  std::optional<std::filesystem::path> log_dir;
};

/// HTTP-shaped result: status code and JSON body.
struct Response {
  int status = 200;
  nlohmann::json body;
};

inline Response error_response(int status, const std::string& message) { return {status, {{"error", message}}}; }

inline nlohmann::json to_json(const std::vector<affect::ColorStep>& steps) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : steps) out.push_back({{"rgb", s.rgb}, {"transition_ms", s.transition_ms}});
  return out;
}

inline nlohmann::json to_json(const std::vector<affect::PlannedTrack>& plan) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : plan) {
    nlohmann::json j = affect::to_json(p.track);
    j["phase"] = std::string(affect::to_string(p.phase));
    out.push_back(std::move(j));
  }
  return out;
}

inline const std::string kObservationLogName = "observations.jsonl";

/// Session state machine behind the HTTP routes. Every public call takes
/// the service lock, so state changes and device pushes are serialized.
class Service {
 public:
  Service(ServiceConfig cfg, std::shared_ptr<DeviceSink> sink) : cfg_(std::move(cfg)), sink_(std::move(sink)) {
    if (cfg_.hysteresis < 1) throw std::invalid_argument("service: hysteresis must be >= 1");
    if (cfg_.fer) cfg_.fer->check_classifier();
    if (cfg_.ser) cfg_.ser->check_classifier();
    if (cfg_.log_dir) {
      std::filesystem::create_directories(*cfg_.log_dir);
      log_.open(*cfg_.log_dir / kObservationLogName, std::ios::app | std::ios::binary);
      if (!log_) throw DataError("service: cannot open observation log in " + cfg_.log_dir->string());
    }
  }

  Response create_session() {
    std::lock_guard lock(mutex_);
    const std::string id = "s" + std::to_string(++session_counter_);
    Session s{id, affect::Hysteresis<>(cfg_.hysteresis)};
    s.created_ms = s.updated_ms = now_ms();
    sessions_.emplace(id, std::move(s));
    log({{"event", "session"}, {"session", id}});
    return {201, {{"id", id}}};
  }

  Response post_image(const std::string& id, io::ByteView body) {
    std::lock_guard lock(mutex_);
    Session* s = find(id);
    if (s == nullptr) return error_response(404, "unknown session " + id);
    log({{"event", "image"}, {"session", id}, {"body_b64", base64_encode(body)}});
    if (!cfg_.fer || !cfg_.cascade) return error_response(503, "face model or cascade not loaded");
    io::GrayImage image;
    try {
      image = io::decode_pgm(body);
    } catch (const DataError& e) {
      return error_response(422, e.what());
    }
    std::vector<vision::Detection> faces;
    if (image.width >= cascade().window_width && image.height >= cascade().window_height) {
      faces = vision::detect_faces(image, cascade(), cfg_.detect);
    }
    if (faces.empty()) return error_response(409, "no face detected");
    const auto largest = std::max_element(faces.begin(), faces.end(), [](const auto& a, const auto& b) {
      return static_cast<long>(a.w) * a.h < static_cast<long>(b.w) * b.h;
    });
    const auto posterior = classify(*cfg_.fer, nn::face_tensor(vision::crop_and_resize(image, *largest)));
    s->fer = posterior;
    nlohmann::json out = observe(*s, posterior);
    out["face"] = {{"x", largest->x}, {"y", largest->y}, {"w", largest->w}, {"h", largest->h}};
    return {200, std::move(out)};
  }

  Response post_audio(const std::string& id, io::ByteView body) {
    std::lock_guard lock(mutex_);
    Session* s = find(id);
    if (s == nullptr) return error_response(404, "unknown session " + id);
    log({{"event", "audio"}, {"session", id}, {"body_b64", base64_encode(body)}});
    if (!cfg_.ser) return error_response(503, "speech model not loaded");
    dsp::FeatureVector fv;
    try {
      fv = dsp::extract_features(io::decode_wav(body));
    } catch (const DataError& e) {
      return error_response(422, e.what());
    }
    const auto posterior = classify(*cfg_.ser, nn::feature_tensor(fv, cfg_.ser_standardizer));
    s->ser = posterior;
    return {200, observe(*s, posterior)};
  }

  Response get_state(const std::string& id) {
    std::lock_guard lock(mutex_);
    const Session* s = find(id);
    if (s == nullptr) return error_response(404, "unknown session " + id);
    const affect::Mood stable = s->hysteresis.stable();
    const affect::AffectPoint p = affect::mood_to_affect(stable);
    nlohmann::json j = {{"id", s->id},
                        {"stable_label", std::string(affect::to_string(stable))},
                        {"affect", {{"valence", p.valence}, {"arousal", p.arousal}}},
                        {"plan", {{"colors", to_json(s->colors)}, {"music", to_json(s->music)}}},
                        {"observations", s->observations},
                        {"created_ms", s->created_ms},
                        {"updated_ms", s->updated_ms}};
    return {200, std::move(j)};
  }

  Response get_recommendation(const std::string& id) {
    std::lock_guard lock(mutex_);
    const Session* s = find(id);
    if (s == nullptr) return error_response(404, "unknown session " + id);
    if (!cfg_.catalog || cfg_.catalog->empty()) return error_response(503, "music catalog not loaded");
    const affect::Mood stable = s->hysteresis.stable();
    const auto plan = affect::plan_music(affect::mood_to_affect(stable), *cfg_.catalog, cfg_.playlist_length);
    return {200, {{"session", id}, {"stable_label", std::string(affect::to_string(stable))}, {"tracks", to_json(plan)}}};
  }

  /// Body: {"device_id": ..., "address": "host:port"}.
  Response register_device(std::string_view body) {
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("device_id") || !j.contains("address") ||
        !j["device_id"].is_string() || !j["address"].is_string()) {
      return error_response(422, "body must be {\"device_id\": string, \"address\": \"host:port\"}");
    }
    return register_device(j["device_id"].get<std::string>(), j["address"].get<std::string>());
  }

  Response register_device(const std::string& device_id, const std::string& address) {
    std::lock_guard lock(mutex_);
    if (device_id.empty()) return error_response(422, "empty device_id");
    try {
      split_address(address);
    } catch (const DataError& e) {
      return error_response(422, e.what());
    }
    for (const Device& d : devices_) {
      if (d.device_id == device_id) return error_response(409, "device " + device_id + " already registered");
    }
    devices_.push_back(Device{device_id, address});
    log({{"event", "device"}, {"device_id", device_id}, {"address", address}});
    return {201, {{"device_id", device_id}, {"address", address}}};
  }

  std::vector<Device> devices() const {
    std::lock_guard lock(mutex_);
    return devices_;
  }

 private:
  struct Session {
    Session(std::string session_id, affect::Hysteresis<> h) : id(std::move(session_id)), hysteresis(h) {}

    std::string id;
    affect::Hysteresis<> hysteresis;
    std::optional<std::vector<double>> fer;
    std::optional<std::vector<double>> ser;
    std::vector<affect::ColorStep> colors;
    std::vector<affect::PlannedTrack> music;
    std::int64_t observations = 0;
    std::int64_t created_ms = 0;
    std::int64_t updated_ms = 0;
  };

  const vision::CascadeModel& cascade() const { return *cfg_.cascade; }

  Session* find(const std::string& id) {
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : &it->second;
  }

  static std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  // Softmax output re-normalized in double precision.
  static std::vector<double> classify(nn::Network<float>& net, const nn::Tensor<float>& x) {
    const auto q = net.forward(x);
    std::vector<double> p(q.data.begin(), q.data.end());
    double total = 0.0;
    for (double v : p) total += v;
    for (double& v : p) v /= total;
    return p;
  }

  nlohmann::json observe(Session& s, const std::vector<double>& posterior) {
    const affect::Fused fused = affect::fuse(s.fer, s.ser, cfg_.w_face);
    const auto update = s.hysteresis.update(fused.label);
    ++s.observations;
    s.updated_ms = std::max(s.updated_ms, now_ms());
    if (update.changed) {
      s.colors = affect::plan_color(update.stable, cfg_.transition_ms);
      s.music.clear();
      if (cfg_.catalog && !cfg_.catalog->empty()) {
        s.music = affect::plan_music(affect::mood_to_affect(update.stable), *cfg_.catalog, cfg_.playlist_length);
      }
      push(s.colors);
    }
    const std::size_t arg = static_cast<std::size_t>(std::max_element(posterior.begin(), posterior.end()) - posterior.begin());
    const auto& labels = posterior.size() == affect::kMoodCount ? cfg_.fer->labels() : cfg_.ser->labels();
    return {{"label", arg < labels.size() ? labels[arg] : std::to_string(arg)},
            {"posterior", posterior},
            {"fused_label", std::string(affect::to_string(fused.label))},
            {"fused_posterior", fused.posterior},
            {"stable_label", std::string(affect::to_string(update.stable))},
            {"changed", update.changed}};
  }

  // One connection per device carrying the whole trajectory. A sequence
  // number is consumed only by a successful delivery.
  void push(const std::vector<affect::ColorStep>& steps) {
    for (Device& d : devices_) {
      if (d.stale) continue;
      std::string payload;
      std::int64_t seq = d.next_seq;
      for (const auto& step : steps) payload += to_line(WireCommand{d.device_id, step.rgb, step.transition_ms, seq++});
      if (sink_->deliver(d.address, payload)) {
        d.next_seq = seq;
        d.consecutive_failures = 0;
        d.last_ack_ms = now_ms();
      } else if (++d.consecutive_failures >= kStaleAfterFailures) {
        d.stale = true;
      }
    }
  }

  void log(const nlohmann::json& event) {
    if (!log_.is_open()) return;
    log_ << event.dump() << '\n';
    log_.flush();
  }

  ServiceConfig cfg_;
  std::shared_ptr<DeviceSink> sink_;
  mutable std::mutex mutex_;
  std::map<std::string, Session> sessions_;
  std::vector<Device> devices_;
  std::uint64_t session_counter_ = 0;
  std::ofstream log_;
};

/// Feeds a recorded observation log back through `svc`, in order.
/// Returns the number of events replayed.
inline std::size_t replay_log(Service& svc, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("replay: cannot open " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("event")) throw DataError("replay: malformed line " + std::to_string(n + 1));
    const std::string ev = j["event"].get<std::string>();
    if (ev == "session") {
      const auto r = svc.create_session();
      if (r.body["id"] != j["session"]) throw DataError("replay: session ids diverged");
    } else if (ev == "image" || ev == "audio") {
      const io::Bytes body = base64_decode(j.at("body_b64").get<std::string>());
      const std::string sid = j.at("session").get<std::string>();
      ev == "image" ? svc.post_image(sid, body) : svc.post_audio(sid, body);
    } else if (ev == "device") {
      svc.register_device(j.at("device_id").get<std::string>(), j.at("address").get<std::string>());
    } else {
      throw DataError("replay: unknown event " + ev);
    }
    ++n;
  }
  return n;
}

/// Loads a classifier network from a model file.
inline nn::Network<float> load_network(const std::filesystem::path& path) {
  io::Bytes bytes;
  try {
    bytes = io::read_file(path);
  } catch (const DataError& e) {
    throw ModelError(e.what());
  }
  auto net = nn::Network<float>::from_model_file(io::read_model(bytes));
  net.check_classifier();
  return net;
}

}  // namespace emo::service

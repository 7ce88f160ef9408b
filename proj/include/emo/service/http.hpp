#pragma once

#include <functional>
#include <string>

#include <httplib.h>

#include "emo/service/engine.hpp"

namespace emo::service {

namespace detail {

inline void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

inline io::ByteView body_bytes(const httplib::Request& req) {
  return {reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()};
}

// Runs a route body, mapping stray exceptions to 500.
inline void guarded(httplib::Response& res, const std::function<Response()>& fn) {
  try {
    reply(res, fn());
  } catch (const std::exception& e) {
    reply(res, error_response(500, e.what()));
  }
}

}  // namespace detail

/// Control-plane routes:
///   POST /v1/sessions                      -> 201 {id}
///   POST /v1/sessions/{id}/image  (P5)     -> {label, posterior, ...}
///   POST /v1/sessions/{id}/audio  (WAV)    -> {label, posterior, ...}
///   GET  /v1/sessions/{id}/state           -> {stable_label, affect, plan}
///   GET  /v1/sessions/{id}/recommendation  -> {tracks}
///   POST /v1/devices {device_id, address}  -> 201
inline void install_routes(httplib::Server& srv, Service& svc) {
  using httplib::Request;
  using httplib::Response;
  srv.Post("/v1/sessions", [&svc](const Request&, Response& res) {
    detail::guarded(res, [&] { return svc.create_session(); });
  });
  srv.Post(R"(/v1/sessions/([^/]+)/image)", [&svc](const Request& req, Response& res) {
    detail::guarded(res, [&] { return svc.post_image(req.matches[1], detail::body_bytes(req)); });
  });
  srv.Post(R"(/v1/sessions/([^/]+)/audio)", [&svc](const Request& req, Response& res) {
    detail::guarded(res, [&] { return svc.post_audio(req.matches[1], detail::body_bytes(req)); });
  });
  srv.Get(R"(/v1/sessions/([^/]+)/state)", [&svc](const Request& req, Response& res) {
    detail::guarded(res, [&] { return svc.get_state(req.matches[1]); });
  });
  srv.Get(R"(/v1/sessions/([^/]+)/recommendation)", [&svc](const Request& req, Response& res) {
    detail::guarded(res, [&] { return svc.get_recommendation(req.matches[1]); });
  });
  srv.Post("/v1/devices", [&svc](const Request& req, Response& res) {
    detail::guarded(res, [&] { return svc.register_device(req.body); });
  });
}

}  // namespace emo::service

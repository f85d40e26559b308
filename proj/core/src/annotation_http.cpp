// SPDX-License-Identifier: Apache-2.0
// Project headers (and thus Eigen) come before httplib.h: httplib pulls in
// <resolv.h>, whose `_res` macro breaks Eigen headers parsed after it.
#include "rescap/annotation_service.hpp"
#include "rescap/errors.hpp"
#include "rescap/ids.hpp"

#include <cstdio>
#include <thread>

#include <httplib.h>

namespace rescap {

namespace {

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict:
    case ErrorKind::stale_lease: return 409;
    case ErrorKind::invalid_input:
    case ErrorKind::parse: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
  send_json(res, status, Json{{"error", message}, {"kind", kind}});
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, status_for(e.kind()), to_string(e.kind()), e.what());
  } catch (const Json::exception& e) {
    send_error(res, 400, "parse", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

std::string etag_for(const std::string& bytes) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "\"%016llx\"", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace

struct AnnotationHttpServer::Impl {
  AnnotationService& service;
  HttpServerOptions options;
  httplib::Server server;
  std::jthread worker;
  int port = -1;

  Impl(AnnotationService& s, HttpServerOptions o) : service(s), options(std::move(o)) { routes(); }

  void serve_image(const httplib::Request& req, httplib::Response& res, bool thumbnail) {
    guarded(res, [&] {
      const auto path = service.image_file(req.matches[1].str(), thumbnail);
      const auto bytes = read_text_file(path);
      const auto tag = etag_for(bytes);
      res.set_header("ETag", tag);
      res.set_header("Cache-Control", "no-cache");
      if (req.get_header_value("If-None-Match") == tag) {
        res.status = 304;
        return;
      }
      res.status = 200;
      res.set_content(bytes, "image/png");
    });
  }

  void routes() {
    server.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", options.cors_origin);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, If-None-Match");
      res.set_header("Access-Control-Expose-Headers", "ETag");
    });
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto annotator = req.get_param_value("annotator");
        if (annotator.empty()) throw InvalidInputError("query parameter 'annotator' is required");
        const auto task = service.next_task(annotator);
        const auto p = service.progress();
        send_json(res, 200, Json{{"task", task ? to_json_value(*task) : Json(nullptr)}, {"pending", p.pending}});
      });
    });

    server.Post("/api/annotations", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = Json::parse(req.body);
        for (const char* key : {"pair_id", "candidate_id", "annotator"})
          if (!body.contains(key) || !body.at(key).is_string())
            throw InvalidInputError(std::string("body field '") + key + "' is required");
        const auto ack = service.submit_selection(body.at("pair_id").get<std::string>(),
                                                  body.at("candidate_id").get<std::string>(),
                                                  body.at("annotator").get<std::string>(),
                                                  body.value("force", false));
        send_json(res, 200,
                  Json{{"ok", true},
                       {"pair_id", ack.record.pair_id},
                       {"candidate_id", ack.record.chosen_candidate_id.value_or("")},
                       {"annotated_at", ack.record.annotated_at.value_or("")},
                       {"already_recorded", ack.already_recorded},
                       {"pending", ack.pending},
                       {"done", ack.done}});
      });
    });

    server.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, to_json_value(service.progress())); });
    });

    server.Get("/api/config", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, service.config()); });
    });

    server.Get(R"(/images/thumbs/([^/]+)\.png)",
               [this](const httplib::Request& req, httplib::Response& res) { serve_image(req, res, true); });
    server.Get(R"(/images/([^/]+)\.png)",
               [this](const httplib::Request& req, httplib::Response& res) { serve_image(req, res, false); });
  }
};

AnnotationHttpServer::AnnotationHttpServer(AnnotationService& service, HttpServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {}

AnnotationHttpServer::~AnnotationHttpServer() { stop(); }

int AnnotationHttpServer::bind() {
  if (impl_->options.port < 0 || impl_->options.port > 65535) throw InvalidInputError("port out of range");
  if (impl_->options.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->options.host);
  } else {
    impl_->port = impl_->server.bind_to_port(impl_->options.host, impl_->options.port) ? impl_->options.port : -1;
  }
  if (impl_->port < 0)
    throw IoError("cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  return impl_->port;
}

void AnnotationHttpServer::serve() {
  if (impl_->port < 0) throw InvalidInputError("serve() before bind()");
  impl_->server.listen_after_bind();
}

int AnnotationHttpServer::start() {
  const int port = bind();
  impl_->worker = std::jthread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void AnnotationHttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace rescap

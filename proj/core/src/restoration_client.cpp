// SPDX-License-Identifier: Apache-2.0
#include "rescap/restoration_client.hpp"

#include <chrono>
#include <mutex>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "http_util.hpp"
#include "image_mat.hpp"
#include "rescap/ids.hpp"
#include "rescap/parallel.hpp"

namespace rescap {

Image StubBackend::restore(const BackendCall& call) {
  if (call.lq.empty()) throw InvalidInputError("stub backend: empty LQ image");
  const double windows = static_cast<double>(extended_length(call.token_repeat_k)) / kBaseWindow;
  const double amount = options_.sharpen_per_window * windows;
  const double noise_sigma = options_.noise_per_window * windows;

  cv::Mat src;
  to_mat(call.lq).convertTo(src, CV_64F);
  cv::Mat blurred;
  cv::GaussianBlur(src, blurred, cv::Size(0, 0), options_.blur_sigma, options_.blur_sigma,
                   cv::BORDER_REPLICATE);
  cv::Mat out = src + amount * (src - blurred);

  // One noise field per seed and shape, shared by every k, so only its
  // amplitude changes with richness.
  Rng rng(combine_seed({call.seed, static_cast<std::uint64_t>(out.rows),
                        static_cast<std::uint64_t>(out.cols), 0x7465787475ULL}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  cv::Mat texture(out.rows, out.cols, CV_64F);
  for (int y = 0; y < texture.rows; ++y)
    for (int x = 0; x < texture.cols; ++x) texture.at<double>(y, x) = gauss(rng);
  std::vector<cv::Mat> planes;
  cv::split(out, planes);
  for (auto& p : planes) p += noise_sigma * texture;
  cv::merge(planes, out);

  cv::Mat out8;
  out.convertTo(out8, CV_8U);  // saturating
  return from_mat(out8);
}

HttpBackend::HttpBackend(std::string endpoint, HttpClientOptions options)
    : endpoint_(std::move(endpoint)), options_(options) {}

Image HttpBackend::restore(const BackendCall& call) {
  const Json body{{"image_b64", base64_encode(encode_png(call.lq))},
                  {"caption", call.caption},
                  {"token_repeat_k", call.token_repeat_k},
                  {"seed", call.seed}};
  const Json res = detail::post_json(endpoint_, "/restore", body,
                                     {options_.attempts, options_.backoff_base_ms,
                                      options_.connect_timeout_ms, options_.read_timeout_ms});
  if (!res.contains("image_b64") || !res.at("image_b64").is_string())
    throw ParseError("image_b64", "restoration response lacks 'image_b64'");
  return decode_image(base64_decode(res.at("image_b64").get<std::string>()));
}

RestorationClient::RestorationClient(std::filesystem::path output_dir) : output_dir_(std::move(output_dir)) {}

void RestorationClient::register_backend(const std::string& id, const std::string& endpoint) {
  if (endpoint == "stub") {
    register_backend(id, std::make_shared<StubBackend>());
  } else if (endpoint.rfind("http://", 0) == 0) {
    register_backend(id, std::make_shared<HttpBackend>(endpoint));
  } else {
    throw InvalidInputError("backend endpoint must be 'stub' or an http:// URL, got '" + endpoint + "'");
  }
}

void RestorationClient::register_backend(const std::string& id, std::shared_ptr<RestorationBackend> backend) {
  if (id.empty()) throw InvalidInputError("backend id is empty");
  std::unique_lock lock(mutex_);
  if (backends_.contains(id)) throw DuplicateIdError("backend '" + id + "' is already registered");
  backends_.emplace(id, std::move(backend));
}

bool RestorationClient::has_backend(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return backends_.contains(id);
}

std::shared_ptr<RestorationBackend> RestorationClient::backend(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = backends_.find(id);
  if (it == backends_.end()) throw UnregisteredBackendError("backend '" + id + "' is not registered");
  return it->second;
}

std::string candidate_id_for(const RestorationRequest& req) {
  return uuid_v4(combine_seed({fnv1a64(req.image_id), fnv1a64(req.backend), fnv1a64(req.caption.content_part),
                               static_cast<std::uint64_t>(req.token_repeat_k), req.seed,
                               static_cast<std::uint64_t>(req.harmful_gate)}));
}

RestorationResult RestorationClient::restore(const RestorationRequest& req) const {
  if (req.token_repeat_k < 0) throw InvalidInputError("token_repeat_k must be >= 0");
  auto impl = backend(req.backend);
  if (req.harmful_gate && !req.caption.degradation_part.empty())
    throw HarmfulCaptionRejectedError("caption for " + req.image_id + " still carries " +
                                      std::to_string(req.caption.degradation_part.size()) +
                                      " degradation span(s); run filter_harmful first");

  BackendCall call;
  call.lq = load_image(req.lq_image_ref);
  call.caption = req.caption.content_part;
  call.token_repeat_k = req.token_repeat_k;
  call.seed = req.seed;

  const auto start = std::chrono::steady_clock::now();
  const Image restored = impl->restore(call);
  const auto stop = std::chrono::steady_clock::now();

  RestorationResult r;
  r.image_id = req.image_id;
  r.candidate_id = candidate_id_for(req);
  r.restored_image_ref = output_dir_ / (r.candidate_id + ".png");
  r.backend = req.backend;
  r.effective_token_length = extended_length(req.token_repeat_k);
  r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(stop - start).count();
  save_png(r.restored_image_ref, restored);
  return r;
}

BatchOutcome RestorationClient::restore_batch(const std::vector<RestorationRequest>& reqs, int jobs) const {
  BatchOutcome outcome;
  outcome.items.resize(reqs.size());
  if (reqs.empty()) return outcome;
  std::error_code ec;
  std::filesystem::create_directories(output_dir_, ec);
  if (ec) throw IoError("cannot create " + output_dir_.string() + ": " + ec.message());

  parallel_for(reqs.size(), jobs, [&](std::size_t i) {
    auto& item = outcome.items[i];
    try {
      item.result = restore(reqs[i]);
    } catch (const Error& e) {
      item.error_kind = e.kind();
      item.error = e.what();
    } catch (const std::exception& e) {
      item.error_kind = ErrorKind::io;
      item.error = e.what();
    }
  });
  for (const auto& item : outcome.items) (item.ok() ? outcome.ok : outcome.err)++;
  return outcome;
}

void to_json(Json& j, const RestorationRequest& r) {
  j = Json{{"image_id", r.image_id},     {"lq_image_ref", r.lq_image_ref.string()},
           {"caption", r.caption},       {"token_repeat_k", r.token_repeat_k},
           {"backend", r.backend},       {"seed", r.seed},
           {"harmful_gate", r.harmful_gate}};
}

void from_json(const Json& j, RestorationRequest& r) {
  r.image_id = j.at("image_id").get<std::string>();
  r.lq_image_ref = j.at("lq_image_ref").get<std::string>();
  r.caption = j.at("caption").get<CaptionRecord>();
  r.token_repeat_k = j.value("token_repeat_k", 0);
  r.backend = j.value("backend", std::string("stub"));
  r.seed = j.value("seed", std::uint64_t{0});
  r.harmful_gate = j.value("harmful_gate", true);
}

void to_json(Json& j, const RestorationResult& r) {
  j = Json{{"image_id", r.image_id},
           {"candidate_id", r.candidate_id},
           {"restored_image_ref", r.restored_image_ref.string()},
           {"backend", r.backend},
           {"effective_token_length", r.effective_token_length},
           {"latency_ms", r.latency_ms}};
}

void from_json(const Json& j, RestorationResult& r) {
  r.image_id = j.at("image_id").get<std::string>();
  r.candidate_id = j.at("candidate_id").get<std::string>();
  r.restored_image_ref = j.at("restored_image_ref").get<std::string>();
  r.backend = j.at("backend").get<std::string>();
  r.effective_token_length = j.at("effective_token_length").get<int>();
  r.latency_ms = j.value("latency_ms", std::int64_t{0});
}

}  // namespace rescap

// Copyright 2026 The medrag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "medrag/http.hpp"

#include <thread>
#include <httplib.h>

#include "medrag/error.hpp"

namespace medrag {
namespace {

bool retryable(int status) { return status == 429 || (status >= 500 && status <= 504); }

std::string encode_params(const Params& params) {
  std::string out;
  for (const auto& [k, v] : params) {
    if (!out.empty()) out.push_back('&');
    out += httplib::detail::encode_query_param(k);
    out.push_back('=');
    out += httplib::detail::encode_query_param(v);
  }
  return out;
}

}  // namespace

void RateLimiter::acquire() {
  if (min_interval_.count() <= 0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + min_interval_;
  }
  std::this_thread::sleep_until(slot);
}

HttpClient::HttpClient(std::string base_url, RetryPolicy retry, std::chrono::seconds timeout,
                       RateLimiter* limiter)
    : base_url_(std::move(base_url)), retry_(std::move(retry)), timeout_(timeout), limiter_(limiter) {
  const auto scheme = base_url_.find("://");
  if (scheme == std::string::npos) throw ConfigError("base URL without scheme: " + base_url_);
  const auto path = base_url_.find('/', scheme + 3);
  origin_ = base_url_.substr(0, path);
  prefix_ = path == std::string::npos ? "" : base_url_.substr(path);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  if (!retry_.sleep) retry_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

template <typename Fn>
HttpResponse HttpClient::with_retries(const std::string& what, Fn&& attempt) const {
  httplib::Client cli(origin_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  int last_status = 0;
  std::string last_error;
  for (int i = 0;; ++i) {
    if (limiter_ != nullptr) limiter_->acquire();
    auto res = attempt(cli);
    if (res) {
      if (res->status >= 200 && res->status < 300) return HttpResponse{res->status, res->body};
      last_status = res->status;
      last_error = "HTTP " + std::to_string(res->status);
      if (!retryable(res->status)) {
        throw TransportError(what + " failed: " + last_error, res->status);
      }
    } else {
      last_status = 0;
      last_error = httplib::to_string(res.error());
    }
    if (i >= retry_.max_retries) break;
    retry_.sleep(retry_.delay_for(i));
  }
  const std::string reason = last_status == 429 ? "rate limited" : "gave up";
  throw TransportError(what + ": " + reason + " after " + std::to_string(retry_.max_retries) +
                           " retries (" + last_error + ")",
                       last_status);
}

HttpResponse HttpClient::get(const std::string& path, const Params& params) const {
  const std::string target = prefix_ + path + (params.empty() ? "" : "?" + encode_params(params));
  return with_retries("GET " + base_url_ + path,
                      [&](httplib::Client& cli) { return cli.Get(target); });
}

HttpResponse HttpClient::post_form(const std::string& path, const Params& params) const {
  const std::string target = prefix_ + path;
  const std::string body = encode_params(params);
  return with_retries("POST " + base_url_ + path, [&](httplib::Client& cli) {
    return cli.Post(target, body, "application/x-www-form-urlencoded");
  });
}

nlohmann::json HttpClient::post_json(const std::string& path, const nlohmann::json& body) const {
  const std::string target = prefix_ + path;
  const std::string payload = body.dump();
  const auto res = with_retries("POST " + base_url_ + path, [&](httplib::Client& cli) {
    return cli.Post(target, payload, "application/json");
  });
  try {
    return nlohmann::json::parse(res.body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError("POST " + base_url_ + path + ": response is not JSON (" + e.what() + ")");
  }
}

}  // namespace medrag

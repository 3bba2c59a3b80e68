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

#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <utility>
#include <vector>
#include <nlohmann/json.hpp>

namespace medrag {

using Params = std::vector<std::pair<std::string, std::string>>;

/// Exponential backoff: retry i (0-based) waits base_delay * 2^i.
struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{1000};
  // Injected so tests can observe the schedule without sleeping.
  std::function<void(std::chrono::milliseconds)> sleep;

  std::chrono::milliseconds delay_for(int retry) const { return base_delay * (1LL << retry); }
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Spaces out requests so that at most one starts per `min_interval`.
class RateLimiter {
 public:
  explicit RateLimiter(std::chrono::milliseconds min_interval = std::chrono::milliseconds{0})
      : min_interval_(min_interval) {}
  void acquire();

 private:
  std::chrono::milliseconds min_interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

/// Blocking HTTP(S) client bound to one base URL (which may carry a path
/// prefix). 429, 5xx and connection failures are retried per the policy;
/// other statuses fail immediately with TransportError.
class HttpClient {
 public:
  explicit HttpClient(std::string base_url, RetryPolicy retry = {},
                      std::chrono::seconds timeout = std::chrono::seconds{120},
                      RateLimiter* limiter = nullptr);

  HttpResponse get(const std::string& path, const Params& params) const;
  HttpResponse post_form(const std::string& path, const Params& params) const;
  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) const;

  const std::string& base_url() const { return base_url_; }

 private:
  template <typename Fn>
  HttpResponse with_retries(const std::string& what, Fn&& attempt) const;

  std::string base_url_;
  std::string origin_;
  std::string prefix_;
  RetryPolicy retry_;
  std::chrono::seconds timeout_;
  RateLimiter* limiter_;
};

}  // namespace medrag

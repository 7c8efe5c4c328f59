#pragma once

#include <memory>
#include <string>

#include "dualface/guidance_service.hpp"

namespace dualface {

// HTTP front end over a GuidanceService. Request and response bodies are versioned JSON except the
// shadow raster (PNG) and candidate selection (PNG of the chosen underlay).
class HttpApi {
 public:
  explicit HttpApi(GuidanceService& service);
  ~HttpApi();
  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  // Binds; port 0 picks a free port. Throws IoError when binding fails.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dualface

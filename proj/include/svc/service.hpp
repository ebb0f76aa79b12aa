#pragma once

#include <memory>
#include <string>

#include "svc/checkpoint.hpp"

namespace svc::service {

struct ServiceOptions {
  /// Processing resolution; scribble coordinates are exchanged at this size.
  int height = 256;
  int width = 448;
};

/// Session-oriented HTTP front end to the colorization pipeline. Each
/// session runs at most one pipeline at a time on its own worker thread;
/// the model is shared read-only.
class Service {
 public:
  Service(std::shared_ptr<const ModelState> model, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds to host:port (port 0 picks a free one) and returns the port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call after bind().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace svc::service

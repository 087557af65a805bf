#pragma once

// HTTP JSON adapter for real model endpoints speaking a chat-completion and
// embedding style protocol. Prompt templates are versioned text assets; their
// wording is best-effort and non-normative. The transport is injectable so
// the adapter is testable without sockets.

#include <functional>
#include <memory>
#include <string>

#include "memforest/config.hpp"
#include "memforest/ports.hpp"

namespace memforest {

struct HttpResult {
    int status = 0;
    std::string body;
};

// (path, json body) -> result; throws TransientBackendError on network
// failure or timeout.
using HttpTransport = std::function<HttpResult(const std::string&, const std::string&)>;

// Real transport over cpp-httplib; auth token read from config.auth_env.
HttpTransport make_httplib_transport(const BackendConfig& config);

struct HttpBackendSet {
    std::shared_ptr<Extractor> extractor;
    std::shared_ptr<Summarizer> summarizer;
    std::shared_ptr<Embedder> embedder;
    std::shared_ptr<Chooser> chooser;
    std::shared_ptr<Planner> planner;
    std::shared_ptr<Chat> chat;
};

// Builds the port implementations on top of one transport + ledger. Responses
// are validated strictly with one repair retry; schema violations after the
// retry raise PermanentBackendError.
HttpBackendSet make_http_backends(const BackendConfig& config,
                                  std::shared_ptr<PortCallLedger> ledger,
                                  HttpTransport transport = nullptr);

const char* prompt_template_version();

}  // namespace memforest

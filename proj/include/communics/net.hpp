#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "communics/common.hpp"
#include "communics/sync_service.hpp"

namespace communics {

// HTTP + WebSocket front end for a SyncService.
//   POST /sessions                    create; returns session id and tokens
//   POST /sessions/{id}/observers     issue an observer token
//   GET  /sessions/{id}/log           session log bytes (prefix while running)
//   GET  /healthz
//   GET  /sessions/{id}/ws?token=...[&lang=...]   event channel
class HttpServer {
public:
    HttpServer(SyncService& service, std::string address, unsigned short port, int threads = 2);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    void start();
    void stop();
    void wait();  // blocks until stop()
    unsigned short port() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Rejection of a request or upgrade by the server.
class TransportError : public Error {
public:
    TransportError(int status, ErrorCode code, const std::string& what) : Error(code, what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

struct HttpResponse {
    int status = 0;
    std::string content_type;
    std::string body;
};

HttpResponse http_request(const std::string& host, unsigned short port, const std::string& method,
                          const std::string& target, const std::string& body = {});

struct Endpoint {
    std::string host = "127.0.0.1";
    unsigned short port = 0;
};

// Parses "http://host:port" or "host:port".
Endpoint parse_endpoint(const std::string& url);

// Blocking WebSocket client for tests, the sim harness and the CLI.
class WsClient {
public:
    // Throws TransportError when the upgrade is declined.
    WsClient(const std::string& host, unsigned short port, const std::string& target);
    ~WsClient();
    WsClient(const WsClient&) = delete;
    WsClient& operator=(const WsClient&) = delete;

    void send(const nlohmann::json& message);
    std::optional<nlohmann::json> receive(std::chrono::milliseconds timeout);
    nlohmann::json receive_or_throw(std::chrono::milliseconds timeout);
    void close();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace communics

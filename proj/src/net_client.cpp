#include "communics/net.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>

namespace communics {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

[[noreturn]] void throw_rejection(int status, const std::string& body) {
    auto doc = json::parse(body, nullptr, false);
    ErrorCode code = ErrorCode::transport_error;
    std::string message = "request rejected with HTTP " + std::to_string(status);
    if (doc.is_object()) {
        if (auto c = error_code_from_name(doc.value("code", std::string()))) code = *c;
        message = doc.value("message", message);
    }
    throw TransportError(status, code, message);
}

}  // namespace

Endpoint parse_endpoint(const std::string& url) {
    std::string rest = url;
    if (auto p = rest.find("://"); p != std::string::npos) rest = rest.substr(p + 3);
    if (auto slash = rest.find('/'); slash != std::string::npos) rest = rest.substr(0, slash);
    auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::invalid_config, "endpoint needs host:port, got '" + url + "'");
    Endpoint ep;
    ep.host = rest.substr(0, colon);
    try {
        ep.port = static_cast<unsigned short>(std::stoi(rest.substr(colon + 1)));
    } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_config, "bad port in '" + url + "'");
    }
    return ep;
}

HttpResponse http_request(const std::string& host, unsigned short port, const std::string& method,
                          const std::string& target, const std::string& body) {
    try {
        net::io_context ioc;
        tcp::resolver resolver(ioc);
        beast::tcp_stream stream(ioc);
        stream.connect(resolver.resolve(host, std::to_string(port)));

        http::request<http::string_body> req{http::string_to_verb(method), target, 11};
        req.set(http::field::host, host);
        if (!body.empty()) {
            req.set(http::field::content_type, "application/json");
            req.body() = body;
        }
        req.prepare_payload();
        http::write(stream, req);

        beast::flat_buffer buffer;
        http::response<http::string_body> res;
        http::read(stream, buffer, res);
        beast::error_code ec;
        stream.socket().shutdown(tcp::socket::shutdown_both, ec);
        return {static_cast<int>(res.result_int()), std::string(res[http::field::content_type]), res.body()};
    } catch (const boost::system::system_error& ex) {
        throw Error(ErrorCode::transport_error, std::string("HTTP ") + method + " " + target + ": " + ex.what());
    }
}

struct WsClient::Impl {
    net::io_context ioc;
    websocket::stream<beast::tcp_stream> ws{ioc};
    beast::flat_buffer buffer;
    std::deque<json> inbox;
    bool reading = false;
    beast::error_code failure;

    // One read stays outstanding; completed messages queue up in the inbox.
    void read() {
        if (reading || failure) return;
        reading = true;
        ws.async_read(buffer, [this](beast::error_code ec, std::size_t) {
            reading = false;
            if (ec) {
                failure = ec;
                return;
            }
            auto text = beast::buffers_to_string(buffer.data());
            buffer.consume(buffer.size());
            inbox.push_back(json::parse(text, nullptr, false));
            read();
        });
    }
};

WsClient::WsClient(const std::string& host, unsigned short port, const std::string& target)
    : impl_(std::make_unique<Impl>()) {
    try {
        tcp::resolver resolver(impl_->ioc);
        beast::get_lowest_layer(impl_->ws).connect(resolver.resolve(host, std::to_string(port)));
        // The synchronous handshake in Boost 1.74 drops the response on a
        // declined upgrade; the async one keeps it.
        websocket::response_type res;
        beast::error_code ec;
        bool done = false;
        impl_->ws.async_handshake(res, host + ":" + std::to_string(port), target, [&](beast::error_code e) {
            ec = e;
            done = true;
        });
        while (!done) impl_->ioc.run_one();
        impl_->ioc.restart();
        if (ec) {
            if (ec == websocket::error::upgrade_declined) throw_rejection(static_cast<int>(res.result_int()), res.body());
            throw Error(ErrorCode::transport_error, "websocket handshake failed: " + ec.message());
        }
    } catch (const boost::system::system_error& ex) {
        throw Error(ErrorCode::transport_error, std::string("websocket connect: ") + ex.what());
    }
    impl_->read();
}

WsClient::~WsClient() {
    try {
        close();
    } catch (...) {
    }
}

void WsClient::send(const json& message) {
    beast::error_code ec;
    impl_->ws.text(true);
    impl_->ws.write(net::buffer(message.dump()), ec);
    if (ec) throw Error(ErrorCode::transport_error, "websocket write: " + ec.message());
}

std::optional<json> WsClient::receive(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (impl_->inbox.empty()) {
        if (impl_->failure) throw Error(ErrorCode::transport_error, "websocket read: " + impl_->failure.message());
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) return std::nullopt;
        if (impl_->ioc.stopped()) impl_->ioc.restart();
        impl_->ioc.run_one_for(deadline - now);
    }
    auto msg = std::move(impl_->inbox.front());
    impl_->inbox.pop_front();
    return msg;
}

json WsClient::receive_or_throw(std::chrono::milliseconds timeout) {
    auto msg = receive(timeout);
    if (!msg) throw Error(ErrorCode::transport_error, "no message within timeout");
    return *msg;
}

void WsClient::close() {
    if (!impl_) return;
    auto& sock = beast::get_lowest_layer(impl_->ws).socket();
    if (!sock.is_open()) return;
    beast::error_code ec;
    sock.shutdown(tcp::socket::shutdown_both, ec);
    sock.close(ec);
    impl_->ioc.restart();
    impl_->ioc.poll();
}

}  // namespace communics

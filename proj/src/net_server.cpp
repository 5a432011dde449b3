#include "communics/net.hpp"

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>
#include <iostream>
#include <thread>
#include <vector>

namespace communics {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

http::status status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::unknown_session:
        case ErrorCode::unknown_id: return http::status::not_found;
        case ErrorCode::bad_token: return http::status::unauthorized;
        case ErrorCode::already_connected:
        case ErrorCode::session_completed: return http::status::conflict;
        case ErrorCode::io_error: return http::status::internal_server_error;
        default: return http::status::bad_request;
    }
}

Response json_response(const Request& req, http::status status, const json& body) {
    Response res{status, req.version()};
    res.set(http::field::content_type, "application/json");
    res.keep_alive(req.keep_alive());
    res.body() = body.dump();
    res.prepare_payload();
    return res;
}

Response error_response(const Request& req, const Error& err) {
    return json_response(req, status_for(err.code()), {{"code", error_code_name(err.code())}, {"message", err.what()}});
}

std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= path.size()) {
        auto end = path.find('/', start);
        if (end == std::string_view::npos) end = path.size();
        if (end > start) parts.emplace_back(path.substr(start, end - start));
        start = end + 1;
    }
    return parts;
}

std::string query_param(std::string_view query, std::string_view key) {
    std::size_t start = 0;
    while (start < query.size()) {
        auto end = query.find('&', start);
        if (end == std::string_view::npos) end = query.size();
        auto pair = query.substr(start, end - start);
        auto eq = pair.find('=');
        if (eq != std::string_view::npos && pair.substr(0, eq) == key) return std::string(pair.substr(eq + 1));
        start = end + 1;
    }
    return {};
}

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket&& socket, SyncService& service) : ws_(std::move(socket)), service_(service) {}

    // Joins the service before accepting so a rejected token gets a plain
    // HTTP error instead of a half-open channel.
    void run(Request req, const std::string& session_id, const std::string& token, std::optional<std::string> lang) {
        std::weak_ptr<WsSession> weak = shared_from_this();
        auto outbox = [weak](std::string text) {
            if (auto self = weak.lock()) {
                net::post(self->ws_.get_executor(),
                          [self, text = std::move(text)]() mutable { self->enqueue(std::move(text)); });
            }
        };
        try {
            connection_ = service_.join(session_id, token, outbox, std::move(lang)).connection_id;
        } catch (const Error& err) {
            auto res = std::make_shared<Response>(error_response(req, err));
            res->keep_alive(false);
            http::async_write(beast::get_lowest_layer(ws_), *res,
                              [self = shared_from_this(), res](beast::error_code, std::size_t) {
                                  beast::error_code ec;
                                  beast::get_lowest_layer(self->ws_).socket().shutdown(tcp::socket::shutdown_send, ec);
                              });
            return;
        }
        joined_ = true;
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return finish();
        accepted_ = true;
        if (!queue_.empty()) write_next();
        read();
    }

    void read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this())); }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) return finish();
        const auto text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        service_.receive(connection_, text);
        read();
    }

    void enqueue(std::string text) {
        if (closed_) return;
        queue_.push_back(std::move(text));
        if (accepted_ && queue_.size() == 1) write_next();
    }

    void write_next() {
        ws_.text(true);
        ws_.async_write(net::buffer(queue_.front()),
                        beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t) {
        if (ec) return finish();
        queue_.pop_front();
        if (!queue_.empty()) write_next();
    }

    void finish() {
        if (closed_) return;
        closed_ = true;
        queue_.clear();
        if (joined_) service_.disconnect(connection_);
    }

    websocket::stream<beast::tcp_stream> ws_;
    SyncService& service_;
    beast::flat_buffer buffer_;
    std::deque<std::string> queue_;
    std::uint64_t connection_ = 0;
    bool joined_ = false;
    bool accepted_ = false;
    bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket&& socket, SyncService& service) : stream_(std::move(socket)), service_(service) {}

    void run() {
        net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::read, shared_from_this()));
    }

private:
    void read() {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(60));
        http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec == http::error::end_of_stream) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        if (ec) return;

        const std::string_view target(req_.target().data(), req_.target().size());
        const auto qpos = target.find('?');
        const auto path = target.substr(0, qpos);
        const auto query = qpos == std::string_view::npos ? std::string_view() : target.substr(qpos + 1);
        const auto parts = split_path(path);

        if (websocket::is_upgrade(req_)) {
            if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "ws") {
                stream_.expires_never();
                auto lang = query_param(query, "lang");
                std::make_shared<WsSession>(stream_.release_socket(), service_)
                    ->run(std::move(req_), parts[1], query_param(query, "token"),
                          lang.empty() ? std::nullopt : std::optional<std::string>(lang));
                return;
            }
        }
        send(route(parts));
    }

    Response route(const std::vector<std::string>& parts) {
        const auto method = req_.method();
        try {
            if (method == http::verb::get && parts.size() == 1 && parts[0] == "healthz") {
                return json_response(req_, http::status::ok, {{"status", "ok"}});
            }
            if (method == http::verb::post && parts.size() == 1 && parts[0] == "sessions") {
                json body = req_.body().empty() ? json::object() : json::parse(req_.body(), nullptr, false);
                if (body.is_discarded()) throw Error(ErrorCode::parse_error, "request body is not JSON");
                return json_response(req_, http::status::created, to_json(service_.create_session(body)));
            }
            if (method == http::verb::post && parts.size() == 3 && parts[0] == "sessions" && parts[2] == "observers") {
                return json_response(req_, http::status::created, {{"token", service_.add_observer(parts[1])}});
            }
            if (method == http::verb::get && parts.size() == 3 && parts[0] == "sessions" && parts[2] == "log") {
                Response res{http::status::ok, req_.version()};
                res.set(http::field::content_type, "application/octet-stream");
                res.keep_alive(req_.keep_alive());
                res.body() = service_.export_log(parts[1]);
                res.prepare_payload();
                return res;
            }
            return json_response(req_, http::status::not_found, {{"code", "NOT_FOUND"}, {"message", "no such endpoint"}});
        } catch (const Error& err) {
            return error_response(req_, err);
        } catch (const std::exception& ex) {
            return json_response(req_, http::status::internal_server_error, {{"code", "INTERNAL"}, {"message", ex.what()}});
        }
    }

    void send(Response res) {
        auto sp = std::make_shared<Response>(std::move(res));
        http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
            if (ec) return;
            if (!sp->keep_alive()) {
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
                return;
            }
            self->read();
        });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    Request req_;
    SyncService& service_;
};

}  // namespace

struct HttpServer::Impl {
    SyncService& service;
    net::io_context ioc;
    tcp::acceptor acceptor;
    std::vector<std::thread> threads;
    int thread_count;
    unsigned short bound_port = 0;

    Impl(SyncService& s, const std::string& address, unsigned short port, int n)
        : service(s), ioc(n), acceptor(net::make_strand(ioc)), thread_count(n) {
        tcp::endpoint ep{net::ip::make_address(address), port};
        acceptor.open(ep.protocol());
        acceptor.set_option(net::socket_base::reuse_address(true));
        acceptor.bind(ep);
        acceptor.listen(net::socket_base::max_listen_connections);
        bound_port = acceptor.local_endpoint().port();
    }

    void accept() {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec == net::error::operation_aborted) return;
            if (!ec) std::make_shared<HttpSession>(std::move(socket), service)->run();
            accept();
        });
    }
};

HttpServer::HttpServer(SyncService& service, std::string address, unsigned short port, int threads) {
    try {
        impl_ = std::make_unique<Impl>(service, address, port, std::max(1, threads));
    } catch (const std::exception& ex) {
        throw Error(ErrorCode::transport_error, "cannot listen on " + address + ":" + std::to_string(port) + ": " + ex.what());
    }
}

HttpServer::~HttpServer() {
    stop();
    wait();
}

void HttpServer::start() {
    impl_->accept();
    for (int i = 0; i < impl_->thread_count; ++i) {
        impl_->threads.emplace_back([this] { impl_->ioc.run(); });
    }
}

void HttpServer::stop() {
    net::post(impl_->acceptor.get_executor(), [this] {
        beast::error_code ec;
        impl_->acceptor.close(ec);
    });
    impl_->ioc.stop();
}

void HttpServer::wait() {
    for (auto& t : impl_->threads) {
        if (t.joinable()) t.join();
    }
    impl_->threads.clear();
}

unsigned short HttpServer::port() const noexcept { return impl_->bound_port; }

}  // namespace communics

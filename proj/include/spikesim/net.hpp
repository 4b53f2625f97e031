#pragma once

// TCP transport for the streaming harness: a minimal RAII socket layer,
// the model server (one inference context per connection) and the
// streaming client. The client drives the session in lock step: HELLO,
// then one FRAME per window with its RESULT read back before the next,
// then END.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "spikesim/engine.hpp"
#include "spikesim/perf.hpp"
#include "spikesim/wire.hpp"

namespace spikesim {

struct NetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class TcpSocket {
public:
    TcpSocket() = default;
    explicit TcpSocket(int fd)
            : fd_(fd)
    {
    }
    TcpSocket(TcpSocket &&other) noexcept
            : fd_(other.fd_)
    {
        other.fd_ = -1;
    }
    TcpSocket &operator=(TcpSocket &&other) noexcept
    {
        if (this != &other)
        {
            close_fd();
            fd_ = other.fd_;
            other.fd_ = -1;
        }
        return *this;
    }
    TcpSocket(const TcpSocket &) = delete;
    TcpSocket &operator=(const TcpSocket &) = delete;
    ~TcpSocket() { close_fd(); }

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    void send_all(const void *data, size_t size) const
    {
        const char *p = static_cast<const char *>(data);
        size_t sent = 0;
        while (sent < size)
        {
            const ssize_t n = ::send(fd_, p + sent, size - sent, MSG_NOSIGNAL);
            if (n < 0)
            {
                if (errno == EINTR)
                {
                    continue;
                }
                throw NetError(std::string("send failed: ") + std::strerror(errno));
            }
            sent += static_cast<size_t>(n);
        }
    }

    /// Read exactly `size` bytes. Returns false on a clean EOF at offset 0.
    bool recv_exact(void *data, size_t size) const
    {
        char *p = static_cast<char *>(data);
        size_t got = 0;
        while (got < size)
        {
            const ssize_t n = ::recv(fd_, p + got, size - got, 0);
            if (n < 0)
            {
                if (errno == EINTR)
                {
                    continue;
                }
                throw NetError(std::string("recv failed: ") + std::strerror(errno));
            }
            if (n == 0)
            {
                if (got == 0)
                {
                    return false;
                }
                throw NetError("connection closed mid-message");
            }
            got += static_cast<size_t>(n);
        }
        return true;
    }

private:
    void close_fd()
    {
        if (fd_ >= 0)
        {
            ::close(fd_);
            fd_ = -1;
        }
    }
    int fd_ = -1;
};

inline constexpr uint32_t kMaxPayload = 1u << 30;

inline void write_message(const TcpSocket &sock, const WireMessage &msg)
{
    const std::string bytes = encode_message(msg);
    sock.send_all(bytes.data(), bytes.size());
}

/// Read one framed message; nullopt on clean connection close.
inline std::optional<WireMessage> read_message(const TcpSocket &sock)
{
    uint8_t header[kWireHeaderSize];
    if (!sock.recv_exact(header, sizeof header))
    {
        return std::nullopt;
    }
    auto [msg, length] = decode_header(header);
    if (length > kMaxPayload)
    {
        throw WireError("payload length " + std::to_string(length) + " exceeds limit");
    }
    msg.payload.resize(length);
    if (length > 0 && !sock.recv_exact(msg.payload.data(), length))
    {
        throw NetError("connection closed mid-message");
    }
    return msg;
}

class TcpListener {
public:
    explicit TcpListener(uint16_t port)
    {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0)
        {
            throw NetError(std::string("socket failed: ") + std::strerror(errno));
        }
        const int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        addr.sin_port = htons(port);
        if (::bind(fd_, reinterpret_cast<sockaddr *>(&addr), sizeof addr) < 0)
        {
            const std::string err = std::strerror(errno);
            ::close(fd_);
            fd_ = -1;
            throw NetError("bind failed on port " + std::to_string(port) + ": " + err);
        }
        if (::listen(fd_, 16) < 0)
        {
            const std::string err = std::strerror(errno);
            ::close(fd_);
            fd_ = -1;
            throw NetError("listen failed: " + err);
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd_, reinterpret_cast<sockaddr *>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }
    TcpListener(const TcpListener &) = delete;
    TcpListener &operator=(const TcpListener &) = delete;
    ~TcpListener() { close_fd(); }

    uint16_t port() const { return port_; }

    /// Blocking accept; invalid socket once the listener was closed.
    TcpSocket accept_connection() const
    {
        while (true)
        {
            const int fd = ::accept(fd_, nullptr, nullptr);
            if (fd >= 0)
            {
                const int one = 1;
                ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
                return TcpSocket(fd);
            }
            if (errno == EINTR)
            {
                continue;
            }
            return TcpSocket();
        }
    }

    void close_fd()
    {
        if (fd_ >= 0)
        {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
    uint16_t port_ = 0;
};

inline TcpSocket connect_to(const std::string &host, uint16_t port)
{
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo *res = nullptr;
    const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res);
    if (rc != 0)
    {
        throw NetError("cannot resolve '" + host + "': " + gai_strerror(rc));
    }
    int fd = -1;
    for (addrinfo *p = res; p != nullptr; p = p->ai_next)
    {
        fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0)
        {
            continue;
        }
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0)
        {
            break;
        }
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0)
    {
        throw NetError("cannot connect to " + host + ":" + std::to_string(port));
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return TcpSocket(fd);
}

// ---------------------------------------------------------------------------
// Server

struct ServerOptions {
    HardwareConfig hw{};
    bool estimate_latency = true;
};

class ModelServer {
public:
    ModelServer(NetworkSpec spec, ServerOptions opts = {})
            : spec_(std::move(spec))
            , opts_(opts)
    {
        // Fail fast on models the event engine cannot run.
        EventEngine probe(spec_);
        input_c_ = spec_.input_shape[0];
        input_h_ = spec_.input_shape[1];
        input_w_ = spec_.input_shape.size() == 3 ? spec_.input_shape[2] : 1;
    }

    uint16_t start(uint16_t port)
    {
        listener_ = std::make_unique<TcpListener>(port);
        return listener_->port();
    }

    /// Accept loop; returns when the listener is closed via stop().
    void run()
    {
        std::vector<std::jthread> workers;
        while (!stopping_)
        {
            TcpSocket conn = listener_->accept_connection();
            if (!conn.valid())
            {
                break;
            }
            workers.emplace_back(
                    [this, c = std::move(conn)]() mutable { handle_connection(c); });
        }
    }

    /// Handle exactly one connection on the calling thread.
    void run_once()
    {
        TcpSocket conn = listener_->accept_connection();
        if (conn.valid())
        {
            handle_connection(conn);
        }
    }

    void stop()
    {
        stopping_ = true;
        if (listener_)
        {
            listener_->close_fd();
        }
    }

    /// One connection = one inference context: persistent membrane state
    /// between FRAMEs, zeroed by RESET, discarded when the peer leaves.
    void handle_connection(TcpSocket &conn)
    {
        RunOptions run_opts;
        run_opts.keep_features = true;
        run_opts.record_trace = false;
        EventEngine engine(spec_, run_opts);
        bool greeted = false;
        bool want_maps = false;

        while (true)
        {
            std::optional<WireMessage> msg;
            try
            {
                msg = read_message(conn);
            }
            catch (const WireError &)
            {
                // Framing is gone; nothing left to resync on.
                send_error(conn, kErrBadMessage, "unreadable message framing");
                return;
            }
            catch (const NetError &)
            {
                return;
            }
            if (!msg.has_value())
            {
                return; // peer closed
            }

            const std::optional<MsgType> type = msg->typed();
            if (!type.has_value())
            {
                send_error(conn, kErrUnknownType,
                        "unknown message type " + std::to_string(msg->type));
                continue;
            }
            if (!greeted && *type != MsgType::hello)
            {
                send_error(conn, kErrBadMessage, "expected HELLO first");
                return;
            }

            switch (*type)
            {
            case MsgType::hello: {
                HelloPayload hello;
                try
                {
                    hello = decode_hello(msg->payload);
                }
                catch (const std::exception &e)
                {
                    send_error(conn, kErrBadMessage, e.what());
                    return;
                }
                if (hello.channels != input_c_ || hello.height != input_h_ ||
                        hello.width != input_w_)
                {
                    send_error(conn, kErrGeometry,
                            "geometry mismatch: model expects " + std::to_string(input_c_) +
                                    "x" + std::to_string(input_h_) + "x" +
                                    std::to_string(input_w_));
                    return;
                }
                want_maps = hello.want_maps != 0;
                HelloPayload reply;
                reply.channels = static_cast<uint16_t>(input_c_);
                reply.height = static_cast<uint16_t>(input_h_);
                reply.width = static_cast<uint16_t>(input_w_);
                reply.window_us = hello.window_us;
                reply.want_maps = hello.want_maps;
                write_message(conn, make_message(MsgType::hello, encode_hello(reply)));
                greeted = true;
                break;
            }
            case MsgType::frame: {
                FramePayload frame;
                try
                {
                    frame = decode_frame(msg->payload);
                    if (frame.channels != input_c_ || frame.height != input_h_ ||
                            frame.width != input_w_)
                    {
                        throw WireError("frame geometry does not match session");
                    }
                }
                catch (const std::exception &e)
                {
                    // Malformed frame: report and keep the membrane state.
                    send_error(conn, kErrBadMessage, e.what());
                    break;
                }
                SpikeTrace segment;
                const StepOutput out = engine.step(frame.spikes,
                        opts_.estimate_latency ? &segment : nullptr);
                ResultPayload result;
                result.window_index = frame.window_index;
                for (const int l : engine.result().extract_layers)
                {
                    result.layer_spike_counts.push_back(
                            static_cast<uint32_t>(out.layer_spikes[l]));
                }
                if (want_maps)
                {
                    result.maps = out.features;
                }
                if (opts_.estimate_latency)
                {
                    result.latency_estimate_s =
                            simulate_latency(segment, spec_, opts_.hw).end_to_end_s;
                }
                write_message(conn, make_message(MsgType::result, encode_result(result)));
                break;
            }
            case MsgType::reset:
                engine.reset();
                write_message(conn, make_message(MsgType::reset));
                break;
            case MsgType::end:
                write_message(conn, make_message(MsgType::end));
                return;
            case MsgType::result:
            case MsgType::error:
                send_error(conn, kErrBadMessage, "client sent a server-only message");
                break;
            }
        }
    }

private:
    static void send_error(const TcpSocket &conn, uint16_t code, const std::string &text)
    {
        try
        {
            write_message(conn, make_message(MsgType::error, encode_error({code, text})));
        }
        catch (const NetError &)
        {
            // peer already gone
        }
    }

    NetworkSpec spec_;
    ServerOptions opts_;
    std::unique_ptr<TcpListener> listener_;
    std::atomic<bool> stopping_ = false;
    int input_c_ = 0;
    int input_h_ = 0;
    int input_w_ = 0;
};

// ---------------------------------------------------------------------------
// Client

struct StreamOptions {
    uint32_t window_us = 50000;
    bool want_maps = false;
};

struct StreamOutcome {
    std::vector<ResultPayload> results;
    std::vector<std::string> raw_results; // wire payload bytes, for determinism checks
};

/// Stream windows to a server in order; one RESULT is expected per FRAME.
/// Throws on ERROR replies or protocol violations.
inline StreamOutcome stream_windows(const std::string &host, uint16_t port,
        const std::vector<SpikeList> &windows, int channels, int height, int width,
        const StreamOptions &opts = {})
{
    TcpSocket conn = connect_to(host, port);

    HelloPayload hello;
    hello.channels = static_cast<uint16_t>(channels);
    hello.height = static_cast<uint16_t>(height);
    hello.width = static_cast<uint16_t>(width);
    hello.window_us = opts.window_us;
    hello.want_maps = opts.want_maps ? 1 : 0;
    write_message(conn, make_message(MsgType::hello, encode_hello(hello)));

    auto expect = [&](MsgType type) {
        std::optional<WireMessage> reply = read_message(conn);
        if (!reply.has_value())
        {
            throw NetError("server closed the connection");
        }
        if (reply->is(MsgType::error))
        {
            const ErrorPayload err = decode_error(reply->payload);
            throw NetError("server error " + std::to_string(err.code) + ": " + err.message);
        }
        if (!reply->is(type))
        {
            throw NetError("unexpected reply type " + std::to_string(reply->type));
        }
        return *std::move(reply);
    };

    expect(MsgType::hello);

    StreamOutcome outcome;
    for (size_t i = 0; i < windows.size(); ++i)
    {
        FramePayload frame;
        frame.window_index = static_cast<uint32_t>(i);
        frame.channels = static_cast<uint16_t>(channels);
        frame.height = static_cast<uint16_t>(height);
        frame.width = static_cast<uint16_t>(width);
        frame.spikes = windows[i];
        write_message(conn, make_message(MsgType::frame, encode_frame(frame)));
        const WireMessage reply = expect(MsgType::result);
        outcome.results.push_back(decode_result(reply.payload));
        outcome.raw_results.push_back(reply.payload);
    }
    write_message(conn, make_message(MsgType::end));
    expect(MsgType::end);
    return outcome;
}

} // namespace spikesim

#pragma once

// Streaming wire protocol. Every message is
//
//   magic "SPKT" | version u8 | type u8 | length u32 LE | payload
//
// FRAME payloads carry a window either as a sparse coordinate list or as a
// packed bitmap, whichever is smaller (sparse below 50 % density). RESULT
// carries per-extraction-layer spike counts, an optional set of packed
// binary feature maps and a per-window latency estimate. All multi-byte
// integers are little-endian.

#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "spikesim/engine.hpp"
#include "spikesim/events.hpp"
#include "spikesim/model_io.hpp"

namespace spikesim {

inline constexpr char kWireMagic[4] = {'S', 'P', 'K', 'T'};
inline constexpr uint8_t kWireVersion = 1;

enum class MsgType : uint8_t {
    hello = 1,
    frame = 2,
    result = 3,
    reset = 4,
    end = 5,
    error = 6,
};

struct WireMessage {
    uint8_t version = kWireVersion;
    uint8_t type = static_cast<uint8_t>(MsgType::hello);
    std::string payload;

    bool operator==(const WireMessage &) const = default;

    /// The typed view, or nullopt for type bytes this version does not
    /// know (the connection survives those; the peer replies ERROR).
    std::optional<MsgType> typed() const
    {
        return (type >= 1 && type <= 6) ? std::optional<MsgType>(static_cast<MsgType>(type))
                                        : std::nullopt;
    }
    bool is(MsgType t) const { return type == static_cast<uint8_t>(t); }
};

inline WireMessage make_message(MsgType type, std::string payload = {})
{
    return WireMessage{kWireVersion, static_cast<uint8_t>(type), std::move(payload)};
}

struct WireError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string encode_message(const WireMessage &msg)
{
    std::string out;
    out.append(kWireMagic, 4);
    io::put_u8(out, msg.version);
    io::put_u8(out, msg.type);
    io::put_u32(out, static_cast<uint32_t>(msg.payload.size()));
    out += msg.payload;
    return out;
}

inline constexpr size_t kWireHeaderSize = 10;

/// Parse the fixed header; returns the payload length still to read.
/// Unknown type bytes pass through so the caller can answer with ERROR
/// without tearing the connection down; a bad magic is unrecoverable.
inline std::pair<WireMessage, uint32_t> decode_header(const uint8_t *header)
{
    if (std::memcmp(header, kWireMagic, 4) != 0)
    {
        throw WireError("bad magic");
    }
    WireMessage msg;
    msg.version = header[4];
    msg.type = header[5];
    uint32_t length = 0;
    for (int i = 0; i < 4; ++i)
    {
        length |= static_cast<uint32_t>(header[6 + i]) << (8 * i);
    }
    return {msg, length};
}

/// Decode one complete message from a byte buffer (tests and in-memory use).
inline WireMessage decode_message(const std::string &bytes)
{
    if (bytes.size() < kWireHeaderSize)
    {
        throw WireError("truncated header");
    }
    auto [msg, length] = decode_header(reinterpret_cast<const uint8_t *>(bytes.data()));
    if (bytes.size() != kWireHeaderSize + length)
    {
        throw WireError("payload length mismatch");
    }
    msg.payload = bytes.substr(kWireHeaderSize);
    return msg;
}

// ---------------------------------------------------------------------------
// Payloads

struct HelloPayload {
    uint16_t channels = 2;
    uint16_t height = 0;
    uint16_t width = 0;
    uint32_t window_us = 50000;
    uint8_t want_maps = 0;

    bool operator==(const HelloPayload &) const = default;
};

inline std::string encode_hello(const HelloPayload &h)
{
    std::string out;
    io::put_u16(out, h.channels);
    io::put_u16(out, h.height);
    io::put_u16(out, h.width);
    io::put_u32(out, h.window_us);
    io::put_u8(out, h.want_maps);
    return out;
}

inline HelloPayload decode_hello(const std::string &payload)
{
    io::Reader in{reinterpret_cast<const uint8_t *>(payload.data()), payload.size()};
    HelloPayload h;
    h.channels = in.u16();
    h.height = in.u16();
    h.width = in.u16();
    h.window_us = in.u32();
    h.want_maps = in.u8();
    if (in.pos != in.size)
    {
        throw WireError("trailing bytes in HELLO payload");
    }
    return h;
}

enum class FrameEncoding : uint8_t { sparse = 0, bitmap = 1 };

struct FramePayload {
    uint32_t window_index = 0;
    uint16_t channels = 2;
    uint16_t height = 0;
    uint16_t width = 0;
    SpikeList spikes; // decoded view, independent of the wire encoding

    bool operator==(const FramePayload &) const = default;
};

inline std::string encode_frame(const FramePayload &f)
{
    std::string out;
    io::put_u32(out, f.window_index);
    io::put_u16(out, f.channels);
    io::put_u16(out, f.height);
    io::put_u16(out, f.width);
    const size_t cells = static_cast<size_t>(f.channels) * f.height * f.width;
    const bool sparse = f.spikes.entries.size() * 2 < cells; // density < 50 %
    io::put_u8(out, static_cast<uint8_t>(sparse ? FrameEncoding::sparse : FrameEncoding::bitmap));
    if (sparse)
    {
        io::put_u32(out, static_cast<uint32_t>(f.spikes.entries.size()));
        for (const SpikeCoord &s : f.spikes.entries)
        {
            io::put_u8(out, static_cast<uint8_t>(s.c));
            io::put_u16(out, static_cast<uint16_t>(s.y));
            io::put_u16(out, static_cast<uint16_t>(s.x));
        }
    }
    else
    {
        std::vector<uint8_t> bits((cells + 7) / 8, 0);
        for (const SpikeCoord &s : f.spikes.entries)
        {
            const size_t i = (static_cast<size_t>(s.c) * f.height + s.y) * f.width + s.x;
            bits[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
        }
        out.append(reinterpret_cast<const char *>(bits.data()), bits.size());
    }
    return out;
}

inline FramePayload decode_frame(const std::string &payload)
{
    io::Reader in{reinterpret_cast<const uint8_t *>(payload.data()), payload.size()};
    FramePayload f;
    f.window_index = in.u32();
    f.channels = in.u16();
    f.height = in.u16();
    f.width = in.u16();
    f.spikes.timestep = static_cast<int>(f.window_index);
    const uint8_t enc = in.u8();
    const size_t cells = static_cast<size_t>(f.channels) * f.height * f.width;
    if (enc == static_cast<uint8_t>(FrameEncoding::sparse))
    {
        const uint32_t count = in.u32();
        f.spikes.entries.reserve(count);
        const SpikeCoord *prev = nullptr;
        for (uint32_t i = 0; i < count; ++i)
        {
            SpikeCoord s;
            s.c = in.u8();
            s.y = in.u16();
            s.x = in.u16();
            if (s.c >= f.channels || s.y >= f.height || s.x >= f.width)
            {
                throw WireError("frame spike outside declared geometry");
            }
            if (prev != nullptr && !(*prev < s))
            {
                throw WireError("frame spikes must be sorted and unique");
            }
            f.spikes.entries.push_back(s);
            prev = &f.spikes.entries.back();
        }
    }
    else if (enc == static_cast<uint8_t>(FrameEncoding::bitmap))
    {
        const size_t bytes = (cells + 7) / 8;
        in.need(bytes);
        for (size_t i = 0; i < cells; ++i)
        {
            if (in.data[in.pos + i / 8] & (1u << (i % 8)))
            {
                const int c = static_cast<int>(i / (static_cast<size_t>(f.height) * f.width));
                const size_t rem = i % (static_cast<size_t>(f.height) * f.width);
                f.spikes.entries.push_back(SpikeCoord{c, static_cast<int>(rem / f.width),
                        static_cast<int>(rem % f.width)});
            }
        }
        in.pos += bytes;
    }
    else
    {
        throw WireError("unknown frame encoding " + std::to_string(enc));
    }
    if (in.pos != in.size)
    {
        throw WireError("trailing bytes in FRAME payload");
    }
    return f;
}

struct ResultPayload {
    uint32_t window_index = 0;
    std::vector<uint32_t> layer_spike_counts; // one per extraction layer
    std::vector<FeatureMap> maps;             // optional packed binary maps
    double latency_estimate_s = 0.0;

    bool operator==(const ResultPayload &) const = default;
};

inline std::string encode_result(const ResultPayload &r)
{
    std::string out;
    io::put_u32(out, r.window_index);
    io::put_f64(out, r.latency_estimate_s);
    io::put_u8(out, static_cast<uint8_t>(r.layer_spike_counts.size()));
    for (const uint32_t c : r.layer_spike_counts)
    {
        io::put_u32(out, c);
    }
    io::put_u8(out, r.maps.empty() ? 0 : 1);
    for (const FeatureMap &m : r.maps)
    {
        io::put_u16(out, static_cast<uint16_t>(m.layer));
        io::put_u8(out, static_cast<uint8_t>(m.shape.size()));
        for (const int d : m.shape)
        {
            io::put_u32(out, static_cast<uint32_t>(d));
        }
        std::vector<uint8_t> bits((m.values.size() + 7) / 8, 0);
        for (size_t i = 0; i < m.values.size(); ++i)
        {
            if (m.values[i])
            {
                bits[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
            }
        }
        out.append(reinterpret_cast<const char *>(bits.data()), bits.size());
    }
    return out;
}

inline ResultPayload decode_result(const std::string &payload)
{
    io::Reader in{reinterpret_cast<const uint8_t *>(payload.data()), payload.size()};
    ResultPayload r;
    r.window_index = in.u32();
    r.latency_estimate_s = in.f64();
    const uint8_t layers = in.u8();
    r.layer_spike_counts.resize(layers);
    for (uint8_t i = 0; i < layers; ++i)
    {
        r.layer_spike_counts[i] = in.u32();
    }
    const uint8_t has_maps = in.u8();
    if (has_maps)
    {
        for (uint8_t i = 0; i < layers; ++i)
        {
            FeatureMap m;
            m.layer = in.u16();
            const uint8_t ndims = in.u8();
            long long count = 1;
            m.shape.resize(ndims);
            for (uint8_t d = 0; d < ndims; ++d)
            {
                m.shape[d] = static_cast<int>(in.u32());
                count *= m.shape[d];
            }
            const size_t bytes = (static_cast<size_t>(count) + 7) / 8;
            in.need(bytes);
            m.values.assign(count, 0);
            for (long long b = 0; b < count; ++b)
            {
                m.values[b] = (in.data[in.pos + b / 8] >> (b % 8)) & 1;
            }
            in.pos += bytes;
            r.maps.push_back(std::move(m));
        }
    }
    if (in.pos != in.size)
    {
        throw WireError("trailing bytes in RESULT payload");
    }
    return r;
}

struct ErrorPayload {
    uint16_t code = 0;
    std::string message;

    bool operator==(const ErrorPayload &) const = default;
};

inline constexpr uint16_t kErrGeometry = 1;
inline constexpr uint16_t kErrBadMessage = 2;
inline constexpr uint16_t kErrUnknownType = 3;
inline constexpr uint16_t kErrInternal = 4;

inline std::string encode_error(const ErrorPayload &e)
{
    std::string out;
    io::put_u16(out, e.code);
    out += e.message;
    return out;
}

inline ErrorPayload decode_error(const std::string &payload)
{
    if (payload.size() < 2)
    {
        throw WireError("truncated ERROR payload");
    }
    ErrorPayload e;
    e.code = static_cast<uint16_t>(static_cast<uint8_t>(payload[0]) |
            (static_cast<uint8_t>(payload[1]) << 8));
    e.message = payload.substr(2);
    return e;
}

} // namespace spikesim

#pragma once

// Event-camera stream ingestion: CSV/binary parsing, temporal windowing,
// 2-channel frame accumulation and the sparse spike-list encoding the
// event-driven engine consumes.
//
// Binary event record, little-endian, 13 bytes:
//   t u64 (microseconds), x u16, y u16, p u8 (0 negative, 1 positive)
// CSV columns: t,x,y,p

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace spikesim {

struct EventRecord {
    uint64_t t = 0; // microseconds
    uint16_t x = 0;
    uint16_t y = 0;
    uint8_t p = 0;

    bool operator==(const EventRecord &) const = default;
};

struct SensorGeometry {
    int width = 0;
    int height = 0;
};

enum class EventFileFormat { csv, bin };
enum class AccumMode { binary, sum };

// Channel order is fixed: 0 = negative polarity, 1 = positive.
inline constexpr int kEventChannels = 2;

struct EventFrame {
    int channels = kEventChannels;
    int height = 0;
    int width = 0;
    int window_index = 0;
    AccumMode mode = AccumMode::binary;
    std::vector<uint32_t> values; // (channel, y, x) row-major

    EventFrame() = default;
    EventFrame(int channels_in, int height_in, int width_in)
            : channels(channels_in)
            , height(height_in)
            , width(width_in)
            , values(static_cast<size_t>(channels_in) * height_in * width_in, 0)
    {
    }

    size_t index(int c, int y, int x) const
    {
        return (static_cast<size_t>(c) * height + y) * width + x;
    }
    uint32_t at(int c, int y, int x) const { return values[index(c, y, x)]; }
    uint32_t &at(int c, int y, int x) { return values[index(c, y, x)]; }
    long long total() const
    {
        long long sum = 0;
        for (const uint32_t v : values)
        {
            sum += v;
        }
        return sum;
    }
};

struct SpikeCoord {
    int c = 0;
    int y = 0;
    int x = 0;

    bool operator==(const SpikeCoord &) const = default;
    auto operator<=>(const SpikeCoord &) const = default;
};

/// Sparse encoding of a binary frame: coordinates sorted by (c, y, x),
/// no duplicates.
struct SpikeList {
    int timestep = 0;
    std::vector<SpikeCoord> entries;

    bool operator==(const SpikeList &) const = default;
};

namespace detail {

inline void check_bounds(const EventRecord &e, const SensorGeometry &geo, size_t record_no)
{
    if (e.x >= geo.width || e.y >= geo.height)
    {
        throw std::runtime_error("event " + std::to_string(record_no) + ": coordinate (" +
                std::to_string(e.x) + "," + std::to_string(e.y) + ") outside " +
                std::to_string(geo.width) + "x" + std::to_string(geo.height) + " sensor");
    }
    if (e.p > 1)
    {
        throw std::runtime_error("event " + std::to_string(record_no) + ": polarity must be 0 or 1");
    }
}

} // namespace detail

inline std::vector<EventRecord> parse_event_csv(const std::string &text, const SensorGeometry &geo)
{
    std::vector<EventRecord> events;
    std::istringstream stream(text);
    std::string line;
    size_t record_no = 0;
    size_t line_no = 0;
    while (std::getline(stream, line))
    {
        ++line_no;
        if (line.empty() || line == "\r")
        {
            continue;
        }
        unsigned long long t = 0;
        long x = 0;
        long y = 0;
        long p = 0;
        char c1 = 0;
        char c2 = 0;
        char c3 = 0;
        std::istringstream row(line);
        if (!(row >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' || c2 != ',' || c3 != ',')
        {
            throw std::runtime_error("malformed event row at line " + std::to_string(line_no) +
                    ": '" + line + "'");
        }
        if (x < 0 || y < 0 || p < 0 || x > UINT16_MAX || y > UINT16_MAX)
        {
            throw std::runtime_error("event field out of range at line " + std::to_string(line_no));
        }
        EventRecord e{t, static_cast<uint16_t>(x), static_cast<uint16_t>(y), static_cast<uint8_t>(p)};
        detail::check_bounds(e, geo, record_no);
        events.push_back(e);
        ++record_no;
    }
    std::stable_sort(events.begin(), events.end(),
            [](const EventRecord &a, const EventRecord &b) { return a.t < b.t; });
    return events;
}

inline std::vector<EventRecord> parse_event_bin(const std::string &bytes, const SensorGeometry &geo)
{
    constexpr size_t kRecord = 13;
    if (bytes.size() % kRecord != 0)
    {
        throw std::runtime_error("binary event file length is not a multiple of 13 bytes");
    }
    const auto *p = reinterpret_cast<const uint8_t *>(bytes.data());
    std::vector<EventRecord> events;
    events.reserve(bytes.size() / kRecord);
    for (size_t off = 0; off < bytes.size(); off += kRecord)
    {
        EventRecord e;
        uint64_t t = 0;
        for (int i = 0; i < 8; ++i)
        {
            t |= static_cast<uint64_t>(p[off + i]) << (8 * i);
        }
        e.t = t;
        e.x = static_cast<uint16_t>(p[off + 8] | (p[off + 9] << 8));
        e.y = static_cast<uint16_t>(p[off + 10] | (p[off + 11] << 8));
        e.p = p[off + 12];
        detail::check_bounds(e, geo, off / kRecord);
        events.push_back(e);
    }
    std::stable_sort(events.begin(), events.end(),
            [](const EventRecord &a, const EventRecord &b) { return a.t < b.t; });
    return events;
}

inline std::vector<EventRecord> parse_event_stream(const std::string &bytes,
        EventFileFormat format, const SensorGeometry &geo)
{
    return format == EventFileFormat::csv ? parse_event_csv(bytes, geo)
                                          : parse_event_bin(bytes, geo);
}

inline std::string encode_event_bin(const std::vector<EventRecord> &events)
{
    std::string out;
    out.reserve(events.size() * 13);
    for (const EventRecord &e : events)
    {
        for (int i = 0; i < 8; ++i)
        {
            out.push_back(static_cast<char>((e.t >> (8 * i)) & 0xff));
        }
        out.push_back(static_cast<char>(e.x & 0xff));
        out.push_back(static_cast<char>((e.x >> 8) & 0xff));
        out.push_back(static_cast<char>(e.y & 0xff));
        out.push_back(static_cast<char>((e.y >> 8) & 0xff));
        out.push_back(static_cast<char>(e.p));
    }
    return out;
}

/// Partition time-sorted events into half-open windows [k*w, (k+1)*w).
/// Empty interior windows are kept so window index equals timestep; the
/// trailing partial window is kept too.
inline std::vector<std::vector<EventRecord>> window_events(
        const std::vector<EventRecord> &events, uint64_t window_us)
{
    if (window_us == 0)
    {
        throw std::invalid_argument("window duration must be positive");
    }
    if (events.empty())
    {
        return {};
    }
    const uint64_t last_t = events.back().t;
    const size_t windows = static_cast<size_t>(last_t / window_us) + 1;
    std::vector<std::vector<EventRecord>> groups(windows);
    for (const EventRecord &e : events)
    {
        groups[static_cast<size_t>(e.t / window_us)].push_back(e);
    }
    return groups;
}

inline EventFrame accumulate_frame(const std::vector<EventRecord> &group, AccumMode mode,
        const SensorGeometry &geo, int window_index = 0)
{
    EventFrame frame(kEventChannels, geo.height, geo.width);
    frame.mode = mode;
    frame.window_index = window_index;
    for (const EventRecord &e : group)
    {
        uint32_t &cell = frame.at(e.p, e.y, e.x);
        if (mode == AccumMode::sum)
        {
            ++cell;
        }
        else
        {
            cell = 1;
        }
    }
    return frame;
}

/// Elementwise min(frame, 1).
inline EventFrame binarize(const EventFrame &frame)
{
    EventFrame out = frame;
    out.mode = AccumMode::binary;
    for (uint32_t &v : out.values)
    {
        v = v > 0 ? 1 : 0;
    }
    return out;
}

/// Sorted coordinates of the nonzero entries of a binary frame.
inline SpikeList frame_to_spikelist(const EventFrame &frame)
{
    SpikeList list;
    list.timestep = frame.window_index;
    for (int c = 0; c < frame.channels; ++c)
    {
        for (int y = 0; y < frame.height; ++y)
        {
            for (int x = 0; x < frame.width; ++x)
            {
                const uint32_t v = frame.at(c, y, x);
                if (v == 0)
                {
                    continue;
                }
                if (v != 1)
                {
                    throw std::runtime_error("non-binary value " + std::to_string(v) +
                            " at (" + std::to_string(c) + "," + std::to_string(y) + "," +
                            std::to_string(x) + "); binarize sum frames first");
                }
                list.entries.push_back({c, y, x});
            }
        }
    }
    return list;
}

/// Dense expansion of a spike list; inverse of frame_to_spikelist.
inline EventFrame densify(const SpikeList &list, int channels, int height, int width)
{
    EventFrame frame(channels, height, width);
    frame.window_index = list.timestep;
    for (const SpikeCoord &s : list.entries)
    {
        if (s.c < 0 || s.c >= channels || s.y < 0 || s.y >= height || s.x < 0 || s.x >= width)
        {
            throw std::runtime_error("spike coordinate outside frame geometry");
        }
        frame.at(s.c, s.y, s.x) = 1;
    }
    return frame;
}

} // namespace spikesim

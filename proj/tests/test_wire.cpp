#include <random>
#include <thread>

#include <catch2/catch_amalgamated.hpp>

#include "spikesim/net.hpp"
#include "spikesim/wire.hpp"

#include "helpers.hpp"

using namespace spikesim;
using namespace testing_helpers;

TEST_CASE("message framing round trip", "[wire]")
{
    const WireMessage msg = make_message(MsgType::frame, "hello payload");
    const std::string bytes = encode_message(msg);
    CHECK(bytes.substr(0, 4) == "SPKT");
    CHECK(decode_message(bytes) == msg);

    CHECK_THROWS_AS(decode_message(bytes.substr(0, 5)), WireError);
    std::string corrupt = bytes;
    corrupt[0] = 'X';
    CHECK_THROWS_WITH(decode_message(corrupt), Catch::Matchers::ContainsSubstring("bad magic"));
}

TEST_CASE("payload codecs are identities", "[wire]")
{
    SECTION("hello")
    {
        const HelloPayload h{2, 240, 304, 50000, 1};
        CHECK(decode_hello(encode_hello(h)) == h);
    }

    SECTION("sparse frame")
    {
        FramePayload f;
        f.window_index = 7;
        f.channels = 2;
        f.height = 16;
        f.width = 16;
        f.spikes.timestep = 7;
        f.spikes.entries = {{0, 1, 2}, {0, 3, 4}, {1, 15, 15}};
        const std::string bytes = encode_frame(f);
        CHECK(bytes[10] == 0); // sparse tag after index+geometry
        CHECK(decode_frame(bytes) == f);
    }

    SECTION("dense frame uses the bitmap encoding")
    {
        FramePayload f;
        f.window_index = 3;
        f.channels = 1;
        f.height = 4;
        f.width = 4;
        f.spikes.timestep = 3;
        for (int y = 0; y < 4; ++y)
        {
            for (int x = 0; x < 4; ++x)
            {
                if ((y * 4 + x) % 2 == 0 || y > 1)
                {
                    f.spikes.entries.push_back({0, y, x});
                }
            }
        }
        const std::string bytes = encode_frame(f);
        CHECK(bytes[10] == 1); // >= 50 % density -> bitmap
        CHECK(decode_frame(bytes) == f);
    }

    SECTION("random frames round-trip under both encodings")
    {
        std::mt19937 rng(71);
        for (int i = 0; i < 50; ++i)
        {
            EventFrame frame(2, 9, 7);
            const double density = (i % 2 == 0) ? 0.15 : 0.85;
            std::bernoulli_distribution fire(density);
            for (uint32_t &v : frame.values)
            {
                v = fire(rng) ? 1 : 0;
            }
            FramePayload f;
            f.window_index = static_cast<uint32_t>(i);
            f.channels = 2;
            f.height = 9;
            f.width = 7;
            f.spikes = frame_to_spikelist(frame);
            f.spikes.timestep = i;
            CHECK(decode_frame(encode_frame(f)) == f);
        }
    }

    SECTION("result with and without maps")
    {
        ResultPayload r;
        r.window_index = 12;
        r.layer_spike_counts = {5, 0, 99};
        r.latency_estimate_s = 1.25e-4;
        CHECK(decode_result(encode_result(r)) == r);

        FeatureMap m;
        m.layer = 3;
        m.shape = {2, 3, 3};
        m.values = {1, 0, 0, 1, 1, 0, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 1, 1};
        r.maps = {m, m, m};
        CHECK(decode_result(encode_result(r)) == r);
    }

    SECTION("error")
    {
        const ErrorPayload e{kErrGeometry, "geometry mismatch"};
        CHECK(decode_error(encode_error(e)) == e);
    }

    SECTION("malformed payloads raise")
    {
        CHECK_THROWS_AS(decode_hello("short"), std::runtime_error);
        CHECK_THROWS_AS(decode_frame(std::string(4, '\0')), std::runtime_error);
        FramePayload f;
        f.channels = 2;
        f.height = 4;
        f.width = 4;
        f.spikes.entries = {{1, 9, 0}}; // y out of bounds
        CHECK_THROWS_WITH(decode_frame(encode_frame(f)),
                Catch::Matchers::ContainsSubstring("geometry"));
    }
}

namespace {

struct ServerFixture {
    NetworkSpec spec;
    ModelServer server;
    uint16_t port;
    std::jthread thread;

    explicit ServerFixture(NetworkSpec spec_in, int connections)
            : spec(std::move(spec_in))
            , server(spec, ServerOptions{})
            , port(server.start(0))
            , thread([this, connections] {
                for (int i = 0; i < connections; ++i)
                {
                    server.run_once();
                }
            })
    {
    }

    // Unblock the accept loop if the test bailed out early.
    ~ServerFixture() { server.stop(); }
};

} // namespace

TEST_CASE("streaming session delivers ordered results equal to a local run", "[wire][server]")
{
    std::mt19937 rng(72);
    NetworkSpec spec = make_conv_net({2, 8, 8},
            {{6, 3, 3, 1, 1, true, true}, {4, 3, 3, 2, 1, true, true}});
    testing_helpers::randomize_weights(spec, rng);
    spec = quantize_network(spec);

    const auto frames = make_random_frames(spec, 5, 0.35, rng);
    const auto lists = frames_to_lists(frames);

    ServerFixture fixture(spec, 2);

    const StreamOutcome first = stream_windows("127.0.0.1", fixture.port, lists, 2, 8, 8);
    REQUIRE(first.results.size() == 5);
    for (size_t i = 0; i < first.results.size(); ++i)
    {
        CHECK(first.results[i].window_index == i);
    }

    // Local oracle: the same engine, run in-process.
    EventEngine local(spec);
    for (size_t i = 0; i < lists.size(); ++i)
    {
        const StepOutput out = local.step(lists[i]);
        const auto &extract = local.result().extract_layers;
        REQUIRE(first.results[i].layer_spike_counts.size() == extract.size());
        for (size_t e = 0; e < extract.size(); ++e)
        {
            CHECK(first.results[i].layer_spike_counts[e] ==
                    static_cast<uint32_t>(out.layer_spikes[extract[e]]));
        }
    }

    // Determinism: a second identical session produces identical bytes.
    const StreamOutcome second = stream_windows("127.0.0.1", fixture.port, lists, 2, 8, 8);
    CHECK(first.raw_results == second.raw_results);
}

TEST_CASE("RESET gives identical results for identical frames", "[wire][server]")
{
    std::mt19937 rng(73);
    NetworkSpec spec = make_conv_net({2, 6, 6}, {{5, 3, 3, 1, 1, true, true}});
    testing_helpers::randomize_weights(spec, rng);
    spec = quantize_network(spec);
    const auto frames = make_random_frames(spec, 1, 0.5, rng);
    const SpikeList list = frame_to_spikelist(frames[0]);

    ServerFixture fixture(spec, 1);
    TcpSocket conn = connect_to("127.0.0.1", fixture.port);

    HelloPayload hello{2, 6, 6, 50000, 0};
    write_message(conn, make_message(MsgType::hello, encode_hello(hello)));
    REQUIRE(read_message(conn)->is(MsgType::hello));

    auto send_frame = [&](uint32_t index) {
        FramePayload f;
        f.window_index = index;
        f.channels = 2;
        f.height = 6;
        f.width = 6;
        f.spikes = list;
        write_message(conn, make_message(MsgType::frame, encode_frame(f)));
        const auto reply = read_message(conn);
        REQUIRE(reply.has_value());
        REQUIRE(reply->is(MsgType::result));
        return decode_result(reply->payload);
    };

    const ResultPayload first = send_frame(0);
    write_message(conn, make_message(MsgType::reset));
    REQUIRE(read_message(conn)->is(MsgType::reset));
    ResultPayload second = send_frame(1);
    second.window_index = first.window_index;
    CHECK(first == second);

    write_message(conn, make_message(MsgType::end));
    CHECK(read_message(conn)->is(MsgType::end));
}

TEST_CASE("HELLO geometry mismatch closes the connection with ERROR", "[wire][server]")
{
    std::mt19937 rng(74);
    NetworkSpec spec = quantize_network(make_conv_net({2, 6, 6}, {{4, 3, 3, 1, 1, true}}));
    ServerFixture fixture(spec, 1);
    (void)rng;

    TcpSocket conn = connect_to("127.0.0.1", fixture.port);
    HelloPayload hello{2, 64, 64, 50000, 0};
    write_message(conn, make_message(MsgType::hello, encode_hello(hello)));
    const auto reply = read_message(conn);
    REQUIRE(reply.has_value());
    REQUIRE(reply->is(MsgType::error));
    const ErrorPayload err = decode_error(reply->payload);
    CHECK(err.code == kErrGeometry);
    CHECK(read_message(conn) == std::nullopt); // server closed
}

TEST_CASE("unknown message types and malformed frames keep the session alive", "[wire][server]")
{
    std::mt19937 rng(75);
    NetworkSpec spec = make_conv_net({2, 6, 6}, {{5, 3, 3, 1, 1, true, true}});
    testing_helpers::randomize_weights(spec, rng);
    spec = quantize_network(spec);
    const auto frames = make_random_frames(spec, 2, 0.5, rng);
    const auto lists = frames_to_lists(frames);

    ServerFixture fixture(spec, 1);
    TcpSocket conn = connect_to("127.0.0.1", fixture.port);

    write_message(conn, make_message(MsgType::hello, encode_hello({2, 6, 6, 50000, 0})));
    REQUIRE(read_message(conn)->is(MsgType::hello));

    auto send_frame = [&](uint32_t index, const SpikeList &list) {
        FramePayload f;
        f.window_index = index;
        f.channels = 2;
        f.height = 6;
        f.width = 6;
        f.spikes = list;
        write_message(conn, make_message(MsgType::frame, encode_frame(f)));
        const auto reply = read_message(conn);
        REQUIRE(reply.has_value());
        REQUIRE(reply->is(MsgType::result));
        return decode_result(reply->payload);
    };

    const ResultPayload r0 = send_frame(0, lists[0]);

    // Unknown type: ERROR reply, connection survives.
    WireMessage unknown;
    unknown.type = 99;
    unknown.payload = "???";
    write_message(conn, unknown);
    auto reply = read_message(conn);
    REQUIRE(reply.has_value());
    CHECK(reply->is(MsgType::error));
    CHECK(decode_error(reply->payload).code == kErrUnknownType);

    // Malformed FRAME payload: ERROR, membrane state preserved.
    write_message(conn, make_message(MsgType::frame, "garbage"));
    reply = read_message(conn);
    REQUIRE(reply.has_value());
    CHECK(reply->is(MsgType::error));

    const ResultPayload r1 = send_frame(1, lists[1]);

    // Oracle: uninterrupted local session over the same two frames.
    EventEngine local(spec);
    const StepOutput s0 = local.step(lists[0]);
    const StepOutput s1 = local.step(lists[1]);
    const auto &extract = local.result().extract_layers;
    for (size_t e = 0; e < extract.size(); ++e)
    {
        CHECK(r0.layer_spike_counts[e] == static_cast<uint32_t>(s0.layer_spikes[extract[e]]));
        CHECK(r1.layer_spike_counts[e] == static_cast<uint32_t>(s1.layer_spikes[extract[e]]));
    }

    write_message(conn, make_message(MsgType::end));
    CHECK(read_message(conn)->is(MsgType::end));
}

TEST_CASE("requested feature maps arrive packed and binary", "[wire][server]")
{
    std::mt19937 rng(76);
    NetworkSpec spec = make_conv_net({2, 6, 6}, {{5, 3, 3, 1, 1, true, true}});
    testing_helpers::randomize_weights(spec, rng);
    spec = quantize_network(spec);
    const auto frames = make_random_frames(spec, 3, 0.5, rng);
    const auto lists = frames_to_lists(frames);

    ServerFixture fixture(spec, 1);
    StreamOptions opts;
    opts.want_maps = true;
    const StreamOutcome outcome =
            stream_windows("127.0.0.1", fixture.port, lists, 2, 6, 6, opts);

    RunOptions local_opts;
    local_opts.keep_features = true;
    EventEngine local(spec, local_opts);
    for (size_t i = 0; i < lists.size(); ++i)
    {
        const StepOutput out = local.step(lists[i]);
        REQUIRE(outcome.results[i].maps.size() == out.features.size());
        for (size_t m = 0; m < out.features.size(); ++m)
        {
            CHECK(outcome.results[i].maps[m].values == out.features[m].values);
            CHECK(outcome.results[i].maps[m].shape == out.features[m].shape);
        }
    }
}

// spikesim command-line front end.
//
// Subcommands: stats, shapes, quantize, fuse, gen, ingest, run, perf,
// compare, serve, stream. Exit codes: 0 success, 1 runtime failure,
// 2 usage / input errors.

#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spikesim/engine.hpp"
#include "spikesim/events.hpp"
#include "spikesim/model.hpp"
#include "spikesim/model_io.hpp"
#include "spikesim/net.hpp"
#include "spikesim/perf.hpp"
#include "spikesim/report.hpp"

namespace {

using namespace spikesim;

// Input-side failures (missing files, malformed configs, bad flag
// combinations) exit with 2; engine failures with 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw UsageError("cannot open '" + path + "'");
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string &path, const std::string &bytes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
    {
        throw UsageError("cannot open '" + path + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
    {
        throw std::runtime_error("write failed for '" + path + "'");
    }
}

NetworkSpec load_model_checked(const std::string &path)
{
    const std::string bytes = read_file(path);
    try
    {
        return load_model(bytes);
    }
    catch (const std::exception &e)
    {
        throw UsageError("model '" + path + "': " + e.what());
    }
}

EventFileFormat parse_event_format(const std::string &name)
{
    if (name == "csv")
    {
        return EventFileFormat::csv;
    }
    if (name == "bin")
    {
        return EventFileFormat::bin;
    }
    throw UsageError("unknown event format '" + name + "' (csv|bin)");
}

HardwareConfig load_hw(const std::string &path)
{
    if (path.empty())
    {
        return HardwareConfig{};
    }
    try
    {
        return hardware_from_json(nlohmann::json::parse(read_file(path)));
    }
    catch (const UsageError &)
    {
        throw;
    }
    catch (const std::exception &e)
    {
        throw UsageError("hardware config '" + path + "': " + e.what());
    }
}

struct EventPipeline {
    SensorGeometry geometry;
    std::vector<std::vector<EventRecord>> windows;
    std::vector<EventFrame> frames;
};

EventPipeline ingest_events(const std::string &path, const std::string &format,
        SensorGeometry geometry, uint64_t window_us, AccumMode mode)
{
    EventPipeline p;
    p.geometry = geometry;
    std::vector<EventRecord> events;
    try
    {
        events = parse_event_stream(read_file(path), parse_event_format(format), geometry);
    }
    catch (const UsageError &)
    {
        throw;
    }
    catch (const std::exception &e)
    {
        throw UsageError("events '" + path + "': " + e.what());
    }
    p.windows = window_events(events, window_us);
    p.frames.reserve(p.windows.size());
    for (size_t i = 0; i < p.windows.size(); ++i)
    {
        p.frames.push_back(accumulate_frame(p.windows[i], mode, geometry, static_cast<int>(i)));
    }
    return p;
}

NetworkSummary make_summary(const NetworkSpec &spec, const ModelStats &stats,
        const RunResult &result, double latency_per_output_s, double power_w)
{
    NetworkSummary s;
    s.name = spec.name;
    s.inputs = stats.inputs;
    s.timesteps = spec.timesteps;
    s.synapses = stats.synapses;
    s.kernels = stats.kernels;
    // Per-inference figures: one inference spans spec.timesteps windows.
    const double mean_window_spikes = result.timesteps > 0
            ? static_cast<double>(result.total_spikes) / result.timesteps
            : 0.0;
    s.total_spikes = static_cast<long long>(mean_window_spikes * spec.timesteps + 0.5);
    s.activity = s.total_spikes > 0 ? activity(s.total_spikes, stats.neurons, spec.timesteps) : 0.0;
    s.latency_s = latency_per_output_s * spec.timesteps;
    s.power_w = power_w;
    if (s.latency_s > 0 && s.total_spikes > 0)
    {
        s.energy_j = power_w * s.latency_s;
        s.energy_spike_j = s.energy_j / static_cast<double>(s.total_spikes);
        s.energy_norm_j = s.energy_j / static_cast<double>(stats.synapses) / spec.timesteps;
    }
    return s;
}

// ---------------------------------------------------------------------------

int cmd_stats(const std::string &model_path, const std::string &json_path)
{
    const NetworkSpec spec = load_model_checked(model_path);
    const ModelStats stats = model_stats(spec);
    std::cout << stats_report(spec, stats);
    if (!json_path.empty())
    {
        nlohmann::json j{{"name", spec.name}, {"synapses", stats.synapses},
                {"kernels", stats.kernels}, {"inputs", stats.inputs},
                {"neurons", stats.neurons}, {"timesteps", spec.timesteps}};
        write_file(json_path, j.dump(2) + "\n");
    }
    return 0;
}

int cmd_shapes(const std::string &model_path)
{
    const NetworkSpec spec = load_model_checked(model_path);
    const auto shapes = infer_shapes(spec);
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"layer", "kind", "out_shape", "extract"});
    for (size_t l = 0; l < shapes.size(); ++l)
    {
        rows.push_back({std::to_string(l), layer_kind_name(spec.layers[l].kind),
                shape_to_string(shapes[l]), spec.layers[l].extract ? "yes" : ""});
    }
    std::cout << "input " << shape_to_string(spec.input_shape) << "\n" << format_table(rows);
    std::cout << "extraction shapes:";
    for (const auto &s : extraction_shapes(spec))
    {
        std::cout << " [" << shape_to_string(s) << "]";
    }
    std::cout << "\n";
    return 0;
}

int cmd_quantize(const std::string &in_path, const std::string &out_path,
        const std::vector<int> &fmt_all)
{
    NetworkSpec spec = load_model_checked(in_path);
    if (!fmt_all.empty())
    {
        if (fmt_all.size() != 2)
        {
            throw UsageError("--format expects two integers: <int_bits> <frac_bits>");
        }
        const FixedFormat fmt = FixedFormat::q(fmt_all[0], fmt_all[1]);
        spec.formats.weights = fmt;
        spec.formats.potentials = fmt;
        spec.formats.thresholds = fmt;
    }
    SatCounter sat;
    const NetworkSpec quantized = quantize_network(spec, &sat);
    save_model_file(quantized, out_path);
    std::cout << "quantized " << spec.name << " to " << spec.formats.weights.to_string()
              << " (weight saturations: " << sat.events << ")\n";
    return 0;
}

int cmd_fuse(const std::string &in_path, const std::string &out_path)
{
    const NetworkSpec spec = load_model_checked(in_path);
    int fused_layers = 0;
    for (const LayerSpec &l : spec.layers)
    {
        fused_layers += l.batchnorm.has_value() ? 1 : 0;
    }
    const NetworkSpec fused = fuse_batchnorm(spec);
    save_model_file(fused, out_path);
    std::cout << "fused " << fused_layers << " batchnorm layer(s) into convolution weights\n";
    return 0;
}

int cmd_gen(const std::string &in_path, const std::string &out_path, uint64_t seed,
        double weight_scale, double bias_scale, bool with_bn)
{
    NetworkSpec spec = load_model_checked(in_path);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> wdist(-weight_scale, weight_scale);
    std::uniform_real_distribution<double> bdist(-bias_scale, bias_scale);
    for (size_t l = 0; l < spec.layers.size(); ++l)
    {
        LayerParams &p = spec.params[l];
        if (p.is_fixed)
        {
            throw UsageError("gen expects a float model, layer " + std::to_string(l) +
                    " is quantized");
        }
        for (float &w : p.weights.data)
        {
            w = static_cast<float>(wdist(rng));
        }
        for (float &b : p.bias.data)
        {
            b = static_cast<float>(bdist(rng));
        }
        if (with_bn && !p.weights.empty() &&
                (spec.layers[l].kind == LayerKind::conv2d ||
                        spec.layers[l].kind == LayerKind::conv1d))
        {
            const int channels = p.weights.shape[1];
            BatchNormParams bn;
            bn.epsilon = 1e-5f;
            std::uniform_real_distribution<double> gdist(0.5, 1.5);
            std::uniform_real_distribution<double> sdist(-0.2, 0.2);
            for (int c = 0; c < channels; ++c)
            {
                bn.gamma.push_back(static_cast<float>(gdist(rng)));
                bn.beta.push_back(static_cast<float>(sdist(rng)));
                bn.mean.push_back(static_cast<float>(sdist(rng)));
                bn.variance.push_back(static_cast<float>(gdist(rng)));
            }
            spec.layers[l].batchnorm = std::move(bn);
        }
    }
    save_model_file(spec, out_path);
    std::cout << "wrote " << out_path << " (seed " << seed << ")\n";
    return 0;
}

int cmd_ingest(const std::string &events_path, const std::string &format, int width, int height,
        uint64_t window_us, const std::string &mode_name, const std::string &csv_path)
{
    const AccumMode mode = (mode_name == "sum") ? AccumMode::sum : AccumMode::binary;
    const EventPipeline p = ingest_events(events_path, format,
            SensorGeometry{width, height}, window_us, mode);
    long long total_events = 0;
    for (const auto &w : p.windows)
    {
        total_events += static_cast<long long>(w.size());
    }
    std::cout << "windows " << p.windows.size() << ", events " << total_events << ", window "
              << window_us << " us, mode " << mode_name << "\n";
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"window", "events", "active_pixels"});
    std::string csv = csv_join({"window", "events", "active_pixels"});
    for (size_t i = 0; i < p.windows.size(); ++i)
    {
        long long active = 0;
        for (const uint32_t v : p.frames[i].values)
        {
            active += v > 0 ? 1 : 0;
        }
        if (p.windows.size() <= 20 || i < 10 || i + 10 >= p.windows.size())
        {
            rows.push_back({std::to_string(i), std::to_string(p.windows[i].size()),
                    std::to_string(active)});
        }
        csv += csv_join({std::to_string(i), std::to_string(p.windows[i].size()),
                std::to_string(active)});
    }
    std::cout << format_table(rows);
    if (!csv_path.empty())
    {
        write_file(csv_path, csv);
    }
    return 0;
}

struct RunFlags {
    std::string engine = "dense";
    std::string arith;
    std::string mode = "binary";
    std::string format = "csv";
    uint64_t window_us = 50000;
    int width = 0;
    int height = 0;
    bool perf = false;
    bool compare_arith = false;
    std::string hw_path;
    std::string json_path;
    std::string csv_path;
    double power_w = 0.0;
    double calibrate_target_ms = 0.0;
};

int cmd_run(const std::string &model_path, const std::string &events_path, RunFlags flags)
{
    NetworkSpec spec = load_model_checked(model_path);
    if (spec.input_shape.size() != 3 || spec.input_shape[0] != kEventChannels)
    {
        throw UsageError("model input must be a 2-channel 2-D frame to consume camera events");
    }
    const int width = flags.width > 0 ? flags.width : spec.input_shape[2];
    const int height = flags.height > 0 ? flags.height : spec.input_shape[1];
    if (width != spec.input_shape[2] || height != spec.input_shape[1])
    {
        throw UsageError("sensor geometry " + std::to_string(width) + "x" +
                std::to_string(height) + " does not match model input " +
                std::to_string(spec.input_shape[2]) + "x" + std::to_string(spec.input_shape[1]));
    }

    const bool model_fixed = !spec.params.empty() && spec.params.front().is_fixed;
    if (flags.arith.empty())
    {
        flags.arith = model_fixed ? "fixed" : "real";
    }
    if (flags.perf && flags.engine == "dense")
    {
        flags.engine = "event";
    }
    if (flags.engine == "event" && flags.arith != "fixed")
    {
        throw UsageError("the event-driven engine requires fixed arithmetic");
    }
    if (flags.engine == "event" && flags.mode == "sum")
    {
        throw UsageError("the event-driven engine requires binary frames (use --mode binary)");
    }

    NetworkSpec run_spec = spec;
    if (flags.arith == "fixed" && !model_fixed)
    {
        std::cerr << "note: quantizing float model to " << spec.formats.weights.to_string()
                  << " for this run\n";
        run_spec = quantize_network(spec);
    }
    else if (flags.arith == "real" && model_fixed)
    {
        std::cerr << "note: dequantizing fixed model for the real-arithmetic run\n";
        run_spec = dequantize_network(spec);
    }

    const AccumMode mode = (flags.mode == "sum") ? AccumMode::sum : AccumMode::binary;
    const EventPipeline p = ingest_events(events_path, flags.format,
            SensorGeometry{width, height}, flags.window_us, mode);
    if (p.frames.empty())
    {
        throw UsageError("event stream produced no windows");
    }

    const ModelStats stats = model_stats(run_spec);
    HardwareConfig hw = load_hw(flags.hw_path);
    if (flags.power_w > 0)
    {
        hw.dynamic_power_w = flags.power_w;
    }

    RunOptions opts;
    opts.keep_features = false;

    RunResult result;
    SpikeTrace trace;
    if (flags.engine == "event")
    {
        std::vector<SpikeList> lists;
        lists.reserve(p.frames.size());
        for (const EventFrame &f : p.frames)
        {
            lists.push_back(frame_to_spikelist(f));
        }
        auto [res, tr] = run_event_driven(run_spec, lists, opts);
        result = std::move(res);
        trace = std::move(tr);
    }
    else
    {
        result = run_dense(run_spec, p.frames, flags.arith == "fixed"
                        ? EngineArithmetic::fixed
                        : EngineArithmetic::real, opts);
    }

    std::cout << run_report(run_spec, stats, result);

    if (flags.compare_arith)
    {
        const NetworkSpec other_spec = (flags.arith == "fixed")
                ? dequantize_network(run_spec)
                : quantize_network(run_spec);
        const RunResult other = run_dense(other_spec, p.frames,
                flags.arith == "fixed" ? EngineArithmetic::real : EngineArithmetic::fixed,
                opts);
        const long long delta = result.total_spikes - other.total_spikes;
        std::cout << "arithmetic divergence: " << (flags.arith == "fixed" ? "fixed" : "real")
                  << " " << result.total_spikes << " spikes vs "
                  << (flags.arith == "fixed" ? "real" : "fixed") << " " << other.total_spikes
                  << " (delta " << delta << ")\n";
    }

    double latency_per_output = 0.0;
    if (flags.perf)
    {
        if (flags.calibrate_target_ms > 0)
        {
            hw.cycles_per_update = calibrate_cycles_per_update(trace, run_spec, hw,
                    flags.calibrate_target_ms * 1e-3);
            std::cout << "calibrated cycles_per_update = " << format_real(hw.cycles_per_update, 6)
                      << " for " << flags.calibrate_target_ms << " ms end-to-end\n";
        }
        const LatencyReport lat = simulate_latency(trace, run_spec, hw);
        latency_per_output = lat.per_output_s();
        std::cout << latency_report_text(lat);
        const double mean_spikes =
                static_cast<double>(result.total_spikes) / result.timesteps;
        const long long spikes_per_inference =
                static_cast<long long>(mean_spikes * run_spec.timesteps + 0.5);
        if (spikes_per_inference > 0)
        {
            const EnergyReport energy = energy_report(latency_per_output * run_spec.timesteps,
                    hw, stats, spikes_per_inference, run_spec.timesteps, trace.total_updates);
            std::cout << energy_report_text(energy);
        }
        if (!flags.csv_path.empty())
        {
            write_file(flags.csv_path, latency_report_csv(lat));
        }
    }
    else if (!flags.csv_path.empty())
    {
        write_file(flags.csv_path, per_window_csv(result, stats.neurons, run_spec.timesteps));
    }

    if (!flags.json_path.empty())
    {
        const NetworkSummary summary =
                make_summary(run_spec, stats, result, latency_per_output, hw.dynamic_power_w);
        write_file(flags.json_path, summary_to_json(summary).dump(2) + "\n");
    }
    return 0;
}

int cmd_compare(const std::string &a_path, const std::string &b_path, const std::string &csv_path)
{
    NetworkSummary a;
    NetworkSummary b;
    try
    {
        a = summary_from_json(nlohmann::json::parse(read_file(a_path)));
        b = summary_from_json(nlohmann::json::parse(read_file(b_path)));
    }
    catch (const UsageError &)
    {
        throw;
    }
    catch (const std::exception &e)
    {
        throw UsageError(std::string("summary: ") + e.what());
    }
    const auto rows = compare_networks(a, b);
    std::cout << ratio_table_text(rows, a.name, b.name);
    if (!csv_path.empty())
    {
        write_file(csv_path, ratio_table_csv(rows));
    }
    return 0;
}

int cmd_serve(const std::string &model_path, uint16_t port, bool once, const std::string &hw_path)
{
    NetworkSpec spec = load_model_checked(model_path);
    if (!spec.params.empty() && !spec.params.front().is_fixed)
    {
        std::cerr << "note: quantizing float model to " << spec.formats.weights.to_string()
                  << " for serving\n";
        spec = quantize_network(spec);
    }
    ServerOptions opts;
    opts.hw = load_hw(hw_path);
    ModelServer server(std::move(spec), opts);
    const uint16_t bound = server.start(port);
    std::cout << "serving on port " << bound << (once ? " (single connection)" : "") << "\n"
              << std::flush;
    if (once)
    {
        server.run_once();
    }
    else
    {
        server.run();
    }
    return 0;
}

int cmd_stream(const std::string &events_path, const std::string &host, uint16_t port,
        const std::string &format, int width, int height, uint64_t window_us, bool maps,
        const std::string &csv_path)
{
    if (width <= 0 || height <= 0)
    {
        throw UsageError("stream requires --width and --height of the sensor");
    }
    const EventPipeline p = ingest_events(events_path, format, SensorGeometry{width, height},
            window_us, AccumMode::binary);
    std::vector<SpikeList> lists;
    lists.reserve(p.frames.size());
    for (const EventFrame &f : p.frames)
    {
        lists.push_back(frame_to_spikelist(f));
    }
    StreamOptions opts;
    opts.window_us = static_cast<uint32_t>(window_us);
    opts.want_maps = maps;
    const StreamOutcome outcome =
            stream_windows(host, port, lists, kEventChannels, height, width, opts);

    std::string csv = csv_join({"window", "extraction_spikes", "latency_estimate_s"});
    long long total = 0;
    for (const ResultPayload &r : outcome.results)
    {
        long long spikes = 0;
        for (const uint32_t c : r.layer_spike_counts)
        {
            spikes += c;
        }
        total += spikes;
        csv += csv_join({std::to_string(r.window_index), std::to_string(spikes),
                format_real(r.latency_estimate_s, 9)});
    }
    std::cout << "streamed " << outcome.results.size() << " windows, extraction spikes " << total
              << "\n";
    if (!csv_path.empty())
    {
        write_file(csv_path, csv);
    }
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"event-driven spiking accelerator simulator"};
    app.require_subcommand(1);

    // stats
    std::string model_path;
    std::string json_path;
    auto *stats = app.add_subcommand("stats", "print model accounting (synapses, kernels, ...)");
    stats->add_option("model", model_path, "model or config file")->required();
    stats->add_option("--json", json_path, "write machine-readable stats");

    // shapes
    std::string shapes_model;
    auto *shapes = app.add_subcommand("shapes", "print per-layer and extraction shapes");
    shapes->add_option("model", shapes_model, "model or config file")->required();

    // quantize
    std::string q_in;
    std::string q_out;
    std::vector<int> q_fmt;
    auto *quant = app.add_subcommand("quantize", "post-training quantization to fixed point");
    quant->add_option("input", q_in, "float model file")->required();
    quant->add_option("output", q_out, "quantized model file")->required();
    quant->add_option("--format", q_fmt, "override all formats: <int_bits> <frac_bits>")
            ->expected(2);

    // fuse
    std::string f_in;
    std::string f_out;
    auto *fuse = app.add_subcommand("fuse", "fold batchnorm layers into convolution weights");
    fuse->add_option("input", f_in, "model file with batchnorm")->required();
    fuse->add_option("output", f_out, "fused model file")->required();

    // gen
    std::string g_in;
    std::string g_out;
    uint64_t g_seed = 1;
    double g_wscale = 0.5;
    double g_bscale = 0.1;
    bool g_bn = false;
    auto *gen = app.add_subcommand("gen", "fill a model with seeded random weights (demo helper)");
    gen->add_option("input", g_in, "model or config file")->required();
    gen->add_option("output", g_out, "output model file")->required();
    gen->add_option("--seed", g_seed, "RNG seed");
    gen->add_option("--weight-scale", g_wscale, "uniform weight range");
    gen->add_option("--bias-scale", g_bscale, "uniform bias range");
    gen->add_flag("--bn", g_bn, "attach random batchnorm parameters to conv layers");

    // ingest
    std::string i_events;
    std::string i_format = "csv";
    int i_width = 304;
    int i_height = 240;
    uint64_t i_window = 50000;
    std::string i_mode = "binary";
    std::string i_csv;
    auto *ingest = app.add_subcommand("ingest", "parse events, window and accumulate frames");
    ingest->add_option("events", i_events, "event file")->required();
    ingest->add_option("--format", i_format, "csv|bin");
    ingest->add_option("--width", i_width, "sensor width");
    ingest->add_option("--height", i_height, "sensor height");
    ingest->add_option("--window-us", i_window, "window duration in microseconds");
    ingest->add_option("--mode", i_mode, "binary|sum");
    ingest->add_option("--csv", i_csv, "write per-window CSV");

    // run / perf
    std::string r_model;
    std::string r_events;
    RunFlags r_flags;
    auto *run = app.add_subcommand("run", "run inference over an event stream");
    run->add_option("model", r_model, "model file")->required();
    run->add_option("events", r_events, "event file")->required();
    run->add_option("--engine", r_flags.engine, "dense|event");
    run->add_option("--arith", r_flags.arith, "real|fixed (default: model arithmetic)");
    run->add_option("--mode", r_flags.mode, "binary|sum frame accumulation");
    run->add_option("--format", r_flags.format, "event file format csv|bin");
    run->add_option("--window-us", r_flags.window_us, "window duration in microseconds");
    run->add_option("--width", r_flags.width, "sensor width (default: model)");
    run->add_option("--height", r_flags.height, "sensor height (default: model)");
    run->add_flag("--perf", r_flags.perf, "add latency and energy reports (event engine)");
    run->add_flag("--compare-arith", r_flags.compare_arith,
            "also run the other arithmetic and report the spike-count delta");
    run->add_option("--hw", r_flags.hw_path, "hardware config JSON");
    run->add_option("--power", r_flags.power_w, "dynamic power in watts");
    run->add_option("--json", r_flags.json_path, "write network summary JSON");
    run->add_option("--csv", r_flags.csv_path, "write per-window (or latency) CSV");

    std::string p_model;
    std::string p_events;
    RunFlags p_flags;
    auto *perf = app.add_subcommand("perf", "event-driven run with latency/energy model");
    perf->add_option("model", p_model, "model file")->required();
    perf->add_option("events", p_events, "event file")->required();
    perf->add_option("--mode", p_flags.mode, "binary frame accumulation");
    perf->add_option("--format", p_flags.format, "event file format csv|bin");
    perf->add_option("--window-us", p_flags.window_us, "window duration in microseconds");
    perf->add_option("--width", p_flags.width, "sensor width (default: model)");
    perf->add_option("--height", p_flags.height, "sensor height (default: model)");
    perf->add_option("--hw", p_flags.hw_path, "hardware config JSON");
    perf->add_option("--power", p_flags.power_w, "dynamic power in watts");
    perf->add_option("--calibrate-target-ms", p_flags.calibrate_target_ms,
            "fit cycles_per_update to an end-to-end latency target");
    perf->add_option("--json", p_flags.json_path, "write network summary JSON");
    perf->add_option("--csv", p_flags.csv_path, "write per-layer latency CSV");

    // compare
    std::string c_a;
    std::string c_b;
    std::string c_csv;
    auto *compare = app.add_subcommand("compare", "scaling ratio table of two run summaries");
    compare->add_option("a", c_a, "first summary JSON (denominator)")->required();
    compare->add_option("b", c_b, "second summary JSON (numerator)")->required();
    compare->add_option("--csv", c_csv, "write CSV");

    // serve / stream
    std::string s_model;
    uint16_t s_port = 7450;
    bool s_once = false;
    std::string s_hw;
    auto *serve = app.add_subcommand("serve", "run the streaming inference server");
    serve->add_option("model", s_model, "model file")->required();
    serve->add_option("--port", s_port, "TCP port (0 = ephemeral)");
    serve->add_flag("--once", s_once, "handle one connection, then exit");
    serve->add_option("--hw", s_hw, "hardware config JSON for latency estimates");

    std::string t_events;
    std::string t_host = "127.0.0.1";
    uint16_t t_port = 7450;
    std::string t_format = "csv";
    int t_width = 0;
    int t_height = 0;
    uint64_t t_window = 50000;
    bool t_maps = false;
    std::string t_csv;
    auto *stream = app.add_subcommand("stream", "stream event windows to a server");
    stream->add_option("events", t_events, "event file")->required();
    stream->add_option("--host", t_host, "server host");
    stream->add_option("--port", t_port, "server port");
    stream->add_option("--format", t_format, "event file format csv|bin");
    stream->add_option("--width", t_width, "sensor width")->required();
    stream->add_option("--height", t_height, "sensor height")->required();
    stream->add_option("--window-us", t_window, "window duration in microseconds");
    stream->add_flag("--maps", t_maps, "request packed feature maps");
    stream->add_option("--csv", t_csv, "write per-window CSV");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try
    {
        if (stats->parsed())
        {
            return cmd_stats(model_path, json_path);
        }
        if (shapes->parsed())
        {
            return cmd_shapes(shapes_model);
        }
        if (quant->parsed())
        {
            return cmd_quantize(q_in, q_out, q_fmt);
        }
        if (fuse->parsed())
        {
            return cmd_fuse(f_in, f_out);
        }
        if (gen->parsed())
        {
            return cmd_gen(g_in, g_out, g_seed, g_wscale, g_bscale, g_bn);
        }
        if (ingest->parsed())
        {
            return cmd_ingest(i_events, i_format, i_width, i_height, i_window, i_mode, i_csv);
        }
        if (run->parsed())
        {
            return cmd_run(r_model, r_events, r_flags);
        }
        if (perf->parsed())
        {
            p_flags.perf = true;
            p_flags.engine = "event";
            p_flags.arith = "fixed";
            return cmd_run(p_model, p_events, p_flags);
        }
        if (compare->parsed())
        {
            return cmd_compare(c_a, c_b, c_csv);
        }
        if (serve->parsed())
        {
            return cmd_serve(s_model, s_port, s_once, s_hw);
        }
        if (stream->parsed())
        {
            return cmd_stream(t_events, t_host, t_port, t_format, t_width, t_height, t_window,
                    t_maps, t_csv);
        }
    }
    catch (const UsageError &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const ParseError &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

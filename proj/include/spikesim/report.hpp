#pragma once

// Report formatting: aligned text tables, CSV rows and the JSON network
// summary the `compare` subcommand consumes.

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikesim/engine.hpp"
#include "spikesim/model.hpp"
#include "spikesim/perf.hpp"

namespace spikesim {

/// Left-aligned text table; first row is the header.
inline std::string format_table(const std::vector<std::vector<std::string>> &rows)
{
    if (rows.empty())
    {
        return "";
    }
    std::vector<size_t> widths;
    for (const auto &row : rows)
    {
        if (widths.size() < row.size())
        {
            widths.resize(row.size(), 0);
        }
        for (size_t i = 0; i < row.size(); ++i)
        {
            widths[i] = std::max(widths[i], row[i].size());
        }
    }
    std::string out;
    for (const auto &row : rows)
    {
        std::ostringstream line;
        for (size_t i = 0; i < row.size(); ++i)
        {
            line << std::left << std::setw(static_cast<int>(widths[i]) + 2) << row[i];
        }
        std::string text = line.str();
        text.erase(text.find_last_not_of(' ') + 1);
        out += text;
        out += '\n';
    }
    return out;
}

inline std::string csv_join(const std::vector<std::string> &cells)
{
    std::string out;
    for (size_t i = 0; i < cells.size(); ++i)
    {
        if (i)
        {
            out += ',';
        }
        const bool quote = cells[i].find_first_of(",\"\n") != std::string::npos;
        if (quote)
        {
            out += '"';
            for (const char c : cells[i])
            {
                if (c == '"')
                {
                    out += '"';
                }
                out += c;
            }
            out += '"';
        }
        else
        {
            out += cells[i];
        }
    }
    out += '\n';
    return out;
}

inline std::string format_real(double v, int precision = 6)
{
    std::ostringstream out;
    out << std::setprecision(precision) << v;
    return out.str();
}

inline std::string shape_to_string(const std::vector<int> &shape)
{
    std::string out;
    for (size_t i = 0; i < shape.size(); ++i)
    {
        if (i)
        {
            out += 'x';
        }
        out += std::to_string(shape[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Module reports

inline std::string stats_report(const NetworkSpec &spec, const ModelStats &stats)
{
    std::ostringstream out;
    out << "model " << spec.name << ": synapses " << stats.synapses << ", kernels "
        << stats.kernels << ", inputs " << stats.inputs << ", neurons " << stats.neurons
        << "\n";
    const auto shapes = infer_shapes(spec);
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"layer", "kind", "shape", "synapses", "kernels", "neurons", "extract"});
    for (size_t l = 0; l < spec.layers.size(); ++l)
    {
        rows.push_back({std::to_string(l), layer_kind_name(spec.layers[l].kind),
                shape_to_string(shapes[l]), std::to_string(stats.layer_synapses[l]),
                std::to_string(stats.layer_kernels[l]), std::to_string(stats.layer_neurons[l]),
                spec.layers[l].extract ? "yes" : ""});
    }
    out << format_table(rows);
    return out.str();
}

inline std::string run_report(const NetworkSpec &spec, const ModelStats &stats,
        const RunResult &result)
{
    std::ostringstream out;
    const double mean_spikes = result.timesteps > 0
            ? static_cast<double>(result.total_spikes) / result.timesteps
            : 0.0;
    out << "windows " << result.timesteps << ", total spikes " << result.total_spikes
        << ", spikes/output " << format_real(mean_spikes, 8);
    if (result.timesteps > 0)
    {
        const double act = activity(static_cast<long long>(mean_spikes * spec.timesteps),
                stats.neurons, spec.timesteps);
        out << ", activity " << format_real(act * 100.0, 4) << "%";
    }
    long long sat = 0;
    for (const long long s : result.layer_saturations)
    {
        sat += s;
    }
    out << ", saturations " << sat << "\n";

    std::vector<std::vector<std::string>> rows;
    rows.push_back({"layer", "neurons", "spikes", "activity%", "saturations"});
    for (size_t l = 0; l < result.layer_spikes.size(); ++l)
    {
        const double layer_act = result.timesteps > 0
                ? 100.0 * static_cast<double>(result.layer_spikes[l]) /
                        (static_cast<double>(result.layer_neurons[l]) * result.timesteps)
                : 0.0;
        rows.push_back({std::to_string(l), std::to_string(result.layer_neurons[l]),
                std::to_string(result.layer_spikes[l]), format_real(layer_act, 4),
                std::to_string(result.layer_saturations[l])});
    }
    out << format_table(rows);
    return out.str();
}

/// Per-window CSV (the per-clip activity series of the run).
inline std::string per_window_csv(const RunResult &result, long long neurons, int timesteps)
{
    std::string out = csv_join({"window", "spikes", "activity_percent"});
    for (size_t t = 0; t < result.spikes_per_timestep.size(); ++t)
    {
        long long spikes = 0;
        for (const long long s : result.spikes_per_timestep[t])
        {
            spikes += s;
        }
        out += csv_join({std::to_string(t), std::to_string(spikes),
                format_real(100.0 * activity(spikes, neurons, timesteps), 6)});
    }
    return out;
}

inline std::string latency_report_text(const LatencyReport &r)
{
    std::ostringstream out;
    out << "end-to-end latency " << format_real(r.end_to_end_s * 1e3, 6) << " ms ("
        << r.timesteps << " windows, " << format_real(r.per_output_s() * 1e3, 6)
        << " ms/output), bottleneck layer " << r.bottleneck_layer << "\n";
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"layer", "npus", "in_spikes", "updates", "busy_ms", "wait_ms"});
    for (size_t l = 0; l < r.layer_busy_s.size(); ++l)
    {
        rows.push_back({std::to_string(l), std::to_string(r.npu_per_layer[l]),
                std::to_string(r.layer_in_spikes[l]), std::to_string(r.layer_updates[l]),
                format_real(r.layer_busy_s[l] * 1e3, 6), format_real(r.layer_wait_s[l] * 1e3, 6)});
    }
    out << format_table(rows);
    return out.str();
}

inline std::string latency_report_csv(const LatencyReport &r)
{
    std::string out = csv_join({"layer", "npus", "in_spikes", "updates", "busy_s", "wait_s"});
    for (size_t l = 0; l < r.layer_busy_s.size(); ++l)
    {
        out += csv_join({std::to_string(l), std::to_string(r.npu_per_layer[l]),
                std::to_string(r.layer_in_spikes[l]), std::to_string(r.layer_updates[l]),
                format_real(r.layer_busy_s[l], 9), format_real(r.layer_wait_s[l], 9)});
    }
    return out;
}

inline std::string energy_report_text(const EnergyReport &r)
{
    std::ostringstream out;
    out << "energy/output " << format_real(r.energy_per_output_j * 1e3, 6) << " mJ, "
        << "energy/spike " << format_real(r.energy_per_spike_j * 1e6, 6) << " uJ, "
        << "energy/synapse " << format_real(r.energy_per_synapse_j * 1e9, 6) << " nJ, "
        << "energy_norm " << format_real(r.energy_norm_j * 1e9, 6) << " nJ, "
        << "kernel_index " << format_real(r.kernel_computation_index, 9) << ", "
        << "updates " << r.total_updates << "\n";
    return out.str();
}

inline std::string ratio_table_text(const std::vector<RatioRow> &rows, const std::string &a_name,
        const std::string &b_name)
{
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"metric", "ratio", a_name, b_name});
    for (const RatioRow &r : rows)
    {
        cells.push_back({r.label, format_real(r.ratio, 6), format_real(r.a, 9),
                format_real(r.b, 9)});
    }
    return format_table(cells);
}

inline std::string ratio_table_csv(const std::vector<RatioRow> &rows)
{
    std::string out = csv_join({"metric", "ratio", "a", "b"});
    for (const RatioRow &r : rows)
    {
        out += csv_join({r.label, format_real(r.ratio, 9), format_real(r.a, 12),
                format_real(r.b, 12)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON summary (machine-readable side of run/perf, input of compare)

inline nlohmann::json summary_to_json(const NetworkSummary &s)
{
    return nlohmann::json{{"name", s.name}, {"inputs", s.inputs}, {"timesteps", s.timesteps},
            {"activity", s.activity}, {"synapses", s.synapses},
            {"total_spikes", s.total_spikes}, {"kernels", s.kernels},
            {"latency_s", s.latency_s}, {"power_w", s.power_w}, {"energy_j", s.energy_j},
            {"energy_spike_j", s.energy_spike_j}, {"energy_norm_j", s.energy_norm_j}};
}

inline NetworkSummary summary_from_json(const nlohmann::json &j)
{
    NetworkSummary s;
    s.name = j.value("name", "net");
    s.inputs = j.value("inputs", 0LL);
    s.timesteps = j.value("timesteps", 0);
    s.activity = j.value("activity", 0.0);
    s.synapses = j.value("synapses", 0LL);
    s.total_spikes = j.value("total_spikes", 0LL);
    s.kernels = j.value("kernels", 0LL);
    s.latency_s = j.value("latency_s", 0.0);
    s.power_w = j.value("power_w", 0.0);
    s.energy_j = j.value("energy_j", 0.0);
    s.energy_spike_j = j.value("energy_spike_j", 0.0);
    s.energy_norm_j = j.value("energy_norm_j", 0.0);
    return s;
}

inline HardwareConfig hardware_from_json(const nlohmann::json &j)
{
    HardwareConfig hw;
    hw.clock_hz = j.value("clock_hz", hw.clock_hz);
    hw.cycles_per_update = j.value("cycles_per_update", hw.cycles_per_update);
    hw.cycles_per_spike_overhead =
            j.value("cycles_per_spike_overhead", hw.cycles_per_spike_overhead);
    hw.cycles_per_fire = j.value("cycles_per_fire", hw.cycles_per_fire);
    hw.readout_cycles_per_spike =
            j.value("readout_cycles_per_spike", hw.readout_cycles_per_spike);
    hw.dynamic_power_w = j.value("dynamic_power_w", hw.dynamic_power_w);
    hw.frame_interval_s = j.value("frame_interval_s", hw.frame_interval_s);
    if (j.contains("npu_per_layer"))
    {
        hw.npu_per_layer = j.at("npu_per_layer").get<std::vector<int>>();
    }
    hw.validate();
    return hw;
}

} // namespace spikesim

#pragma once

// Discrete-event latency simulation of the per-layer NPU pipeline, plus the
// energy-metric calculus derived from it. Cycle costs are parameters, not
// claims: serving one spike at a stage costs
//   (membrane_updates * cycles_per_update + cycles_per_spike_overhead) / npu
// with the work split evenly across that layer's NPUs, and each timestep
// barrier costs neurons * cycles_per_fire / npu. Stages run concurrently:
// a stage may start timestep t once its own previous timestep is done and
// the upstream stage has finished timestep t.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikesim/engine.hpp"
#include "spikesim/model.hpp"

namespace spikesim {

struct HardwareConfig {
    double clock_hz = 100e6;
    double cycles_per_update = 1.0;
    double cycles_per_spike_overhead = 0.0;
    double cycles_per_fire = 0.0;
    double readout_cycles_per_spike = 0.0; // feature-map extraction to the host
    std::vector<int> npu_per_layer;        // empty: use the model's per-layer counts
    double dynamic_power_w = 0.7;
    double frame_interval_s = 0.0; // input frame arrival spacing (0: backlog)

    void validate() const
    {
        if (clock_hz <= 0 || cycles_per_update < 0 || cycles_per_spike_overhead < 0 ||
                cycles_per_fire < 0 || readout_cycles_per_spike < 0 || dynamic_power_w <= 0 ||
                frame_interval_s < 0)
        {
            throw std::invalid_argument("hardware config fields must be positive");
        }
        for (const int n : npu_per_layer)
        {
            if (n < 1)
            {
                throw std::invalid_argument("npu_per_layer entries must be >= 1");
            }
        }
    }
};

struct LatencyReport {
    std::vector<double> layer_busy_s;
    std::vector<double> layer_wait_s;
    std::vector<long long> layer_updates;
    std::vector<long long> layer_in_spikes;
    std::vector<int> npu_per_layer;
    double end_to_end_s = 0.0;
    int bottleneck_layer = 0;
    int timesteps = 0;

    double per_output_s() const
    {
        return timesteps > 0 ? end_to_end_s / timesteps : 0.0;
    }
};

struct EnergyReport {
    double energy_per_output_j = 0.0;
    double energy_per_spike_j = 0.0;
    double energy_per_synapse_j = 0.0;
    double energy_norm_j = 0.0; // per synapse per timestep
    double kernel_computation_index = 0.0; // total spikes x total kernels
    long long total_updates = 0; // supplementary: sum of per-spike overlaps
};

inline double activity(long long total_spikes, long long neurons, int timesteps)
{
    if (neurons <= 0 || timesteps <= 0)
    {
        throw std::invalid_argument("activity: neurons and timesteps must be positive");
    }
    return static_cast<double>(total_spikes) /
            (static_cast<double>(neurons) * static_cast<double>(timesteps));
}

inline std::vector<int> resolve_npu_counts(const NetworkSpec &spec, const HardwareConfig &hw)
{
    if (!hw.npu_per_layer.empty())
    {
        if (hw.npu_per_layer.size() != spec.layers.size())
        {
            throw std::invalid_argument("npu_per_layer length (" +
                    std::to_string(hw.npu_per_layer.size()) + ") does not match layer count (" +
                    std::to_string(spec.layers.size()) + ")");
        }
        return hw.npu_per_layer;
    }
    std::vector<int> counts;
    counts.reserve(spec.layers.size());
    for (const LayerSpec &l : spec.layers)
    {
        counts.push_back(std::max(1, l.npu_count));
    }
    return counts;
}

/// Pipeline simulation over the aggregate scatter-work record of a run.
/// Spikes of timestep t become available to stage l when stage l-1
/// finishes its timestep-t barrier (input spikes arrive with the frame);
/// each stage is a FIFO server. Reports per-layer busy/wait time, the
/// bottleneck stage and the completion time of the last output event.
inline LatencyReport simulate_latency(const TraceSummary &summary, const NetworkSpec &spec,
        const HardwareConfig &hw)
{
    hw.validate();
    const size_t layer_count = spec.layers.size();
    if (summary.layer_count != static_cast<int>(layer_count))
    {
        throw std::invalid_argument("trace layer count (" + std::to_string(summary.layer_count) +
                ") does not match the network (" + std::to_string(layer_count) + ")");
    }
    const ModelStats stats = model_stats(spec);
    const std::vector<int> npu = resolve_npu_counts(spec, hw);
    const int timesteps = summary.timesteps;

    auto cell = [](const std::vector<std::vector<long long>> &m, size_t l, int t) {
        return (l < m.size() && t < static_cast<int>(m[l].size())) ? m[l][t] : 0LL;
    };

    // Service cycles per (stage, timestep): scatter work from arriving
    // spikes plus readout of emitted spikes at extraction stages.
    std::vector<std::vector<double>> serve_cycles(
            layer_count, std::vector<double>(timesteps, 0.0));
    std::vector<long long> layer_updates(layer_count, 0);
    std::vector<long long> layer_in_spikes(layer_count, 0);
    for (size_t l = 0; l < layer_count; ++l)
    {
        for (int t = 0; t < timesteps; ++t)
        {
            const long long updates = cell(summary.in_updates, l, t);
            const long long spikes = cell(summary.in_spikes, l, t);
            serve_cycles[l][t] = updates * hw.cycles_per_update +
                    spikes * hw.cycles_per_spike_overhead;
            if (spec.layers[l].extract)
            {
                serve_cycles[l][t] += cell(summary.emitted, l, t) * hw.readout_cycles_per_spike;
            }
            layer_updates[l] += updates;
            layer_in_spikes[l] += spikes;
        }
    }

    LatencyReport report;
    report.layer_busy_s.assign(layer_count, 0.0);
    report.layer_wait_s.assign(layer_count, 0.0);
    report.layer_updates = layer_updates;
    report.layer_in_spikes = layer_in_spikes;
    report.npu_per_layer = npu;
    report.timesteps = timesteps;

    std::vector<double> stage_free(layer_count, 0.0);
    std::vector<double> upstream_done(timesteps, 0.0);
    for (int t = 0; t < timesteps; ++t)
    {
        upstream_done[t] = hw.frame_interval_s * t; // frame arrival times
    }
    for (size_t l = 0; l < layer_count; ++l)
    {
        const double barrier_cycles = stats.layer_neurons[l] * hw.cycles_per_fire;
        for (int t = 0; t < timesteps; ++t)
        {
            const double arrival = upstream_done[t];
            const double start = std::max(arrival, stage_free[l]);
            const double busy =
                    (serve_cycles[l][t] + barrier_cycles) / (npu[l] * hw.clock_hz);
            const double done = start + busy;
            report.layer_busy_s[l] += busy;
            report.layer_wait_s[l] += start - arrival;
            stage_free[l] = done;
            upstream_done[t] = done;
        }
    }
    report.end_to_end_s = timesteps > 0 ? upstream_done[timesteps - 1] : 0.0;

    int bottleneck = 0;
    for (size_t l = 1; l < layer_count; ++l)
    {
        if (report.layer_busy_s[l] > report.layer_busy_s[bottleneck])
        {
            bottleneck = static_cast<int>(l);
        }
    }
    report.bottleneck_layer = bottleneck;
    return report;
}

inline LatencyReport simulate_latency(const SpikeTrace &trace, const NetworkSpec &spec,
        const HardwareConfig &hw)
{
    return simulate_latency(summarize_trace(trace), spec, hw);
}

/// E = P x latency; the remaining fields are the per-spike / per-synapse /
/// per-timestep normalizations plus the aggregate kernel-computation index
/// (total spikes x total kernels).
inline EnergyReport energy_report(double latency_s, const HardwareConfig &hw,
        const ModelStats &stats, long long total_spikes, int timesteps,
        long long total_updates = 0)
{
    if (latency_s <= 0)
    {
        throw std::invalid_argument("energy_report: latency must be positive");
    }
    if (total_spikes <= 0 || stats.synapses <= 0 || timesteps <= 0)
    {
        throw std::invalid_argument("energy_report: zero denominator (spikes, synapses or timesteps)");
    }
    EnergyReport r;
    r.energy_per_output_j = hw.dynamic_power_w * latency_s;
    r.energy_per_spike_j = r.energy_per_output_j / static_cast<double>(total_spikes);
    r.energy_per_synapse_j = r.energy_per_output_j / static_cast<double>(stats.synapses);
    r.energy_norm_j = r.energy_per_synapse_j / static_cast<double>(timesteps);
    r.kernel_computation_index =
            static_cast<double>(total_spikes) * static_cast<double>(stats.kernels);
    r.total_updates = total_updates;
    return r;
}

/// One side of the scaling comparison between two deployed networks.
struct NetworkSummary {
    std::string name;
    long long inputs = 0;
    int timesteps = 0;
    double activity = 0.0;
    long long synapses = 0;
    long long total_spikes = 0;
    long long kernels = 0;
    double latency_s = 0.0;
    double power_w = 0.0;
    double energy_j = 0.0;
    double energy_spike_j = 0.0;
    double energy_norm_j = 0.0;
};

struct RatioRow {
    std::string label;
    double a = 0.0;
    double b = 0.0;
    double ratio = 0.0; // b / a
};

/// Ratio table between two networks (second over first), one row per
/// scaling metric.
inline std::vector<RatioRow> compare_networks(const NetworkSummary &a, const NetworkSummary &b)
{
    auto row = [](const std::string &label, double va, double vb) {
        return RatioRow{label, va, vb, va != 0.0 ? vb / va : 0.0};
    };
    std::vector<RatioRow> rows;
    rows.push_back(row("inputs", static_cast<double>(a.inputs), static_cast<double>(b.inputs)));
    rows.push_back(row("timesteps", a.timesteps, b.timesteps));
    rows.push_back(row("activity", a.activity, b.activity));
    rows.push_back(row("synapses", static_cast<double>(a.synapses), static_cast<double>(b.synapses)));
    rows.push_back(row("total_spikes", static_cast<double>(a.total_spikes),
            static_cast<double>(b.total_spikes)));
    rows.push_back(row("kernels", static_cast<double>(a.kernels), static_cast<double>(b.kernels)));
    rows.push_back(row("latency_s", a.latency_s, b.latency_s));
    rows.push_back(row("power_w", a.power_w, b.power_w));
    rows.push_back(row("energy_j", a.energy_j, b.energy_j));
    rows.push_back(row("energy_spike_j", a.energy_spike_j, b.energy_spike_j));
    rows.push_back(row("energy_norm_j", a.energy_norm_j, b.energy_norm_j));
    return rows;
}

/// Fit cycles_per_update so the simulated end-to-end latency of a recorded
/// run hits a target, holding the other cycle costs fixed. Latency is
/// monotone in the cost, so bisection converges; used to calibrate the toy
/// defaults against a published end-to-end number, never asserted.
inline double calibrate_cycles_per_update(const TraceSummary &summary, const NetworkSpec &spec,
        HardwareConfig hw, double target_latency_s)
{
    if (target_latency_s <= 0)
    {
        throw std::invalid_argument("calibration target must be positive");
    }
    auto latency_at = [&](double cpu) {
        hw.cycles_per_update = cpu;
        return simulate_latency(summary, spec, hw).end_to_end_s;
    };
    if (latency_at(0.0) >= target_latency_s)
    {
        return 0.0; // overheads alone exceed the target
    }
    double lo = 0.0;
    double hi = 1.0;
    while (latency_at(hi) < target_latency_s && hi < 1e12)
    {
        hi *= 2.0;
    }
    for (int it = 0; it < 200; ++it)
    {
        const double mid = 0.5 * (lo + hi);
        (latency_at(mid) < target_latency_s ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline double calibrate_cycles_per_update(const SpikeTrace &trace, const NetworkSpec &spec,
        const HardwareConfig &hw, double target_latency_s)
{
    return calibrate_cycles_per_update(summarize_trace(trace), spec, hw, target_latency_s);
}

} // namespace spikesim

#pragma once

// Two inference engines over one NetworkSpec:
//
//   DenseEngine  - timestep-synchronous golden reference; full convolution
//                  of every layer per timestep, in real or fixed arithmetic.
//   EventEngine  - event-driven NPU pipeline; per-spike scatter into
//                  per-neuron accumulators, fixed arithmetic only.
//
// Both apply the same two-phase timestep: accumulate synaptic charge, then
// a barrier that adds the bias once per neuron, applies the membrane step
// and emits spikes in raster (channel, y, x) order. Membrane state persists
// across timesteps; reset() zeroes it between clips. With exact integer
// accumulators the two engines are bit-identical by contract, which the
// test suite checks property-style.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spikesim/events.hpp"
#include "spikesim/model.hpp"
#include "spikesim/neuron.hpp"

namespace spikesim {

enum class EngineArithmetic { real, fixed };

struct SpikeEvent {
    int timestep = 0;
    int source_layer = -1; // -1 = network input
    SpikeCoord coord{};
    int updates = 0; // membrane updates caused in the receiving layer

    bool operator==(const SpikeEvent &) const = default;
};

/// Ordered log of every spike the event-driven engine processed, in
/// emission order, with the scatter work each one caused downstream.
struct SpikeTrace {
    int layer_count = 0;
    int timesteps = 0;
    std::vector<SpikeEvent> events;
    long long total_updates = 0;
};

/// Per-(stage, timestep) aggregate of a run's scatter work. Carries
/// everything the latency model needs at O(layers x timesteps) memory,
/// so long streams do not have to retain the per-spike log.
struct TraceSummary {
    int layer_count = 0;
    int timesteps = 0;
    // Indexed [layer][timestep]; "in" counts spikes served by that stage.
    std::vector<std::vector<long long>> in_spikes;
    std::vector<std::vector<long long>> in_updates;
    std::vector<std::vector<long long>> emitted;
    long long total_updates = 0;

    void ensure_timestep(int t)
    {
        for (auto *m : {&in_spikes, &in_updates, &emitted})
        {
            for (auto &row : *m)
            {
                if (static_cast<int>(row.size()) <= t)
                {
                    row.resize(t + 1, 0);
                }
            }
        }
        timesteps = std::max(timesteps, t + 1);
    }
};

/// Aggregate an event log into the summary the latency model consumes.
inline TraceSummary summarize_trace(const SpikeTrace &trace)
{
    TraceSummary s;
    s.layer_count = trace.layer_count;
    s.timesteps = trace.timesteps;
    s.in_spikes.assign(trace.layer_count, std::vector<long long>(trace.timesteps, 0));
    s.in_updates.assign(trace.layer_count, std::vector<long long>(trace.timesteps, 0));
    s.emitted.assign(trace.layer_count, std::vector<long long>(trace.timesteps, 0));
    for (const SpikeEvent &e : trace.events)
    {
        if (e.timestep < 0 || e.timestep >= trace.timesteps)
        {
            throw std::invalid_argument("trace event timestep out of range");
        }
        const int receiver = e.source_layer + 1;
        if (receiver < trace.layer_count)
        {
            s.in_spikes[receiver][e.timestep] += 1;
            s.in_updates[receiver][e.timestep] += e.updates;
            s.total_updates += e.updates;
        }
        if (e.source_layer >= 0)
        {
            s.emitted[e.source_layer][e.timestep] += 1;
        }
    }
    return s;
}

struct FeatureMap {
    int layer = 0;
    std::vector<int> shape;       // native rank
    std::vector<uint8_t> values;  // binary, (C,H,W) row-major

    bool operator==(const FeatureMap &) const = default;
};

struct StepOutput {
    std::vector<long long> layer_spikes;
    std::vector<FeatureMap> features; // extraction layers only
};

struct RunOptions {
    bool keep_features = true;
    bool record_trace = false;
};

struct RunResult {
    int timesteps = 0;
    long long total_spikes = 0;
    std::vector<long long> layer_spikes;
    std::vector<std::vector<long long>> spikes_per_timestep; // [t][layer]
    std::vector<long long> layer_neurons;
    std::vector<long long> layer_saturations;
    std::vector<int> extract_layers;
    std::vector<std::vector<FeatureMap>> features; // [t][extraction index]
    // Final membrane state, one entry per layer (only the active arithmetic
    // is filled). Exposed so engine equivalence is checkable end to end.
    std::vector<std::vector<int64_t>> final_potentials_raw;
    std::vector<std::vector<double>> final_potentials_real;
};

namespace detail {

/// Per-layer runtime view: every layer kind lowered to a (possibly
/// depthwise, possibly full-extent) 2-D convolution over (C,H,W).
struct LayerRt {
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, out_h = 0, out_w = 0;
    int kh = 1, kw = 1, sh = 1, sw = 1, ph = 0, pw = 0;
    bool depthwise = false;
    bool has_bias = false;
    bool extract = false;
    std::vector<int> native_shape;
    long long out_elems = 0;

    // fixed-point side
    const int64_t *wq = nullptr;
    const int64_t *bq = nullptr;
    int64_t pool_weight_raw = 0;
    FixedFormat wfmt{}, pfmt{};
    FixedNeuronParams neuron_q{};

    // real side
    const float *w = nullptr;
    const float *b = nullptr;
    double pool_weight = 0.0;
    NeuronParams neuron{};
};

inline std::vector<LayerRt> build_runtime(const NetworkSpec &spec, EngineArithmetic arith)
{
    if (spec.layers.empty())
    {
        throw std::invalid_argument("network has no layers");
    }
    if (spec.params.size() != spec.layers.size())
    {
        throw std::invalid_argument("network weights not materialized");
    }
    const auto shapes = infer_shapes(spec);

    std::vector<LayerRt> rt(spec.layers.size());
    int in_c = spec.input_shape[0];
    int in_h = spec.input_shape[1];
    int in_w = spec.input_shape.size() == 3 ? spec.input_shape[2] : 1;

    for (size_t l = 0; l < spec.layers.size(); ++l)
    {
        const LayerSpec &layer = spec.layers[l];
        const LayerParams &params = spec.params[l];
        LayerRt &r = rt[l];
        if (layer.batchnorm.has_value())
        {
            throw std::invalid_argument("layer " + std::to_string(l) +
                    " carries unfused batchnorm; fuse first");
        }
        r.in_c = in_c;
        r.in_h = in_h;
        r.in_w = in_w;
        r.native_shape = shapes[l];
        r.out_c = shapes[l][0];
        r.out_h = shapes[l].size() > 1 ? shapes[l][1] : 1;
        r.out_w = shapes[l].size() > 2 ? shapes[l][2] : 1;
        r.out_elems = static_cast<long long>(r.out_c) * r.out_h * r.out_w;
        r.extract = layer.extract;
        r.has_bias = layer.has_bias && layer.kind != LayerKind::avgpool;

        switch (layer.kind)
        {
        case LayerKind::conv2d:
        case LayerKind::conv1d:
            r.kh = layer.kernel_h;
            r.kw = layer.kernel_w;
            r.sh = layer.stride_h;
            r.sw = layer.stride_w;
            r.ph = layer.pad_h;
            r.pw = layer.pad_w;
            break;
        case LayerKind::fully_connected:
            // Full-extent kernel: weight column order is the flattened
            // (C,H,W) input, which matches the conv weight layout exactly.
            r.kh = in_h;
            r.kw = in_w;
            r.sh = r.sw = 1;
            r.ph = r.pw = 0;
            break;
        case LayerKind::avgpool:
            r.kh = layer.kernel_h;
            r.kw = layer.kernel_w;
            r.sh = layer.stride_h;
            r.sw = layer.stride_w;
            r.ph = layer.pad_h;
            r.pw = layer.pad_w;
            r.depthwise = true;
            break;
        }

        r.wfmt = spec.weights_format(l);
        r.pfmt = spec.potentials_format(l);
        if (arith == EngineArithmetic::fixed)
        {
            if (r.depthwise)
            {
                r.pool_weight_raw =
                        quantize_value(1.0 / (static_cast<double>(r.kh) * r.kw), r.wfmt).raw;
            }
            else
            {
                if (!params.is_fixed || params.qweights.empty())
                {
                    throw std::invalid_argument("layer " + std::to_string(l) +
                            " has no fixed-point weights; quantize the model first");
                }
                r.wq = params.qweights.data.data();
                r.wfmt = params.qweights.format;
                if (r.has_bias)
                {
                    if (params.qbias.empty())
                    {
                        throw std::invalid_argument("layer " + std::to_string(l) +
                                " is missing its fixed-point bias");
                    }
                    r.bq = params.qbias.data.data();
                }
            }
            r.neuron_q = quantize_neuron(layer.neuron, r.pfmt);
            const FixedFormat tfmt = spec.thresholds_format(l);
            if (!(tfmt == r.pfmt))
            {
                // Thresholds are quantized in their own format, then
                // re-expressed on the potential grid for the compare.
                const FixedValue vth = quantize_value(layer.neuron.v_threshold, tfmt);
                r.neuron_q.v_threshold_raw = rescale(vth, r.pfmt).raw;
            }
        }
        else
        {
            if (r.depthwise)
            {
                r.pool_weight = 1.0 / (static_cast<double>(r.kh) * r.kw);
            }
            else
            {
                if (params.is_fixed || params.weights.empty())
                {
                    throw std::invalid_argument("layer " + std::to_string(l) +
                            " has no real weights; dequantize or retrain");
                }
                r.w = params.weights.data.data();
                if (r.has_bias)
                {
                    if (params.bias.empty())
                    {
                        throw std::invalid_argument("layer " + std::to_string(l) +
                                " is missing its bias");
                    }
                    r.b = params.bias.data.data();
                }
            }
            r.neuron = layer.neuron;
            r.neuron.validate();
        }

        in_c = r.out_c;
        in_h = r.out_h;
        in_w = r.out_w;
    }
    return rt;
}

/// Dense gather convolution: acc[o] = sum over taps of w * in.
/// InT is uint32_t for the input frame and uint8_t for spike maps;
/// AccT/WT select the arithmetic.
template <typename InT, typename AccT, typename WT>
inline void gather_conv(const LayerRt &r, const InT *in, const WT *w, AccT pool_weight,
        AccT *acc)
{
    const long long in_plane = static_cast<long long>(r.in_h) * r.in_w;
    const long long out_plane = static_cast<long long>(r.out_h) * r.out_w;
    for (int oc = 0; oc < r.out_c; ++oc)
    {
        AccT *acc_plane = acc + oc * out_plane;
        const int ic_begin = r.depthwise ? oc : 0;
        const int ic_end = r.depthwise ? oc + 1 : r.in_c;
        for (int oy = 0; oy < r.out_h; ++oy)
        {
            for (int ox = 0; ox < r.out_w; ++ox)
            {
                AccT sum = 0;
                for (int ic = ic_begin; ic < ic_end; ++ic)
                {
                    const InT *in_plane_p = in + ic * in_plane;
                    for (int ky = 0; ky < r.kh; ++ky)
                    {
                        const int iy = oy * r.sh - r.ph + ky;
                        if (iy < 0 || iy >= r.in_h)
                        {
                            continue;
                        }
                        for (int kx = 0; kx < r.kw; ++kx)
                        {
                            const int ix = ox * r.sw - r.pw + kx;
                            if (ix < 0 || ix >= r.in_w)
                            {
                                continue;
                            }
                            const InT v = in_plane_p[iy * r.in_w + ix];
                            if (v == 0)
                            {
                                continue;
                            }
                            AccT weight;
                            if (r.depthwise)
                            {
                                weight = pool_weight;
                            }
                            else
                            {
                                weight = static_cast<AccT>(
                                        w[((static_cast<long long>(oc) * r.in_c + ic) * r.kh + ky) *
                                                        r.kw +
                                                kx]);
                            }
                            sum += weight * static_cast<AccT>(v);
                        }
                    }
                }
                acc_plane[oy * r.out_w + ox] += sum;
            }
        }
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Dense engine

class DenseEngine {
public:
    DenseEngine(const NetworkSpec &spec, EngineArithmetic arith, RunOptions opts = {})
            : spec_(spec)
            , arith_(arith)
            , opts_(opts)
            , rt_(detail::build_runtime(spec_, arith))
    {
        for (const auto &r : rt_)
        {
            if (arith_ == EngineArithmetic::fixed)
            {
                v_raw_.emplace_back(r.out_elems, 0);
            }
            else
            {
                v_real_.emplace_back(r.out_elems, 0.0);
            }
        }
        init_result();
    }

    const NetworkSpec &spec() const { return spec_; }
    EngineArithmetic arithmetic() const { return arith_; }
    int layer_count() const { return static_cast<int>(rt_.size()); }
    int timestep() const { return t_; }
    const SpikeTrace &trace() const { return trace_; }
    const RunResult &result() const { return result_; }

    /// Zero all membrane state (between clips); counters keep accumulating.
    void reset()
    {
        for (auto &v : v_raw_)
        {
            std::fill(v.begin(), v.end(), int64_t{0});
        }
        for (auto &v : v_real_)
        {
            std::fill(v.begin(), v.end(), 0.0);
        }
    }

    /// Run one timestep on an input frame (binary or counts).
    StepOutput step(const EventFrame &frame)
    {
        const detail::LayerRt &first = rt_.front();
        if (frame.channels != first.in_c || frame.height != first.in_h ||
                frame.width != first.in_w)
        {
            throw std::invalid_argument("frame geometry (" + std::to_string(frame.channels) +
                    "," + std::to_string(frame.height) + "," + std::to_string(frame.width) +
                    ") does not match network input (" + std::to_string(first.in_c) + "," +
                    std::to_string(first.in_h) + "," + std::to_string(first.in_w) + ")");
        }

        StepOutput out;
        out.layer_spikes.assign(rt_.size(), 0);

        if (opts_.record_trace)
        {
            trace_input_spikes(frame);
        }

        std::vector<uint8_t> spikes_in;
        for (size_t l = 0; l < rt_.size(); ++l)
        {
            const detail::LayerRt &r = rt_[l];
            std::vector<uint8_t> fired(r.out_elems, 0);
            long long count = 0;
            if (arith_ == EngineArithmetic::fixed)
            {
                std::vector<int64_t> acc(r.out_elems, 0);
                if (l == 0)
                {
                    detail::gather_conv<uint32_t, int64_t, int64_t>(
                            r, frame.values.data(), r.wq, r.pool_weight_raw, acc.data());
                }
                else
                {
                    detail::gather_conv<uint8_t, int64_t, int64_t>(
                            r, spikes_in.data(), r.wq, r.pool_weight_raw, acc.data());
                }
                count = fire_fixed(l, acc, fired);
            }
            else
            {
                std::vector<double> acc(r.out_elems, 0.0);
                if (l == 0)
                {
                    detail::gather_conv<uint32_t, double, float>(
                            r, frame.values.data(), r.w, r.pool_weight, acc.data());
                }
                else
                {
                    detail::gather_conv<uint8_t, double, float>(
                            r, spikes_in.data(), r.w, r.pool_weight, acc.data());
                }
                count = fire_real(l, acc, fired);
            }

            out.layer_spikes[l] = count;
            if (opts_.record_trace)
            {
                trace_layer_spikes(static_cast<int>(l), rt_[l], fired);
            }
            if (r.extract)
            {
                out.features.push_back(make_feature(static_cast<int>(l), r, fired));
            }
            spikes_in = std::move(fired);
        }

        accumulate(out);
        ++t_;
        trace_.timesteps = t_;
        return out;
    }

    RunResult take_result()
    {
        finalize_result();
        RunResult r = std::move(result_);
        init_result();
        return r;
    }

private:
    void init_result()
    {
        result_ = RunResult{};
        result_.layer_spikes.assign(rt_.size(), 0);
        result_.layer_saturations.assign(rt_.size(), 0);
        for (size_t l = 0; l < rt_.size(); ++l)
        {
            result_.layer_neurons.push_back(rt_[l].out_elems);
            if (rt_[l].extract)
            {
                result_.extract_layers.push_back(static_cast<int>(l));
            }
        }
        trace_.layer_count = static_cast<int>(rt_.size());
        sat_.assign(rt_.size(), SatCounter{});
        t_ = 0;
    }

    void finalize_result()
    {
        result_.timesteps = t_;
        for (size_t l = 0; l < rt_.size(); ++l)
        {
            result_.layer_saturations[l] = sat_[l].events;
        }
        if (arith_ == EngineArithmetic::fixed)
        {
            result_.final_potentials_raw = v_raw_;
        }
        else
        {
            result_.final_potentials_real = v_real_;
        }
    }

    long long fire_fixed(size_t l, const std::vector<int64_t> &acc, std::vector<uint8_t> &fired)
    {
        const detail::LayerRt &r = rt_[l];
        const long long out_plane = static_cast<long long>(r.out_h) * r.out_w;
        const int shift_from = r.wfmt.fraction_bits;
        const int shift_to = r.pfmt.fraction_bits;
        long long count = 0;
        auto &v = v_raw_[l];
        for (long long o = 0; o < r.out_elems; ++o)
        {
            __int128 charge = acc[o];
            if (r.bq != nullptr)
            {
                charge += r.bq[o / out_plane];
            }
            const __int128 charge_p = rescale_raw(charge, shift_from, shift_to);
            const int64_t x_raw = saturate_raw(charge_p, r.pfmt, &sat_[l]);
            const FixedStepResult s = neuron_step_fixed(v[o], x_raw, r.neuron_q, &sat_[l]);
            v[o] = s.v_raw;
            fired[o] = s.fired ? 1 : 0;
            count += s.fired;
        }
        return count;
    }

    long long fire_real(size_t l, const std::vector<double> &acc, std::vector<uint8_t> &fired)
    {
        const detail::LayerRt &r = rt_[l];
        const long long out_plane = static_cast<long long>(r.out_h) * r.out_w;
        long long count = 0;
        auto &v = v_real_[l];
        for (long long o = 0; o < r.out_elems; ++o)
        {
            double charge = acc[o];
            if (r.b != nullptr)
            {
                charge += r.b[o / out_plane];
            }
            const StepResult s = neuron_step(v[o], charge, r.neuron);
            v[o] = s.v;
            fired[o] = s.fired ? 1 : 0;
            count += s.fired;
        }
        return count;
    }

    FeatureMap make_feature(int layer, const detail::LayerRt &r, const std::vector<uint8_t> &fired)
    {
        FeatureMap map;
        map.layer = layer;
        map.shape = r.native_shape;
        map.values = fired;
        return map;
    }

    void trace_input_spikes(const EventFrame &frame)
    {
        const detail::LayerRt &r = rt_.front();
        for (int c = 0; c < r.in_c; ++c)
        {
            for (int y = 0; y < r.in_h; ++y)
            {
                for (int x = 0; x < r.in_w; ++x)
                {
                    if (frame.at(c, y, x) != 0)
                    {
                        trace_.events.push_back(SpikeEvent{t_, -1, SpikeCoord{c, y, x}, 0});
                    }
                }
            }
        }
    }

    void trace_layer_spikes(int l, const detail::LayerRt &r, const std::vector<uint8_t> &fired)
    {
        for (long long o = 0; o < r.out_elems; ++o)
        {
            if (fired[o])
            {
                const int c = static_cast<int>(o / (static_cast<long long>(r.out_h) * r.out_w));
                const int rem = static_cast<int>(o % (static_cast<long long>(r.out_h) * r.out_w));
                trace_.events.push_back(
                        SpikeEvent{t_, l, SpikeCoord{c, rem / r.out_w, rem % r.out_w}, 0});
            }
        }
    }

    void accumulate(const StepOutput &out)
    {
        std::vector<long long> per_t(rt_.size(), 0);
        for (size_t l = 0; l < rt_.size(); ++l)
        {
            per_t[l] = out.layer_spikes[l];
            result_.layer_spikes[l] += out.layer_spikes[l];
            result_.total_spikes += out.layer_spikes[l];
        }
        result_.spikes_per_timestep.push_back(std::move(per_t));
        if (opts_.keep_features)
        {
            result_.features.push_back(out.features);
        }
    }

    NetworkSpec spec_;
    EngineArithmetic arith_;
    RunOptions opts_;
    std::vector<detail::LayerRt> rt_;
    std::vector<std::vector<int64_t>> v_raw_;
    std::vector<std::vector<double>> v_real_;
    std::vector<SatCounter> sat_;
    RunResult result_;
    SpikeTrace trace_;
    int t_ = 0;
};

// ---------------------------------------------------------------------------
// Event-driven engine

class EventEngine {
public:
    explicit EventEngine(const NetworkSpec &spec, RunOptions opts = {})
            : spec_(spec)
            , opts_(opts)
            , rt_(detail::build_runtime(spec_, EngineArithmetic::fixed))
    {
        for (const auto &r : rt_)
        {
            v_.emplace_back(r.out_elems, 0);
            acc_.emplace_back(r.out_elems, 0);
        }
        init_result();
    }

    const NetworkSpec &spec() const { return spec_; }
    int layer_count() const { return static_cast<int>(rt_.size()); }
    int timestep() const { return t_; }
    const SpikeTrace &trace() const { return trace_; }
    const TraceSummary &summary() const { return summary_; }
    const RunResult &result() const { return result_; }

    void reset()
    {
        for (auto &v : v_)
        {
            std::fill(v.begin(), v.end(), int64_t{0});
        }
        for (auto &a : acc_)
        {
            std::fill(a.begin(), a.end(), int64_t{0});
        }
    }

    /// Run one timestep on a sparse binary spike list. Optionally copies
    /// the per-timestep slice of the trace into `segment`.
    StepOutput step(const SpikeList &input, SpikeTrace *segment = nullptr)
    {
        validate_input(input);
        const size_t trace_begin = trace_.events.size();
        summary_.ensure_timestep(t_);

        StepOutput out;
        out.layer_spikes.assign(rt_.size(), 0);

        std::vector<SpikeCoord> current = input.entries;
        int source = -1;
        for (size_t l = 0; l < rt_.size(); ++l)
        {
            const detail::LayerRt &r = rt_[l];
            // Scatter phase: one membrane-update record per affected
            // neuron, spikes served sequentially in arrival order.
            for (const SpikeCoord &s : current)
            {
                const int updates = scatter(static_cast<int>(l), s);
                trace_.events.push_back(SpikeEvent{t_, source, s, updates});
                trace_.total_updates += updates;
                summary_.in_spikes[l][t_] += 1;
                summary_.in_updates[l][t_] += updates;
                summary_.total_updates += updates;
            }
            // Barrier phase: bias once per neuron, membrane step, emission
            // in raster order.
            std::vector<SpikeCoord> emitted;
            const long long count = barrier(static_cast<int>(l), emitted);
            out.layer_spikes[l] = count;
            summary_.emitted[l][t_] += count;
            if (r.extract)
            {
                out.features.push_back(make_feature(static_cast<int>(l), r, emitted));
            }
            current = std::move(emitted);
            source = static_cast<int>(l);
        }
        // Spikes leaving the last layer have no receiving stage.
        for (const SpikeCoord &s : current)
        {
            trace_.events.push_back(
                    SpikeEvent{t_, static_cast<int>(rt_.size()) - 1, s, 0});
        }

        accumulate(out);
        ++t_;
        trace_.timesteps = t_;
        if (segment != nullptr)
        {
            *segment = SpikeTrace{};
            segment->layer_count = trace_.layer_count;
            segment->timesteps = 1;
            segment->events.assign(trace_.events.begin() + trace_begin, trace_.events.end());
            for (SpikeEvent &e : segment->events)
            {
                segment->total_updates += e.updates;
                e.timestep = 0;
            }
        }
        if (!opts_.record_trace)
        {
            trace_.events.clear(); // keep totals, drop the log
        }
        return out;
    }

    RunResult take_result()
    {
        finalize_result();
        RunResult r = std::move(result_);
        init_result();
        return r;
    }

    SpikeTrace take_trace()
    {
        SpikeTrace t = std::move(trace_);
        trace_ = SpikeTrace{};
        trace_.layer_count = static_cast<int>(rt_.size());
        trace_.timesteps = t_;
        return t;
    }

    TraceSummary take_summary()
    {
        TraceSummary s = std::move(summary_);
        init_summary();
        return s;
    }

private:
    void init_result()
    {
        result_ = RunResult{};
        result_.layer_spikes.assign(rt_.size(), 0);
        result_.layer_saturations.assign(rt_.size(), 0);
        for (size_t l = 0; l < rt_.size(); ++l)
        {
            result_.layer_neurons.push_back(rt_[l].out_elems);
            if (rt_[l].extract)
            {
                result_.extract_layers.push_back(static_cast<int>(l));
            }
        }
        trace_.layer_count = static_cast<int>(rt_.size());
        init_summary();
        sat_.assign(rt_.size(), SatCounter{});
        t_ = 0;
    }

    void init_summary()
    {
        summary_ = TraceSummary{};
        summary_.layer_count = static_cast<int>(rt_.size());
        summary_.in_spikes.assign(rt_.size(), {});
        summary_.in_updates.assign(rt_.size(), {});
        summary_.emitted.assign(rt_.size(), {});
    }

    void finalize_result()
    {
        result_.timesteps = t_;
        for (size_t l = 0; l < rt_.size(); ++l)
        {
            result_.layer_saturations[l] = sat_[l].events;
        }
        result_.final_potentials_raw = v_;
    }

    void validate_input(const SpikeList &input) const
    {
        const detail::LayerRt &r = rt_.front();
        const SpikeCoord *prev = nullptr;
        for (const SpikeCoord &s : input.entries)
        {
            if (s.c < 0 || s.c >= r.in_c || s.y < 0 || s.y >= r.in_h || s.x < 0 || s.x >= r.in_w)
            {
                throw std::invalid_argument("input spike outside network input geometry");
            }
            if (prev != nullptr && !(*prev < s))
            {
                throw std::invalid_argument(
                        "non-binary spike input: entries must be sorted and unique");
            }
            prev = &s;
        }
    }

    /// Add the kernel-overlapping, bounds-clipped weight column of one
    /// incoming spike into layer l's accumulators. Returns the number of
    /// membrane updates performed.
    int scatter(int l, const SpikeCoord &s)
    {
        const detail::LayerRt &r = rt_[l];
        int64_t *acc = acc_[l].data();
        const long long out_plane = static_cast<long long>(r.out_h) * r.out_w;
        int updates = 0;
        for (int ky = 0; ky < r.kh; ++ky)
        {
            const int ny = s.y + r.ph - ky;
            if (ny < 0 || ny % r.sh != 0)
            {
                continue;
            }
            const int oy = ny / r.sh;
            if (oy >= r.out_h)
            {
                continue;
            }
            for (int kx = 0; kx < r.kw; ++kx)
            {
                const int nx = s.x + r.pw - kx;
                if (nx < 0 || nx % r.sw != 0)
                {
                    continue;
                }
                const int ox = nx / r.sw;
                if (ox >= r.out_w)
                {
                    continue;
                }
                if (r.depthwise)
                {
                    acc[s.c * out_plane + oy * r.out_w + ox] += r.pool_weight_raw;
                    ++updates;
                }
                else
                {
                    const long long tap =
                            ((static_cast<long long>(s.c)) * r.kh + ky) * r.kw + kx;
                    for (int oc = 0; oc < r.out_c; ++oc)
                    {
                        acc[oc * out_plane + oy * r.out_w + ox] +=
                                r.wq[static_cast<long long>(oc) * r.in_c * r.kh * r.kw + tap];
                        ++updates;
                    }
                }
            }
        }
        return updates;
    }

    long long barrier(int l, std::vector<SpikeCoord> &emitted)
    {
        const detail::LayerRt &r = rt_[l];
        auto &acc = acc_[l];
        auto &v = v_[l];
        const long long out_plane = static_cast<long long>(r.out_h) * r.out_w;
        const int shift_from = r.wfmt.fraction_bits;
        const int shift_to = r.pfmt.fraction_bits;
        long long count = 0;
        for (long long o = 0; o < r.out_elems; ++o)
        {
            __int128 charge = acc[o];
            if (r.bq != nullptr)
            {
                charge += r.bq[o / out_plane];
            }
            const __int128 charge_p = rescale_raw(charge, shift_from, shift_to);
            const int64_t x_raw = saturate_raw(charge_p, r.pfmt, &sat_[l]);
            const FixedStepResult s = neuron_step_fixed(v[o], x_raw, r.neuron_q, &sat_[l]);
            v[o] = s.v_raw;
            if (s.fired)
            {
                const int c = static_cast<int>(o / out_plane);
                const int rem = static_cast<int>(o % out_plane);
                emitted.push_back(SpikeCoord{c, rem / r.out_w, rem % r.out_w});
                ++count;
            }
            acc[o] = 0;
        }
        return count;
    }

    FeatureMap make_feature(int layer, const detail::LayerRt &r,
            const std::vector<SpikeCoord> &emitted)
    {
        FeatureMap map;
        map.layer = layer;
        map.shape = r.native_shape;
        map.values.assign(r.out_elems, 0);
        for (const SpikeCoord &s : emitted)
        {
            map.values[(static_cast<long long>(s.c) * r.out_h + s.y) * r.out_w + s.x] = 1;
        }
        return map;
    }

    void accumulate(const StepOutput &out)
    {
        std::vector<long long> per_t(rt_.size(), 0);
        for (size_t l = 0; l < rt_.size(); ++l)
        {
            per_t[l] = out.layer_spikes[l];
            result_.layer_spikes[l] += out.layer_spikes[l];
            result_.total_spikes += out.layer_spikes[l];
        }
        result_.spikes_per_timestep.push_back(std::move(per_t));
        if (opts_.keep_features)
        {
            result_.features.push_back(out.features);
        }
    }

    NetworkSpec spec_;
    RunOptions opts_;
    std::vector<detail::LayerRt> rt_;
    std::vector<std::vector<int64_t>> v_;
    std::vector<std::vector<int64_t>> acc_;
    std::vector<SatCounter> sat_;
    RunResult result_;
    SpikeTrace trace_;
    TraceSummary summary_;
    int t_ = 0;
};

// ---------------------------------------------------------------------------
// Whole-run helpers

inline RunResult run_dense(const NetworkSpec &spec, const std::vector<EventFrame> &frames,
        EngineArithmetic arith, RunOptions opts = {})
{
    DenseEngine engine(spec, arith, opts);
    for (const EventFrame &frame : frames)
    {
        engine.step(frame);
    }
    return engine.take_result();
}

inline std::pair<RunResult, SpikeTrace> run_event_driven(const NetworkSpec &spec,
        const std::vector<SpikeList> &spikelists, RunOptions opts = {})
{
    opts.record_trace = true;
    EventEngine engine(spec, opts);
    for (const SpikeList &list : spikelists)
    {
        engine.step(list);
    }
    RunResult result = engine.take_result();
    SpikeTrace trace = engine.take_trace();
    return {std::move(result), std::move(trace)};
}

/// Dequantized feature maps (0.0 / 1.0 per element) of one timestep.
inline std::vector<std::vector<double>> extract_features(const RunResult &result, int timestep)
{
    if (timestep < 0 || timestep >= static_cast<int>(result.features.size()))
    {
        throw std::out_of_range("timestep " + std::to_string(timestep) +
                " out of range (run kept " + std::to_string(result.features.size()) +
                " timesteps of features)");
    }
    std::vector<std::vector<double>> maps;
    for (const FeatureMap &m : result.features[timestep])
    {
        std::vector<double> vals(m.values.size());
        for (size_t i = 0; i < m.values.size(); ++i)
        {
            vals[i] = m.values[i] ? 1.0 : 0.0;
        }
        maps.push_back(std::move(vals));
    }
    return maps;
}

} // namespace spikesim

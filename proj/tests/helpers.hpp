#pragma once

// Shared test fixtures: the two reference network configs, programmatic
// net builders, random small-network generation and the independent
// brute-force oracles the engine tests check against. Oracle code here is
// deliberately written against materialized padded tensors so it shares no
// index arithmetic with the engines.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "spikesim/engine.hpp"
#include "spikesim/events.hpp"
#include "spikesim/model.hpp"

namespace testing_helpers {

using namespace spikesim;

inline const char *kVggConfig = R"(name small-32-st-vgg
input 2 304 240
timesteps 1
neuron lif tau=2 vth=1 leak=decay_input
format q 8 8
32c4x4s4p0
32c3x3s1p1
32c3x3s1p1
64c3x3s2p1!
64c3x3s1p1
128c3x3s2p1!
128c3x3s1p1
128c3x3s2p1!
128c3x3s2p1!
128c3x3s2p1!
128c3x3s2p1!
)";

inline const char *kScnnConfig = R"(name scnn-4layer
input 10 24
timesteps 2
neuron lif tau=2 vth=1 leak=decay_input
format q 8 8
48c3s1p1
48c3s1p1
96c3s1p1
35c1s1p0!
)";

// ---------------------------------------------------------------------------
// Programmatic net construction

struct ConvDesc {
    int out = 1;
    int kh = 1;
    int kw = 1;
    int stride = 1;
    int pad = 0;
    bool bias = true;
    bool extract = false;
};

inline NetworkSpec make_conv_net(std::vector<int> input_shape, const std::vector<ConvDesc> &descs,
        NeuronParams neuron = {})
{
    NetworkSpec spec;
    spec.name = "test-net";
    spec.input_shape = std::move(input_shape);
    spec.default_neuron = neuron;
    const bool is_1d = spec.input_shape.size() == 2;
    for (const ConvDesc &d : descs)
    {
        LayerSpec layer;
        layer.kind = is_1d ? LayerKind::conv1d : LayerKind::conv2d;
        layer.out_channels = d.out;
        layer.kernel_h = d.kh;
        layer.kernel_w = is_1d ? 1 : d.kw;
        layer.stride_h = layer.stride_w = d.stride;
        layer.pad_h = d.pad;
        layer.pad_w = is_1d ? 0 : d.pad;
        layer.has_bias = d.bias;
        layer.neuron = neuron;
        layer.extract = d.extract;
        spec.layers.push_back(layer);
    }
    materialize_zero_weights(spec);
    return spec;
}

inline void randomize_weights(NetworkSpec &spec, std::mt19937 &rng, double weight_scale = 0.6,
        double bias_scale = 0.15)
{
    std::uniform_real_distribution<double> wdist(-weight_scale, weight_scale);
    std::uniform_real_distribution<double> bdist(-bias_scale, bias_scale);
    for (auto &p : spec.params)
    {
        for (float &w : p.weights.data)
        {
            w = static_cast<float>(wdist(rng));
        }
        for (float &b : p.bias.data)
        {
            b = static_cast<float>(bdist(rng));
        }
    }
}

/// Random small network for property tests: 1..4 layers of conv2d with the
/// occasional pooling or fully-connected layer, mixed IF/LIF, both leak
/// forms, random strides and paddings. Retries until shapes stay positive.
inline NetworkSpec make_random_net(std::mt19937 &rng, int max_layers = 4, int max_hw = 12)
{
    auto pick = [&](int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    };
    for (int attempt = 0; attempt < 100; ++attempt)
    {
        NetworkSpec spec;
        spec.name = "random-net";
        spec.input_shape = {2, pick(4, max_hw), pick(4, max_hw)};
        const int layer_count = pick(1, max_layers);
        for (int l = 0; l < layer_count; ++l)
        {
            LayerSpec layer;
            const int kind_roll = pick(0, 9);
            if (kind_roll < 8)
            {
                layer.kind = LayerKind::conv2d;
                layer.out_channels = pick(1, 8);
                layer.kernel_h = layer.kernel_w = pick(1, 3);
                layer.stride_h = layer.stride_w = pick(1, 2);
                layer.pad_h = layer.pad_w = pick(0, 1);
                layer.has_bias = pick(0, 3) > 0;
            }
            else if (kind_roll == 8)
            {
                layer.kind = LayerKind::avgpool;
                layer.out_channels = 0;
                layer.kernel_h = layer.kernel_w = 2;
                layer.stride_h = layer.stride_w = 2;
                layer.has_bias = false;
            }
            else
            {
                layer.kind = LayerKind::fully_connected;
                layer.out_channels = pick(2, 12);
            }
            NeuronParams n;
            n.kind = pick(0, 1) == 0 ? NeuronKind::IF : NeuronKind::LIF;
            n.tau = pick(0, 1) == 0 ? 2.0 : 4.0;
            n.leak_form = pick(0, 1) == 0 ? LeakForm::decay_input : LeakForm::shift_leak;
            n.v_threshold = 0.25 + 0.25 * pick(1, 5);
            layer.neuron = n;
            layer.extract = pick(0, 3) == 0;
            spec.layers.push_back(layer);
        }
        try
        {
            infer_shapes(spec);
        }
        catch (const std::exception &)
        {
            continue;
        }
        materialize_zero_weights(spec);
        randomize_weights(spec, rng);
        return spec;
    }
    throw std::runtime_error("could not generate a valid random net");
}

/// Random binary input frames with a given spike density.
inline std::vector<EventFrame> make_random_frames(const NetworkSpec &spec, int timesteps,
        double density, std::mt19937 &rng)
{
    std::bernoulli_distribution fire(density);
    const int c = spec.input_shape[0];
    const int h = spec.input_shape[1];
    const int w = spec.input_shape.size() == 3 ? spec.input_shape[2] : 1;
    std::vector<EventFrame> frames;
    for (int t = 0; t < timesteps; ++t)
    {
        EventFrame f(c, h, w);
        f.window_index = t;
        for (uint32_t &v : f.values)
        {
            v = fire(rng) ? 1 : 0;
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

inline std::vector<SpikeList> frames_to_lists(const std::vector<EventFrame> &frames)
{
    std::vector<SpikeList> lists;
    lists.reserve(frames.size());
    for (const EventFrame &f : frames)
    {
        lists.push_back(frame_to_spikelist(f));
    }
    return lists;
}

// ---------------------------------------------------------------------------
// Independent real-arithmetic oracle (direct convolution + neuron recurrence
// over explicitly padded tensors)

struct OracleResult {
    std::vector<std::vector<long long>> spikes_per_timestep; // [t][layer]
    std::vector<std::vector<double>> final_potentials;
};

/// Direct 2-D correlation of one layer over a zero-padded copy of the
/// input. `in` is (C,H,W) row-major real-valued.
inline std::vector<double> oracle_conv_layer(const LayerSpec &layer, const std::vector<double> &in,
        int in_c, int in_h, int in_w, const std::vector<float> &weights,
        const std::vector<float> &bias, int out_c, int out_h, int out_w)
{
    const int ph = layer.kind == LayerKind::fully_connected ? 0 : layer.pad_h;
    const int pw = layer.kind == LayerKind::fully_connected ? 0 : layer.pad_w;
    const int kh = layer.kind == LayerKind::fully_connected ? in_h : layer.kernel_h;
    const int kw = layer.kind == LayerKind::fully_connected ? in_w : layer.kernel_w;
    const int sh = layer.kind == LayerKind::fully_connected ? 1 : layer.stride_h;
    const int sw = layer.kind == LayerKind::fully_connected ? 1 : layer.stride_w;

    // Materialize the padded input.
    const int pad_h = in_h + 2 * ph;
    const int pad_w = in_w + 2 * pw;
    std::vector<double> padded(static_cast<size_t>(in_c) * pad_h * pad_w, 0.0);
    for (int c = 0; c < in_c; ++c)
    {
        for (int y = 0; y < in_h; ++y)
        {
            for (int x = 0; x < in_w; ++x)
            {
                padded[(static_cast<size_t>(c) * pad_h + y + ph) * pad_w + x + pw] =
                        in[(static_cast<size_t>(c) * in_h + y) * in_w + x];
            }
        }
    }

    const bool depthwise = layer.kind == LayerKind::avgpool;
    const double pool_w = depthwise ? 1.0 / (static_cast<double>(kh) * kw) : 0.0;
    std::vector<double> out(static_cast<size_t>(out_c) * out_h * out_w, 0.0);
    for (int oc = 0; oc < out_c; ++oc)
    {
        for (int oy = 0; oy < out_h; ++oy)
        {
            for (int ox = 0; ox < out_w; ++ox)
            {
                double sum = 0.0;
                const int c_lo = depthwise ? oc : 0;
                const int c_hi = depthwise ? oc + 1 : in_c;
                for (int c = c_lo; c < c_hi; ++c)
                {
                    for (int ky = 0; ky < kh; ++ky)
                    {
                        for (int kx = 0; kx < kw; ++kx)
                        {
                            const double v = padded[(static_cast<size_t>(c) * pad_h + oy * sh +
                                                            ky) *
                                            pad_w +
                                    ox * sw + kx];
                            const double w = depthwise
                                    ? pool_w
                                    : weights[((static_cast<size_t>(oc) * in_c + c) * kh + ky) *
                                                    kw +
                                            kx];
                            sum += w * v;
                        }
                    }
                }
                if (!bias.empty())
                {
                    sum += bias[oc];
                }
                out[(static_cast<size_t>(oc) * out_h + oy) * out_w + ox] = sum;
            }
        }
    }
    return out;
}

/// Full dense run in real arithmetic, coded independently of the engine.
inline OracleResult oracle_run_dense(const NetworkSpec &spec, const std::vector<EventFrame> &frames)
{
    const auto shapes = infer_shapes(spec);
    std::vector<std::vector<double>> v;
    for (const auto &s : shapes)
    {
        v.emplace_back(shape_elements(s), 0.0);
    }
    OracleResult result;
    result.final_potentials.resize(spec.layers.size());

    for (const EventFrame &frame : frames)
    {
        std::vector<long long> spikes_this_t(spec.layers.size(), 0);
        std::vector<double> activity(frame.values.begin(), frame.values.end());
        int in_c = spec.input_shape[0];
        int in_h = spec.input_shape[1];
        int in_w = spec.input_shape.size() == 3 ? spec.input_shape[2] : 1;
        for (size_t l = 0; l < spec.layers.size(); ++l)
        {
            const int out_c = shapes[l][0];
            const int out_h = shapes[l].size() > 1 ? shapes[l][1] : 1;
            const int out_w = shapes[l].size() > 2 ? shapes[l][2] : 1;
            const std::vector<double> charge = oracle_conv_layer(spec.layers[l], activity, in_c,
                    in_h, in_w, spec.params[l].weights.data, spec.params[l].bias.data, out_c,
                    out_h, out_w);
            std::vector<double> fired(charge.size(), 0.0);
            for (size_t o = 0; o < charge.size(); ++o)
            {
                const StepResult s = neuron_step(v[l][o], charge[o], spec.layers[l].neuron);
                v[l][o] = s.v;
                fired[o] = s.fired ? 1.0 : 0.0;
                spikes_this_t[l] += s.fired ? 1 : 0;
            }
            activity = std::move(fired);
            in_c = out_c;
            in_h = out_h;
            in_w = out_w;
        }
        result.spikes_per_timestep.push_back(std::move(spikes_this_t));
    }
    result.final_potentials = v;
    return result;
}

} // namespace testing_helpers

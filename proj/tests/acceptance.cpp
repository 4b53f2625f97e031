// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// fails. Each criterion pins its tolerance in code.

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <thread>

#include "spikesim/engine.hpp"
#include "spikesim/events.hpp"
#include "spikesim/model.hpp"
#include "spikesim/model_io.hpp"
#include "spikesim/net.hpp"
#include "spikesim/perf.hpp"
#include "spikesim/wire.hpp"

#include "helpers.hpp"

using namespace spikesim;
using namespace testing_helpers;

namespace {

int g_failures = 0;

void criterion(int number, const std::string &name, bool pass, const std::string &detail = "")
{
    std::printf("[%s] criterion %2d: %s%s%s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
            detail.empty() ? "" : " -- ", detail.c_str());
    if (!pass)
    {
        ++g_failures;
    }
}

bool near_rel(double value, double expect, double rel)
{
    return std::abs(value - expect) <= rel * std::abs(expect);
}

bool near_abs(double value, double expect, double abs_tol)
{
    return std::abs(value - expect) <= abs_tol;
}

// --------------------------------------------------------------------------

void criterion_1_model_accounting()
{
    bool pass = true;
    std::ostringstream detail;

    const NetworkSpec vgg = parse_model_config(kVggConfig);
    const ModelStats vs = model_stats(vgg);
    pass &= vs.synapses == 886752;
    pass &= vs.kernels == 992;
    pass &= vs.inputs == 145920;
    const auto extracts = extraction_shapes(vgg);
    const std::vector<std::vector<int>> expected{{64, 38, 30}, {128, 19, 15}, {128, 10, 8},
            {128, 5, 4}, {128, 3, 2}, {128, 2, 1}};
    pass &= extracts == expected;

    const NetworkSpec scnn = parse_model_config(kScnnConfig);
    const ModelStats ss = model_stats(scnn);
    pass &= ss.synapses == 25763;
    pass &= ss.kernels == 227;
    pass &= ss.inputs == 240;

    detail << "vgg " << vs.synapses << "/" << vs.kernels << "/" << vs.inputs << ", scnn "
           << ss.synapses << "/" << ss.kernels << "/" << ss.inputs;
    criterion(1, "model accounting (exact)", pass, detail.str());
}

void criterion_2_activity()
{
    const double a1 = 100.0 * activity(214800, 670464, 1);
    const double a2 = 100.0 * activity(213500, 670464, 1);
    const double a3 = 100.0 * activity(214900, 670464, 1);
    const bool pass = near_abs(a1, 32.04, 0.005) && near_abs(a2, 31.84, 0.005) &&
            near_abs(a3, 32.05, 0.005);
    std::ostringstream detail;
    detail.precision(4);
    detail << std::fixed << a1 << "% / " << a2 << "% / " << a3 << "%";
    criterion(2, "activity formula (exact to 2 decimals)", pass, detail.str());
}

void criterion_3_energy_calculus()
{
    bool pass = true;
    std::ostringstream detail;

    HardwareConfig hw_vgg;
    hw_vgg.dynamic_power_w = 0.7;
    ModelStats vgg;
    vgg.synapses = 886752;
    vgg.kernels = 992;
    const EnergyReport big = energy_report(0.700, hw_vgg, vgg, 214800, 1);
    pass &= near_rel(big.energy_per_output_j, 0.490, 1e-9);       // 490 mJ
    pass &= near_rel(big.energy_per_spike_j, 2.2812e-6, 0.02);    // vs published 2.30 uJ
    pass &= near_rel(big.energy_per_spike_j, 2.30e-6, 0.02);      // within 2 % of rounding
    pass &= near_rel(big.energy_per_synapse_j, 553e-9, 0.02);     // 553 nJ

    HardwareConfig hw_scnn;
    hw_scnn.dynamic_power_w = 0.2;
    ModelStats scnn;
    scnn.synapses = 25763;
    scnn.kernels = 227;
    const EnergyReport small = energy_report(1e-3, hw_scnn, scnn, 7200, 2);
    pass &= near_rel(small.energy_norm_j, 3.88e-9, 0.02); // published rounding: 0.004 uJ

    const double e_norm_ratio = (big.energy_per_synapse_j / 1.0) / small.energy_norm_j;
    pass &= near_abs(e_norm_ratio, 142.0, 1.0);

    const double kernel_ratio = big.kernel_computation_index / small.kernel_computation_index;
    pass &= near_abs(kernel_ratio, 130.4, 1.0);

    detail.precision(4);
    detail << "E=" << big.energy_per_output_j * 1e3 << "mJ, E_spike="
           << big.energy_per_spike_j * 1e6 << "uJ, E_syn=" << big.energy_per_synapse_j * 1e9
           << "nJ, E_norm_scnn=" << small.energy_norm_j * 1e9 << "nJ, E_norm ratio="
           << e_norm_ratio << ", kernel ratio=" << kernel_ratio;
    criterion(3, "energy calculus (<=2%, paper rounding)", pass, detail.str());
}

void criterion_4_engine_equivalence()
{
    std::mt19937 rng(400);
    std::uniform_real_distribution<double> densities(0.1, 0.9);
    bool pass = true;
    int seeds_run = 0;
    for (int seed = 0; seed < 100 && pass; ++seed)
    {
        const NetworkSpec spec = quantize_network(make_random_net(rng));
        const int timesteps = std::uniform_int_distribution<int>(1, 20)(rng);
        const auto frames = make_random_frames(spec, timesteps, densities(rng), rng);

        RunOptions opts;
        opts.record_trace = true;
        opts.keep_features = false;
        DenseEngine dense(spec, EngineArithmetic::fixed, opts);
        for (const auto &f : frames)
        {
            dense.step(f);
        }
        const RunResult dr = dense.take_result();
        const auto [er, trace] = run_event_driven(spec, frames_to_lists(frames), opts);

        pass &= er.layer_spikes == dr.layer_spikes;
        pass &= er.spikes_per_timestep == dr.spikes_per_timestep;
        pass &= er.final_potentials_raw == dr.final_potentials_raw;
        const auto &de = dense.trace().events;
        pass &= trace.events.size() == de.size();
        for (size_t i = 0; pass && i < de.size(); ++i)
        {
            pass &= trace.events[i].timestep == de[i].timestep &&
                    trace.events[i].source_layer == de[i].source_layer &&
                    trace.events[i].coord == de[i].coord;
        }
        ++seeds_run;
    }
    criterion(4, "engine equivalence (100 random nets)", pass,
            std::to_string(seeds_run) + " seeds, spike trains + counts + potentials identical");
}

void criterion_5_bn_fusion()
{
    std::mt19937 rng(500);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    bool pass = true;
    double worst = 0.0;
    int instances = 0;
    while (instances < 100 && pass)
    {
        const int in_c = std::uniform_int_distribution<int>(1, 6)(rng);
        const int out_c = std::uniform_int_distribution<int>(1, 6)(rng);
        const int in_h = std::uniform_int_distribution<int>(3, 16)(rng);
        const int in_w = std::uniform_int_distribution<int>(3, 16)(rng);
        const int k = std::uniform_int_distribution<int>(1, 3)(rng);
        if (in_h < k || in_w < k)
        {
            continue;
        }
        NetworkSpec spec;
        spec.input_shape = {in_c, in_h, in_w};
        LayerSpec layer;
        layer.kind = LayerKind::conv2d;
        layer.out_channels = out_c;
        layer.kernel_h = layer.kernel_w = k;
        spec.layers.push_back(layer);
        materialize_zero_weights(spec);
        randomize_weights(spec, rng, 1.0, 0.5);

        BatchNormParams bn;
        for (int c = 0; c < in_c; ++c)
        {
            bn.gamma.push_back(static_cast<float>(0.5 + std::abs(unit(rng))));
            bn.beta.push_back(static_cast<float>(unit(rng)));
            bn.mean.push_back(static_cast<float>(unit(rng)));
            bn.variance.push_back(static_cast<float>(0.25 + std::abs(unit(rng))));
        }
        bn.epsilon = 1e-5f;

        std::vector<double> input(static_cast<size_t>(in_c) * in_h * in_w);
        for (double &v : input)
        {
            v = unit(rng);
        }

        // Oracle: BN applied to the input, then direct correlation.
        const int out_h = in_h - k + 1;
        const int out_w = in_w - k + 1;
        std::vector<double> normalized(input.size());
        for (int c = 0; c < in_c; ++c)
        {
            const double s =
                    bn.gamma[c] / std::sqrt(static_cast<double>(bn.variance[c]) + bn.epsilon);
            for (int i = 0; i < in_h * in_w; ++i)
            {
                normalized[c * in_h * in_w + i] =
                        s * (input[c * in_h * in_w + i] - bn.mean[c]) + bn.beta[c];
            }
        }
        auto conv_at = [&](const std::vector<double> &src, const RealTensor &w,
                               const RealTensor &b, int oc, int oy, int ox) {
            double sum = b.data.empty() ? 0.0 : b.data[oc];
            for (int c = 0; c < in_c; ++c)
            {
                for (int ky = 0; ky < k; ++ky)
                {
                    for (int kx = 0; kx < k; ++kx)
                    {
                        sum += w.data[((oc * in_c + c) * k + ky) * k + kx] *
                                src[(c * in_h + oy + ky) * in_w + ox + kx];
                    }
                }
            }
            return sum;
        };

        NetworkSpec with_bn = spec;
        with_bn.layers[0].batchnorm = bn;
        const NetworkSpec fused = fuse_batchnorm(with_bn);
        for (int oc = 0; oc < out_c && pass; ++oc)
        {
            for (int oy = 0; oy < out_h && pass; ++oy)
            {
                for (int ox = 0; ox < out_w && pass; ++ox)
                {
                    const double expect =
                            conv_at(normalized, spec.params[0].weights, spec.params[0].bias, oc,
                                    oy, ox);
                    const double got = conv_at(input, fused.params[0].weights,
                            fused.params[0].bias, oc, oy, ox);
                    worst = std::max(worst, std::abs(got - expect));
                    pass &= std::abs(got - expect) <= 1e-5;
                }
            }
        }
        ++instances;
    }
    std::ostringstream detail;
    detail << instances << " instances, worst |fused-unfused| = " << worst;
    criterion(5, "batchnorm fusion (<=1e-5 elementwise)", pass, detail.str());
}

void criterion_6_quantization_rules()
{
    const FixedFormat q88 = FixedFormat::q(8, 8);
    bool pass = true;
    pass &= quantize_value(0.5, q88).raw == 128;
    pass &= quantize_value(-0.3, q88).raw == -77;
    pass &= quantize_value(200.0, q88).raw == 32767;

    std::mt19937 rng(600);
    std::uniform_real_distribution<double> xs(-140.0, 140.0);
    for (int i = 0; i < 5000 && pass; ++i)
    {
        double a = xs(rng);
        double b = xs(rng);
        if (a > b)
        {
            std::swap(a, b);
        }
        pass &= quantize_value(a, q88).raw <= quantize_value(b, q88).raw;
    }
    std::uniform_int_distribution<int64_t> raws(q88.min_raw(), q88.max_raw());
    for (int i = 0; i < 5000 && pass; ++i)
    {
        const int64_t raw = raws(rng);
        pass &= quantize_value(dequantize({raw, q88}), q88).raw == raw;
    }
    criterion(6, "quantization rules (floor, monotone, round-trip)", pass,
            "fixed dense == fixed event-driven covered by criterion 4");
}

void criterion_7_neuron_dynamics()
{
    std::mt19937 rng(700);
    std::uniform_real_distribution<double> vs(-2.0, 2.0);
    bool pass = true;

    // Hard reset on every fire, both arithmetics.
    const FixedFormat q88 = FixedFormat::q(8, 8);
    for (int i = 0; i < 3000 && pass; ++i)
    {
        NeuronParams p;
        p.kind = (i % 2 == 0) ? NeuronKind::IF : NeuronKind::LIF;
        p.tau = 2.0;
        p.v_threshold = 0.75;
        p.leak_form = (i % 4 < 2) ? LeakForm::decay_input : LeakForm::shift_leak;
        const StepResult s = neuron_step(vs(rng), vs(rng), p);
        if (s.fired)
        {
            pass &= s.v == 0.0;
        }
        const FixedNeuronParams q = quantize_neuron(p, q88);
        const FixedStepResult sf = neuron_step_fixed(quantize_value(vs(rng), q88).raw,
                quantize_value(vs(rng), q88).raw, q);
        if (sf.fired)
        {
            pass &= sf.v_raw == 0;
        }
    }

    // IF monotone under nonnegative input.
    NeuronParams ifp;
    ifp.v_threshold = 10.0;
    double v = 0.0;
    std::uniform_real_distribution<double> pos(0.0, 0.2);
    for (int i = 0; i < 500 && pass; ++i)
    {
        const StepResult s = neuron_step(v, pos(rng), ifp);
        pass &= s.fired || s.v >= v;
        v = s.v;
    }

    // LIF decays toward zero under zero input.
    NeuronParams lifp;
    lifp.kind = NeuronKind::LIF;
    lifp.tau = 2.0;
    lifp.v_threshold = 1.0;
    for (const LeakForm form : {LeakForm::decay_input, LeakForm::shift_leak})
    {
        lifp.leak_form = form;
        double w = 0.9;
        for (int i = 0; i < 40; ++i)
        {
            const double prev = w;
            w = neuron_step(w, 0.0, lifp).v;
            pass &= std::abs(w) <= std::abs(prev);
        }
        pass &= std::abs(w) < 1e-6;
    }

    // Threshold boundary fires at exactly vth.
    NeuronParams boundary;
    boundary.v_threshold = 1.0;
    pass &= neuron_step(0.0, 1.0, boundary).fired;
    pass &= !neuron_step(0.0, std::nextafter(1.0, 0.0), boundary).fired;
    const FixedNeuronParams qb = quantize_neuron(boundary, q88);
    pass &= neuron_step_fixed(0, 256, qb).fired;
    pass &= !neuron_step_fixed(0, 255, qb).fired;

    criterion(7, "neuron dynamics (reset, monotone, decay, boundary)", pass);
}

void criterion_8_event_pipeline()
{
    bool pass = true;

    // Windowing partitions the stream.
    std::mt19937 rng(800);
    std::vector<EventRecord> events;
    for (int i = 0; i < 5000; ++i)
    {
        events.push_back(EventRecord{rng() % 1'000'000, static_cast<uint16_t>(rng() % 304),
                static_cast<uint16_t>(rng() % 240), static_cast<uint8_t>(rng() % 2)});
    }
    std::stable_sort(events.begin(), events.end(),
            [](const EventRecord &a, const EventRecord &b) { return a.t < b.t; });
    const auto groups = window_events(events, 50'000);
    std::vector<EventRecord> rejoined;
    for (size_t k = 0; k < groups.size(); ++k)
    {
        for (const EventRecord &e : groups[k])
        {
            pass &= (e.t / 50'000) == k;
            rejoined.push_back(e);
        }
    }
    pass &= rejoined == events;

    // 60 s at 50 ms -> 1200 windows.
    std::vector<EventRecord> clip;
    for (uint64_t t = 0; t < 60'000'000; t += 25'000)
    {
        clip.push_back(EventRecord{t, 0, 0, 0});
    }
    pass &= window_events(clip, 50'000).size() == 1200;

    // binary = clamp(sum, 1), spike-list round trip.
    const SensorGeometry geo{32, 24};
    std::vector<EventRecord> group;
    for (int i = 0; i < 4000; ++i)
    {
        group.push_back(EventRecord{0, static_cast<uint16_t>(rng() % 32),
                static_cast<uint16_t>(rng() % 24), static_cast<uint8_t>(rng() % 2)});
    }
    const EventFrame summed = accumulate_frame(group, AccumMode::sum, geo);
    const EventFrame direct = accumulate_frame(group, AccumMode::binary, geo);
    pass &= binarize(summed).values == direct.values;
    pass &= densify(frame_to_spikelist(direct), 2, 24, 32).values == direct.values;

    criterion(8, "event pipeline (partition, 1200 windows, clamp, round-trip)", pass,
            std::to_string(groups.size()) + " windows on the random stream");
}

void criterion_9_latency_model()
{
    bool pass = true;
    std::ostringstream detail;

    // Anchor: one interior spike into a 3x3x32 layer.
    NetworkSpec one = quantize_network(make_conv_net({2, 5, 5}, {{32, 3, 3, 1, 1, false}}));
    SpikeList list;
    list.entries = {{0, 2, 2}};
    auto [res, trace] = run_event_driven(one, {list});
    HardwareConfig hw;
    hw.clock_hz = 100e6;
    hw.cycles_per_update = 1.0;
    const LatencyReport anchor = simulate_latency(trace, one, hw);
    pass &= anchor.layer_updates[0] == 288;
    pass &= near_rel(anchor.end_to_end_s, 2.88e-6, 1e-9);

    // Monotone in spikes, antitone in NPUs.
    std::mt19937 rng(900);
    NetworkSpec toy = quantize_network(make_conv_net({2, 12, 12},
            {{8, 3, 3, 1, 1, true}, {8, 3, 3, 1, 1, true}, {8, 3, 3, 2, 1, true},
                    {8, 3, 3, 1, 1, true}}));
    const auto sparse = make_random_frames(toy, 4, 0.2, rng);
    auto denser = sparse;
    for (auto &f : denser)
    {
        for (uint32_t &v : f.values)
        {
            v |= (rng() % 2);
        }
    }
    auto [ra, ta] = run_event_driven(toy, frames_to_lists(sparse));
    auto [rb, tb] = run_event_driven(toy, frames_to_lists(denser));
    HardwareConfig hw_toy;
    hw_toy.cycles_per_spike_overhead = 8.0;
    hw_toy.cycles_per_fire = 1.0;
    pass &= simulate_latency(tb, toy, hw_toy).end_to_end_s >=
            simulate_latency(ta, toy, hw_toy).end_to_end_s;

    hw_toy.npu_per_layer = {1, 1, 1, 1};
    const double four = simulate_latency(tb, toy, hw_toy).end_to_end_s;
    hw_toy.npu_per_layer = {4, 4, 4, 4};
    const double sixteen = simulate_latency(tb, toy, hw_toy).end_to_end_s;
    const double speedup = four / sixteen;
    pass &= speedup <= 4.0 + 1e-9;
    pass &= sixteen <= four;

    detail.precision(4);
    detail << "anchor " << anchor.end_to_end_s * 1e6 << " us, 16-vs-4 NPU speedup " << speedup;
    criterion(9, "latency model (anchor, monotonicity, NPU scaling)", pass, detail.str());
}

void criterion_10_streaming()
{
    std::mt19937 rng(1000);
    NetworkSpec spec = make_conv_net({2, 8, 8},
            {{6, 3, 3, 1, 1, true, true}, {4, 3, 3, 2, 1, true, true}});
    randomize_weights(spec, rng);
    spec = quantize_network(spec);
    const int n_frames = 8;
    const auto frames = make_random_frames(spec, n_frames, 0.4, rng);
    const auto lists = frames_to_lists(frames);

    ModelServer server(spec, ServerOptions{});
    const uint16_t port = server.start(0);
    std::jthread worker([&server] {
        server.run_once();
        server.run_once();
    });

    bool pass = true;
    std::string detail;
    try
    {
        const StreamOutcome first = stream_windows("127.0.0.1", port, lists, 2, 8, 8);
        pass &= first.results.size() == static_cast<size_t>(n_frames);
        for (size_t i = 0; i < first.results.size(); ++i)
        {
            pass &= first.results[i].window_index == i;
        }

        EventEngine local(spec);
        for (size_t i = 0; i < lists.size(); ++i)
        {
            const StepOutput out = local.step(lists[i]);
            const auto &extract = local.result().extract_layers;
            for (size_t e = 0; e < extract.size(); ++e)
            {
                pass &= first.results[i].layer_spike_counts[e] ==
                        static_cast<uint32_t>(out.layer_spikes[extract[e]]);
            }
        }

        const StreamOutcome second = stream_windows("127.0.0.1", port, lists, 2, 8, 8);
        pass &= first.raw_results == second.raw_results;
        detail = std::to_string(n_frames) + " frames -> " +
                std::to_string(first.results.size()) +
                " ordered results, byte-identical rerun, equal to local run";
    }
    catch (const std::exception &e)
    {
        pass = false;
        detail = e.what();
    }
    server.stop(); // unblock the accept loop on early failure
    criterion(10, "streaming harness (ordered, deterministic, local-equal)", pass, detail);
}

} // namespace

int main()
{
    criterion_1_model_accounting();
    criterion_2_activity();
    criterion_3_energy_calculus();
    criterion_4_engine_equivalence();
    criterion_5_bn_fusion();
    criterion_6_quantization_rules();
    criterion_7_neuron_dynamics();
    criterion_8_event_pipeline();
    criterion_9_latency_model();
    criterion_10_streaming();

    if (g_failures > 0)
    {
        std::printf("%d criterion(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("all 10 acceptance criteria passed\n");
    return 0;
}

#pragma once

// IF/LIF membrane dynamics with hard reset to 0, in real and fixed-point
// arithmetic. One step covers one timestep: charge, compare against the
// threshold (>=), emit, reset. Leak and threshold are applied once per
// timestep at the barrier, never per incoming spike.

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "spikesim/fixed.hpp"

namespace spikesim {

enum class NeuronKind : uint8_t { IF = 0, LIF = 1 };

// Two readings of "a leakage factor of tau":
//   decay_input: h = v + (x - v)/tau   (training-framework dynamic)
//   shift_leak : h = v/tau + x         (cheap hardware shift when tau = 2^k)
enum class LeakForm : uint8_t { decay_input = 0, shift_leak = 1 };

struct NeuronParams {
    NeuronKind kind = NeuronKind::IF;
    double tau = 2.0; // LIF only, must be > 1
    double v_threshold = 1.0;
    LeakForm leak_form = LeakForm::decay_input;
    // v_reset is fixed at 0 (hard reset); no field on purpose.

    bool operator==(const NeuronParams &) const = default;

    void validate() const
    {
        if (v_threshold <= 0.0)
        {
            throw std::invalid_argument("neuron threshold must be > 0");
        }
        if (kind == NeuronKind::LIF && !(tau > 1.0))
        {
            throw std::invalid_argument("LIF tau must be > 1");
        }
    }
};

struct StepResult {
    bool fired = false;
    double v = 0.0;
};

/// One real-arithmetic membrane step. Fires when the charged potential
/// reaches the threshold (>=) and hard-resets to 0.
inline StepResult neuron_step(double v, double x, const NeuronParams &p)
{
    double h = 0.0;
    switch (p.kind)
    {
    case NeuronKind::IF:
        h = v + x;
        break;
    case NeuronKind::LIF:
        h = (p.leak_form == LeakForm::decay_input) ? v + (x - v) / p.tau
                                                   : v / p.tau + x;
        break;
    }
    const bool fired = (h >= p.v_threshold);
    return StepResult{fired, fired ? 0.0 : h};
}

/// Neuron constants lowered to one fixed-point format. The leak is carried
/// as the quantized reciprocal of tau so the step only multiplies.
struct FixedNeuronParams {
    NeuronKind kind = NeuronKind::IF;
    LeakForm leak_form = LeakForm::decay_input;
    int64_t v_threshold_raw = 0;
    int64_t inv_tau_raw = 0; // unused for IF
    FixedFormat format{};

    bool operator==(const FixedNeuronParams &) const = default;
};

/// Quantize threshold and 1/tau with the floor rule. A tau whose
/// reciprocal underflows to raw 0 would silently disable the leak, so it
/// is rejected.
inline FixedNeuronParams quantize_neuron(const NeuronParams &p, const FixedFormat &fmt,
        SatCounter *sat = nullptr)
{
    p.validate();
    fmt.validate();
    FixedNeuronParams q;
    q.kind = p.kind;
    q.leak_form = p.leak_form;
    q.format = fmt;
    q.v_threshold_raw = quantize_value(p.v_threshold, fmt, sat).raw;
    if (p.kind == NeuronKind::LIF)
    {
        q.inv_tau_raw = quantize_value(1.0 / p.tau, fmt, sat).raw;
        if (q.inv_tau_raw == 0)
        {
            throw std::invalid_argument("tau reciprocal quantizes to 0 in " +
                    fmt.to_string() + "; leak would vanish");
        }
    }
    return q;
}

struct FixedStepResult {
    bool fired = false;
    int64_t v_raw = 0;
};

/// One fixed-point membrane step. Intermediates are double-width; the
/// charged potential saturates to the storage format before the threshold
/// compare and the write-back.
inline FixedStepResult neuron_step_fixed(int64_t v_raw, int64_t x_raw,
        const FixedNeuronParams &p, SatCounter *sat = nullptr)
{
    const int frac = p.format.fraction_bits;
    __int128 h = 0;
    switch (p.kind)
    {
    case NeuronKind::IF:
        h = static_cast<__int128>(v_raw) + x_raw;
        break;
    case NeuronKind::LIF:
        if (p.leak_form == LeakForm::decay_input)
        {
            const __int128 delta = static_cast<__int128>(x_raw) - v_raw;
            h = v_raw + floor_shift_right(delta * p.inv_tau_raw, frac);
        }
        else
        {
            h = floor_shift_right(static_cast<__int128>(v_raw) * p.inv_tau_raw, frac) + x_raw;
        }
        break;
    }
    const int64_t h_sat = saturate_raw(h, p.format, sat);
    const bool fired = (h_sat >= p.v_threshold_raw);
    return FixedStepResult{fired, fired ? 0 : h_sat};
}

} // namespace spikesim

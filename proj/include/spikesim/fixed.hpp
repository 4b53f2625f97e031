#pragma once

// Qm,n fixed-point scalars and tensors. Rounding is floor (toward -inf)
// everywhere; arithmetic saturates to the format range instead of wrapping.
// Products and accumulations run in double-width intermediates and are only
// clamped when written back to a storage format, so integer sums are exact
// and order-independent.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikesim {

/// Counts clamp events in saturating operations; pass nullptr to ignore.
struct SatCounter {
    long long events = 0;
};

inline void count_sat(SatCounter *counter)
{
    if (counter != nullptr)
    {
        ++counter->events;
    }
}

/// Qm,n: m integer bits (sign included), n fraction bits, two's complement
/// in m+n bits. Total width must be in [2, 64].
struct FixedFormat {
    int integer_bits = 8;
    int fraction_bits = 8;

    int total_bits() const { return integer_bits + fraction_bits; }

    int64_t max_raw() const
    {
        return (total_bits() >= 64) ? INT64_MAX
                                    : (int64_t{1} << (total_bits() - 1)) - 1;
    }
    int64_t min_raw() const
    {
        return (total_bits() >= 64) ? INT64_MIN
                                    : -(int64_t{1} << (total_bits() - 1));
    }
    /// Smallest representable step, 2^-n.
    double resolution() const { return std::ldexp(1.0, -fraction_bits); }

    bool operator==(const FixedFormat &) const = default;

    std::string to_string() const
    {
        return "Q" + std::to_string(integer_bits) + "," +
                std::to_string(fraction_bits);
    }

    void validate() const
    {
        if (integer_bits < 0 || fraction_bits < 0 || total_bits() < 2 ||
                total_bits() > 64)
        {
            throw std::invalid_argument(
                    "fixed format must hold 2..64 bits total, got " +
                    to_string());
        }
    }

    static FixedFormat q(int integer_bits, int fraction_bits)
    {
        FixedFormat fmt{integer_bits, fraction_bits};
        fmt.validate();
        return fmt;
    }
};

struct FixedValue {
    int64_t raw = 0;
    FixedFormat format{};

    double to_real() const { return std::ldexp(static_cast<double>(raw), -format.fraction_bits); }
    bool operator==(const FixedValue &) const = default;
};

/// Clamp a double-width raw value into the format range.
inline int64_t saturate_raw(__int128 value, const FixedFormat &fmt, SatCounter *sat = nullptr)
{
    const __int128 lo = fmt.min_raw();
    const __int128 hi = fmt.max_raw();
    if (value < lo)
    {
        count_sat(sat);
        return fmt.min_raw();
    }
    if (value > hi)
    {
        count_sat(sat);
        return fmt.max_raw();
    }
    return static_cast<int64_t>(value);
}

/// Arithmetic right shift with floor semantics on a double-width value.
inline __int128 floor_shift_right(__int128 value, int bits)
{
    return value >> bits;
}

/// raw = clamp(floor(x * 2^n)). Out-of-range input saturates; NaN encodes
/// as zero (there is no real value to represent).
inline FixedValue quantize_value(double x, const FixedFormat &fmt, SatCounter *sat = nullptr)
{
    fmt.validate();
    if (std::isnan(x))
    {
        return FixedValue{0, fmt};
    }
    const double scaled = std::floor(std::ldexp(x, fmt.fraction_bits));
    const auto lo = static_cast<double>(fmt.min_raw());
    const auto hi = static_cast<double>(fmt.max_raw());
    if (scaled <= lo)
    {
        if (scaled < lo)
        {
            count_sat(sat);
        }
        return FixedValue{fmt.min_raw(), fmt};
    }
    if (scaled >= hi)
    {
        if (scaled > hi)
        {
            count_sat(sat);
        }
        return FixedValue{fmt.max_raw(), fmt};
    }
    return FixedValue{static_cast<int64_t>(scaled), fmt};
}

/// Exact real value, raw * 2^-n.
inline double dequantize(const FixedValue &v)
{
    return v.to_real();
}

inline void require_same_format(const FixedValue &a, const FixedValue &b, const char *op)
{
    if (!(a.format == b.format))
    {
        throw std::logic_error(std::string(op) + ": operand formats differ (" +
                a.format.to_string() + " vs " + b.format.to_string() + ")");
    }
}

inline FixedValue sat_add(const FixedValue &a, const FixedValue &b, SatCounter *sat = nullptr)
{
    require_same_format(a, b, "sat_add");
    const __int128 sum = static_cast<__int128>(a.raw) + b.raw;
    return FixedValue{saturate_raw(sum, a.format, sat), a.format};
}

/// (a.raw * b.raw) >> n with arithmetic (floor) shift, then clamped.
inline FixedValue sat_mul(const FixedValue &a, const FixedValue &b, SatCounter *sat = nullptr)
{
    require_same_format(a, b, "sat_mul");
    const __int128 prod = static_cast<__int128>(a.raw) * b.raw;
    const __int128 shifted = floor_shift_right(prod, a.format.fraction_bits);
    return FixedValue{saturate_raw(shifted, a.format, sat), a.format};
}

/// Re-express a value in another format: floor to the coarser grid when
/// losing fraction bits, clamp to the new range.
inline FixedValue rescale(const FixedValue &v, const FixedFormat &to, SatCounter *sat = nullptr)
{
    to.validate();
    const int shift = to.fraction_bits - v.format.fraction_bits;
    __int128 raw = v.raw;
    if (shift >= 0)
    {
        raw = raw * (static_cast<__int128>(1) << shift);
    }
    else
    {
        raw = floor_shift_right(raw, -shift);
    }
    return FixedValue{saturate_raw(raw, to, sat), to};
}

/// Raw-domain rescale used by the engines when moving accumulator values
/// from the weight format into the potential format.
inline __int128 rescale_raw(__int128 raw, int from_fraction_bits, int to_fraction_bits)
{
    const int shift = to_fraction_bits - from_fraction_bits;
    if (shift >= 0)
    {
        return raw * (static_cast<__int128>(1) << shift);
    }
    return floor_shift_right(raw, -shift);
}

/// Flat tensor of raw values sharing one format.
struct FixedTensor {
    std::vector<int> shape;
    std::vector<int64_t> data;
    FixedFormat format{};

    FixedTensor() = default;
    FixedTensor(std::vector<int> shape_in, FixedFormat fmt)
            : shape(std::move(shape_in))
            , format(fmt)
    {
        format.validate();
        data.assign(element_count(shape), 0);
    }

    static long long element_count(const std::vector<int> &shape)
    {
        long long n = 1;
        for (const int d : shape)
        {
            if (d < 0)
            {
                throw std::invalid_argument("negative tensor dimension");
            }
            n *= d;
        }
        return n;
    }

    long long size() const { return static_cast<long long>(data.size()); }
    bool empty() const { return data.empty(); }

    bool operator==(const FixedTensor &) const = default;
};

/// Quantize a real vector elementwise into one tensor.
inline FixedTensor quantize_tensor(const std::vector<float> &values,
        std::vector<int> shape, const FixedFormat &fmt, SatCounter *sat = nullptr)
{
    FixedTensor t(std::move(shape), fmt);
    if (static_cast<long long>(values.size()) != t.size())
    {
        throw std::invalid_argument("quantize_tensor: value count does not match shape");
    }
    for (size_t i = 0; i < values.size(); ++i)
    {
        t.data[i] = quantize_value(values[i], fmt, sat).raw;
    }
    return t;
}

inline std::vector<float> dequantize_tensor(const FixedTensor &t)
{
    std::vector<float> out(t.data.size());
    for (size_t i = 0; i < t.data.size(); ++i)
    {
        out[i] = static_cast<float>(
                std::ldexp(static_cast<double>(t.data[i]), -t.format.fraction_bits));
    }
    return out;
}

} // namespace spikesim

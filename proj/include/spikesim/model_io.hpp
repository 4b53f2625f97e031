#pragma once

// Model container: the canonical text header (config grammar) followed by a
// binary weights block. Block layout, all integers little-endian:
//
//   magic "SNNW", version u16, layer count u16
//   per layer:
//     npu_count u16
//     neuron record: kind u8, leak u8, tau f64, vth f64
//     format override mask u8 (bit0 weights, bit1 potentials, bit2 thresholds),
//       then (int_bits u8, frac_bits u8) per set bit
//     tensor mask u8 (bit0 weights, bit1 bias, bit2 batchnorm)
//     weights / bias tensor records, batchnorm record
//   tensor record: dtype u8 (0 = f32, 1 = fixed [+ int_bits u8, frac_bits u8]),
//     ndims u8, dims u32 each, payload (f32 or i64 raw per element)
//   batchnorm record: channels u32, epsilon f32, gamma/beta/mean/variance f32 each
//
// A file without the SNNW block is a plain config and loads with
// zero-initialized weights.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "spikesim/model.hpp"

namespace spikesim {

namespace io {

inline void put_u8(std::string &out, uint8_t v) { out.push_back(static_cast<char>(v)); }
inline void put_u16(std::string &out, uint16_t v)
{
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_u32(std::string &out, uint32_t v)
{
    for (int i = 0; i < 4; ++i)
    {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}
inline void put_u64(std::string &out, uint64_t v)
{
    for (int i = 0; i < 8; ++i)
    {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}
inline void put_i64(std::string &out, int64_t v) { put_u64(out, static_cast<uint64_t>(v)); }
inline void put_f32(std::string &out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }
inline void put_f64(std::string &out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

struct Reader {
    const uint8_t *data;
    size_t size;
    size_t pos = 0;

    void need(size_t n) const
    {
        if (pos + n > size)
        {
            throw std::runtime_error("truncated payload");
        }
    }
    uint8_t u8()
    {
        need(1);
        return data[pos++];
    }
    uint16_t u16()
    {
        need(2);
        uint16_t v = static_cast<uint16_t>(data[pos]) | static_cast<uint16_t>(data[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32()
    {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
        {
            v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
        }
        pos += 4;
        return v;
    }
    uint64_t u64()
    {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
        {
            v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
        }
        pos += 8;
        return v;
    }
    int64_t i64() { return static_cast<int64_t>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
};

inline void put_real_tensor(std::string &out, const RealTensor &t)
{
    put_u8(out, 0);
    put_u8(out, static_cast<uint8_t>(t.shape.size()));
    for (const int d : t.shape)
    {
        put_u32(out, static_cast<uint32_t>(d));
    }
    for (const float v : t.data)
    {
        put_f32(out, v);
    }
}

inline void put_fixed_tensor(std::string &out, const FixedTensor &t)
{
    put_u8(out, 1);
    put_u8(out, static_cast<uint8_t>(t.format.integer_bits));
    put_u8(out, static_cast<uint8_t>(t.format.fraction_bits));
    put_u8(out, static_cast<uint8_t>(t.shape.size()));
    for (const int d : t.shape)
    {
        put_u32(out, static_cast<uint32_t>(d));
    }
    for (const int64_t v : t.data)
    {
        put_i64(out, v);
    }
}

// Reads either representation into the matching field of a LayerParams.
inline void get_tensor(Reader &in, RealTensor &real_out, FixedTensor &fixed_out, bool &is_fixed)
{
    const uint8_t dtype = in.u8();
    FixedFormat fmt;
    if (dtype == 1)
    {
        fmt.integer_bits = in.u8();
        fmt.fraction_bits = in.u8();
        fmt.validate();
    }
    else if (dtype != 0)
    {
        throw std::runtime_error("unknown tensor dtype tag " + std::to_string(dtype));
    }
    const int ndims = in.u8();
    std::vector<int> shape(ndims);
    long long count = 1;
    for (int i = 0; i < ndims; ++i)
    {
        shape[i] = static_cast<int>(in.u32());
        count *= shape[i];
        if (count < 0 || count > (1LL << 32))
        {
            throw std::runtime_error("tensor dimension overflow");
        }
    }
    if (dtype == 0)
    {
        real_out.shape = std::move(shape);
        real_out.data.resize(count);
        for (long long i = 0; i < count; ++i)
        {
            real_out.data[i] = in.f32();
        }
        is_fixed = false;
    }
    else
    {
        fixed_out.format = fmt;
        fixed_out.shape = std::move(shape);
        fixed_out.data.resize(count);
        for (long long i = 0; i < count; ++i)
        {
            fixed_out.data[i] = in.i64();
        }
        is_fixed = true;
    }
}

} // namespace io

inline constexpr char kModelMagic[4] = {'S', 'N', 'N', 'W'};
inline constexpr uint16_t kModelVersion = 1;

inline std::string save_model(const NetworkSpec &spec)
{
    if (spec.params.size() != spec.layers.size())
    {
        throw std::invalid_argument("save_model: params/layers length mismatch");
    }
    std::string out = write_model_config(spec);
    out.append(kModelMagic, 4);
    io::put_u16(out, kModelVersion);
    io::put_u16(out, static_cast<uint16_t>(spec.layers.size()));

    for (size_t l = 0; l < spec.layers.size(); ++l)
    {
        const LayerSpec &layer = spec.layers[l];
        io::put_u16(out, static_cast<uint16_t>(layer.npu_count));
        io::put_u8(out, static_cast<uint8_t>(layer.neuron.kind));
        io::put_u8(out, static_cast<uint8_t>(layer.neuron.leak_form));
        io::put_f64(out, layer.neuron.tau);
        io::put_f64(out, layer.neuron.v_threshold);

        uint8_t fmt_mask = 0;
        if (layer.weights_format)
        {
            fmt_mask |= 1;
        }
        if (layer.potentials_format)
        {
            fmt_mask |= 2;
        }
        if (layer.thresholds_format)
        {
            fmt_mask |= 4;
        }
        io::put_u8(out, fmt_mask);
        for (const auto &f : {layer.weights_format, layer.potentials_format, layer.thresholds_format})
        {
            if (f)
            {
                io::put_u8(out, static_cast<uint8_t>(f->integer_bits));
                io::put_u8(out, static_cast<uint8_t>(f->fraction_bits));
            }
        }

        const LayerParams &p = spec.params[l];
        const bool has_w = p.is_fixed ? !p.qweights.empty() : !p.weights.empty();
        const bool has_b = p.is_fixed ? !p.qbias.empty() : !p.bias.empty();
        uint8_t mask = 0;
        if (has_w)
        {
            mask |= 1;
        }
        if (has_b)
        {
            mask |= 2;
        }
        if (layer.batchnorm)
        {
            mask |= 4;
        }
        io::put_u8(out, mask);
        if (has_w)
        {
            p.is_fixed ? io::put_fixed_tensor(out, p.qweights) : io::put_real_tensor(out, p.weights);
        }
        if (has_b)
        {
            p.is_fixed ? io::put_fixed_tensor(out, p.qbias) : io::put_real_tensor(out, p.bias);
        }
        if (layer.batchnorm)
        {
            const BatchNormParams &bn = *layer.batchnorm;
            io::put_u32(out, static_cast<uint32_t>(bn.gamma.size()));
            io::put_f32(out, bn.epsilon);
            for (const auto *vec : {&bn.gamma, &bn.beta, &bn.mean, &bn.variance})
            {
                for (const float v : *vec)
                {
                    io::put_f32(out, v);
                }
            }
        }
    }
    return out;
}

inline NetworkSpec load_model(const std::string &bytes)
{
    // Locate the binary block. The magic begins a line of its own.
    size_t block = std::string::npos;
    if (bytes.rfind("SNNW", 0) == 0)
    {
        throw std::runtime_error("model binary block without text header");
    }
    const size_t at = bytes.find("\nSNNW");
    if (at != std::string::npos)
    {
        block = at + 1;
    }

    NetworkSpec spec = parse_model_config(
            block == std::string::npos ? bytes : bytes.substr(0, block));
    if (block == std::string::npos)
    {
        return spec; // plain config, zero weights
    }

    io::Reader in{reinterpret_cast<const uint8_t *>(bytes.data()) + block, bytes.size() - block};
    char magic[4];
    in.need(4);
    std::memcpy(magic, in.data + in.pos, 4);
    in.pos += 4;
    if (std::memcmp(magic, kModelMagic, 4) != 0)
    {
        throw std::runtime_error("bad magic");
    }
    const uint16_t version = in.u16();
    if (version != kModelVersion)
    {
        throw std::runtime_error("unsupported model version " + std::to_string(version));
    }
    const uint16_t layer_count = in.u16();
    if (layer_count != spec.layers.size())
    {
        throw std::runtime_error("layer count mismatch between header and weights block");
    }

    for (size_t l = 0; l < spec.layers.size(); ++l)
    {
        LayerSpec &layer = spec.layers[l];
        layer.npu_count = in.u16();
        layer.neuron.kind = static_cast<NeuronKind>(in.u8());
        layer.neuron.leak_form = static_cast<LeakForm>(in.u8());
        layer.neuron.tau = in.f64();
        layer.neuron.v_threshold = in.f64();

        const uint8_t fmt_mask = in.u8();
        auto read_fmt = [&]() {
            const int m = in.u8();
            const int n = in.u8();
            return FixedFormat::q(m, n);
        };
        if (fmt_mask & 1)
        {
            layer.weights_format = read_fmt();
        }
        if (fmt_mask & 2)
        {
            layer.potentials_format = read_fmt();
        }
        if (fmt_mask & 4)
        {
            layer.thresholds_format = read_fmt();
        }

        const uint8_t mask = in.u8();
        LayerParams &p = spec.params[l];
        if (mask & 1)
        {
            p.weights = RealTensor{};
            p.qweights = FixedTensor{};
            io::get_tensor(in, p.weights, p.qweights, p.is_fixed);
        }
        if (mask & 2)
        {
            bool bias_fixed = false;
            p.bias = RealTensor{};
            p.qbias = FixedTensor{};
            io::get_tensor(in, p.bias, p.qbias, bias_fixed);
            if (bias_fixed != p.is_fixed)
            {
                throw std::runtime_error("layer mixes fixed and real tensors");
            }
        }
        else if (mask & 1)
        {
            // Weight tensor present without bias: drop the zero-filled
            // default the parser materialized.
            if (p.is_fixed)
            {
                p.qbias = FixedTensor{};
                p.bias = RealTensor{};
            }
            else
            {
                p.bias = RealTensor{};
            }
        }
        if (mask & 4)
        {
            BatchNormParams bn;
            const uint32_t channels = in.u32();
            bn.epsilon = in.f32();
            for (auto *vec : {&bn.gamma, &bn.beta, &bn.mean, &bn.variance})
            {
                vec->resize(channels);
                for (uint32_t i = 0; i < channels; ++i)
                {
                    (*vec)[i] = in.f32();
                }
            }
            layer.batchnorm = std::move(bn);
        }
    }
    return spec;
}

inline void save_model_file(const NetworkSpec &spec, const std::string &path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
    {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    const std::string bytes = save_model(spec);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
    {
        throw std::runtime_error("write failed for '" + path + "'");
    }
}

inline NetworkSpec load_model_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw std::runtime_error("cannot open model file '" + path + "'");
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_model(bytes);
}

} // namespace spikesim

#pragma once

// Declarative network description: layer specs, shape inference, parameter
// accounting, batch-norm fusion and post-training quantization. The text
// config grammar is one layer per line in the compact channel/kernel/stride
// notation, e.g. "32c4x4s4p0" or "48c3s1", preceded by header lines:
//
//   name <text>
//   input <C> <H> <W> | input <C> <L>
//   timesteps <N>
//   neuron if vth=<r> | neuron lif tau=<r> vth=<r> [leak=decay_input|shift_leak]
//   format q <m> <n> | format <weights|potentials|thresholds> q <m> <n>
//
// Layer lines:
//   <out>c<kh>x<kw>s<s>[p<p>][!]   2-D convolution
//   <out>c<k>s<s>[p<p>][!]         1-D convolution
//   fc<out>[!]                     fully connected
//   ap<k>s<s>[p<p>][!]             average pooling
//
// '!' marks a feature-extraction point. When 'p' is omitted a 3-wide kernel
// defaults to padding 1 and everything else to 0, which is what the
// published extraction-map sizes force.

#include <cctype>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spikesim/fixed.hpp"
#include "spikesim/neuron.hpp"

namespace spikesim {

enum class LayerKind : uint8_t {
    conv2d = 0,
    conv1d = 1,
    fully_connected = 2,
    avgpool = 3,
};

inline const char *layer_kind_name(LayerKind k)
{
    switch (k)
    {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::fully_connected: return "fc";
    case LayerKind::avgpool: return "avgpool";
    }
    return "?";
}

/// Batch normalization over the channel dimension of the tensor it is
/// applied to (here: the input of the convolution that follows it).
struct BatchNormParams {
    std::vector<float> gamma;
    std::vector<float> beta;
    std::vector<float> mean;
    std::vector<float> variance;
    float epsilon = 1e-5f;

    bool operator==(const BatchNormParams &) const = default;

    void validate() const
    {
        const size_t n = gamma.size();
        if (beta.size() != n || mean.size() != n || variance.size() != n)
        {
            throw std::invalid_argument("batchnorm vectors must share one channel count");
        }
        for (const float v : variance)
        {
            if (v < 0.0f)
            {
                throw std::invalid_argument("batchnorm variance must be >= 0");
            }
        }
    }
};

struct LayerSpec {
    LayerKind kind = LayerKind::conv2d;
    int out_channels = 0; // resolved to the input channel count for avgpool
    int kernel_h = 1;
    int kernel_w = 1; // 1 for conv1d
    int stride_h = 1;
    int stride_w = 1;
    int pad_h = 0;
    int pad_w = 0;
    bool has_bias = true;
    NeuronParams neuron{};
    std::optional<BatchNormParams> batchnorm;
    bool extract = false;
    int npu_count = 1;
    // Optional per-layer format overrides; the network defaults apply when unset.
    std::optional<FixedFormat> weights_format;
    std::optional<FixedFormat> potentials_format;
    std::optional<FixedFormat> thresholds_format;

    bool operator==(const LayerSpec &) const = default;
};

/// Real-valued tensor (row-major) used for unquantized weights.
struct RealTensor {
    std::vector<int> shape;
    std::vector<float> data;

    bool operator==(const RealTensor &) const = default;
    bool empty() const { return data.empty(); }
};

/// Per-layer trainable parameters in exactly one of the two arithmetics.
struct LayerParams {
    bool is_fixed = false;
    RealTensor weights; // conv: (out, in, kh, kw); fc: (out, in_elems)
    RealTensor bias;    // (out) or empty
    FixedTensor qweights;
    FixedTensor qbias;

    bool operator==(const LayerParams &) const = default;
};

/// Per-role default fixed-point formats ("can be different at the layer
/// level for weights, activations and potentials").
struct RoleFormats {
    FixedFormat weights = FixedFormat::q(8, 8);
    FixedFormat potentials = FixedFormat::q(8, 8);
    FixedFormat thresholds = FixedFormat::q(8, 8);

    bool operator==(const RoleFormats &) const = default;
};

struct NetworkSpec {
    std::string name = "net";
    std::vector<int> input_shape; // (C, H, W) or (C, L)
    int timesteps = 1;
    NeuronParams default_neuron{};
    RoleFormats formats{};
    std::vector<LayerSpec> layers;
    std::vector<LayerParams> params; // same length as layers

    bool operator==(const NetworkSpec &) const = default;

    FixedFormat weights_format(size_t l) const
    {
        return layers[l].weights_format.value_or(formats.weights);
    }
    FixedFormat potentials_format(size_t l) const
    {
        return layers[l].potentials_format.value_or(formats.potentials);
    }
    FixedFormat thresholds_format(size_t l) const
    {
        return layers[l].thresholds_format.value_or(formats.thresholds);
    }
};

struct ModelStats {
    long long inputs = 0;   // input tensor elements per timestep
    long long synapses = 0; // trainable weights + biases
    long long kernels = 0;  // total filters, sum of out_channels
    long long neurons = 0;  // spiking outputs over all layers
    std::vector<long long> layer_synapses;
    std::vector<long long> layer_kernels;
    std::vector<long long> layer_neurons;
    std::vector<long long> layer_fan_in; // per-output fan-in
};

struct ParseError : std::runtime_error {
    int line = 0;
    int column = 0;
    ParseError(int line_in, int column_in, const std::string &msg)
            : std::runtime_error("line " + std::to_string(line_in) + ", col " +
                      std::to_string(column_in) + ": " + msg)
            , line(line_in)
            , column(column_in)
    {
    }
};

// ---------------------------------------------------------------------------
// Shape inference

inline int conv_out_dim(int in, int kernel, int stride, int pad)
{
    return (in + 2 * pad - kernel) / stride + 1;
}

/// Output shape per layer, in the network's native rank. Throws if any
/// intermediate dimension collapses to zero or below.
inline std::vector<std::vector<int>> infer_shapes(const NetworkSpec &spec)
{
    if (spec.input_shape.size() != 2 && spec.input_shape.size() != 3)
    {
        throw std::invalid_argument("input shape must be (C,H,W) or (C,L)");
    }
    for (const int d : spec.input_shape)
    {
        if (d <= 0)
        {
            throw std::invalid_argument("input dimensions must be positive");
        }
    }
    const bool is_1d = (spec.input_shape.size() == 2);

    std::vector<std::vector<int>> shapes;
    shapes.reserve(spec.layers.size());
    // Normalized (C,H,W) view; 1-D networks carry W = 1.
    int c = spec.input_shape[0];
    int h = spec.input_shape[1];
    int w = is_1d ? 1 : spec.input_shape[2];

    for (size_t l = 0; l < spec.layers.size(); ++l)
    {
        const LayerSpec &layer = spec.layers[l];
        int oc = 0;
        int oh = 0;
        int ow = 0;
        switch (layer.kind)
        {
        case LayerKind::conv2d:
        case LayerKind::conv1d:
            oc = layer.out_channels;
            oh = conv_out_dim(h, layer.kernel_h, layer.stride_h, layer.pad_h);
            ow = conv_out_dim(w, layer.kernel_w, layer.stride_w, layer.pad_w);
            break;
        case LayerKind::avgpool:
            oc = c;
            oh = conv_out_dim(h, layer.kernel_h, layer.stride_h, layer.pad_h);
            ow = conv_out_dim(w, layer.kernel_w, layer.stride_w, layer.pad_w);
            break;
        case LayerKind::fully_connected:
            oc = layer.out_channels;
            oh = 1;
            ow = 1;
            break;
        }
        if (oc <= 0 || oh <= 0 || ow <= 0)
        {
            throw std::invalid_argument("layer " + std::to_string(l) + " (" +
                    layer_kind_name(layer.kind) +
                    ") collapses to a non-positive output dimension");
        }
        if (layer.kind == LayerKind::fully_connected)
        {
            shapes.push_back({oc});
        }
        else if (is_1d)
        {
            shapes.push_back({oc, oh});
        }
        else
        {
            shapes.push_back({oc, oh, ow});
        }
        c = oc;
        h = oh;
        w = ow;
    }
    return shapes;
}

/// Shapes of the layers flagged as extraction points, in layer order.
inline std::vector<std::vector<int>> extraction_shapes(const NetworkSpec &spec)
{
    const auto shapes = infer_shapes(spec);
    std::vector<std::vector<int>> out;
    for (size_t l = 0; l < spec.layers.size(); ++l)
    {
        if (spec.layers[l].extract)
        {
            out.push_back(shapes[l]);
        }
    }
    return out;
}

inline long long shape_elements(const std::vector<int> &shape)
{
    long long n = 1;
    for (const int d : shape)
    {
        n *= d;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Accounting

inline ModelStats model_stats(const NetworkSpec &spec)
{
    const auto shapes = infer_shapes(spec);
    ModelStats stats;
    stats.inputs = shape_elements(spec.input_shape);

    int in_c = spec.input_shape[0];
    long long in_elems = stats.inputs;
    for (size_t l = 0; l < spec.layers.size(); ++l)
    {
        const LayerSpec &layer = spec.layers[l];
        long long fan_in = 0;
        long long synapses = 0;
        long long kernels = 0;
        switch (layer.kind)
        {
        case LayerKind::conv2d:
        case LayerKind::conv1d:
            fan_in = static_cast<long long>(in_c) * layer.kernel_h * layer.kernel_w;
            synapses = fan_in * layer.out_channels + (layer.has_bias ? layer.out_channels : 0);
            kernels = layer.out_channels;
            break;
        case LayerKind::fully_connected:
            fan_in = in_elems;
            synapses = fan_in * layer.out_channels + (layer.has_bias ? layer.out_channels : 0);
            kernels = layer.out_channels;
            break;
        case LayerKind::avgpool:
            // Fixed 1/(k*k) weights, nothing trainable.
            fan_in = static_cast<long long>(layer.kernel_h) * layer.kernel_w;
            synapses = 0;
            kernels = 0;
            break;
        }
        const long long neurons = shape_elements(shapes[l]);
        stats.layer_fan_in.push_back(fan_in);
        stats.layer_synapses.push_back(synapses);
        stats.layer_kernels.push_back(kernels);
        stats.layer_neurons.push_back(neurons);
        stats.synapses += synapses;
        stats.kernels += kernels;
        stats.neurons += neurons;
        in_c = shapes[l][0];
        in_elems = neurons;
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Weight materialization

/// Shape of the weight tensor of one layer given its input shape.
inline std::vector<int> weight_shape(const LayerSpec &layer, const std::vector<int> &in_shape)
{
    const int in_c = in_shape[0];
    switch (layer.kind)
    {
    case LayerKind::conv2d:
    case LayerKind::conv1d:
        return {layer.out_channels, in_c, layer.kernel_h, layer.kernel_w};
    case LayerKind::fully_connected:
        return {layer.out_channels, static_cast<int>(shape_elements(in_shape))};
    case LayerKind::avgpool:
        return {}; // implicit fixed weights
    }
    return {};
}

/// Allocate zero float weights/biases for all layers that lack parameters.
inline void materialize_zero_weights(NetworkSpec &spec)
{
    const auto shapes = infer_shapes(spec);
    spec.params.resize(spec.layers.size());
    std::vector<int> in_shape = spec.input_shape;
    for (size_t l = 0; l < spec.layers.size(); ++l)
    {
        const auto wshape = weight_shape(spec.layers[l], in_shape);
        LayerParams &p = spec.params[l];
        if (!wshape.empty() && p.weights.empty() && p.qweights.empty())
        {
            p.is_fixed = false;
            p.weights.shape = wshape;
            p.weights.data.assign(shape_elements(wshape), 0.0f);
            if (spec.layers[l].has_bias)
            {
                p.bias.shape = {spec.layers[l].out_channels};
                p.bias.data.assign(spec.layers[l].out_channels, 0.0f);
            }
        }
        in_shape = shapes[l];
    }
}

// ---------------------------------------------------------------------------
// Config parser

namespace detail {

struct LineCursor {
    const std::string &text;
    int line;
    size_t pos = 0;

    bool done() const { return pos >= text.size(); }
    char peek() const { return done() ? '\0' : text[pos]; }
    int col() const { return static_cast<int>(pos) + 1; }

    [[noreturn]] void fail(const std::string &msg) const
    {
        throw ParseError(line, col(), msg);
    }

    long long read_int(const char *what)
    {
        if (done() || !std::isdigit(static_cast<unsigned char>(peek())))
        {
            fail(std::string("expected ") + what);
        }
        long long value = 0;
        while (!done() && std::isdigit(static_cast<unsigned char>(peek())))
        {
            value = value * 10 + (text[pos] - '0');
            if (value > 1'000'000'000LL)
            {
                fail(std::string(what) + " out of range");
            }
            ++pos;
        }
        return value;
    }

    bool consume(char c)
    {
        if (!done() && peek() == c)
        {
            ++pos;
            return true;
        }
        return false;
    }
};

inline LayerSpec parse_layer_line(const std::string &body, int line_no,
        const NeuronParams &default_neuron)
{
    LineCursor cur{body, line_no};
    LayerSpec layer;
    layer.neuron = default_neuron;

    if (body.rfind("fc", 0) == 0)
    {
        cur.pos = 2;
        layer.kind = LayerKind::fully_connected;
        layer.out_channels = static_cast<int>(cur.read_int("output count"));
        if (layer.out_channels <= 0)
        {
            cur.fail("non-positive output count");
        }
        layer.extract = cur.consume('!');
        if (!cur.done())
        {
            cur.fail("trailing characters after fc layer");
        }
        return layer;
    }

    if (body.rfind("ap", 0) == 0)
    {
        cur.pos = 2;
        layer.kind = LayerKind::avgpool;
        layer.has_bias = false;
        const int k = static_cast<int>(cur.read_int("pool size"));
        if (k <= 0)
        {
            cur.fail("non-positive pool size");
        }
        layer.kernel_h = layer.kernel_w = k;
        if (!cur.consume('s'))
        {
            cur.fail("expected 's<stride>'");
        }
        const int s = static_cast<int>(cur.read_int("stride"));
        if (s <= 0)
        {
            cur.fail("non-positive stride");
        }
        layer.stride_h = layer.stride_w = s;
        if (cur.consume('p'))
        {
            const int p = static_cast<int>(cur.read_int("padding"));
            layer.pad_h = layer.pad_w = p;
        }
        layer.extract = cur.consume('!');
        if (!cur.done())
        {
            cur.fail("trailing characters after pool layer");
        }
        return layer;
    }

    // Convolution: <out>c<kh>[x<kw>]s<s>[p<p>][!]
    layer.out_channels = static_cast<int>(cur.read_int("channel count"));
    if (layer.out_channels <= 0)
    {
        cur.fail("non-positive channels");
    }
    if (!cur.consume('c'))
    {
        cur.fail("expected 'c' after channel count");
    }
    const int kh = static_cast<int>(cur.read_int("kernel size"));
    if (kh <= 0)
    {
        cur.fail("non-positive kernel");
    }
    layer.kernel_h = kh;
    if (cur.consume('x'))
    {
        layer.kind = LayerKind::conv2d;
        const int kw = static_cast<int>(cur.read_int("kernel width"));
        if (kw <= 0)
        {
            cur.fail("non-positive kernel");
        }
        layer.kernel_w = kw;
    }
    else
    {
        layer.kind = LayerKind::conv1d;
        layer.kernel_w = 1;
    }
    if (!cur.consume('s'))
    {
        cur.fail("expected 's<stride>'");
    }
    const int s = static_cast<int>(cur.read_int("stride"));
    if (s <= 0)
    {
        cur.fail("non-positive stride");
    }
    layer.stride_h = layer.stride_w = s;
    if (cur.consume('p'))
    {
        const int p = static_cast<int>(cur.read_int("padding"));
        layer.pad_h = p;
        layer.pad_w = (layer.kind == LayerKind::conv1d) ? 0 : p;
    }
    else
    {
        // Default forced by the published extraction sizes.
        layer.pad_h = (layer.kernel_h == 3) ? 1 : 0;
        layer.pad_w = (layer.kind == LayerKind::conv1d)
                ? 0
                : ((layer.kernel_w == 3) ? 1 : 0);
    }
    layer.extract = cur.consume('!');
    if (!cur.done())
    {
        cur.fail("trailing characters after layer spec");
    }
    return layer;
}

inline std::vector<std::string> split_ws(const std::string &s)
{
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string tok;
    while (iss >> tok)
    {
        out.push_back(tok);
    }
    return out;
}

inline double parse_kv_real(const std::string &tok, const std::string &key, int line_no)
{
    const std::string prefix = key + "=";
    if (tok.rfind(prefix, 0) != 0)
    {
        throw ParseError(line_no, 1, "expected '" + key + "=<value>', got '" + tok + "'");
    }
    try
    {
        size_t consumed = 0;
        const double v = std::stod(tok.substr(prefix.size()), &consumed);
        if (consumed != tok.size() - prefix.size())
        {
            throw std::invalid_argument("trailing");
        }
        return v;
    }
    catch (const std::exception &)
    {
        throw ParseError(line_no, 1, "bad numeric value in '" + tok + "'");
    }
}

} // namespace detail

/// Parse a text model config into a NetworkSpec with zero-initialized
/// weights. Errors carry line and column.
inline NetworkSpec parse_model_config(const std::string &text)
{
    NetworkSpec spec;
    spec.input_shape.clear();

    std::istringstream stream(text);
    std::string raw_line;
    int line_no = 0;
    bool saw_input = false;

    while (std::getline(stream, raw_line))
    {
        ++line_no;
        // Trim and drop comments.
        std::string line = raw_line;
        if (const auto hash = line.find('#'); hash != std::string::npos)
        {
            line.erase(hash);
        }
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos)
        {
            continue;
        }
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        const auto toks = detail::split_ws(line);
        const std::string &head = toks[0];

        if (head == "name")
        {
            if (toks.size() < 2)
            {
                throw ParseError(line_no, 1, "name requires a value");
            }
            spec.name = toks[1];
        }
        else if (head == "input")
        {
            if (toks.size() != 3 && toks.size() != 4)
            {
                throw ParseError(line_no, 1, "input requires 'C H W' or 'C L'");
            }
            spec.input_shape.clear();
            for (size_t i = 1; i < toks.size(); ++i)
            {
                int d = 0;
                try
                {
                    d = std::stoi(toks[i]);
                }
                catch (const std::exception &)
                {
                    throw ParseError(line_no, 1, "bad input dimension '" + toks[i] + "'");
                }
                if (d <= 0)
                {
                    throw ParseError(line_no, 1, "non-positive input dimension");
                }
                spec.input_shape.push_back(d);
            }
            saw_input = true;
        }
        else if (head == "timesteps")
        {
            if (toks.size() != 2)
            {
                throw ParseError(line_no, 1, "timesteps requires one value");
            }
            spec.timesteps = std::stoi(toks[1]);
            if (spec.timesteps <= 0)
            {
                throw ParseError(line_no, 1, "timesteps must be positive");
            }
        }
        else if (head == "neuron")
        {
            if (toks.size() < 2)
            {
                throw ParseError(line_no, 1, "neuron requires a kind (if|lif)");
            }
            NeuronParams p;
            size_t next = 2;
            if (toks[1] == "if")
            {
                p.kind = NeuronKind::IF;
            }
            else if (toks[1] == "lif")
            {
                p.kind = NeuronKind::LIF;
                if (toks.size() < 3)
                {
                    throw ParseError(line_no, 1, "lif requires tau=<r>");
                }
                p.tau = detail::parse_kv_real(toks[2], "tau", line_no);
                next = 3;
            }
            else
            {
                throw ParseError(line_no, 1, "unknown neuron kind '" + toks[1] + "'");
            }
            if (toks.size() <= next)
            {
                throw ParseError(line_no, 1, "neuron requires vth=<r>");
            }
            p.v_threshold = detail::parse_kv_real(toks[next], "vth", line_no);
            ++next;
            if (toks.size() > next)
            {
                const std::string &leak = toks[next];
                if (leak == "leak=decay_input")
                {
                    p.leak_form = LeakForm::decay_input;
                }
                else if (leak == "leak=shift_leak")
                {
                    p.leak_form = LeakForm::shift_leak;
                }
                else
                {
                    throw ParseError(line_no, 1, "unknown neuron option '" + leak + "'");
                }
            }
            try
            {
                p.validate();
            }
            catch (const std::exception &e)
            {
                throw ParseError(line_no, 1, e.what());
            }
            spec.default_neuron = p;
        }
        else if (head == "format")
        {
            // format q m n | format <role> q m n
            size_t qi = 1;
            std::string role;
            if (toks.size() >= 2 && toks[1] != "q")
            {
                role = toks[1];
                qi = 2;
            }
            if (toks.size() != qi + 3 || toks[qi] != "q")
            {
                throw ParseError(line_no, 1, "format requires 'q <int_bits> <frac_bits>'");
            }
            FixedFormat fmt;
            try
            {
                fmt = FixedFormat::q(std::stoi(toks[qi + 1]), std::stoi(toks[qi + 2]));
            }
            catch (const std::exception &e)
            {
                throw ParseError(line_no, 1, e.what());
            }
            if (role.empty())
            {
                spec.formats.weights = fmt;
                spec.formats.potentials = fmt;
                spec.formats.thresholds = fmt;
            }
            else if (role == "weights")
            {
                spec.formats.weights = fmt;
            }
            else if (role == "potentials")
            {
                spec.formats.potentials = fmt;
            }
            else if (role == "thresholds")
            {
                spec.formats.thresholds = fmt;
            }
            else
            {
                throw ParseError(line_no, 1, "unknown format role '" + role + "'");
            }
        }
        else
        {
            if (toks.size() != 1)
            {
                throw ParseError(line_no, 1, "unknown directive '" + head + "'");
            }
            spec.layers.push_back(
                    detail::parse_layer_line(head, line_no, spec.default_neuron));
        }
    }

    if (!saw_input)
    {
        throw ParseError(line_no, 1, "missing 'input' line");
    }
    // Validate shape flow and 1-D/2-D consistency before allocating.
    const bool is_1d = (spec.input_shape.size() == 2);
    for (size_t l = 0; l < spec.layers.size(); ++l)
    {
        const LayerKind k = spec.layers[l].kind;
        if (is_1d && k == LayerKind::conv2d)
        {
            throw ParseError(0, 1, "layer " + std::to_string(l) + ": 2-D convolution on a 1-D input");
        }
        if (!is_1d && k == LayerKind::conv1d)
        {
            throw ParseError(0, 1, "layer " + std::to_string(l) + ": 1-D convolution on a 2-D input");
        }
    }
    infer_shapes(spec);
    materialize_zero_weights(spec);
    return spec;
}

/// Canonical config text for a spec (explicit padding, one line per layer).
/// Inverse of parse_model_config for grammar-expressible networks.
inline std::string write_model_config(const NetworkSpec &spec)
{
    for (const LayerSpec &l : spec.layers)
    {
        const bool isotropic = (l.stride_h == l.stride_w && l.pad_h == l.pad_w);
        if (l.kind == LayerKind::conv2d || l.kind == LayerKind::avgpool)
        {
            if (!isotropic)
            {
                throw std::invalid_argument(
                        "anisotropic stride/padding is not representable in the model grammar");
            }
        }
    }
    std::ostringstream out;
    out << "name " << spec.name << "\n";
    out << "input";
    for (const int d : spec.input_shape)
    {
        out << ' ' << d;
    }
    out << "\n";
    out << "timesteps " << spec.timesteps << "\n";
    const NeuronParams &n = spec.default_neuron;
    out << "neuron " << (n.kind == NeuronKind::IF ? "if" : "lif");
    std::ostringstream num;
    num.precision(17);
    if (n.kind == NeuronKind::LIF)
    {
        num.str("");
        num << n.tau;
        out << " tau=" << num.str();
    }
    num.str("");
    num << n.v_threshold;
    out << " vth=" << num.str();
    out << " leak=" << (n.leak_form == LeakForm::decay_input ? "decay_input" : "shift_leak");
    out << "\n";
    if (spec.formats.weights == spec.formats.potentials &&
            spec.formats.weights == spec.formats.thresholds)
    {
        out << "format q " << spec.formats.weights.integer_bits << ' '
            << spec.formats.weights.fraction_bits << "\n";
    }
    else
    {
        out << "format weights q " << spec.formats.weights.integer_bits << ' '
            << spec.formats.weights.fraction_bits << "\n";
        out << "format potentials q " << spec.formats.potentials.integer_bits << ' '
            << spec.formats.potentials.fraction_bits << "\n";
        out << "format thresholds q " << spec.formats.thresholds.integer_bits << ' '
            << spec.formats.thresholds.fraction_bits << "\n";
    }
    for (const LayerSpec &l : spec.layers)
    {
        switch (l.kind)
        {
        case LayerKind::fully_connected:
            out << "fc" << l.out_channels;
            break;
        case LayerKind::avgpool:
            out << "ap" << l.kernel_h << 's' << l.stride_h << 'p' << l.pad_h;
            break;
        case LayerKind::conv2d:
            out << l.out_channels << 'c' << l.kernel_h << 'x' << l.kernel_w << 's'
                << l.stride_h << 'p' << l.pad_h;
            break;
        case LayerKind::conv1d:
            out << l.out_channels << 'c' << l.kernel_h << 's' << l.stride_h << 'p'
                << l.pad_h;
            break;
        }
        if (l.extract)
        {
            out << '!';
        }
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Batch-norm fusion (BN applied to the conv *input*)

/// Fold a preceding BN into the layer's weights and bias:
///   s_c   = gamma_c / sqrt(var_c + eps)
///   W'[o,c,..] = W[o,c,..] * s_c
///   b'[o] = b[o] + sum_c (beta_c - mean_c*s_c) * sum_k W[o,c,k]
/// Exact in real arithmetic wherever every kernel tap reads a normalized
/// input value (i.e. away from zero padding).
inline void fuse_batchnorm_layer(const LayerSpec &layer, const BatchNormParams &bn,
        RealTensor &weights, RealTensor &bias)
{
    bn.validate();
    if (weights.shape.size() < 2)
    {
        throw std::invalid_argument("fuse_batchnorm: layer has no weight tensor");
    }
    const int out_c = weights.shape[0];
    const long long in_c = weights.shape[1];
    if (static_cast<long long>(bn.gamma.size()) != in_c)
    {
        throw std::invalid_argument("fuse_batchnorm: BN channel count (" +
                std::to_string(bn.gamma.size()) + ") does not match layer input channels (" +
                std::to_string(in_c) + ")");
    }
    const long long taps = shape_elements(weights.shape) / (out_c * in_c);

    std::vector<double> scale(in_c);
    std::vector<double> shift(in_c);
    for (long long c = 0; c < in_c; ++c)
    {
        const double s = bn.gamma[c] / std::sqrt(static_cast<double>(bn.variance[c]) + bn.epsilon);
        scale[c] = s;
        shift[c] = bn.beta[c] - bn.mean[c] * s;
    }

    if (bias.data.empty())
    {
        bias.shape = {out_c};
        bias.data.assign(out_c, 0.0f);
    }
    for (int o = 0; o < out_c; ++o)
    {
        double bias_add = 0.0;
        for (long long c = 0; c < in_c; ++c)
        {
            double tap_sum = 0.0;
            const long long base = (o * in_c + c) * taps;
            for (long long k = 0; k < taps; ++k)
            {
                tap_sum += weights.data[base + k];
                weights.data[base + k] = static_cast<float>(weights.data[base + k] * scale[c]);
            }
            bias_add += shift[c] * tap_sum;
        }
        bias.data[o] = static_cast<float>(bias.data[o] + bias_add);
    }
    (void)layer;
}

/// Fuse every layer that carries BN parameters; requires real weights.
inline NetworkSpec fuse_batchnorm(const NetworkSpec &spec)
{
    NetworkSpec fused = spec;
    for (size_t l = 0; l < fused.layers.size(); ++l)
    {
        if (!fused.layers[l].batchnorm.has_value())
        {
            continue;
        }
        if (fused.params[l].is_fixed)
        {
            throw std::invalid_argument("fuse_batchnorm: layer " + std::to_string(l) +
                    " is quantized; fuse before quantization");
        }
        fuse_batchnorm_layer(fused.layers[l], *fused.layers[l].batchnorm,
                fused.params[l].weights, fused.params[l].bias);
        fused.layers[l].batchnorm.reset();
        fused.layers[l].has_bias = true;
    }
    return fused;
}

// ---------------------------------------------------------------------------
// Post-training quantization

/// Quantize all real weights/biases into the per-layer weight format.
/// BN must have been fused (or be absent). Returns the number of weight
/// saturation events through `sat`, if given.
inline NetworkSpec quantize_network(const NetworkSpec &spec, SatCounter *sat = nullptr)
{
    NetworkSpec q = spec;
    for (size_t l = 0; l < q.layers.size(); ++l)
    {
        if (q.layers[l].batchnorm.has_value())
        {
            throw std::invalid_argument("quantize_network: unfused batchnorm on layer " +
                    std::to_string(l));
        }
        LayerParams &p = q.params[l];
        if (p.is_fixed)
        {
            continue;
        }
        const FixedFormat wfmt = q.weights_format(l);
        if (!p.weights.empty())
        {
            p.qweights = quantize_tensor(p.weights.data, p.weights.shape, wfmt, sat);
            p.weights = RealTensor{};
        }
        if (!p.bias.empty())
        {
            p.qbias = quantize_tensor(p.bias.data, p.bias.shape, wfmt, sat);
            p.bias = RealTensor{};
        }
        p.is_fixed = true;
        // Neuron constants are validated here so a bad tau fails at
        // quantization time, not at engine construction.
        quantize_neuron(q.layers[l].neuron, q.potentials_format(l));
    }
    return q;
}

/// Inverse convenience: turn a quantized network back into floats (used to
/// run the real-arithmetic engine on a deployed model for divergence
/// reports; quantization error is not recoverable).
inline NetworkSpec dequantize_network(const NetworkSpec &spec)
{
    NetworkSpec r = spec;
    for (auto &p : r.params)
    {
        if (!p.is_fixed)
        {
            continue;
        }
        if (!p.qweights.empty())
        {
            p.weights.shape = p.qweights.shape;
            p.weights.data = dequantize_tensor(p.qweights);
            p.qweights = FixedTensor{};
        }
        if (!p.qbias.empty())
        {
            p.bias.shape = p.qbias.shape;
            p.bias.data = dequantize_tensor(p.qbias);
            p.qbias = FixedTensor{};
        }
        p.is_fixed = false;
    }
    return r;
}

} // namespace spikesim

#include "hsc/digital.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace hsc {

QuantizedBlock quantize(std::span<const double> values, const QuantizerSpec& spec) {
    if (values.empty()) throw std::invalid_argument("quantize: empty block");
    if (spec.bits_per_coeff < 1 || spec.bits_per_coeff > 16)
        throw std::invalid_argument("quantize: bits_per_coeff out of [1,16]");
    for (const double v : values)
        if (!std::isfinite(v)) throw std::invalid_argument("quantize: non-finite value");

    QuantizedBlock q;
    q.bits_per_coeff = spec.bits_per_coeff;
    q.count = values.size();
    q.range.min = *std::min_element(values.begin(), values.end());
    q.range.max = *std::max_element(values.begin(), values.end());

    const std::uint32_t levels = 1u << spec.bits_per_coeff;
    const double span = q.range.max - q.range.min;
    const double step = span / static_cast<double>(levels);
    q.bits.bits.reserve(values.size() * spec.bits_per_coeff);
    for (const double v : values) {
        std::uint32_t code = 0;
        if (step > 0.0) {
            const double idx = std::floor((v - q.range.min) / step);
            code = static_cast<std::uint32_t>(std::clamp(idx, 0.0, static_cast<double>(levels - 1)));
        }
        q.bits.append_code(code, spec.bits_per_coeff);
    }
    return q;
}

std::vector<double> dequantize(const QuantizedBlock& q) {
    const std::uint32_t levels = 1u << q.bits_per_coeff;
    const double step = (q.range.max - q.range.min) / static_cast<double>(levels);
    std::vector<double> out;
    out.reserve(q.count);
    for (std::size_t i = 0; i < q.count; ++i) {
        const std::uint32_t code = q.bits.read_code(i * q.bits_per_coeff, q.bits_per_coeff);
        out.push_back(step > 0.0 ? q.range.min + (code + 0.5) * step : q.range.min);
    }
    return out;
}

SourceCoded source_code(const Bitstream& bits, int coeff_width, Rational ratio) {
    if (ratio.num <= 0 || Rational(1) < ratio)
        throw std::invalid_argument("source_code: ratio out of (0,1]");
    if (coeff_width < 1 || bits.size() % coeff_width != 0)
        throw std::invalid_argument("source_code: bit count not a multiple of coeff width");

    SourceCoded s;
    s.coeff_width = coeff_width;
    s.coeff_count = bits.size() / coeff_width;
    if (s.coeff_count == 0) return s;

    // Total output budget: ceil(ratio * input bits), split as evenly as the
    // integer widths allow.
    const std::uint64_t total =
        (static_cast<std::uint64_t>(bits.size()) * ratio.num + ratio.den - 1) / ratio.den;
    s.base_bits = static_cast<int>(total / s.coeff_count);
    s.extra = static_cast<std::size_t>(total - static_cast<std::uint64_t>(s.base_bits) * s.coeff_count);

    s.bits.bits.reserve(total);
    for (std::size_t i = 0; i < s.coeff_count; ++i) {
        const int w = s.base_bits + (i < s.extra ? 1 : 0);
        const std::uint32_t code = bits.read_code(i * coeff_width, coeff_width);
        if (w > 0) s.bits.append_code(code >> (coeff_width - w), w);
    }
    return s;
}

Bitstream source_decode(const SourceCoded& s) {
    Bitstream out;
    out.bits.reserve(s.coeff_count * s.coeff_width);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < s.coeff_count; ++i) {
        const int w = s.base_bits + (i < s.extra ? 1 : 0);
        std::uint32_t code = 0;
        if (w > 0) {
            code = s.bits.read_code(pos, w) << (s.coeff_width - w);
            pos += w;
        }
        // Re-center within the coarse bucket.
        if (w < s.coeff_width) code += 1u << (s.coeff_width - w - 1);
        out.append_code(code, s.coeff_width);
    }
    return out;
}

namespace {

// Constraint length 7, generators 171/133 octal.
constexpr unsigned kG1 = 0171;
constexpr unsigned kG2 = 0133;
constexpr int kMemory = 6;
constexpr int kStates = 1 << kMemory;

inline int parity(unsigned x) { return __builtin_parity(x); }

// reg holds (u << 6) | state, with state = previous 6 input bits.
inline int out1(unsigned reg) { return parity(reg & kG1); }
inline int out2(unsigned reg) { return parity(reg & kG2); }

} // namespace

Bitstream conv_encode(const Bitstream& info) {
    Bitstream coded;
    coded.bits.reserve(2 * (info.size() + kMemory));
    unsigned state = 0;
    auto push = [&](int u) {
        const unsigned reg = (static_cast<unsigned>(u) << kMemory) | state;
        coded.push_back(out1(reg));
        coded.push_back(out2(reg));
        state = reg >> 1;
    };
    for (const auto b : info.bits) push(b);
    for (int i = 0; i < kMemory; ++i) push(0); // termination
    return coded;
}

Bitstream viterbi_decode(const Bitstream& coded) {
    if (coded.size() % 2 != 0)
        throw std::invalid_argument("viterbi_decode: coded length must be even");
    const std::size_t steps = coded.size() / 2;
    if (steps < static_cast<std::size_t>(kMemory))
        throw std::invalid_argument("viterbi_decode: frame shorter than termination tail");

    constexpr std::uint32_t kInf = std::numeric_limits<std::uint32_t>::max() / 2;
    std::vector<std::uint32_t> metric(kStates, kInf), next_metric(kStates);
    metric[0] = 0; // encoder starts zeroed
    // Survivor table: full predecessor state per (step, state).
    std::vector<std::uint8_t> pred(steps * kStates);

    for (std::size_t t = 0; t < steps; ++t) {
        const int r1 = coded.bits[2 * t];
        const int r2 = coded.bits[2 * t + 1];
        std::fill(next_metric.begin(), next_metric.end(), kInf);
        for (unsigned s = 0; s < kStates; ++s) {
            const std::uint32_t m = metric[s];
            if (m >= kInf) continue;
            for (unsigned u = 0; u <= 1; ++u) {
                const unsigned reg = (u << kMemory) | s;
                const unsigned ns = reg >> 1;
                const std::uint32_t cost =
                    m + (out1(reg) != r1) + (out2(reg) != r2);
                if (cost < next_metric[ns]) {
                    next_metric[ns] = cost;
                    pred[t * kStates + ns] = static_cast<std::uint8_t>(s);
                }
            }
        }
        metric.swap(next_metric);
    }

    // Terminated frame: end in state 0.
    Bitstream info;
    info.bits.resize(steps);
    unsigned state = 0;
    for (std::size_t t = steps; t-- > 0;) {
        const unsigned prev = pred[t * kStates + state];
        // Input bit is the MSB of the register that led here.
        info.bits[t] = static_cast<std::uint8_t>((state >> (kMemory - 1)) & 1u);
        state = prev;
    }
    info.bits.resize(steps - kMemory); // drop termination tail
    return info;
}

namespace {

constexpr double kQamScale = 0.31622776601683794; // 1/sqrt(10)

// Gray order 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
constexpr unsigned kGrayBits[4] = {0b00, 0b01, 0b11, 0b10}; // level index -> bits

inline double gray_to_level(unsigned two_bits) {
    switch (two_bits) {
    case 0b00: return -3.0;
    case 0b01: return -1.0;
    case 0b11: return +1.0;
    default: return +3.0; // 0b10
    }
}

inline unsigned level_index(double axis) {
    // axis in units of the unscaled grid {-3,-1,1,3}; thresholds -2, 0, 2
    if (axis < -2.0) return 0;
    if (axis < 0.0) return 1;
    if (axis < 2.0) return 2;
    return 3;
}

} // namespace

std::vector<cdouble> qam16_modulate(const Bitstream& bits) {
    Bitstream padded = bits;
    while (padded.size() % 4 != 0) padded.push_back(0);
    std::vector<cdouble> symbols;
    symbols.reserve(padded.size() / 4);
    for (std::size_t i = 0; i < padded.size(); i += 4) {
        const unsigned hi = (padded.bits[i] << 1) | padded.bits[i + 1];     // b3 b2 -> I
        const unsigned lo = (padded.bits[i + 2] << 1) | padded.bits[i + 3]; // b1 b0 -> Q
        symbols.emplace_back(gray_to_level(hi) * kQamScale, gray_to_level(lo) * kQamScale);
    }
    return symbols;
}

Bitstream qam16_demodulate(std::span<const cdouble> symbols) {
    Bitstream bits;
    bits.bits.reserve(symbols.size() * 4);
    for (const cdouble s : symbols) {
        const unsigned i_idx = level_index(s.real() / kQamScale);
        const unsigned q_idx = level_index(s.imag() / kQamScale);
        bits.append_code(kGrayBits[i_idx], 2);
        bits.append_code(kGrayBits[q_idx], 2);
    }
    return bits;
}

Rational ChainSpec::symbol_rate() const {
    if (modulation_order != 16)
        throw std::invalid_argument("ChainSpec: only 16-QAM is implemented");
    if (!(code_rate == Rational(1, 2)))
        throw std::invalid_argument("ChainSpec: only the rate-1/2 code is implemented");
    const int bits_per_symbol = 4; // log2(16)
    return Rational(quantizer.bits_per_coeff) * source_ratio / code_rate /
           Rational(bits_per_symbol);
}

std::uint64_t nominal_symbol_count(std::uint64_t r, const ChainSpec& spec) {
    const Rational rate = spec.symbol_rate();
    return (r * static_cast<std::uint64_t>(rate.num) + rate.den - 1) / rate.den;
}

ChainFrame chain_transmit(const Matrix& rows, const ChainSpec& spec) {
    if (rows.rows() % 2 != 0)
        throw std::invalid_argument("chain_transmit: row count must be even (A stacked on AX)");

    ChainFrame frame;
    frame.header.d = rows.rows() / 2;
    frame.header.L = rows.cols();
    frame.header.bits_per_coeff = spec.quantizer.bits_per_coeff;
    frame.header.nominal_symbols = nominal_symbol_count(rows.size(), spec);
    if (rows.size() == 0) return frame;

    Bitstream all;
    for (int r = 0; r < rows.rows(); ++r) {
        QuantizedBlock q = quantize(rows.row(r), spec.quantizer);
        frame.header.ranges.push_back(q.range);
        all.bits.insert(all.bits.end(), q.bits.bits.begin(), q.bits.bits.end());
    }

    const SourceCoded sc = source_code(all, spec.quantizer.bits_per_coeff, spec.source_ratio);
    frame.header.source_coeffs = sc.coeff_count;
    frame.header.source_bits = sc.bits.size();

    frame.coded_bits = conv_encode(sc.bits);
    frame.header.qam_pad_bits = (4 - frame.coded_bits.size() % 4) % 4;
    frame.symbols = qam16_modulate(frame.coded_bits);
    return frame;
}

Matrix chain_receive(const CrFrameHeader& header, std::span<const cdouble> symbols,
                     const ChainSpec& spec) {
    const int block_rows = 2 * header.d;
    Matrix out(block_rows, header.d > 0 ? header.L : 0);
    if (header.d == 0) return out;
    if (spec.quantizer.bits_per_coeff != header.bits_per_coeff)
        throw std::invalid_argument("chain_receive: quantizer width disagrees with header");
    if (static_cast<int>(header.ranges.size()) != block_rows)
        throw std::invalid_argument("chain_receive: header range count mismatch");

    if (header.source_coeffs == 0)
        throw std::invalid_argument("chain_receive: header reports no source coefficients");

    Bitstream coded = qam16_demodulate(symbols);
    const std::size_t coded_len = 2 * (header.source_bits + kMemory);
    if (coded.size() < coded_len)
        throw std::invalid_argument("chain_receive: not enough symbols for the coded frame");
    coded.bits.resize(coded_len); // strip QAM padding

    const Bitstream source_bits = viterbi_decode(coded);

    SourceCoded sc;
    sc.bits = source_bits;
    sc.coeff_width = header.bits_per_coeff;
    sc.coeff_count = header.source_coeffs;
    const std::uint64_t total = header.source_bits;
    sc.base_bits = static_cast<int>(total / sc.coeff_count);
    sc.extra = static_cast<std::size_t>(total - static_cast<std::uint64_t>(sc.base_bits) * sc.coeff_count);

    const Bitstream codes = source_decode(sc);

    const int L = header.L;
    for (int r = 0; r < block_rows; ++r) {
        QuantizedBlock q;
        q.bits_per_coeff = header.bits_per_coeff;
        q.count = L;
        q.range = header.ranges[r];
        q.bits.bits.assign(codes.bits.begin() + static_cast<std::ptrdiff_t>(r) * L * header.bits_per_coeff,
                           codes.bits.begin() + static_cast<std::ptrdiff_t>(r + 1) * L * header.bits_per_coeff);
        const std::vector<double> vals = dequantize(q);
        for (int c = 0; c < L; ++c) out(r, c) = vals[c];
    }
    return out;
}

namespace {

void put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& v, std::uint64_t x) {
    for (int i = 0; i < 8; ++i) v.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& v, double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    put_u64(v, bits);
}
std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t& p) {
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[p++]) << (8 * i);
    return x;
}
std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t& p) {
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[p++]) << (8 * i);
    return x;
}
double get_f64(std::span<const std::uint8_t> b, std::size_t& p) {
    const std::uint64_t bits = get_u64(b, p);
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
}

} // namespace

std::vector<std::uint8_t> serialize_frame_header(const CrFrameHeader& h) {
    std::vector<std::uint8_t> out;
    put_u32(out, static_cast<std::uint32_t>(h.d));
    put_u32(out, static_cast<std::uint32_t>(h.L));
    put_u32(out, static_cast<std::uint32_t>(h.bits_per_coeff));
    put_u64(out, h.source_coeffs);
    put_u64(out, h.source_bits);
    put_u64(out, h.qam_pad_bits);
    put_u64(out, h.nominal_symbols);
    for (const BlockRange& r : h.ranges) {
        put_f64(out, r.min);
        put_f64(out, r.max);
    }
    return out;
}

CrFrameHeader parse_frame_header(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
    std::size_t p = 0;
    CrFrameHeader h;
    if (bytes.size() < 44) throw std::invalid_argument("parse_frame_header: truncated header");
    h.d = static_cast<int>(get_u32(bytes, p));
    h.L = static_cast<int>(get_u32(bytes, p));
    h.bits_per_coeff = static_cast<int>(get_u32(bytes, p));
    h.source_coeffs = get_u64(bytes, p);
    h.source_bits = get_u64(bytes, p);
    h.qam_pad_bits = get_u64(bytes, p);
    h.nominal_symbols = get_u64(bytes, p);
    const std::size_t want = static_cast<std::size_t>(2) * h.d;
    if (bytes.size() < p + want * 16)
        throw std::invalid_argument("parse_frame_header: truncated block ranges");
    for (std::size_t i = 0; i < want; ++i) {
        BlockRange r;
        r.min = get_f64(bytes, p);
        r.max = get_f64(bytes, p);
        h.ranges.push_back(r);
    }
    if (consumed) *consumed = p;
    return h;
}

} // namespace hsc

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hsc/channel.hpp"
#include "hsc/linalg.hpp"
#include "hsc/rational.hpp"

namespace hsc {

// Ordered bit sequence, one bit per element, most significant bit first
// within every multi-bit field written to it.
struct Bitstream {
    std::vector<std::uint8_t> bits;

    std::size_t size() const { return bits.size(); }
    bool empty() const { return bits.empty(); }

    void push_back(int bit) { bits.push_back(bit ? 1 : 0); }
    void append_code(std::uint32_t code, int width) {
        for (int i = width - 1; i >= 0; --i) bits.push_back((code >> i) & 1u);
    }
    std::uint32_t read_code(std::size_t pos, int width) const {
        std::uint32_t c = 0;
        for (int i = 0; i < width; ++i) c = (c << 1) | bits[pos + i];
        return c;
    }

    bool operator==(const Bitstream&) const = default;
};

struct QuantizerSpec {
    int bits_per_coeff = 8; // in [1,16]
};

struct BlockRange {
    double min = 0.0;
    double max = 0.0;

    bool operator==(const BlockRange&) const = default;
};

// Uniform mid-rise quantizer output for one block, together with the range
// metadata required for exact level reconstruction.
struct QuantizedBlock {
    Bitstream bits;
    BlockRange range;
    int bits_per_coeff = 8;
    std::size_t count = 0;
};

QuantizedBlock quantize(std::span<const double> values, const QuantizerSpec& spec);
std::vector<double> dequantize(const QuantizedBlock& q);

// Fixed-ratio source-coding stage: scales the bit budget of a stream of
// fixed-width codes by `ratio` via reduced-precision re-quantization.
// Output length is ceil(ratio * input bits); coefficients receive base or
// base+1 output bits (the first `extra` coefficients get the extra bit).
// ratio == 1 is the lossless identity.
struct SourceCoded {
    Bitstream bits;
    int coeff_width = 8;       // original per-coefficient width
    std::size_t coeff_count = 0;
    int base_bits = 0;         // reduced width floor
    std::size_t extra = 0;     // number of coefficients with base_bits+1
};

SourceCoded source_code(const Bitstream& bits, int coeff_width, Rational ratio);
Bitstream source_decode(const SourceCoded& s);

// Rate-1/2 terminated convolutional code, constraint length 7, generators
// 171/133 (octal), with hard-decision Viterbi decoding.
Bitstream conv_encode(const Bitstream& info);
Bitstream viterbi_decode(const Bitstream& coded);

// Gray-mapped 16-QAM with unit average symbol energy. Bits b3 b2 b1 b0 map
// to I from (b3 b2) and Q from (b1 b0), Gray order 00 -> -3, 01 -> -1,
// 11 -> +1, 10 -> +3, scaled by 1/sqrt(10). Input is padded with zeros to a
// multiple of 4 bits; the pad length is the caller's to record.
std::vector<cdouble> qam16_modulate(const Bitstream& bits);
Bitstream qam16_demodulate(std::span<const cdouble> symbols);

// Parameters of the conventional chain. The aggregate symbol rate is
// R = bits_per_coeff * source_ratio / code_rate / log2(modulation_order)
// symbols per input real; the defaults give R = 4/5.
struct ChainSpec {
    QuantizerSpec quantizer;
    Rational source_ratio{1, 5};
    Rational code_rate{1, 2};
    int modulation_order = 16;

    Rational symbol_rate() const;
};

// Everything the receiver needs besides the symbols themselves: the range
// metadata and the stage padding bookkeeping. Serialized byte layout is
// documented in docs/formats.md.
struct CrFrameHeader {
    int d = 0;
    int L = 0;
    int bits_per_coeff = 8;
    std::vector<BlockRange> ranges;   // one per length-L block (2d blocks)
    std::uint64_t source_coeffs = 0;  // coefficients entering the source stage
    std::uint64_t source_bits = 0;    // bits leaving the source stage
    std::uint64_t qam_pad_bits = 0;   // zero bits appended before modulation
    std::uint64_t nominal_symbols = 0; // ceil(r * R)

    bool operator==(const CrFrameHeader&) const = default;
};

struct ChainFrame {
    CrFrameHeader header;
    Bitstream coded_bits;         // post-channel-coding bitstream (pre-QAM pad)
    std::vector<cdouble> symbols; // physical symbols (>= nominal_symbols)
};

// Number of symbols the chain is accounted to spend on r input reals.
std::uint64_t nominal_symbol_count(std::uint64_t r, const ChainSpec& spec);

// Full transmitter chain for a block matrix whose rows are quantized as
// independent blocks: quantize -> source code -> channel code -> modulate.
ChainFrame chain_transmit(const Matrix& rows, const ChainSpec& spec);

// Inverse chain: demodulate -> Viterbi -> source decode -> dequantize.
// `symbols` are the (possibly noisy, already equalized) received symbols.
Matrix chain_receive(const CrFrameHeader& header, std::span<const cdouble> symbols,
                     const ChainSpec& spec);

// Byte-exact header + packed bitstream serialization (see docs/formats.md).
std::vector<std::uint8_t> serialize_frame_header(const CrFrameHeader& h);
CrFrameHeader parse_frame_header(std::span<const std::uint8_t> bytes, std::size_t* consumed);

} // namespace hsc

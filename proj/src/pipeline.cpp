#include "hsc/pipeline.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

namespace hsc {

namespace {

Matrix rows_from_images(const std::vector<Image>& imgs, int L) {
    Matrix x(static_cast<int>(imgs.size()), L * L);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        if (imgs[i].side() != L) throw std::invalid_argument("eval_pipeline: image side mismatch");
        std::memcpy(x.data() + i * static_cast<std::size_t>(L) * L, imgs[i].pixels.data(),
                    sizeof(double) * L * L);
    }
    return x;
}

Matrix matrix_from_row(const Matrix& rows, int i, int L) {
    Matrix m(L, L);
    std::memcpy(m.data(), rows.data() + static_cast<std::size_t>(i) * L * L,
                sizeof(double) * L * L);
    return m;
}

std::vector<cdouble> row_to_complex(const Matrix& rows, int i) {
    std::vector<cdouble> z;
    z.reserve(rows.cols() / 2);
    for (int c = 0; c < rows.cols(); c += 2) z.emplace_back(rows(i, c), rows(i, c + 1));
    return z;
}

void complex_to_row(std::span<const cdouble> z, Matrix& rows, int i) {
    for (std::size_t c = 0; c < z.size(); ++c) {
        rows(i, static_cast<int>(2 * c)) = z[c].real();
        rows(i, static_cast<int>(2 * c + 1)) = z[c].imag();
    }
}

Matrix stack_payload(const ComplementaryPayload& p) {
    const int d = p.basis.rank();
    const int L = p.basis.side();
    Matrix c(2 * d, L);
    for (int r = 0; r < d; ++r)
        for (int cc = 0; cc < L; ++cc) {
            c(r, cc) = p.basis.rows(r, cc);
            c(d + r, cc) = p.projected(r, cc);
        }
    return c;
}

} // namespace

BatchEval eval_pipeline(const SemanticCodec& codec, const std::vector<Image>& images, int d,
                        const PipelineConfig& cfg, Rng& rng,
                        std::vector<PipelineImages>* capture) {
    const int L = codec.spec.L;
    const int pixels = L * L;
    const int n = static_cast<int>(images.size());
    if (d < 0 || d > L) throw std::invalid_argument("eval_pipeline: d out of range");

    const Matrix x = rows_from_images(images, L);

    // Deterministic transmitter latent (eps = 0 / quantized codeword).
    Matrix zbar = codec.encode_mean_batch(x);
    if (codec.variant == CodecVariant::VqVae) {
        for (int i = 0; i < n; ++i) {
            const VqResult q = vq_quantize(row_to_complex(zbar, i), codec.codebook);
            complex_to_row(q.codeword, zbar, i);
        }
    }
    if (cfg.adapters) zbar = adapt_sr(*cfg.adapters, zbar);

    Matrix z(n, zbar.cols());
    for (int i = 0; i < n; ++i) {
        const SemanticSignal sig = power_normalize(row_to_complex(zbar, i), codec.spec.P);
        complex_to_row(sig.symbols, z, i);
    }

    // Transmitter mirror decode: exact z, no channel.
    Matrix xhat_tx = codec.decode_batch(z);
    if (cfg.adapters) xhat_tx = adapt_image(*cfg.adapters, xhat_tx);

    // SR over its own channel, one realization per image.
    Matrix z_rx(n, z.cols());
    for (int i = 0; i < n; ++i) {
        Rng sr_rng = rng.stream(0x53520000ull + static_cast<std::uint64_t>(i));
        const ChannelRealization ch = realize_channel(cfg.sr_channel, sr_rng);
        std::vector<cdouble> got = transmit(row_to_complex(z, i), ch, sr_rng);
        if (cfg.equalize) got = equalize(got, ch);
        complex_to_row(got, z_rx, i);
    }

    Matrix xhat_rx = codec.decode_batch(z_rx);
    if (cfg.adapters) xhat_rx = adapt_image(*cfg.adapters, xhat_rx);

    BatchEval out;
    out.mse_generated.resize(n);
    out.mse_recomposed.resize(n);
    out.mse_closed_form.resize(n);
    if (capture) capture->resize(n);

    for (int i = 0; i < n; ++i) {
        const Image& xi = images[i];
        const Image gen_tx(matrix_from_row(xhat_tx, i, L));
        Image gen_rx(matrix_from_row(xhat_rx, i, L));

        double gen_mse = 0.0;
        for (int p = 0; p < pixels; ++p) {
            const double diff = gen_rx.pixels.data()[p] - xi.pixels.data()[p];
            gen_mse += diff * diff;
        }
        out.mse_generated[i] = gen_mse / pixels;

        const ErrorMatrix b = error_matrix(xi, gen_tx);
        const EigenSpectrum spec = eig_psd(b);
        out.mse_closed_form[i] = closed_form_mse(spec, d) / pixels;

        if (d == 0) {
            out.mse_recomposed[i] = out.mse_generated[i];
            if (capture) (*capture)[i] = {gen_rx, gen_rx};
            continue;
        }

        ComplementaryPayload payload;
        payload.r = static_cast<std::size_t>(2) * d * L;
        {
            // Reuse the spectrum already computed for this image.
            double total = 0.0;
            for (const double v : spec.values) total += std::abs(v);
            if (total == 0.0) {
                Matrix a(d, L);
                for (int r = 0; r < d; ++r) a(r, r) = 1.0;
                payload.basis = ProjectionBasis(std::move(a));
            } else {
                payload.basis = optimal_projection(spec, d);
            }
            payload.projected = matmul(payload.basis.rows, xi.pixels);
        }

        ProjectionBasis basis_rx = payload.basis;
        Matrix projected_rx = payload.projected;
        if (!cfg.cr_exact) {
            const ChainFrame frame = chain_transmit(stack_payload(payload), cfg.chain);
            Rng cr_rng = rng.stream(0x43520000ull + static_cast<std::uint64_t>(i));
            const ChannelRealization ch = realize_channel(cfg.cr_channel, cr_rng);
            std::vector<cdouble> got = transmit(frame.symbols, ch, cr_rng);
            if (cfg.equalize) got = equalize(got, ch);
            const Matrix c_hat = chain_receive(frame.header, got, cfg.chain);
            const std::vector<double> flat(c_hat.data(), c_hat.data() + c_hat.size());
            UnpackedCr un = unpack_cr(flat, d, L);
            basis_rx = std::move(un.basis);
            projected_rx = std::move(un.projected);
        }

        Image recomposed = recompose(basis_rx, projected_rx, gen_rx);
        out.mse_recomposed[i] = achieved_mse(xi, recomposed).per_pixel;
        if (capture) (*capture)[i] = {std::move(gen_rx), std::move(recomposed)};
    }
    return out;
}

PipelineResult run_pipeline(const SemanticCodec& codec, const Image& x, int d,
                            const PipelineConfig& cfg, Rng& rng) {
    std::vector<PipelineImages> captured;
    const BatchEval ev = eval_pipeline(codec, {x}, d, cfg, rng, &captured);
    PipelineResult res;
    res.generated = std::move(captured[0].generated);
    res.recomposed = std::move(captured[0].recomposed);
    res.mse_generated = ev.mse_generated[0];
    res.mse_recomposed = ev.mse_recomposed[0];
    res.mse_closed_form = ev.mse_closed_form[0];
    return res;
}

double BatchEval::mean_generated() const {
    return std::accumulate(mse_generated.begin(), mse_generated.end(), 0.0) /
           static_cast<double>(mse_generated.size());
}
double BatchEval::mean_recomposed() const {
    return std::accumulate(mse_recomposed.begin(), mse_recomposed.end(), 0.0) /
           static_cast<double>(mse_recomposed.size());
}
double BatchEval::mean_closed_form() const {
    return std::accumulate(mse_closed_form.begin(), mse_closed_form.end(), 0.0) /
           static_cast<double>(mse_closed_form.size());
}

namespace {
double standard_error(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (const double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (static_cast<double>(v.size()) * (v.size() - 1.0)));
}
} // namespace

double BatchEval::se_generated() const { return standard_error(mse_generated); }
double BatchEval::se_recomposed() const { return standard_error(mse_recomposed); }

} // namespace hsc
